"""The hybrid point-source solver.

Near field: two-term Babich expansion u_b on the disk D_2eps.  Far field: the
smooth problem -(Delta + omega^2 m) u_far = f with f = 2 grad u_b . grad chi +
u_b Delta chi, solved by ray-FEM.  Ray directions outside D_2eps come from NMLA
on a low-frequency standard-FEM probe, then from the high-frequency field
itself in a short refinement loop.  The total field is u = u_far + chi u_b.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from hhx import babich as bb
from hhx import cutoff, fem, nmla, sparse
from hhx import eikonal as ek
from hhx.grid import CartesianGrid, TriMesh, cubic_eval, quadrature, triangulate
from hhx.media import Medium, exact_homogeneous, exact_phase_constant_gradient_grad

UNIT_SQUARE = (-0.5, 0.5, -0.5, 0.5)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class HybridConfig:
    omega: float
    npw: float = 8.0
    domain: tuple = UNIT_SQUARE            # physical box; the PML is added outside
    ray_mode: str = "learned"              # learned | exact
    eps: float | None = None               # None: max(1/(2 pi), 50/omega) with clipping
    eps_clip: float = 0.32                 # eps <= eps_clip * dist(x0, physical boundary)
    low_frequency: float | None = None     # None: choose_low_frequency(omega)
    loop_tol: float = 1e-2
    max_iter: int = 3
    solver: sparse.SolverConfig = field(default_factory=sparse.SolverConfig)
    pml_wavelengths: float = 2.0
    pml_strength: float = 25.0
    nmla: nmla.NMLAConfig = field(default_factory=nmla.NMLAConfig)
    hc_constant: float = 1.0               # observation lattice spacing h_c = hc_constant * omega^(-1/2)
    quad_degree: int = 9
    eta_factor: float = 2.0                # error norms exclude D_eta, eta = eta_factor * h
    keep_system: bool = False              # retain the last ray-FEM system on the result

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.npw > 0:
            raise ValueError("npw must be positive")
        if self.ray_mode not in ("learned", "exact"):
            raise ValueError("ray_mode must be 'learned' or 'exact'")
        if self.max_iter < 0 or not self.loop_tol > 0:
            raise ValueError("invalid loop settings")


# --------------------------------------------------------------------------
# parameter rules

def choose_low_frequency(omega: float) -> float:
    """2 pi ceil(sqrt(omega / 2 pi)), never above omega."""
    if omega < 4 * np.pi:
        return float(omega)
    return float(min(omega, 2 * np.pi * np.ceil(np.sqrt(omega / (2 * np.pi)) - 1e-12)))


def choose_eps(omega: float, x0, domain, clip: float = 0.32) -> float:
    """max(1/(2 pi), 50/omega), capped at ``clip`` times the source's distance to the box.

    The default cap keeps D_2eps at most 64% of the way from the source to the
    physical boundary, leaving room for observation circles outside it.
    """
    xmin, xmax, ymin, ymax = domain
    dist = min(x0[0] - xmin, xmax - x0[0], x0[1] - ymin, ymax - x0[1])
    if dist <= 0:
        raise ValueError("source outside the physical domain")
    return float(min(max(1.0 / (2 * np.pi), 50.0 / omega), clip * dist))


# --------------------------------------------------------------------------
# discretization

@dataclass
class Discretization:
    grid: CartesianGrid
    mesh: TriMesh
    h: float
    physical: tuple
    pml: fem.PMLProfile


def build_discretization(omega: float, npw: float, medium: Medium, x0, domain=UNIT_SQUARE,
                         pml_wavelengths: float = 2.0, pml_strength: float = 25.0) -> Discretization:
    """Uniform mesh with h <= 2 pi c_min / (omega npw) on which x0 and the box edges are nodes."""
    xmin, xmax, ymin, ymax = domain
    if not (xmin < x0[0] < xmax and ymin < x0[1] < ymax):
        raise ValueError("source outside the physical domain")
    c_min, c_max = medium.speed_range(domain)
    h_max = 2 * np.pi * c_min / (omega * npw)
    Lx, Ly = xmax - xmin, ymax - ymin
    n = int(np.ceil(Lx / h_max - 1e-9))
    for _ in range(10000):
        h = Lx / n
        ok = all(abs(v / h - round(v / h)) < 1e-7 for v in (Ly, x0[0] - xmin, x0[1] - ymin))
        if ok:
            break
        n += 1
    else:
        raise ValueError("cannot place the source on a node of a uniform mesh")
    pml = fem.default_pml(omega, c_max, domain, pml_wavelengths, pml_strength, h=h)
    bx = pml.bounds
    nx = int(round((bx[1] - bx[0]) / h)) + 1
    ny = int(round((bx[3] - bx[2]) / h)) + 1
    grid = CartesianGrid(nx, ny, h, h, (bx[0], bx[2]))
    return Discretization(grid, triangulate(grid), h, tuple(domain), pml)


def babich_grid(disc: Discretization, x0, eps: float) -> CartesianGrid:
    """Sub-grid of the mesh nodes around the source large enough for D_2eps plus stencils."""
    sub, _ = disc.grid.subgrid(x0, 2 * eps + 4 * disc.h)
    return sub


# --------------------------------------------------------------------------
# near field

class NearField:
    """u_b on D_2eps at one frequency, with the cut-off and its far-field source."""

    def __init__(self, ingredients: bb.BabichIngredients, omega: float, eps: float, medium: Medium):
        self.ing = ingredients
        self.omega = float(omega)
        self.eps = float(eps)
        self.x0 = np.asarray(ingredients.x0, dtype=float)
        self.params = cutoff.CutoffParams(tuple(self.x0), self.eps)
        self.exact = medium.is_homogeneous_near(self.x0, 2 * eps + 1e-12)
        self.c0 = float(medium.speed(self.x0))

    def u_b(self, pts):
        """u_b and grad u_b at points with 0 < r < 2 eps (Hankel form where the medium is constant)."""
        pts = np.asarray(pts, dtype=float)
        if self.exact:
            from hhx.media import exact_homogeneous_grad
            return (exact_homogeneous(self.omega, pts, self.x0, self.c0),
                    exact_homogeneous_grad(self.omega, pts, self.x0, self.c0))
        return self.ing.evaluate(self.omega, pts)

    def _split(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        r = np.hypot(flat[:, 0] - self.x0[0], flat[:, 1] - self.x0[1])
        return pts.shape, flat, r

    def rhs(self, pts):
        shape, flat, r = self._split(pts)
        inside = (r > self.eps) & (r < 2 * self.eps)
        ub = np.zeros(len(flat), dtype=complex)
        gub = np.zeros((len(flat), 2), dtype=complex)
        if np.any(inside):
            ub[inside], gub[inside] = self.u_b(flat[inside])
        return cutoff.rhs_values(ub, gub, self.params, flat).reshape(shape[:-1])

    def chi_ub(self, pts, gradient: bool = False):
        """chi u_b (and its gradient); zero for r >= 2 eps, undefined at the source."""
        shape, flat, r = self._split(pts)
        val = np.zeros(len(flat), dtype=complex)
        grad = np.zeros((len(flat), 2), dtype=complex)
        sel = (r < 2 * self.eps) & (r > 0)
        if np.any(r == 0):
            val[r == 0] = np.nan
            grad[r == 0] = np.nan
        if np.any(sel):
            p = flat[sel]
            ub, gub = self.u_b(p)
            ch = cutoff.chi(self.params, p)
            val[sel] = ch * ub
            if gradient:
                grad[sel] = ch[:, None] * gub + cutoff.grad_chi(self.params, p) * ub[:, None]
        if gradient:
            return val.reshape(shape[:-1]), grad.reshape(shape)
        return val.reshape(shape[:-1])


@dataclass
class TotalField:
    """u = u_far + chi u_b, evaluable anywhere in the mesh except the source."""

    far: fem.FEMSolution
    near: NearField

    def __call__(self, pts):
        return total_field(self.far, self.near, pts)

    def gradient(self, pts):
        _, g = self.near.chi_ub(pts, gradient=True)
        return self.far.gradient(pts) + g


def total_field(u_far, near: NearField, pts):
    return u_far(pts) + near.chi_ub(pts)


# --------------------------------------------------------------------------
# rays

def merge_rays(mesh: TriMesh, babich_dirs: np.ndarray, learned: fem.RaySet | None, x0, radius: float,
               amplitudes=None) -> fem.RaySet:
    """Babich directions on D_2eps (closed disk, minus the source node), learned lists elsewhere.

    ``babich_dirs`` is (N, 2) with NaN where undefined.
    """
    x0 = np.asarray(x0, dtype=float)
    r = np.hypot(mesh.nodes[:, 0] - x0[0], mesh.nodes[:, 1] - x0[1])
    near = r <= radius * (1 + 1e-12)
    bnear = near & (r > 0)
    bad = bnear & ~np.all(np.isfinite(babich_dirs), axis=1)
    if np.any(bad):
        raise ValueError(f"node {np.flatnonzero(bad)[0]} in D_2eps has no Babich direction")
    far = ~near
    lcounts = np.zeros(mesh.n_nodes, dtype=np.int64) if learned is None else learned.counts
    uncovered = far & (lcounts == 0)
    if np.any(uncovered):
        raise ValueError(f"node {np.flatnonzero(uncovered)[0]} outside D_2eps is not covered by learned rays")
    counts = np.where(bnear, 1, np.where(far, lcounts, 0))
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    angles = np.zeros(offsets[-1])
    bi = np.flatnonzero(bnear)
    angles[offsets[bi]] = np.arctan2(babich_dirs[bi, 1], babich_dirs[bi, 0])
    fi = np.flatnonzero(far)
    if fi.size:
        c = counts[fi]
        within = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        angles[np.repeat(offsets[fi], c) + within] = learned.angles[np.repeat(learned.offsets[fi], c) + within]
    rays = fem.RaySet(angles, offsets)
    rays.validate(require=np.flatnonzero(r > 0))
    return rays


def babich_node_directions(mesh: TriMesh, near: NearField, grid_rays) -> np.ndarray:
    """Unit grad(phi) directions at mesh nodes inside D_2eps (NaN elsewhere and at x0)."""
    x0 = near.x0
    pts = mesh.nodes
    r = np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1])
    out = np.full((len(pts), 2), np.nan)
    sel = (r > 0) & (r <= 2 * near.eps * (1 + 1e-12))
    if near.exact:
        out[sel] = (pts[sel] - x0) / r[sel, None]
        return out
    grid = grid_rays.grid
    idx = np.rint((pts[sel] - np.asarray(grid.origin)) / np.array([grid.hx, grid.hy])).astype(np.int64)
    if np.any(idx < 0) or np.any(idx[:, 0] >= grid.nx) or np.any(idx[:, 1] >= grid.ny):
        raise ValueError("Babich grid does not cover D_2eps")
    out[sel] = np.moveaxis(grid_rays.values, 0, -1)[idx[:, 1], idx[:, 0]]
    return out


def exact_ray_field(medium: Medium, x0, bounds, h: float | None = None):
    """Callable returning unit first-arrival directions at points (NaN at the source).

    Homogeneous: radial. Constant gradient: analytic phase gradient. Otherwise a
    whole-domain factored eikonal solve with spacing ``h`` and cubic
    interpolation of grad phi.
    """
    x0 = np.asarray(x0, dtype=float)

    def _unit(g, pts):
        n = np.hypot(g[..., 0], g[..., 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            out = g / n[..., None]
        r = np.hypot(pts[..., 0] - x0[0], pts[..., 1] - x0[1])
        out[r == 0] = np.nan
        return out

    if medium.kind == "homogeneous":
        return lambda pts: _unit(np.asarray(pts, float) - x0, np.asarray(pts, float))
    if medium.kind == "constant_gradient":
        p = medium.params
        return lambda pts: _unit(exact_phase_constant_gradient_grad(p["c0"], p["G0"], p["x0"], pts),
                                 np.asarray(pts, float))
    if h is None:
        raise ValueError("a sweeping spacing is required for this medium")
    xmin, xmax, ymin, ymax = bounds
    i0 = int(np.ceil((x0[0] - xmin) / h - 1e-9)) + 1
    j0 = int(np.ceil((x0[1] - ymin) / h - 1e-9)) + 1
    origin = (x0[0] - i0 * h, x0[1] - j0 * h)
    nx = int(np.ceil((xmax - origin[0]) / h - 1e-9)) + 2
    ny = int(np.ceil((ymax - origin[1]) / h - 1e-9)) + 2
    grid = CartesianGrid(nx, ny, h, h, origin)
    eik = ek.solve_phase(medium, x0, grid, ek.PHASE_CONFIG)
    gphi = eik.grad_phi.values
    rsrc = 3 * h

    def dirs(pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        g = np.column_stack([cubic_eval(grid, gphi[k], flat) for k in range(2)])
        y = flat - x0
        r = np.hypot(y[:, 0], y[:, 1])
        close = r < rsrc
        g[close] = y[close]
        return _unit(g, flat).reshape(pts.shape)

    return dirs


# --------------------------------------------------------------------------
# results

@dataclass
class StageRecord:
    name: str
    rays: fem.RaySet | None = None
    report: sparse.SolveReport | None = None
    n_dofs: int = 0


@dataclass
class HybridResult:
    config: HybridConfig
    disc: Discretization
    eps: float
    low_frequency: float | None
    near: NearField
    far: fem.FEMSolution
    total: TotalField
    u_total: np.ndarray                 # nodal total field (NaN at the source)
    stages: list
    tol_history: list
    timings: dict
    converged: bool = True
    learned: nmla.LearnedRays | None = None
    system: fem.ComplexSparseSystem | None = None

    @property
    def mesh(self) -> TriMesh:
        return self.disc.mesh

    @property
    def gmres_iterations(self) -> int:
        return int(sum(s.report.iterations for s in self.stages if s.report is not None))

    def relative_error(self, reference, quad_degree: int | None = None, eta: float | None = None) -> float:
        """Relative L2 error of the total field on the physical box minus D_eta.

        ``eta`` defaults to ``eta_factor * h``; pass a fixed value to compare meshes.
        """
        if eta is None:
            eta = self.config.eta_factor * self.disc.h
        q = quadrature(quad_degree or self.config.quad_degree)
        return fem.relative_l2(self.total, reference, self.mesh, self.disc.physical, self.near.x0, eta, q)


def _solve(system: fem.ComplexSparseSystem, cfg: sparse.SolverConfig):
    x, rep = sparse.solve(system.matrix, system.rhs, cfg)
    if not rep.converged:
        raise RuntimeError(f"linear solve did not converge: {rep.message}")
    return x, rep


def _change(u_new: np.ndarray, u_old: np.ndarray, mask: np.ndarray) -> float:
    num = np.linalg.norm(u_new[mask] - u_old[mask])
    den = np.linalg.norm(u_new[mask])
    return float(num / den) if den > 0 else np.inf


def run_hybrid(config: HybridConfig, medium: Medium, x0, exact_rays=None,
               ingredients: bb.BabichIngredients | None = None) -> HybridResult:
    """Run the full pipeline. ``exact_rays`` (callable) overrides the far-field directions
    when ``config.ray_mode == 'exact'``; by default :func:`exact_ray_field` is used."""
    x0 = np.asarray(x0, dtype=float)
    t_start = time.perf_counter()
    timings = {"babich": 0.0, "lowfreq": 0.0, "nmla": 0.0, "rayfem": 0.0}
    cfg = config
    omega = cfg.omega
    quad = quadrature(cfg.quad_degree)

    def stage(name, fn, *a, **kw):
        try:
            return fn(*a, **kw)
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - rethrown with the stage tag
            raise StageError(name, exc) from exc

    disc = stage("mesh", build_discretization, omega, cfg.npw, medium, x0, cfg.domain,
                 cfg.pml_wavelengths, cfg.pml_strength)
    mesh = disc.mesh
    eps = cfg.eps if cfg.eps is not None else stage("mesh", choose_eps, omega, x0, cfg.domain, cfg.eps_clip)
    eta = cfg.eta_factor * disc.h
    r_nodes = np.hypot(mesh.nodes[:, 0] - x0[0], mesh.nodes[:, 1] - x0[1])
    phys = disc.physical
    in_phys = ((mesh.nodes[:, 0] >= phys[0] - 1e-12) & (mesh.nodes[:, 0] <= phys[1] + 1e-12)
               & (mesh.nodes[:, 1] >= phys[2] - 1e-12) & (mesh.nodes[:, 1] <= phys[3] + 1e-12))
    change_mask = in_phys & (r_nodes >= eta)

    # Babich ingredients (frequency independent)
    t = time.perf_counter()
    if ingredients is None:
        ingredients = stage("babich", bb.compute_ingredients, medium, x0, babich_grid(disc, x0, eps))
    bdirs_grid = bb.babich_rays(ingredients.eikonal, 2 * eps)
    timings["babich"] += time.perf_counter() - t

    stages: list[StageRecord] = []
    learned = None
    low = None
    hc = cfg.hc_constant / np.sqrt(omega)

    def learn(total: TotalField, freq: float):
        return nmla.learn_rays(total, total.gradient, mesh.nodes, freq, medium, hc, phys, x0,
                               2 * eps, cfg.nmla, source_clearance=eta)

    near_hi = NearField(ingredients, omega, eps, medium)
    bdirs = babich_node_directions(mesh, near_hi, bdirs_grid)

    if cfg.ray_mode == "exact":
        t = time.perf_counter()
        fn = exact_rays or stage("rays", exact_ray_field, medium, x0, disc.grid.bounds,
                                 max(disc.h, 1.0 / 400))
        d = np.array(fn(mesh.nodes), dtype=float)
        d[r_nodes <= 2 * eps * (1 + 1e-12)] = np.nan
        rays = stage("rays", merge_rays, mesh, bdirs, fem.RaySet.from_vectors(d), x0, 2 * eps)
        timings["nmla"] += time.perf_counter() - t
    else:
        # low-frequency probe
        t = time.perf_counter()
        low = cfg.low_frequency or choose_low_frequency(omega)
        near_lo = NearField(ingredients, low, eps, medium)
        sys_lo = stage("lowfreq", fem.assemble_sfem, mesh, medium, low, near_lo.rhs, disc.pml, quad)
        x_lo, rep_lo = stage("lowfreq", _solve, sys_lo, cfg.solver)
        far_lo = fem.FEMSolution.from_system(sys_lo, x_lo, mesh)
        stages.append(StageRecord("sfem_low", None, rep_lo, sys_lo.matrix.shape[0]))
        timings["lowfreq"] += time.perf_counter() - t
        t = time.perf_counter()
        learned = stage("nmla", learn, TotalField(far_lo, near_lo), low)
        rays = stage("nmla", merge_rays, mesh, bdirs, learned.rays, x0, 2 * eps)
        timings["nmla"] += time.perf_counter() - t

    kept = {}

    def rayfem(rays):
        t = time.perf_counter()
        system = stage("rayfem", fem.assemble_rayfem, mesh, medium, omega, near_hi.rhs, disc.pml, rays, quad)
        x, rep = stage("rayfem", _solve, system, cfg.solver)
        far = fem.FEMSolution.from_system(system, x, mesh, rays, medium, omega)
        if cfg.keep_system:
            kept["system"] = system
        timings["rayfem"] += time.perf_counter() - t
        return far, rep, system.matrix.shape[0]

    far, rep, nd = rayfem(rays)
    stages.append(StageRecord("rayfem_0", rays, rep, nd))
    total = TotalField(far, near_hi)
    u_nodes = total(mesh.nodes)

    tol_history: list[float] = []
    converged = True
    if cfg.ray_mode == "learned" and cfg.max_iter > 0:
        converged = False
        for it in range(1, cfg.max_iter + 1):
            t = time.perf_counter()
            learned = stage("nmla", learn, total, omega)
            rays = stage("nmla", merge_rays, mesh, bdirs, learned.rays, x0, 2 * eps)
            timings["nmla"] += time.perf_counter() - t
            far, rep, nd = rayfem(rays)
            stages.append(StageRecord(f"rayfem_{it}", rays, rep, nd))
            total = TotalField(far, near_hi)
            u_new = total(mesh.nodes)
            tol_history.append(_change(u_new, u_nodes, change_mask))
            u_nodes = u_new
            if tol_history[-1] < cfg.loop_tol:
                converged = True
                break

    timings["total"] = time.perf_counter() - t_start
    return HybridResult(cfg, disc, eps, low, near_hi, far, total, u_nodes, stages, tol_history,
                        timings, converged, learned, kept.get("system"))


# --------------------------------------------------------------------------
# references

def homogeneous_reference(omega: float, x0, c0: float = 1.0):
    x0 = np.asarray(x0, dtype=float)
    return lambda pts: exact_homogeneous(omega, pts, x0, c0)


def babich_reference(medium: Medium, x0, omega: float, domain=UNIT_SQUARE, h: float | None = None,
                     npw: float = 8.0) -> "callable":
    """Two-term Babich field on a grid covering the whole box (valid where rays do not cross)."""
    x0 = np.asarray(x0, dtype=float)
    if h is None:
        c_min, _ = medium.speed_range(domain)
        h = 2 * np.pi * c_min / (omega * npw)
    xmin, xmax, ymin, ymax = domain
    n = int(np.ceil((xmax - xmin) / h - 1e-9))
    while any(abs(v * n / (xmax - xmin) - round(v * n / (xmax - xmin))) > 1e-7
              for v in (ymax - ymin, x0[0] - xmin, x0[1] - ymin)):
        n += 1
    hh = (xmax - xmin) / n
    grid = CartesianGrid(n + 1, int(round((ymax - ymin) / hh)) + 1, hh, hh, (xmin, ymin))
    ing = bb.compute_ingredients(medium, x0, grid)

    def ref(pts):
        pts = np.asarray(pts, dtype=float)
        u, _ = ing.evaluate(omega, pts)
        return u

    ref.ingredients = ing
    return ref


def self_reference(config: HybridConfig, medium: Medium, x0, npw: float = 16.0, ray_h: float | None = None):
    """Fine-mesh ray-FEM solve with first-arrival eikonal rays, used as a reference field."""
    ref_cfg = replace(config, npw=npw, ray_mode="exact")
    disc = build_discretization(ref_cfg.omega, npw, medium, x0, ref_cfg.domain)
    rays = exact_ray_field(medium, x0, disc.grid.bounds, ray_h or max(disc.h, 1.0 / 400))
    res = run_hybrid(ref_cfg, medium, x0, exact_rays=rays)
    return res
