"""Two-term Babich expansion u_b = u_b0 + u_b1 around a point source.

    u_b0 = (i sqrt(pi)/2) v0 H0(omega phi)
    u_b1 = (i sqrt(pi)/omega) e^{i pi} v1 phi H1(omega phi)

with gradients from H0' = -H1 and (z H1)' = 2 H1 - z H2 (in terms of phi):
grad[H0(omega phi)] = -omega H1 grad phi and grad[phi H1(omega phi)] = (2 H1 - omega phi H2) grad phi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hhx import eikonal as ek
from hhx.grid import CartesianGrid, ScalarField, VectorField, cubic_eval
from hhx.specfun import hankel1_012

HANKEL_FLOOR = 1e-3


def coefficients(omega: float) -> tuple[complex, complex]:
    """(coef0, coef1) multiplying v0 H0 and v1 phi H1."""
    return 0.5j * np.sqrt(np.pi), 1j * np.sqrt(np.pi) / omega * np.exp(1j * np.pi)


def _combine(omega, phi, gphi, v0, gv0, v1, gv1):
    """u_b and grad u_b from pointwise ingredients; gradients have a trailing axis of 2."""
    z = omega * phi
    if np.any(z < HANKEL_FLOOR):
        raise ValueError(f"omega*phi below the Hankel safety floor {HANKEL_FLOOR}")
    H0, H1, H2 = hankel1_012(z)
    c0, c1 = coefficients(omega)
    f0 = H0
    f1 = phi * H1
    df0 = (-omega * H1)[..., None] * gphi
    df1 = (2 * H1 - z * H2)[..., None] * gphi
    u = c0 * v0 * f0 + c1 * v1 * f1
    g = c0 * (gv0 * f0[..., None] + v0[..., None] * df0) + c1 * (gv1 * f1[..., None] + v1[..., None] * df1)
    return u, g


@dataclass
class BabichIngredients:
    """Phase and amplitude fields on a sweeping grid, frequency independent."""

    eikonal: ek.EikonalResult
    transport: ek.TransportResult

    @property
    def grid(self) -> CartesianGrid:
        return self.eikonal.grid

    @property
    def x0(self) -> np.ndarray:
        return self.eikonal.x0

    def phase_at(self, pts):
        """phi and grad phi at arbitrary points by cubic interpolation of tau."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        t, tx, ty = cubic_eval(self.grid, self.eikonal.tau.values, flat, gradient=True)
        y = flat - self.x0
        r = np.hypot(y[:, 0], y[:, 1])
        c0 = self.eikonal.c0
        with np.errstate(invalid="ignore", divide="ignore"):
            gp0 = np.where(r[:, None] > 0, y / (r[:, None] * c0), 0.0)
        phi0 = r / c0
        phi = phi0 * t
        gphi = t[:, None] * gp0 + phi0[:, None] * np.column_stack([tx, ty])
        return phi.reshape(pts.shape[:-1]), gphi.reshape(pts.shape)

    def evaluate(self, omega: float, pts):
        """u_b and grad u_b (shape (..., 2)) at points off the source."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        phi, gphi = self.phase_at(flat)
        tr = self.transport
        g = self.grid
        v0 = cubic_eval(g, tr.v0.values, flat)
        v1 = cubic_eval(g, tr.v1.values, flat)
        gv0 = np.column_stack([cubic_eval(g, tr.grad_v0.values[k], flat) for k in range(2)])
        gv1 = np.column_stack([cubic_eval(g, tr.grad_v1.values[k], flat) for k in range(2)])
        u, gu = _combine(omega, phi, gphi, v0, gv0, v1, gv1)
        return u.reshape(pts.shape[:-1]), gu.reshape(pts.shape)


def compute_ingredients(medium, x0, grid: CartesianGrid,
                        phase_config: ek.SweepConfig = ek.PHASE_CONFIG,
                        v0_config: ek.SweepConfig = ek.V0_CONFIG,
                        v1_config: ek.SweepConfig = ek.V1_CONFIG) -> BabichIngredients:
    eik = ek.solve_phase(medium, x0, grid, phase_config)
    tr = ek.solve_amplitudes(eik, medium, v0_config, v1_config)
    return BabichIngredients(eik, tr)


@dataclass
class BabichExpansion:
    omega: float
    u_b: np.ndarray        # complex (ny, nx); NaN outside the assembled region
    grad_u_b: np.ndarray   # complex (2, ny, nx)
    ray_dirs: VectorField  # unit directions on D_2eps, NaN elsewhere and at x0
    x0: np.ndarray
    eps: float
    grid: CartesianGrid
    ingredients: BabichIngredients | None = None

    def evaluate(self, pts):
        return self.ingredients.evaluate(self.omega, pts)


def babich_rays(eik: ek.EikonalResult, radius: float) -> VectorField:
    """grad phi / |grad phi| on the disk of ``radius`` about the source; NaN elsewhere.

    The source node itself has no direction.
    """
    grid = eik.grid
    X, Y = grid.mesh_xy()
    r = np.hypot(X - eik.x0[0], Y - eik.x0[1])
    g = eik.grad_phi.values
    n = np.hypot(g[0], g[1])
    inside = (r <= radius * (1 + 1e-12)) & (r > 0)
    if np.any(inside & (n == 0)):
        raise ValueError("zero phase gradient away from the source")
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(inside[None], g / n, np.nan)
    return VectorField(grid, d)


def assemble_babich(omega: float, ingredients: BabichIngredients, eps: float,
                    region: str = "annulus") -> BabichExpansion:
    """Nodal u_b and grad u_b on the annulus eps <= r <= 2 eps (or the punctured disk r <= 2 eps)."""
    eik, tr = ingredients.eikonal, ingredients.transport
    grid = eik.grid
    X, Y = grid.mesh_xy()
    r = np.hypot(X - eik.x0[0], Y - eik.x0[1])
    tol = 1 + 1e-12
    if region == "annulus":
        sel = (r >= eps / tol) & (r <= 2 * eps * tol)
    elif region == "disk":
        sel = (r > 0) & (r <= 2 * eps * tol)
    else:
        raise ValueError("region must be 'annulus' or 'disk'")
    u = np.full(grid.shape, np.nan + 0j)
    gu = np.full((2,) + grid.shape, np.nan + 0j)
    mv = lambda a: np.moveaxis(a, 0, -1)[sel]
    ui, gi = _combine(omega, eik.phi.values[sel], mv(eik.grad_phi.values), tr.v0.values[sel],
                      mv(tr.grad_v0.values), tr.v1.values[sel], mv(tr.grad_v1.values))
    u[sel] = ui
    gu[:, sel] = gi.T
    return BabichExpansion(omega, u, gu, babich_rays(eik, 2 * eps), eik.x0, eps, grid, ingredients)
