"""PML-stretched Galerkin assembly for P1 and ray-enriched P1 spaces.

The sesquilinear form is

    B(u, v) = int D grad u . conj(grad v) - omega^2 int m s_x s_y u conj(v),
    F(v)    = int s_x s_y f conj(v),

with s = 1 + i sigma/omega and D = diag(s_y/s_x, s_x/s_y).  Ray basis functions
are lambda_j(x) exp(i k_j d_jl . x) with k_j = omega/c(x_j) frozen at the vertex.
Dirichlet nodes on the outer boundary are eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from hhx.grid import QuadratureRule, TriMesh, locate, quadrature

_CHUNK = 4096


# --------------------------------------------------------------------------
# PML

@dataclass(frozen=True)
class PMLProfile:
    """Quadratic absorbing layer of width ``thickness`` inside ``bounds`` = (xmin, xmax, ymin, ymax)."""

    thickness: float
    strength: float
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        if not (self.thickness > 0 and self.strength > 0):
            raise ValueError("PML thickness and strength must be positive")
        xmin, xmax, ymin, ymax = self.bounds
        if 2 * self.thickness >= min(xmax - xmin, ymax - ymin):
            raise ValueError("PML layers overlap")

    @property
    def interior(self) -> tuple[float, float, float, float]:
        xmin, xmax, ymin, ymax = self.bounds
        d = self.thickness
        return (xmin + d, xmax - d, ymin + d, ymax - d)


def _ramp(t, lo, hi, d):
    left = np.clip((lo + d - t) / d, 0.0, None)
    right = np.clip((t - (hi - d)) / d, 0.0, None)
    return np.maximum(left, right)


def pml_sigma(profile: PMLProfile, pts):
    pts = np.asarray(pts, dtype=float)
    xmin, xmax, ymin, ymax = profile.bounds
    d, C = profile.thickness, profile.strength
    sx = C / d * _ramp(pts[..., 0], xmin, xmax, d) ** 2
    sy = C / d * _ramp(pts[..., 1], ymin, ymax, d) ** 2
    return sx, sy


def pml_stretch(profile: PMLProfile, omega: float, pts):
    """(s_x, s_y, D_xx, D_yy)."""
    sgx, sgy = pml_sigma(profile, pts)
    sx = 1 + 1j * sgx / omega
    sy = 1 + 1j * sgy / omega
    return sx, sy, sy / sx, sx / sy


def default_pml(omega: float, c_max: float, physical_bounds, wavelengths: float = 2.0,
                strength: float = 25.0, h: float | None = None) -> PMLProfile:
    """Layer of ``wavelengths`` wavelengths appended outside the physical box.

    With ``h`` given the width is rounded up to a whole number of cells.
    """
    d = wavelengths * 2 * np.pi * c_max / omega
    if h is not None:
        d = np.ceil(d / h - 1e-9) * h
    xmin, xmax, ymin, ymax = physical_bounds
    return PMLProfile(d, strength, (xmin - d, xmax + d, ymin - d, ymax + d))


# --------------------------------------------------------------------------
# ray sets

@dataclass
class RaySet:
    """Per-node lists of propagation angles (radians), stored flat with offsets."""

    angles: np.ndarray
    offsets: np.ndarray
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        self.angles = np.mod(np.asarray(self.angles, dtype=float), 2 * np.pi)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        if self.offsets[0] != 0 or self.offsets[-1] != len(self.angles) or np.any(np.diff(self.offsets) < 0):
            raise ValueError("inconsistent ray offsets")

    @classmethod
    def from_lists(cls, lists, amplitudes=None) -> "RaySet":
        counts = [len(a) for a in lists]
        offs = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        flat = np.concatenate([np.asarray(a, dtype=float) for a in lists]) if offs[-1] else np.zeros(0)
        amp = None
        if amplitudes is not None:
            amp = np.concatenate([np.asarray(a, dtype=complex) for a in amplitudes]) if offs[-1] else np.zeros(0, complex)
        return cls(flat, offs, amp)

    @classmethod
    def from_vectors(cls, dirs) -> "RaySet":
        """One ray per node from a (N, 2) array of directions; NaN rows get none."""
        dirs = np.asarray(dirs, dtype=float)
        ok = np.all(np.isfinite(dirs), axis=1) & (np.hypot(dirs[:, 0], dirs[:, 1]) > 0)
        counts = ok.astype(np.int64)
        offs = np.concatenate([[0], np.cumsum(counts)])
        return cls(np.arctan2(dirs[ok, 1], dirs[ok, 0]), offs)

    @property
    def n_nodes(self) -> int:
        return len(self.offsets) - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_dofs(self) -> int:
        return int(self.offsets[-1])

    def node_angles(self, j: int) -> np.ndarray:
        return self.angles[self.offsets[j]:self.offsets[j + 1]]

    def padded(self, width: int | None = None):
        """(angles (N, R), mask (N, R)) with R the max count unless given."""
        counts = self.counts
        R = int(counts.max()) if width is None else width
        R = max(R, 1)
        idx = self.offsets[:-1, None] + np.arange(R)[None, :]
        mask = np.arange(R)[None, :] < counts[:, None]
        ang = np.where(mask, self.angles[np.minimum(idx, max(len(self.angles) - 1, 0))] if len(self.angles) else 0.0, 0.0)
        return ang, mask

    def validate(self, min_sep_deg: float = 15.0, max_count: int = 4, require=None) -> None:
        counts = self.counts
        if np.any(counts > max_count):
            raise ValueError(f"a node carries more than {max_count} rays")
        if require is not None and np.any(counts[require] == 0):
            raise ValueError("empty ray list at a node that carries ray dofs")
        sep = np.deg2rad(min_sep_deg) - 1e-9
        multi = np.flatnonzero(counts > 1)
        if multi.size == 0:
            return
        R = int(counts[multi].max())
        idx = self.offsets[multi][:, None] + np.arange(R)[None, :]
        mask = np.arange(R)[None, :] < counts[multi][:, None]
        a = np.where(mask, self.angles[np.minimum(idx, len(self.angles) - 1)], np.inf)
        a = np.sort(a, axis=1)
        first = a[:, :1]
        last = a[np.arange(len(multi)), counts[multi] - 1][:, None]
        gaps = np.where(mask[:, 1:], np.diff(a, axis=1), np.inf)
        wrap = first + 2 * np.pi - last
        bad = np.any(gaps < sep, axis=1) | (wrap[:, 0] < sep)
        if np.any(bad):
            j = multi[np.flatnonzero(bad)[0]]
            raise ValueError(f"rays at node {j} closer than {min_sep_deg} degrees")


# --------------------------------------------------------------------------
# systems

@dataclass
class ComplexSparseSystem:
    matrix: sp.csr_matrix        # reduced to free dofs
    rhs: np.ndarray
    dof_offsets: np.ndarray      # node j owns full dofs [offsets[j], offsets[j+1])
    free: np.ndarray             # full dof indices of the reduced unknowns
    n_full: int

    def expand(self, x) -> np.ndarray:
        full = np.zeros(self.n_full, dtype=complex)
        full[self.free] = x
        return full


def _element_geometry(mesh: TriMesh, elems: np.ndarray):
    P = mesh.nodes[mesh.elements[elems]]  # (E, 3, 2)
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # gradients of barycentric functions
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    G = np.stack([-g1 - g2, g1, g2], axis=1)  # (E, 3, 2)
    return P, 0.5 * np.abs(det), G


def _node_wavenumbers(mesh: TriMesh, medium, omega):
    return omega / medium.speed(mesh.nodes)


def _local_basis(mesh, elems, quad, ks, rays, R):
    """Values and gradients of the local (vertex, ray) basis at quadrature points.

    Returns xq (E, Q, 2), area (E,), psi (E, Q, 3R), gpsi (E, Q, 3R, 2), dofs (E, 3R), mask (E, 3R).
    """
    P, area, G = _element_geometry(mesh, elems)
    lam = quad.barycentric  # (Q, 3)
    xq = np.einsum("qa,ead->eqd", lam, P)
    nodes = mesh.elements[elems]  # (E, 3)
    E, Q = len(elems), len(quad.weights)
    if rays is None:
        psi = np.broadcast_to(lam[None], (E, Q, 3)).astype(complex)
        gpsi = np.broadcast_to(G[:, None], (E, Q, 3, 2)).astype(complex)
        return xq, area, psi, gpsi, nodes, np.ones((E, 3), dtype=bool)
    ang, msk = rays
    a = ang[nodes][:, :, :R]          # (E, 3, R)
    m = msk[nodes][:, :, :R]
    d = np.stack([np.cos(a), np.sin(a)], axis=-1)  # (E, 3, R, 2)
    kv = ks[nodes][:, :, None, None] * d            # (E, 3, R, 2)
    phase = np.exp(1j * np.einsum("eqd,eard->eqar", xq, kv))  # (E, Q, 3, R)
    phase = phase * m[:, None]
    psi = lam[None, :, :, None] * phase
    gpsi = (G[:, None, :, None, :] + 1j * kv[:, None] * lam[None, :, :, None, None]) * phase[..., None]
    psi = psi.reshape(E, Q, 3 * R)
    gpsi = gpsi.reshape(E, Q, 3 * R, 2)
    return xq, area, psi, gpsi, None, m.reshape(E, 3 * R)


def _assemble(mesh, medium, omega, rhs, profile, quad, rays: RaySet | None):
    N = mesh.n_nodes
    if rays is None:
        offsets = np.arange(N + 1, dtype=np.int64)
        order = np.arange(mesh.n_elements)
        pad = None
        ks = None
        elem_R = np.ones(mesh.n_elements, dtype=np.int64)
    else:
        if rays.n_nodes != N:
            raise ValueError("ray set does not match the mesh")
        offsets = rays.offsets
        ks = _node_wavenumbers(mesh, medium, omega)
        ang, msk = rays.padded()
        pad = (ang, msk)
        elem_R = rays.counts[mesh.elements].max(axis=1)
        order = np.argsort(elem_R, kind="stable")
    n_full = int(offsets[-1])
    w = quad.weights
    A = sp.csr_matrix((n_full, n_full), dtype=complex)
    b = np.zeros(n_full, dtype=complex)
    rows_acc, cols_acc, vals_acc, nacc = [], [], [], 0
    for start in range(0, len(order), _CHUNK):
        elems = order[start:start + _CHUNK]
        R = int(max(elem_R[elems].max(), 1))
        xq, area, psi, gpsi, _, mask = _local_basis(mesh, elems, quad, ks, pad, R)
        sx, sy, dxx, dyy = pml_stretch(profile, omega, xq)
        m = medium.slowness_sq(xq)
        wt = area[:, None] * w[None, :]
        # K[e, i(test), j(trial)]
        Kx = np.einsum("eq,eqj,eqi->eij", wt * dxx, gpsi[..., 0], gpsi[..., 0].conj(), optimize=True)
        Ky = np.einsum("eq,eqj,eqi->eij", wt * dyy, gpsi[..., 1], gpsi[..., 1].conj(), optimize=True)
        M = np.einsum("eq,eqj,eqi->eij", wt * m * sx * sy, psi, psi.conj(), optimize=True)
        Ke = Kx + Ky - omega**2 * M
        if rays is None:
            dofs = mesh.elements[elems]
        else:
            nodes = mesh.elements[elems]
            dofs = (offsets[nodes][:, :, None] + np.arange(R)[None, None, :]).reshape(len(elems), 3 * R)
        dofs = np.where(mask, dofs, -1)
        if rhs is not None:
            f = rhs(xq) if callable(rhs) else rhs
            if np.any(f != 0):
                Fe = np.einsum("eq,eqi->ei", wt * sx * sy * f, psi.conj())
                ok = mask & (np.abs(Fe) > 0)
                np.add.at(b, dofs[ok], Fe[ok])
        I = np.broadcast_to(dofs[:, :, None], Ke.shape)
        J = np.broadcast_to(dofs[:, None, :], Ke.shape)
        ok = (I >= 0) & (J >= 0)
        rows_acc.append(I[ok]); cols_acc.append(J[ok]); vals_acc.append(Ke[ok])
        nacc += int(ok.sum())
        if nacc > 4_000_000:
            A = A + sp.csr_matrix((np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
                                  shape=(n_full, n_full))
            rows_acc, cols_acc, vals_acc, nacc = [], [], [], 0
    if nacc:
        A = A + sp.csr_matrix((np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
                              shape=(n_full, n_full))
    A.sum_duplicates()
    A.sort_indices()
    bnd = np.zeros(N, dtype=bool)
    bnd[mesh.boundary_nodes] = True
    fixed_dof = np.repeat(bnd, np.diff(offsets))
    free = np.flatnonzero(~fixed_dof)
    Af = A[free][:, free].tocsr()
    Af.sort_indices()
    return ComplexSparseSystem(Af, b[free], offsets, free, n_full)


def assemble_sfem(mesh: TriMesh, medium, omega: float, rhs, profile: PMLProfile,
                  quad: QuadratureRule | None = None) -> ComplexSparseSystem:
    """Standard P1 system. ``rhs`` is a callable f(points (..., 2)) or None."""
    return _assemble(mesh, medium, omega, rhs, profile, quad or quadrature(9), None)


def assemble_rayfem(mesh: TriMesh, medium, omega: float, rhs, profile: PMLProfile, rays: RaySet,
                    quad: QuadratureRule | None = None) -> ComplexSparseSystem:
    interior = np.ones(mesh.n_nodes, dtype=bool)
    interior[mesh.boundary_nodes] = False
    if rays.n_nodes != mesh.n_nodes:
        raise ValueError("ray set does not match the mesh")
    return _assemble(mesh, medium, omega, rhs, profile, quad or quadrature(9), rays)


# --------------------------------------------------------------------------
# solutions

@dataclass
class FEMSolution:
    """Nodal (P1) or ray-enriched coefficients, evaluable anywhere in the mesh."""

    mesh: TriMesh
    coeffs: np.ndarray           # full dof vector
    rays: RaySet | None = None
    ks: np.ndarray | None = None  # per-node wavenumbers for the ray basis

    @classmethod
    def from_system(cls, system: ComplexSparseSystem, x, mesh, rays=None, medium=None, omega=None):
        ks = None if rays is None else _node_wavenumbers(mesh, medium, omega)
        return cls(mesh, system.expand(x), rays, ks)

    def _parts(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        elem, bary = locate(self.mesh, flat)
        nodes = self.mesh.elements[elem]
        return pts.shape, flat, elem, bary, nodes

    def _terms(self, flat, elem, bary, nodes):
        if self.rays is None:
            c = self.coeffs[nodes]  # (P, 3)
            return c[:, :, None], np.ones(c.shape + (1,), dtype=complex), np.zeros(c.shape + (1, 2))
        ang, msk = self.rays.padded()
        R = ang.shape[1]
        a = ang[nodes]
        m = msk[nodes]
        idx = self.rays.offsets[nodes][:, :, None] + np.arange(R)
        c = np.where(m, self.coeffs[np.minimum(idx, len(self.coeffs) - 1)], 0.0)
        kv = self.ks[nodes][:, :, None, None] * np.stack([np.cos(a), np.sin(a)], axis=-1)
        E = np.exp(1j * np.einsum("pd,pard->par", flat, kv))
        return c, E, kv

    def __call__(self, pts):
        shape, flat, elem, bary, nodes = self._parts(pts)
        c, E, _ = self._terms(flat, elem, bary, nodes)
        val = np.einsum("pa,par->p", bary, c * E)
        return val.reshape(shape[:-1])

    def gradient(self, pts):
        shape, flat, elem, bary, nodes = self._parts(pts)
        c, E, kv = self._terms(flat, elem, bary, nodes)
        _, _, G = _element_geometry(self.mesh, elem)  # (P, 3, 2)
        cE = c * E
        g = np.einsum("pad,par->pd", G, cE) + 1j * np.einsum("pa,par,pard->pd", bary, cE, kv)
        return g.reshape(shape)

    def nodal_values(self) -> np.ndarray:
        """Values at the mesh nodes (partition of unity: only the node's own dofs)."""
        return self(self.mesh.nodes)


# --------------------------------------------------------------------------
# error norms

def l2_norms(u_h, u_ref, mesh: TriMesh, region_bounds, x0=None, eta: float = 0.0,
             quad: QuadratureRule | None = None) -> tuple[float, float]:
    """(||u_h - u_ref||, ||u_ref||) in L2 over elements inside ``region_bounds`` minus D_eta."""
    quad = quad or quadrature(9)
    xmin, xmax, ymin, ymax = region_bounds
    cent = mesh.nodes[mesh.elements].mean(axis=1)
    inside = np.flatnonzero((cent[:, 0] > xmin) & (cent[:, 0] < xmax) & (cent[:, 1] > ymin) & (cent[:, 1] < ymax))
    num = den = 0.0
    for start in range(0, len(inside), _CHUNK):
        elems = inside[start:start + _CHUNK]
        P, area, _ = _element_geometry(mesh, elems)
        xq = np.einsum("qa,ead->eqd", quad.barycentric, P)
        wt = area[:, None] * quad.weights[None, :]
        if x0 is not None and eta > 0:
            keep = np.hypot(xq[..., 0] - x0[0], xq[..., 1] - x0[1]) >= eta
            wt = wt * keep
            pts = xq[keep]
            a = np.zeros(wt.shape, dtype=complex)
            bref = np.zeros(wt.shape, dtype=complex)
            a[keep] = u_h(pts)
            bref[keep] = u_ref(pts)
        else:
            a = u_h(xq)
            bref = u_ref(xq)
        num += float(np.sum(wt * np.abs(a - bref) ** 2))
        den += float(np.sum(wt * np.abs(bref) ** 2))
    return np.sqrt(num), np.sqrt(den)


def relative_l2(u_h, u_ref, mesh: TriMesh, region_bounds, x0=None, eta: float = 0.0,
                quad: QuadratureRule | None = None) -> float:
    num, den = l2_norms(u_h, u_ref, mesh, region_bounds, x0, eta, quad)
    if den == 0:
        raise ZeroDivisionError("reference field has zero norm on the error region")
    return num / den
