"""Radial smooth cut-off chi_eps and the far-field source it induces.

chi = 1 for r <= eps, exp(P(t)) with t = r/eps - 1 and P(t) = 2 exp(-1/t)/(t - 1)
on eps < r < 2 eps, and 0 for r >= 2 eps.  Writing E = exp(-1/t):

    P'  = 2E [1/(t^2 (t-1)) - 1/(t-1)^2]
    P'' = 2 [E''/(t-1) - 2E'/(t-1)^2 + 2E/(t-1)^3],  E' = E/t^2,  E'' = E (1/t^4 - 2/t^3)

so chi_r = chi P'/eps, chi_rr = chi (P'^2 + P'')/eps^2, grad chi = chi_r (x - x0)/r
and lap chi = chi_rr + chi_r/r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CutoffParams:
    x0: tuple[float, float]
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def _radial(params: CutoffParams, pts):
    pts = np.asarray(pts, dtype=float)
    y = pts - np.asarray(params.x0, dtype=float)
    r = np.hypot(y[..., 0], y[..., 1])
    t = r / params.eps - 1.0
    mid = (t > 0) & (t < 1)
    chi = np.where(t <= 0, 1.0, 0.0)
    dchi = np.zeros_like(r)
    d2chi = np.zeros_like(r)
    tm = t[mid]
    E = np.exp(-1.0 / tm)
    s = tm - 1.0
    P = 2.0 * E / s
    E1 = E / tm**2
    E2 = E * (1.0 / tm**4 - 2.0 / tm**3)
    P1 = 2.0 * (E1 / s - E / s**2)
    P2 = 2.0 * (E2 / s - 2.0 * E1 / s**2 + 2.0 * E / s**3)
    c = np.where(P > -700.0, np.exp(np.maximum(P, -700.0)), 0.0)
    eps = params.eps
    chi[mid] = c
    dchi[mid] = c * P1 / eps
    d2chi[mid] = c * (P1**2 + P2) / eps**2
    return y, r, chi, dchi, d2chi


def chi(params: CutoffParams, pts) -> np.ndarray:
    return _radial(params, pts)[2]


def grad_chi(params: CutoffParams, pts) -> np.ndarray:
    """Gradient, shape (..., 2); zero on the plateau and outside 2 eps."""
    y, r, _, dchi, _ = _radial(params, pts)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r > 0, dchi / r, 0.0)
    return g[..., None] * y


def lap_chi(params: CutoffParams, pts) -> np.ndarray:
    y, r, _, dchi, d2chi = _radial(params, pts)
    with np.errstate(invalid="ignore", divide="ignore"):
        return d2chi + np.where(r > 0, dchi / r, 0.0)


def rhs_values(u_b, grad_u_b, params: CutoffParams, pts) -> np.ndarray:
    """f = 2 grad u_b . grad chi + u_b lap chi at ``pts``.

    ``u_b`` has shape (...,) and ``grad_u_b`` shape (..., 2); both only need
    to be meaningful where eps < r < 2 eps.
    """
    y, r, _, dchi, d2chi = _radial(params, pts)
    inside = (r > params.eps) & (r < 2 * params.eps)
    f = np.zeros(r.shape, dtype=complex)
    ri = r[inside]
    gc = (dchi[inside] / ri)[:, None] * y[inside]
    lc = d2chi[inside] + dchi[inside] / ri
    f[inside] = 2.0 * np.sum(grad_u_b[inside] * gc, axis=-1) + u_b[inside] * lc
    return f


def assemble_rhs_field(babich, params: CutoffParams):
    """Nodal far-field source on the Babich expansion's grid, zero off the open annulus."""
    from hhx.grid import ScalarField

    grid = babich.grid
    pts = np.stack(grid.mesh_xy(), axis=-1)
    r = np.hypot(pts[..., 0] - params.x0[0], pts[..., 1] - params.x0[1])
    need = (r > params.eps) & (r < 2 * params.eps)
    if np.any(need & ~np.isfinite(babich.u_b)):
        raise ValueError("Babich expansion does not cover the cut-off annulus")
    ub = np.where(need, babich.u_b, 0.0)
    gub = np.where(need[None], babich.grad_u_b, 0.0)
    return ScalarField(grid, rhs_values(ub, np.moveaxis(gub, 0, -1), params, pts))
