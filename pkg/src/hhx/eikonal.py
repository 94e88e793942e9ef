"""Factored Lax-Friedrichs WENO fast sweeping for the phase and the two amplitudes.

The phase is written phi = phi0 * tau with phi0 = |x - x0|/c(x0).  The factor
tau is singular-free only up to the angular structure of T = phi^2 at the
source, so it is further split as tau = tau_q + w where tau_q comes from the
local Taylor expansion of T (solved recursively from |grad T|^2 = 4 m T) and
the sweeping unknown w is smooth enough for WENO-5.  The transport equations

    grad T . grad v0 + (-2 m + lap T / 2) v0 = 0,       v0(x0) = 1/(2 sqrt(pi))
    grad T . grad v1 + (lap T / 2) v1 = lap v0 / 2

are handled the same way: v = V_q + w with V_q a Taylor polynomial about x0.
Nodes within ``3 max(hx, hy)`` of the source keep their Taylor values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from hhx import _poly
from hhx.grid import CartesianGrid, ScalarField, VectorField

V0_AT_SOURCE = 0.5 / np.sqrt(np.pi)
_WENO_EPS = 1e-6


class SweepError(RuntimeError):
    """Fast sweeping failed to converge."""


@dataclass(frozen=True)
class SweepConfig:
    weno_order: int = 5
    factorization_order: int = 6
    lf_viscosity_margin: float = 1.1
    sweep_tolerance: float = 1e-12
    max_sweeps: int = 200

    def __post_init__(self):
        if self.weno_order not in (3, 5):
            raise ValueError("weno_order must be 3 or 5")
        if self.factorization_order not in (1, 3, 5, 6):
            raise ValueError("factorization_order must be one of 1, 3, 5, 6")
        if not self.sweep_tolerance > 0:
            raise ValueError("sweep_tolerance must be positive")
        if self.lf_viscosity_margin < 1:
            raise ValueError("viscosity margin below 1 is unstable")


PHASE_CONFIG = SweepConfig(5, 6)
V0_CONFIG = SweepConfig(3, 3)
V1_CONFIG = SweepConfig(3, 1)


# --------------------------------------------------------------------------
# Taylor expansions at the source

@dataclass
class SourceTaylor:
    """Homogeneous Taylor parts of T = phi^2, v0 and v1 about the source."""

    x0: np.ndarray
    m0: float
    T: list  # T[n] homogeneous of degree n (T[0] = T[1] = 0)
    v0: list
    v1: list
    deg: int

    def partial(self, which: str, lo: int, hi: int) -> np.ndarray:
        parts = getattr(self, which)
        P = _poly.zeros(self.deg)
        for n in range(lo, min(hi, len(parts) - 1) + 1):
            P = P + parts[n]
        return P


def source_taylor(medium, x0, deg: int = 8) -> SourceTaylor:
    """Recursive Taylor coefficients of T, v0 and v1 to total degree ``deg``.

    Degree n of |grad T|^2 = 4 m T gives
    4 m0 (n-1) T_n = 4 sum_{i>=1} m_i T_{n-i} - sum_{j,l>=3, j+l=n+2} grad T_j . grad T_l.
    """
    x0 = np.asarray(x0, dtype=float)
    M = medium.slowness_taylor(x0, deg)
    m = [_poly.homogeneous_part(M, i) for i in range(deg + 1)]
    m0 = M[0, 0]
    T = [_poly.zeros(deg) for _ in range(deg + 1)]
    T[2][2, 0] = T[2][0, 2] = m0
    for n in range(3, deg + 1):
        acc = _poly.zeros(deg)
        for i in range(1, n - 1):
            acc += 4.0 * _poly.mul(m[i], T[n - i], deg)
        for j in range(3, n):
            acc -= _poly.grad_dot(T[j], T[n + 2 - j], deg)
        T[n] = acc / (4.0 * m0 * (n - 1))

    lapT = [_poly.lap(T[k + 2]) if k + 2 <= deg else _poly.zeros(deg) for k in range(deg + 1)]
    cpar = [-2.0 * m[k] + 0.5 * lapT[k] for k in range(deg + 1)]

    dv0 = deg - 2
    v0 = [_poly.zeros(deg) for _ in range(dv0 + 1)]
    v0[0][0, 0] = V0_AT_SOURCE
    for n in range(1, dv0 + 1):
        acc = _poly.zeros(deg)
        for k in range(3, n + 3):
            acc += _poly.grad_dot(T[k], v0[n + 2 - k], deg)
        for k in range(1, n + 1):
            acc += _poly.mul(cpar[k], v0[n - k], deg)
        v0[n] = -acc / (2.0 * m0 * n)

    dv1 = dv0 - 2
    v1 = [_poly.zeros(deg) for _ in range(dv1 + 1)]
    for n in range(0, dv1 + 1):
        acc = 0.5 * _poly.lap(v0[n + 2])
        for k in range(3, n + 3):
            acc -= _poly.grad_dot(T[k], v1[n + 2 - k], deg)
        for k in range(1, n + 1):
            acc -= 0.5 * _poly.mul(lapT[k], v1[n - k], deg)
        v1[n] = acc / (2.0 * m0 * (n + 1))
    return SourceTaylor(x0, m0, T, v0, v1, deg)


def _poly_fields(P, Y1, Y2):
    return (_poly.evaluate(P, Y1, Y2), _poly.evaluate(_poly.dx(P), Y1, Y2),
            _poly.evaluate(_poly.dy(P), Y1, Y2), _poly.evaluate(_poly.lap(P), Y1, Y2))


# --------------------------------------------------------------------------
# numba kernels

@njit(cache=True, inline="always")
def _at(W, j, i, axis, k):
    if axis == 0:
        return W[j, i + k]
    return W[j + k, i]


@njit(cache=True)
def _w5(v1, v2, v3, v4, v5):
    is0 = 13.0 / 12.0 * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    is1 = 13.0 / 12.0 * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    is2 = 13.0 / 12.0 * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2
    a0 = 0.1 / (_WENO_EPS + is0) ** 2
    a1 = 0.6 / (_WENO_EPS + is1) ** 2
    a2 = 0.3 / (_WENO_EPS + is2) ** 2
    return (a0 * (v1 / 3 - 7 * v2 / 6 + 11 * v3 / 6)
            + a1 * (-v2 / 6 + 5 * v3 / 6 + v4 / 3)
            + a2 * (v3 / 3 + 5 * v4 / 6 - v5 / 6)) / (a0 + a1 + a2)


@njit(cache=True)
def _one_sided(W, j, i, axis, pos, n, h, order, minus):
    """WENO derivative, falling back to lower order near the grid edges."""
    if minus:
        if order >= 5 and pos >= 3 and pos + 2 <= n - 1:
            d0 = _at(W, j, i, axis, -3)
            d1 = _at(W, j, i, axis, -2)
            d2 = _at(W, j, i, axis, -1)
            d3 = _at(W, j, i, axis, 0)
            d4 = _at(W, j, i, axis, 1)
            d5 = _at(W, j, i, axis, 2)
            return _w5((d1 - d0) / h, (d2 - d1) / h, (d3 - d2) / h, (d4 - d3) / h, (d5 - d4) / h)
        if pos >= 2 and pos + 1 <= n - 1:
            um2 = _at(W, j, i, axis, -2)
            um1 = _at(W, j, i, axis, -1)
            u0 = _at(W, j, i, axis, 0)
            up1 = _at(W, j, i, axis, 1)
            g = (_WENO_EPS + (u0 - 2 * um1 + um2) ** 2) / (_WENO_EPS + (up1 - 2 * u0 + um1) ** 2)
            wt = 1.0 / (1.0 + 2.0 * g * g)
            return (1 - wt) * (up1 - um1) / (2 * h) + wt * (3 * u0 - 4 * um1 + um2) / (2 * h)
        return (_at(W, j, i, axis, 0) - _at(W, j, i, axis, -1)) / h
    if order >= 5 and pos >= 2 and pos + 3 <= n - 1:
        d0 = _at(W, j, i, axis, -2)
        d1 = _at(W, j, i, axis, -1)
        d2 = _at(W, j, i, axis, 0)
        d3 = _at(W, j, i, axis, 1)
        d4 = _at(W, j, i, axis, 2)
        d5 = _at(W, j, i, axis, 3)
        return _w5((d5 - d4) / h, (d4 - d3) / h, (d3 - d2) / h, (d2 - d1) / h, (d1 - d0) / h)
    if pos >= 1 and pos + 2 <= n - 1:
        um1 = _at(W, j, i, axis, -1)
        u0 = _at(W, j, i, axis, 0)
        up1 = _at(W, j, i, axis, 1)
        up2 = _at(W, j, i, axis, 2)
        g = (_WENO_EPS + (up2 - 2 * up1 + u0) ** 2) / (_WENO_EPS + (up1 - 2 * u0 + um1) ** 2)
        wt = 1.0 / (1.0 + 2.0 * g * g)
        return (1 - wt) * (up1 - um1) / (2 * h) + wt * (-up2 + 4 * up1 - 3 * u0) / (2 * h)
    return (_at(W, j, i, axis, 1) - _at(W, j, i, axis, 0)) / h


@njit(cache=True)
def _extrapolate_edges(W, fixed):
    """Linear extrapolation into the edge ring.

    Higher-order extrapolation amplifies the sawtooth mode (by 15 for the cubic
    rule) and destabilizes long sweeps on large grids.
    """
    ny, nx = W.shape
    for j in range(1, ny - 1):
        if not fixed[j, 0]:
            W[j, 0] = 2 * W[j, 1] - W[j, 2]
        if not fixed[j, nx - 1]:
            W[j, nx - 1] = 2 * W[j, nx - 2] - W[j, nx - 3]
    for i in range(nx):
        if not fixed[0, i]:
            W[0, i] = 2 * W[1, i] - W[2, i]
        if not fixed[ny - 1, i]:
            W[ny - 1, i] = 2 * W[ny - 2, i] - W[ny - 3, i]


@njit(cache=True)
def _eikonal_update(W, j, i, fixed, tq, gtx, gty, phi0, gpx, gpy, sm, hx, hy, margin, order):
    ny, nx = W.shape
    pxm = _one_sided(W, j, i, 0, i, nx, hx, order, True)
    pxp = _one_sided(W, j, i, 0, i, nx, hx, order, False)
    pym = _one_sided(W, j, i, 1, j, ny, hy, order, True)
    pyp = _one_sided(W, j, i, 1, j, ny, hy, order, False)
    tau = tq[j, i] + W[j, i]
    p0 = phi0[j, i]
    Gx = tau * gpx[j, i] + p0 * (gtx[j, i] + 0.5 * (pxm + pxp))
    Gy = tau * gpy[j, i] + p0 * (gty[j, i] + 0.5 * (pym + pyp))
    nG = np.sqrt(Gx * Gx + Gy * Gy)
    alpha = margin * p0
    Hn = nG - sm[j, i] - 0.5 * alpha * (pxp - pxm) - 0.5 * alpha * (pyp - pym)
    dHdw = (Gx * gpx[j, i] + Gy * gpy[j, i]) / nG if nG > 0 else 0.0
    denom = alpha / hx + alpha / hy + max(dHdw, 0.0)
    return W[j, i] - Hn / denom


@njit(cache=True)
def _transport_update(W, j, i, ax, ay, c, s, hx, hy, margin, order):
    ny, nx = W.shape
    pxm = _one_sided(W, j, i, 0, i, nx, hx, order, True)
    pxp = _one_sided(W, j, i, 0, i, nx, hx, order, False)
    pym = _one_sided(W, j, i, 1, j, ny, hy, order, True)
    pyp = _one_sided(W, j, i, 1, j, ny, hy, order, False)
    a1 = ax[j, i]
    a2 = ay[j, i]
    al1 = margin * abs(a1)
    al2 = margin * abs(a2)
    Hn = (a1 * 0.5 * (pxm + pxp) + a2 * 0.5 * (pym + pyp) + c[j, i] * W[j, i] - s[j, i]
          - 0.5 * al1 * (pxp - pxm) - 0.5 * al2 * (pyp - pym))
    denom = al1 / hx + al2 / hy + c[j, i]
    if denom <= 1e-14:
        return W[j, i]
    return W[j, i] - Hn / denom


@njit(cache=True)
def _sweep(kind, W, fixed, F1, F2, F3, F4, F5, F6, F7, hx, hy, margin, order, tol, max_cycles, hist):
    """Gauss-Seidel sweeps over the four orderings, at most ``max_cycles`` cycles of four.

    Returns the number of sweeps used (negative if not converged).
    """
    ny, nx = W.shape
    for it in range(4 * max_cycles):
        d = it % 4
        change = 0.0
        for jj in range(1, ny - 1):
            j = jj if d < 2 else ny - 1 - jj
            for ii in range(1, nx - 1):
                i = ii if (d == 0 or d == 3) else nx - 1 - ii
                if fixed[j, i]:
                    continue
                if kind == 0:
                    new = _eikonal_update(W, j, i, fixed, F1, F2, F3, F4, F5, F6, F7,
                                          hx, hy, margin, order)
                else:
                    new = _transport_update(W, j, i, F1, F2, F3, F4, hx, hy, margin, order)
                dw = abs(new - W[j, i])
                if dw > change:
                    change = dw
                W[j, i] = new
        _extrapolate_edges(W, fixed)
        hist[it] = change
        if change < tol:
            return it + 1
    return -4 * max_cycles


# --------------------------------------------------------------------------
# finite-difference post-processing

def _weno3_avg(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Average of left- and right-biased WENO-3 derivatives (first order at edges)."""
    g = np.moveaxis(f, axis, -1)
    n = g.shape[-1]
    out = np.empty_like(g)
    um2, um1, u0, up1, up2 = (g[..., 0:n - 4], g[..., 1:n - 3], g[..., 2:n - 2],
                              g[..., 3:n - 1], g[..., 4:n])
    gm = (_WENO_EPS + (u0 - 2 * um1 + um2) ** 2) / (_WENO_EPS + (up1 - 2 * u0 + um1) ** 2)
    wm = 1.0 / (1.0 + 2.0 * gm**2)
    dm = (1 - wm) * (up1 - um1) / (2 * h) + wm * (3 * u0 - 4 * um1 + um2) / (2 * h)
    gp = (_WENO_EPS + (up2 - 2 * up1 + u0) ** 2) / (_WENO_EPS + (up1 - 2 * u0 + um1) ** 2)
    wp = 1.0 / (1.0 + 2.0 * gp**2)
    dp = (1 - wp) * (up1 - um1) / (2 * h) + wp * (-up2 + 4 * up1 - 3 * u0) / (2 * h)
    out[..., 2:n - 2] = 0.5 * (dm + dp)
    out[..., 1] = (g[..., 2] - g[..., 0]) / (2 * h)
    out[..., n - 2] = (g[..., n - 1] - g[..., n - 3]) / (2 * h)
    out[..., 0] = (-3 * g[..., 0] + 4 * g[..., 1] - g[..., 2]) / (2 * h)
    out[..., n - 1] = (3 * g[..., n - 1] - 4 * g[..., n - 2] + g[..., n - 3]) / (2 * h)
    return np.moveaxis(out, -1, axis)


def fd4_first(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order central first derivative; second order within two nodes of an edge."""
    g = np.moveaxis(f, axis, -1)
    n = g.shape[-1]
    out = np.empty_like(g)
    out[..., 2:n - 2] = (g[..., 0:n - 4] - 8 * g[..., 1:n - 3] + 8 * g[..., 3:n - 1] - g[..., 4:n]) / (12 * h)
    out[..., 1] = (g[..., 2] - g[..., 0]) / (2 * h)
    out[..., n - 2] = (g[..., n - 1] - g[..., n - 3]) / (2 * h)
    out[..., 0] = (-3 * g[..., 0] + 4 * g[..., 1] - g[..., 2]) / (2 * h)
    out[..., n - 1] = (3 * g[..., n - 1] - 4 * g[..., n - 2] + g[..., n - 3]) / (2 * h)
    return np.moveaxis(out, -1, axis)


def fd4_second(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(f, axis, -1)
    n = g.shape[-1]
    out = np.empty_like(g)
    out[..., 2:n - 2] = (-g[..., 0:n - 4] + 16 * g[..., 1:n - 3] - 30 * g[..., 2:n - 2]
                         + 16 * g[..., 3:n - 1] - g[..., 4:n]) / (12 * h * h)
    out[..., 1] = (g[..., 2] - 2 * g[..., 1] + g[..., 0]) / h**2
    out[..., n - 2] = (g[..., n - 1] - 2 * g[..., n - 2] + g[..., n - 3]) / h**2
    out[..., 0] = (2 * g[..., 0] - 5 * g[..., 1] + 4 * g[..., 2] - g[..., 3]) / h**2
    out[..., n - 1] = (2 * g[..., n - 1] - 5 * g[..., n - 2] + 4 * g[..., n - 3] - g[..., n - 4]) / h**2
    return np.moveaxis(out, -1, axis)


# --------------------------------------------------------------------------
# results

@dataclass
class EikonalResult:
    phi: ScalarField
    grad_phi_sq: VectorField
    lap_phi_sq: ScalarField
    grad_phi: VectorField
    tau: ScalarField
    x0: np.ndarray
    c0: float
    taylor: SourceTaylor
    patch: np.ndarray  # boolean mask of source-patch nodes
    sweeps: int = 0
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def grid(self) -> CartesianGrid:
        return self.phi.grid


@dataclass
class TransportResult:
    v0: ScalarField
    v1: ScalarField
    grad_v0: VectorField
    grad_v1: VectorField
    lap_v0: ScalarField
    sweeps: tuple = (0, 0)


def _source_geometry(grid: CartesianGrid, x0):
    if grid.node_index_of(x0) is None:
        raise ValueError("source must coincide with a grid node")
    if min(grid.nx, grid.ny) < 5:
        raise ValueError("sweeping grids need at least 5 nodes per axis")
    X, Y = grid.mesh_xy()
    Y1, Y2 = X - x0[0], Y - x0[1]
    r = np.hypot(Y1, Y2)
    patch = r <= 3.0 * max(grid.hx, grid.hy) * (1 + 1e-9)
    return Y1, Y2, r, patch


def _smoothstep(t):
    """C^3 step from 1 (t <= 0) to 0 (t >= 1) and its derivative."""
    t = np.clip(t, 0.0, 1.0)
    s = t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)
    ds = 140 * t**3 * (1 - t) ** 3
    return 1 - s, -ds


def _trust_blend(R, dRx, dRy, r, Y1, Y2, lo=2.0 / 3.0, hi=1.5):
    """Blend the Taylor factor ratio R into 1 outside the disk where it stays in [lo, hi].

    Far from the source the truncated series is meaningless; with rho the
    distance to the nearest node where R leaves [lo, hi] the blend is R on
    r <= rho/2 and 1 on r >= rho.
    """
    out = (R < lo) | (R > hi)
    if not np.any(out):
        return R, dRx, dRy
    rho = float(r[out].min())
    b, db = _smoothstep((r - rho / 2) / (rho / 2))
    rs = np.where(r > 0, r, 1.0)
    dbx = db / (rho / 2) * Y1 / rs
    dby = db / (rho / 2) * Y2 / rs
    return 1 + b * (R - 1), b * dRx + (R - 1) * dbx, b * dRy + (R - 1) * dby


def solve_phase(medium, x0, grid: CartesianGrid, config: SweepConfig = PHASE_CONFIG,
                taylor: SourceTaylor | None = None) -> EikonalResult:
    """Factored eikonal solve followed by the phase derivatives."""
    x0 = np.asarray(x0, dtype=float)
    Y1, Y2, r, patch = _source_geometry(grid, x0)
    if taylor is None:
        taylor = source_taylor(medium, x0)
    m0 = taylor.m0
    c0 = 1.0 / np.sqrt(m0)
    q = config.factorization_order
    Tq, Tqx, Tqy, _ = _poly_fields(taylor.partial("T", 2, q + 1), Y1, Y2)
    src = r == 0
    rs = np.where(src, 1.0, r)
    R = np.where(src, 1.0, Tq / (m0 * rs**2))
    dRx = np.where(src, 0.0, (Tqx * rs**2 - 2 * Tq * Y1) / (m0 * rs**4))
    dRy = np.where(src, 0.0, (Tqy * rs**2 - 2 * Tq * Y2) / (m0 * rs**4))
    R, dRx, dRy = _trust_blend(R, dRx, dRy, r, Y1, Y2)
    tq = np.sqrt(R)
    gtx = dRx / (2 * tq)
    gty = dRy / (2 * tq)
    phi0 = r / c0
    gpx = np.where(src, 0.0, Y1 / (rs * c0))
    gpy = np.where(src, 0.0, Y2 / (rs * c0))
    sm = 1.0 / medium.speed(np.stack([Y1 + x0[0], Y2 + x0[1]], axis=-1))

    W = np.zeros(grid.shape)
    hist = np.zeros(4 * config.max_sweeps)
    n = _sweep(0, W, patch, tq, gtx, gty, phi0, gpx, gpy, sm, grid.hx, grid.hy,
               config.lf_viscosity_margin, config.weno_order, config.sweep_tolerance,
               config.max_sweeps, hist)
    if n < 0:
        raise SweepError(f"eikonal sweeping did not converge in {config.max_sweeps} sweep cycles "
                         f"(last update {hist[-1]:.2e})")
    tau = tq + W
    phi = phi0 * tau
    res = phase_derivatives(ScalarField(grid, phi), x0, grid, taylor=taylor, patch=patch)
    res.tau = ScalarField(grid, tau)
    res.sweeps = n
    res.history = hist[:n].copy()
    return res


def solve_factored_eikonal(medium, x0, grid: CartesianGrid, config: SweepConfig = PHASE_CONFIG) -> ScalarField:
    return solve_phase(medium, x0, grid, config).phi


def phase_derivatives(phi: ScalarField, x0, grid: CartesianGrid, taylor: SourceTaylor | None = None,
                      medium=None, patch: np.ndarray | None = None) -> EikonalResult:
    """grad phi^2 (averaged WENO-3), lap phi^2 (FD-4) and grad phi.

    Source-patch nodes take the values of the Taylor expansion of phi^2.
    """
    x0 = np.asarray(x0, dtype=float)
    Y1, Y2, r, patch0 = _source_geometry(grid, x0)
    if patch is None:
        patch = patch0
    if taylor is None:
        if medium is None:
            raise ValueError("need the medium or a precomputed Taylor expansion")
        taylor = source_taylor(medium, x0)
    T = phi.values**2
    gx = _weno3_avg(T, grid.hx, axis=1)
    gy = _weno3_avg(T, grid.hy, axis=0)
    lap = fd4_second(T, grid.hx, axis=1) + fd4_second(T, grid.hy, axis=0)
    Ta, Tax, Tay, Tal = _poly_fields(taylor.partial("T", 2, taylor.deg), Y1, Y2)
    gx = np.where(patch, Tax, gx)
    gy = np.where(patch, Tay, gy)
    lap = np.where(patch, Tal, lap)
    src = r == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        phis = np.where(patch & ~src, np.sqrt(np.abs(Ta)), phi.values)
        gpx = np.where(src, 0.0, gx / (2 * phis))
        gpy = np.where(src, 0.0, gy / (2 * phis))
    tau = np.where(src, 1.0, phi.values / np.where(src, 1.0, r * np.sqrt(taylor.m0)))
    return EikonalResult(phi, VectorField(grid, np.stack([gx, gy])), ScalarField(grid, lap),
                         VectorField(grid, np.stack([gpx, gpy])), ScalarField(grid, tau),
                         x0, 1.0 / np.sqrt(taylor.m0), taylor, patch)


def _solve_linear_transport(eik: EikonalResult, creac, rhs, V, config, label):
    grid = eik.grid
    Y1, Y2, r, _ = _source_geometry(grid, eik.x0)
    Vv, Vx, Vy, _ = _poly_fields(V, Y1, Y2)
    ax, ay = eik.grad_phi_sq.values
    s = rhs - (ax * Vx + ay * Vy + creac * Vv)
    W = np.zeros(grid.shape)
    hist = np.zeros(4 * config.max_sweeps)
    dummy = np.zeros((1, 1))
    n = _sweep(1, W, eik.patch, ax, ay, creac, s, dummy, dummy, dummy, grid.hx, grid.hy,
               config.lf_viscosity_margin, config.weno_order, config.sweep_tolerance,
               config.max_sweeps, hist)
    if n < 0:
        raise SweepError(f"{label} transport sweeping did not converge in {config.max_sweeps} sweep cycles "
                         f"(last update {hist[-1]:.2e})")
    return Vv + W, n


def _fd_grad(f, grid):
    return np.stack([fd4_first(f, grid.hx, axis=1), fd4_first(f, grid.hy, axis=0)])


def solve_transport_v0(eik: EikonalResult, medium, config: SweepConfig = V0_CONFIG):
    """Leading amplitude v0 with its FD-4 gradient and Laplacian."""
    grid = eik.grid
    Y1, Y2, _, _ = _source_geometry(grid, eik.x0)
    m = medium.slowness_sq(np.stack([Y1 + eik.x0[0], Y2 + eik.x0[1]], axis=-1))
    creac = -2.0 * m + 0.5 * eik.lap_phi_sq.values
    V = eik.taylor.partial("v0", 0, config.factorization_order - 1)
    v0, n = _solve_linear_transport(eik, creac, np.zeros(grid.shape), V, config, "v0")
    g = _fd_grad(v0, grid)
    lap = fd4_second(v0, grid.hx, axis=1) + fd4_second(v0, grid.hy, axis=0)
    _, Px, Py, Pl = _poly_fields(eik.taylor.partial("v0", 0, len(eik.taylor.v0) - 1), Y1, Y2)
    p = eik.patch
    g = np.stack([np.where(p, Px, g[0]), np.where(p, Py, g[1])])
    lap = np.where(p, Pl, lap)
    return ScalarField(grid, v0), VectorField(grid, g), ScalarField(grid, lap), n


def solve_transport_v1(eik: EikonalResult, lap_v0: ScalarField, config: SweepConfig = V1_CONFIG):
    """Second amplitude v1 (bounded at the source) with its FD-4 gradient."""
    grid = eik.grid
    Y1, Y2, _, _ = _source_geometry(grid, eik.x0)
    creac = 0.5 * eik.lap_phi_sq.values
    V = eik.taylor.partial("v1", 0, config.factorization_order - 1)
    v1, n = _solve_linear_transport(eik, creac, 0.5 * lap_v0.values, V, config, "v1")
    g = _fd_grad(v1, grid)
    _, Px, Py, _ = _poly_fields(eik.taylor.partial("v1", 0, len(eik.taylor.v1) - 1), Y1, Y2)
    p = eik.patch
    g = np.stack([np.where(p, Px, g[0]), np.where(p, Py, g[1])])
    return ScalarField(grid, v1), VectorField(grid, g), n


def solve_amplitudes(eik: EikonalResult, medium, v0_config: SweepConfig = V0_CONFIG,
                     v1_config: SweepConfig = V1_CONFIG) -> TransportResult:
    v0, gv0, lv0, n0 = solve_transport_v0(eik, medium, v0_config)
    v1, gv1, n1 = solve_transport_v1(eik, lv0, v1_config)
    return TransportResult(v0, v1, gv0, gv1, lv0, (n0, n1))
