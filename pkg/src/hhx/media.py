"""Wave-speed models, squared slowness and closed-form reference solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from scipy import ndimage

from hhx.grid import CartesianGrid, ScalarField, bilinear_eval
from hhx.specfun import hankel1


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return x


def bump_profile(t):
    """exp(P(t)) with P(t) = 2 exp(-1/t)/(t - 1) on 0 < t < 1, 1 below, 0 above."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    out[mid] = np.exp(2.0 * np.exp(-1.0 / tm) / (tm - 1.0))
    return out


@dataclass(frozen=True)
class GriddedVelocity:
    grid: CartesianGrid
    values: np.ndarray  # speeds, shape (ny, nx)
    smoothing_sigma: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("velocity array does not match grid")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("velocities must be finite and positive")
        object.__setattr__(self, "values", v)

    def speed(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2).copy()
        xmin, xmax, ymin, ymax = self.grid.bounds
        flat[:, 0] = np.clip(flat[:, 0], xmin, xmax)
        flat[:, 1] = np.clip(flat[:, 1], ymin, ymax)
        return bilinear_eval(ScalarField(self.grid, self.values), flat).reshape(shape)


def smooth(gridded: GriddedVelocity, sigma: float) -> GriddedVelocity:
    """Gaussian smoothing with standard deviation ``sigma`` in length units.

    The kernel is truncated at 4 sigma and edges are replicated.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return GriddedVelocity(gridded.grid, gridded.values.copy(), gridded.smoothing_sigma)
    g = gridded.grid
    out = ndimage.gaussian_filter(gridded.values, sigma=(sigma / g.hy, sigma / g.hx),
                                  mode="nearest", truncate=4.0)
    return GriddedVelocity(g, out, sigma)


def read_velocity_file(path) -> GriddedVelocity:
    """Read a ``VELGRID1 nx ny hx hy x0 y0`` text file (speeds row-major, y-outer)."""
    text = Path(path).read_text().split()
    if not text or text[0] != "VELGRID1":
        raise ValueError(f"{path}: missing VELGRID1 header")
    try:
        nx, ny = int(text[1]), int(text[2])
        hx, hy, x0, y0 = map(float, text[3:7])
        vals = np.array(text[7:], dtype=float)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header or data") from exc
    if vals.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} speeds, found {vals.size}")
    return GriddedVelocity(CartesianGrid(nx, ny, hx, hy, (x0, y0)), vals.reshape(ny, nx))


def write_velocity_file(path, gridded: GriddedVelocity) -> None:
    g = gridded.grid
    lines = [f"VELGRID1 {g.nx} {g.ny} {g.hx!r} {g.hy!r} {g.origin[0]!r} {g.origin[1]!r}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in gridded.values]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class Medium:
    """A smooth wave-speed model.

    ``kind`` is one of ``homogeneous``, ``constant_gradient``, ``gaussian_bump``
    or ``gridded``; use the classmethod constructors.
    """

    kind: str
    params: dict = field(default_factory=dict)
    gridded: GriddedVelocity | None = None

    @classmethod
    def homogeneous(cls, c0: float = 1.0) -> "Medium":
        if c0 <= 0:
            raise ValueError("c0 must be positive")
        return cls("homogeneous", {"c0": float(c0)})

    @classmethod
    def constant_gradient(cls, c0=1.0, G0=(0.1, -0.2), x0=(0.0, 0.0)) -> "Medium":
        return cls("constant_gradient",
                   {"c0": float(c0), "G0": tuple(map(float, G0)), "x0": tuple(map(float, x0))})

    @classmethod
    def gaussian_bump(cls, alpha=0.16, beta=0.22, sigma=0.15, x1=(0.2, 0.2), amplitude=0.2) -> "Medium":
        if not 0 < alpha < beta:
            raise ValueError("need 0 < alpha < beta")
        return cls("gaussian_bump", {"alpha": float(alpha), "beta": float(beta), "sigma": float(sigma),
                                     "x1": tuple(map(float, x1)), "amplitude": float(amplitude)})

    @classmethod
    def from_grid(cls, gridded: GriddedVelocity) -> "Medium":
        return cls("gridded", {}, gridded)

    # -- evaluation ---------------------------------------------------------

    def slowness_sq(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        p = self.params
        if self.kind == "homogeneous":
            return np.full(pts.shape[:-1], 1.0 / p["c0"] ** 2)
        if self.kind == "gaussian_bump":
            r = np.hypot(pts[..., 0] - p["x1"][0], pts[..., 1] - p["x1"][1])
            t = (r - p["alpha"]) / (p["beta"] - p["alpha"])
            return 1.0 + p["amplitude"] * bump_profile(t) * np.exp(-r**2 / (2 * p["sigma"] ** 2))
        return 1.0 / self.speed(pts) ** 2

    def speed(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        p = self.params
        if self.kind == "homogeneous":
            return np.full(pts.shape[:-1], p["c0"])
        if self.kind == "constant_gradient":
            c = p["c0"] + p["G0"][0] * (pts[..., 0] - p["x0"][0]) + p["G0"][1] * (pts[..., 1] - p["x0"][1])
            if np.any(c <= 0):
                raise ValueError("constant-gradient speed is non-positive at a requested point")
            return c
        if self.kind == "gaussian_bump":
            return 1.0 / np.sqrt(self.slowness_sq(pts))
        if self.kind == "gridded":
            return self.gridded.speed(pts)
        raise ValueError(f"unknown medium kind {self.kind!r}")

    def speed_range(self, bounds) -> tuple[float, float]:
        """(min, max) of the speed over a rectangle, sampled on a fine lattice."""
        xmin, xmax, ymin, ymax = bounds
        X, Y = np.meshgrid(np.linspace(xmin, xmax, 201), np.linspace(ymin, ymax, 201))
        c = self.speed(np.stack([X, Y], axis=-1))
        return float(c.min()), float(c.max())

    def is_homogeneous_near(self, x0, radius) -> bool:
        """True if m is exactly constant on the disk of ``radius`` about ``x0``."""
        if self.kind == "homogeneous":
            return True
        if self.kind == "gaussian_bump":
            p = self.params
            return np.hypot(x0[0] - p["x1"][0], x0[1] - p["x1"][1]) - radius >= p["beta"]
        return False

    def slowness_taylor(self, x0, degree: int) -> np.ndarray:
        """Taylor coefficients of m about ``x0``: ``M[a, b]`` multiplies y1^a y2^b.

        Exact for the analytic media; a local least-squares fit otherwise.
        """
        x0 = np.asarray(x0, dtype=float)
        M = np.zeros((degree + 1, degree + 1))
        if self.kind == "homogeneous" or self.is_homogeneous_near(x0, 1e-9):
            M[0, 0] = float(self.slowness_sq(x0))
            return M
        if self.kind == "constant_gradient":
            cp = float(self.speed(x0))
            g = np.array(self.params["G0"]) / cp
            for n in range(degree + 1):
                coef = (-1) ** n * (n + 1) / cp**2
                for a in range(n + 1):
                    M[a, n - a] += coef * comb(n, a) * g[0] ** a * g[1] ** (n - a)
            return M
        return _fit_taylor(self.slowness_sq, x0, degree)


def _fit_taylor(func, x0, degree, delta=2e-3):
    k = degree + 3
    s = np.arange(-k, k + 1) * delta
    Y1, Y2 = np.meshgrid(s, s)
    y = np.column_stack([Y1.ravel(), Y2.ravel()])
    vals = func(x0 + y)
    cols, idx = [], []
    for n in range(degree + 1):
        for a in range(n + 1):
            cols.append((y[:, 0] / delta) ** a * (y[:, 1] / delta) ** (n - a))
            idx.append((a, n - a))
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), vals, rcond=None)
    M = np.zeros((degree + 1, degree + 1))
    for (a, b), c in zip(idx, coef):
        M[a, b] = c / delta ** (a + b)
    return M


# --------------------------------------------------------------------------
# closed-form references

def exact_homogeneous(omega, x, x0, c0: float = 1.0):
    """(i/4) H0(omega |x - x0| / c0), the outgoing free-space Green's function."""
    x = _as_points(x)
    r = np.hypot(x[..., 0] - x0[0], x[..., 1] - x0[1])
    if np.any(r == 0):
        raise ValueError("exact solution is singular at the source")
    return 0.25j * hankel1(0, omega * r / c0)


def exact_homogeneous_grad(omega, x, x0, c0: float = 1.0):
    """Gradient of :func:`exact_homogeneous`, shape (..., 2)."""
    x = _as_points(x)
    y = x - np.asarray(x0, dtype=float)
    r = np.hypot(y[..., 0], y[..., 1])
    k = omega / c0
    dr = -0.25j * k * hankel1(1, k * r)
    return (dr / r)[..., None] * y


def _cg_parts(c0, G0, x0, x):
    x = _as_points(x)
    G = np.asarray(G0, dtype=float)
    y = x - np.asarray(x0, dtype=float)
    c = c0 + y @ G
    rho = np.hypot(y[..., 0], y[..., 1])
    g = float(np.hypot(*G))
    s = rho / (2.0 * np.sqrt(c * c0))
    return G, y, c, rho, g, s


def exact_phase_constant_gradient(c0, G0, x0, x):
    """Travel time from ``x0`` in the linear speed c0 + G0.(x - x0).

    Uses the stable form (2/|G|) asinh(|G| rho / (2 sqrt(c c0))), which tends to
    rho/c0 as G -> 0.
    """
    G, y, c, rho, g, s = _cg_parts(c0, G0, x0, x)
    if g == 0:
        return 2.0 * s
    return 2.0 * np.arcsinh(g * s) / g


def exact_phase_constant_gradient_grad(c0, G0, x0, x):
    """Gradient of :func:`exact_phase_constant_gradient`, shape (..., 2); NaN at x0."""
    G, y, c, rho, g, s = _cg_parts(c0, G0, x0, x)
    dF = 2.0 / np.sqrt(1.0 + (g * s) ** 2)
    sq = np.sqrt(c * c0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ds = y / (2.0 * (rho * sq)[..., None]) - (rho / (4.0 * c * sq))[..., None] * G
    return dF[..., None] * ds
