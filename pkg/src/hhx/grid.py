"""Uniform Cartesian grids, structured triangulations, quadrature and point lookup.

Node (i, j) of a grid sits at ``origin + (i*hx, j*hy)``; nodal arrays are
stored with shape ``(ny, nx)`` (y-outer, row-major) and flattened node index
``k = j*nx + i``.  The structured triangulation splits cell (i, j) along the
diagonal from node (i, j) to node (i+1, j+1) into a lower triangle
(element ``2c``) and an upper triangle (element ``2c+1``), ``c = j*(nx-1) + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from hhx._dunavant import RULES as _DUNAVANT

_SNAP = 1e-10


class OutOfDomainError(ValueError):
    """A point lies outside the grid or mesh."""


@dataclass(frozen=True)
class CartesianGrid:
    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacings must be positive")

    @classmethod
    def from_bounds(cls, xmin, xmax, ymin, ymax, nx, ny) -> "CartesianGrid":
        return cls(nx, ny, (xmax - xmin) / (nx - 1), (ymax - ymin) / (ny - 1), (xmin, ymin))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, x0 + (self.nx - 1) * self.hx, y0, y0 + (self.ny - 1) * self.hy)

    def node(self, i: int, j: int) -> np.ndarray:
        return np.array([self.origin[0] + i * self.hx, self.origin[1] + j * self.hy])

    def mesh_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays X, Y of shape (ny, nx)."""
        return np.meshgrid(self.x, self.y)

    def points(self) -> np.ndarray:
        X, Y = self.mesh_xy()
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_index_of(self, x) -> tuple[int, int] | None:
        """(i, j) if ``x`` coincides with a node (to round-off), else None."""
        t = (np.asarray(x, dtype=float) - np.asarray(self.origin)) / np.array([self.hx, self.hy])
        r = np.round(t)
        if np.all(np.abs(t - r) < 1e-8) and 0 <= r[0] < self.nx and 0 <= r[1] < self.ny:
            return int(r[0]), int(r[1])
        return None

    def subgrid(self, center, radius) -> tuple["CartesianGrid", tuple[int, int]]:
        """Sub-grid of this grid's nodes covering the square of half-width ``radius``.

        Returns the sub-grid and the (i, j) offset of its first node.
        """
        cx, cy = center
        x0, y0 = self.origin
        i0 = max(0, int(np.floor((cx - radius - x0) / self.hx)))
        i1 = min(self.nx - 1, int(np.ceil((cx + radius - x0) / self.hx)))
        j0 = max(0, int(np.floor((cy - radius - y0) / self.hy)))
        j1 = min(self.ny - 1, int(np.ceil((cy + radius - y0) / self.hy)))
        sub = CartesianGrid(i1 - i0 + 1, j1 - j0 + 1, self.hx, self.hy,
                            (x0 + i0 * self.hx, y0 + j0 * self.hy))
        return sub, (i0, j0)

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        xmin, xmax, ymin, ymax = self.bounds
        return ((pts[:, 0] >= xmin - tol) & (pts[:, 0] <= xmax + tol)
                & (pts[:, 1] >= ymin - tol) & (pts[:, 1] <= ymax + tol))


@dataclass
class ScalarField:
    grid: CartesianGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")


@dataclass
class VectorField:
    grid: CartesianGrid
    values: np.ndarray  # (2, ny, nx)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (2,) + self.grid.shape:
            raise ValueError("vector field must have shape (2, ny, nx)")

    @property
    def x(self) -> np.ndarray:
        return self.values[0]

    @property
    def y(self) -> np.ndarray:
        return self.values[1]


# --------------------------------------------------------------------------
# triangulation

@dataclass(frozen=True)
class TriMesh:
    nodes: np.ndarray           # (N, 2)
    elements: np.ndarray        # (E, 3), counterclockwise
    boundary_nodes: np.ndarray  # sorted node indices on the rectangle boundary
    grid: CartesianGrid | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask


def triangulate(grid: CartesianGrid) -> TriMesh:
    nx, ny = grid.nx, grid.ny
    idx = np.arange(nx * ny).reshape(ny, nx)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    elements = np.empty((2 * n00.size, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([n00, n10, n11])
    elements[1::2] = np.column_stack([n00, n11, n01])
    on_edge = np.zeros((ny, nx), dtype=bool)
    on_edge[0, :] = on_edge[-1, :] = on_edge[:, 0] = on_edge[:, -1] = True
    return TriMesh(grid.points(), elements, np.flatnonzero(on_edge.ravel()), grid)


# --------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    barycentric: np.ndarray  # (Q, 3)
    weights: np.ndarray      # (Q,), sum to one
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


_PERMS3 = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
_PERMS6 = _PERMS3 + [(1, 0, 2), (0, 2, 1), (2, 1, 0)]


@lru_cache(maxsize=None)
def quadrature(degree: int = 9) -> QuadratureRule:
    """Symmetric Dunavant rule exact for polynomials of total degree ``degree``."""
    if degree not in _DUNAVANT:
        raise ValueError(f"unsupported quadrature degree {degree}; choose 1..20")
    pts, wts = [], []
    for mult, w, a, b, _c in _DUNAVANT[degree]:
        if mult == 1:
            gen = (1 / 3, 1 / 3, 1 / 3)
        else:
            gen = (a, b, 1.0 - a - b)
        perms = {1: [(0, 1, 2)], 3: _PERMS3, 6: _PERMS6}[mult]
        for p in perms:
            pts.append([gen[p[0]], gen[p[1]], gen[p[2]]])
            wts.append(w)
    w = np.array(wts)
    return QuadratureRule(np.array(pts), w / w.sum(), degree)


# --------------------------------------------------------------------------
# point lookup and interpolation

def _cell_coords(grid: CartesianGrid, pts: np.ndarray, prefer_lower: bool):
    """Cell indices (i, j) and local coordinates (xi, eta) in [0, 1]."""
    t = (pts[:, 0] - grid.origin[0]) / grid.hx
    s = (pts[:, 1] - grid.origin[1]) / grid.hy
    if np.any(t < -_SNAP) or np.any(t > grid.nx - 1 + _SNAP) or \
            np.any(s < -_SNAP) or np.any(s > grid.ny - 1 + _SNAP):
        raise OutOfDomainError("point outside the grid")
    t = np.where(np.abs(t - np.round(t)) < _SNAP, np.round(t), t)
    s = np.where(np.abs(s - np.round(s)) < _SNAP, np.round(s), s)
    if prefer_lower:
        # on a grid line, take the cell with the smaller index
        i = np.ceil(t).astype(np.int64) - 1
        j = np.ceil(s).astype(np.int64) - 1
    else:
        i = np.floor(t).astype(np.int64)
        j = np.floor(s).astype(np.int64)
    i = np.clip(i, 0, grid.nx - 2)
    j = np.clip(j, 0, grid.ny - 2)
    return i, j, t - i, s - j


def locate(mesh: TriMesh, pts) -> tuple[np.ndarray, np.ndarray]:
    """Element index and barycentric coordinates (w.r.t. the element's vertex order).

    O(1) per point via cell arithmetic. On shared edges the lowest element
    index wins.
    """
    if mesh.grid is None:
        raise ValueError("locate requires a structured mesh")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    grid = mesh.grid
    i, j, xi, eta = _cell_coords(grid, pts, prefer_lower=True)
    cell = j * (grid.nx - 1) + i
    lower = eta <= xi
    elem = 2 * cell + (~lower)
    bary = np.where(
        lower[:, None],
        np.column_stack([1 - xi, xi - eta, eta]),
        np.column_stack([1 - eta, xi, eta - xi]),
    )
    return elem, bary


def bilinear_eval(field: ScalarField, pts) -> np.ndarray:
    grid = field.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    i, j, xi, eta = _cell_coords(grid, pts, prefer_lower=False)
    v = field.values
    return ((1 - xi) * (1 - eta) * v[j, i] + xi * (1 - eta) * v[j, i + 1]
            + (1 - xi) * eta * v[j + 1, i] + xi * eta * v[j + 1, i + 1])


def _lagrange4(t):
    """Cubic Lagrange weights on nodes -1, 0, 1, 2 and their derivatives."""
    w = np.stack([
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    ])
    dw = np.stack([
        -(3 * t**2 - 6 * t + 2) / 6,
        (3 * t**2 - 4 * t - 1) / 2,
        -(3 * t**2 - 2 * t - 2) / 2,
        (3 * t**2 - 1) / 6,
    ])
    return w, dw


def cubic_eval(grid: CartesianGrid, values: np.ndarray, pts, gradient: bool = False):
    """Tensor-product cubic Lagrange interpolation on the 4x4 surrounding nodes.

    Stencils are shifted inward at the grid edges. With ``gradient=True``
    returns ``(value, d/dx, d/dy)``.
    """
    if grid.nx < 4 or grid.ny < 4:
        raise ValueError("cubic interpolation needs at least 4 nodes per axis")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    i, j, xi, eta = _cell_coords(grid, pts, prefer_lower=False)
    i0 = np.clip(i - 1, 0, grid.nx - 4)
    j0 = np.clip(j - 1, 0, grid.ny - 4)
    tx = xi + (i - i0) - 1
    ty = eta + (j - j0) - 1
    wx, dwx = _lagrange4(tx)
    wy, dwy = _lagrange4(ty)
    val = np.zeros(len(pts), dtype=values.dtype)
    gx = np.zeros_like(val)
    gy = np.zeros_like(val)
    for b in range(4):
        for a in range(4):
            f = values[j0 + b, i0 + a]
            val = val + wx[a] * wy[b] * f
            if gradient:
                gx = gx + dwx[a] * wy[b] * f
                gy = gy + wx[a] * dwy[b] * f
    if gradient:
        return val, gx / grid.hx, gy / grid.hy
    return val
