"""Numerical microlocal analysis: dominant plane-wave directions from circle samples.

For a plane wave u = B exp(i k d.(x - c)) sampled on the circle x = c + r s(theta)
with alpha = k r, Jacobi-Anger gives the impedance U = (1/ik) du/dr + u the
Fourier coefficients

    U_l = B i^l (J_l(alpha) - i J'_l(alpha)) exp(-i l theta_d),

so dividing coefficient l by i^l (J_l - i J'_l), truncating to |l| <= L and
summing back yields B S_L(theta - theta_d), a periodic sinc peaked at theta_d.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from hhx.fem import RaySet
from hhx.specfun import bessel_j, bessel_j_prime

DENOMINATOR_FLOOR = 1e-14


class NMLAError(RuntimeError):
    pass


@dataclass(frozen=True)
class NMLAConfig:
    radius_constant: float = 1.0      # r = C_r * omega^(-1/2)
    peak_threshold: float = 0.5       # fraction of max |BU|
    min_separation_deg: float = 15.0
    max_directions: int = 4
    oversampling: int = 4             # M = next pow2 >= oversampling * (L + 1)

    def __post_init__(self):
        if not (self.radius_constant > 0 and 0 < self.peak_threshold <= 1):
            raise ValueError("radius constant and peak threshold must be positive")
        if not 0 < self.min_separation_deg < 180:
            raise ValueError("min separation must lie in (0, 180) degrees")
        if self.max_directions < 1 or self.oversampling < 2:
            raise ValueError("max_directions >= 1 and oversampling >= 2 required")

    def radius(self, omega: float) -> float:
        return self.radius_constant / np.sqrt(omega)


@dataclass
class ImpedanceSamples:
    center: np.ndarray
    radius: float
    k: float
    angles: np.ndarray
    values: np.ndarray

    @property
    def alpha(self) -> float:
        return self.k * self.radius

    def __post_init__(self):
        L = l_alpha(self.alpha)
        if len(self.values) < 2 * L + 2:
            raise ValueError(f"{len(self.values)} samples cannot resolve L = {L}")


@dataclass
class DirectionEstimate:
    angle: float
    magnitude: float
    amplitude: complex | None = None


def l_alpha(alpha: float) -> int:
    """Truncation index max(1, floor(alpha), floor(alpha + alpha^(1/3) - 2.5))."""
    return int(max(1, np.floor(alpha), np.floor(alpha + np.cbrt(alpha) - 2.5)))


def sample_count(alpha: float, oversampling: int = 4) -> int:
    need = oversampling * (l_alpha(alpha) + 1)
    return int(2 ** int(np.ceil(np.log2(need))))


def circle_points(center, radius: float, M: int):
    theta = 2 * np.pi * np.arange(M) / M
    s = np.column_stack([np.cos(theta), np.sin(theta)])
    return theta, np.asarray(center, dtype=float) + radius * s, s


def sample_impedance(u, grad_u, center, radius: float, k: float, M: int,
                     valid_bounds=None) -> ImpedanceSamples:
    """U(theta_j) = grad u . s / (ik) + u on M uniform circle points.

    ``u`` and ``grad_u`` map points (P, 2) to values (P,) and gradients (P, 2).
    """
    center = np.asarray(center, dtype=float)
    if valid_bounds is not None:
        xmin, xmax, ymin, ymax = valid_bounds
        tol = 1e-12
        if (center[0] - radius < xmin - tol or center[0] + radius > xmax + tol
                or center[1] - radius < ymin - tol or center[1] + radius > ymax + tol):
            raise NMLAError("observation circle leaves the valid region")
    theta, pts, s = circle_points(center, radius, M)
    val = np.asarray(u(pts), dtype=complex)
    g = np.asarray(grad_u(pts), dtype=complex)
    U = np.sum(g * s, axis=1) / (1j * k) + val
    return ImpedanceSamples(center, float(radius), float(k), theta, U)


def _denominators(alpha: float, L: int) -> np.ndarray:
    """i^l (J_l(alpha) - i J'_l(alpha)) for l = -L..L."""
    n = np.arange(L + 1)
    base = bessel_j(n, alpha) - 1j * bessel_j_prime(n, alpha)
    if np.any(np.abs(base) < DENOMINATOR_FLOOR):
        raise NMLAError("vanishing Bessel denominator in the NMLA filter")
    ls = np.arange(-L, L + 1)
    # J_{-l} = (-1)^l J_l and the same for the derivative
    vals = base[np.abs(ls)] * np.where(ls < 0, (-1.0) ** np.abs(ls), 1.0)
    return (1j ** ls) * vals


def filter_beta(samples: ImpedanceSamples) -> np.ndarray:
    """Filtered values BU(theta_j) at the sample angles."""
    U = samples.values
    M = len(U)
    L = l_alpha(samples.alpha)
    coef = np.fft.fft(U) / M
    ls = np.arange(-L, L + 1)
    out = np.zeros(M, dtype=complex)
    out[ls % M] = coef[ls % M] / _denominators(samples.alpha, L)
    return np.fft.ifft(out) * M / (2 * L + 1)


def pick_directions(filtered, config: NMLAConfig = NMLAConfig()) -> list[DirectionEstimate]:
    """Peaks of |BU| on the uniform angle grid, refined by a parabola through 3 samples."""
    mag = np.abs(np.asarray(filtered))
    M = len(mag)
    if M == 0:
        raise NMLAError("no samples")
    top = mag.max()
    if not top > 0:
        raise NMLAError("no peak above threshold (zero field)")
    left, right = np.roll(mag, 1), np.roll(mag, -1)
    is_peak = (mag >= left) & (mag > right) & (mag >= config.peak_threshold * top)
    dth = 2 * np.pi / M
    cands = []
    for j in np.flatnonzero(is_peak):
        y0, ym, yp = mag[j], left[j], right[j]
        den = ym - 2 * y0 + yp
        delta = 0.5 * (ym - yp) / den if den < 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
        ang = np.mod((j + delta) * dth, 2 * np.pi)
        cands.append(DirectionEstimate(float(ang), float(y0 - 0.25 * (ym - yp) * delta)))
    if not cands:
        raise NMLAError("no peak above threshold")
    cands.sort(key=lambda d: (-round(d.magnitude, 12), d.angle))
    sep = np.deg2rad(config.min_separation_deg)
    kept: list[DirectionEstimate] = []
    for c in cands:
        if all(abs(np.angle(np.exp(1j * (c.angle - k.angle)))) >= sep for k in kept):
            kept.append(c)
        if len(kept) == config.max_directions:
            break
    return kept


def estimate_amplitudes(samples: ImpedanceSamples, angles) -> np.ndarray:
    """Least-squares amplitudes B_n of unit plane waves exp(i k d_n.(x - c))."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.size == 0 or angles.size > len(samples.values):
        raise ValueError("need between 1 and M directions")
    s = np.column_stack([np.cos(samples.angles), np.sin(samples.angles)])
    d = np.column_stack([np.cos(angles), np.sin(angles)])
    sd = s @ d.T
    A = (1 + sd) * np.exp(1j * samples.alpha * sd)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise NMLAError("rank-deficient amplitude fit (directions too close)")
    B, *_ = np.linalg.lstsq(A, samples.values, rcond=None)
    return B


def analyze(samples: ImpedanceSamples, config: NMLAConfig = NMLAConfig(),
            with_amplitudes: bool = True) -> list[DirectionEstimate]:
    est = pick_directions(filter_beta(samples), config)
    if with_amplitudes:
        B = estimate_amplitudes(samples, [e.angle for e in est])
        for e, b in zip(est, B):
            e.amplitude = complex(b)
    return est


# --------------------------------------------------------------------------
# far-field ray learning

@dataclass
class LearnedRays:
    rays: RaySet                   # per mesh node; empty lists inside the exclusion disk
    centers: np.ndarray            # valid observation centers (C, 2)
    estimates: list                # list of DirectionEstimate lists, one per center
    node_center: np.ndarray        # index into centers per node (-1 inside the exclusion)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["center_x", "center_y", "angle", "magnitude"])
            for c, ests in zip(self.centers, self.estimates):
                for e in ests:
                    w.writerow([f"{c[0]:.12g}", f"{c[1]:.12g}", f"{e.angle:.12g}", f"{e.magnitude:.12g}"])


def observation_centers(bounds, spacing: float):
    """Lattice spanning the box ``bounds`` (edges included) with spacing at most ``spacing``."""
    xmin, xmax, ymin, ymax = bounds
    if xmax < xmin or ymax < ymin:
        return np.zeros((0, 2))
    nx = int(np.ceil((xmax - xmin) / spacing - 1e-9)) + 1
    ny = int(np.ceil((ymax - ymin) / spacing - 1e-9)) + 1
    X, Y = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    return np.column_stack([X.ravel(), Y.ravel()])


def learn_rays(u, grad_u, nodes, omega: float, medium, spacing: float, valid_bounds,
               x0, exclusion_radius: float, config: NMLAConfig = NMLAConfig(),
               source_clearance: float = 0.0) -> LearnedRays:
    """Directions for every node outside the disk of ``exclusion_radius`` about ``x0``.

    Observation circles of radius C_r omega^(-1/2) must lie inside ``valid_bounds``
    and keep ``source_clearance`` away from the source; other centers are skipped.
    Each node takes the estimates of its nearest valid center.
    """
    x0 = np.asarray(x0, dtype=float)
    r = config.radius(omega)
    xmin, xmax, ymin, ymax = valid_bounds
    # every center of the shrunken box keeps its circle inside the valid region
    cand = observation_centers((xmin + r, xmax - r, ymin + r, ymax - r), spacing)
    dist0 = np.hypot(cand[:, 0] - x0[0], cand[:, 1] - x0[1])
    ok = (dist0 > exclusion_radius) & (dist0 - r >= source_clearance)
    centers = cand[ok]
    if len(centers) == 0:
        raise NMLAError("no valid observation center; domain too small for the NMLA radius")
    ks = omega / medium.speed(centers)
    estimates = []
    for c, k in zip(centers, ks):
        M = sample_count(k * r, config.oversampling)
        smp = sample_impedance(u, grad_u, c, r, k, M, valid_bounds)
        estimates.append(analyze(smp, config))
    nodes = np.asarray(nodes, dtype=float)
    far = np.hypot(nodes[:, 0] - x0[0], nodes[:, 1] - x0[1]) > exclusion_radius * (1 + 1e-12)
    _, nearest = cKDTree(centers).query(nodes[far])
    node_center = np.full(len(nodes), -1, dtype=np.int64)
    node_center[far] = nearest
    c_counts = np.array([len(e) for e in estimates], dtype=np.int64)
    c_offsets = np.concatenate([[0], np.cumsum(c_counts)])
    c_angles = np.array([d.angle for e in estimates for d in e])
    c_amps = np.array([d.amplitude if d.amplitude is not None else np.nan for e in estimates for d in e],
                      dtype=complex)
    counts = np.where(node_center >= 0, c_counts[np.maximum(node_center, 0)], 0)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    owner = np.repeat(node_center, counts)
    within = np.arange(offsets[-1]) - np.repeat(offsets[:-1], counts)
    src = c_offsets[owner] + within
    rays = RaySet(c_angles[src], offsets, c_amps[src])
    return LearnedRays(rays, centers, estimates, node_center)
