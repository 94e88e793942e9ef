"""Bivariate polynomials as dense coefficient arrays ``P[a, b]`` (multiplying y1^a y2^b)."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly


def zeros(deg: int) -> np.ndarray:
    return np.zeros((deg + 1, deg + 1))


def homogeneous_part(P: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros_like(P)
    for a in range(min(n, P.shape[0] - 1) + 1):
        b = n - a
        if b < P.shape[1]:
            out[a, b] = P[a, b]
    return out


def mul(P: np.ndarray, Q: np.ndarray, deg: int) -> np.ndarray:
    """Product truncated to total degree ``deg``."""
    out = zeros(deg)
    ia, ib = np.nonzero(P)
    ja, jb = np.nonzero(Q)
    for a, b in zip(ia, ib):
        for c, d in zip(ja, jb):
            if a + c + b + d <= deg:
                out[a + c, b + d] += P[a, b] * Q[c, d]
    return out


def _pad(P: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[: P.shape[0], : P.shape[1]] = P
    return out


def dx(P: np.ndarray) -> np.ndarray:
    return _pad(npoly.polyder(P, axis=0), P.shape) if P.shape[0] > 1 else np.zeros_like(P)


def dy(P: np.ndarray) -> np.ndarray:
    return _pad(npoly.polyder(P, axis=1), P.shape) if P.shape[1] > 1 else np.zeros_like(P)


def lap(P: np.ndarray) -> np.ndarray:
    return dx(dx(P)) + dy(dy(P))


def grad_dot(P: np.ndarray, Q: np.ndarray, deg: int) -> np.ndarray:
    return mul(dx(P), dx(Q), deg) + mul(dy(P), dy(Q), deg)


def evaluate(P: np.ndarray, y1, y2):
    return npoly.polyval2d(y1, y2, P)
