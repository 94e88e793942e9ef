"""Bessel and Hankel functions of real argument.

Thin, domain-checked wrappers over ``scipy.special``. The accuracy contract
(1e-12 absolute for J, 1e-10 relative for H) is verified in the test suite
against an mpmath table stored in ``tests/data/bessel_oracle.txt``.
"""

from __future__ import annotations

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Argument outside the supported domain of a special function."""


def _check_real(x, strictly_positive: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("NaN argument")
    if strictly_positive:
        if np.any(x <= 0):
            raise DomainError("argument must be > 0")
    elif np.any(x < 0):
        raise DomainError("argument must be >= 0")
    return x


def _check_order(order) -> np.ndarray:
    n = np.asarray(order)
    if not np.issubdtype(n.dtype, np.integer):
        if np.any(n != np.round(n)):
            raise DomainError("order must be an integer")
        n = n.astype(int)
    if np.any(n < 0):
        raise DomainError("order must be non-negative")
    return n


def bessel_j(order, x):
    """J_order(x) for integer order >= 0 and real x >= 0."""
    n = _check_order(order)
    x = _check_real(x, strictly_positive=False)
    return special.jv(n, x)


def bessel_j_prime(order, x):
    """Derivative J'_order(x)."""
    n = _check_order(order)
    x = _check_real(x, strictly_positive=False)
    return special.jvp(n, x, 1)


def hankel1(order, x):
    """H^(1)_order(x) = J_order(x) + i Y_order(x) for order in {0, 1, 2}, x > 0."""
    n = _check_order(order)
    if np.any(n > 2):
        raise DomainError("hankel1 supports orders 0, 1, 2")
    x = _check_real(x, strictly_positive=True)
    return special.jv(n, x) + 1j * special.yv(n, x)


def hankel1_012(x):
    """Return (H0, H1, H2) at x > 0, sharing one J/Y evaluation of orders 0 and 1.

    H2 comes from the three-term recurrence H2 = (2/x) H1 - H0.
    """
    x = _check_real(x, strictly_positive=True)
    h0 = special.j0(x) + 1j * special.y0(x)
    h1 = special.j1(x) + 1j * special.y1(x)
    h2 = 2.0 / x * h1 - h0
    return h0, h1, h2
