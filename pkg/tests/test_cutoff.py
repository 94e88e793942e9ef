import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhx import cutoff
from hhx.media import exact_homogeneous, exact_homogeneous_grad

P = cutoff.CutoffParams((0.1, -0.05), 0.2)


def at_r(r, theta=0.3):
    return np.array([[P.x0[0] + r * np.cos(theta), P.x0[1] + r * np.sin(theta)]])


def test_midpoint_value():
    assert cutoff.chi(P, at_r(1.5 * P.eps))[0] == pytest.approx(np.exp(-4 * np.exp(-2)), rel=1e-14)
    assert cutoff.chi(P, at_r(1.5 * P.eps))[0] == pytest.approx(0.581967, abs=1e-6)


@pytest.mark.parametrize("r", [0.0, 0.05, 0.2])
def test_plateau(r):
    assert cutoff.chi(P, at_r(r))[0] == 1.0
    assert np.all(cutoff.grad_chi(P, at_r(r)) == 0)
    assert cutoff.lap_chi(P, at_r(r))[0] == 0


@pytest.mark.parametrize("r", [0.4, 0.41, 3.0])
def test_outside(r):
    assert cutoff.chi(P, at_r(r))[0] == 0.0
    assert np.all(cutoff.grad_chi(P, at_r(r)) == 0)
    assert cutoff.lap_chi(P, at_r(r))[0] == 0


def test_derivatives_fd(rng):
    n = 1000
    r = rng.uniform(P.eps * 1.001, 2 * P.eps * 0.999, n)
    th = rng.uniform(0, 2 * np.pi, n)
    pts = np.column_stack([P.x0[0] + r * np.cos(th), P.x0[1] + r * np.sin(th)])
    h = 1e-6
    ex, ey = np.array([h, 0]), np.array([0, h])
    fdx = (cutoff.chi(P, pts + ex) - cutoff.chi(P, pts - ex)) / (2 * h)
    fdy = (cutoff.chi(P, pts + ey) - cutoff.chi(P, pts - ey)) / (2 * h)
    g = cutoff.grad_chi(P, pts)
    assert np.abs(g[:, 0] - fdx).max() <= 1e-7
    assert np.abs(g[:, 1] - fdy).max() <= 1e-7

    def five(h):
        ex, ey = np.array([h, 0]), np.array([0, h])
        return (cutoff.chi(P, pts + ex) + cutoff.chi(P, pts - ex) + cutoff.chi(P, pts + ey)
                + cutoff.chi(P, pts - ey) - 4 * cutoff.chi(P, pts)) / h**2

    # one Richardson step removes the O(h^2) term of the 5-point stencil
    lap = (4 * five(2e-5) - five(4e-5)) / 3
    assert np.abs(cutoff.lap_chi(P, pts) - lap).max() <= 1e-5


@given(st.floats(0, 0.6), st.floats(0, 0.6))
def test_range_and_monotone(r1, r2):
    a, b = sorted((r1, r2))
    ca, cb = cutoff.chi(P, at_r(a))[0], cutoff.chi(P, at_r(b))[0]
    assert 0 <= cb <= ca <= 1


@pytest.mark.parametrize("r_edge", [0.2, 0.4])
def test_c2_at_edges(r_edge):
    d = 1e-7
    for f in (cutoff.chi, lambda p, x: cutoff.grad_chi(p, x)[..., 0], cutoff.lap_chi):
        lo, hi = f(P, at_r(r_edge - d))[0], f(P, at_r(r_edge + d))[0]
        assert abs(lo - hi) <= 1e-6


def test_rhs_support_and_formula(rng):
    omega = 60.0
    r = np.concatenate([rng.uniform(0.01, 0.2, 50), rng.uniform(0.2001, 0.3999, 50), rng.uniform(0.4, 1, 50)])
    th = rng.uniform(0, 2 * np.pi, r.size)
    pts = np.column_stack([P.x0[0] + r * np.cos(th), P.x0[1] + r * np.sin(th)])
    u = exact_homogeneous(omega, pts, P.x0)
    gu = exact_homogeneous_grad(omega, pts, P.x0)
    f = cutoff.rhs_values(u, gu, P, pts)
    off = (r <= P.eps) | (r >= 2 * P.eps)
    assert np.all(f[off] == 0)
    expect = 2 * np.sum(gu * cutoff.grad_chi(P, pts), axis=1) + u * cutoff.lap_chi(P, pts)
    np.testing.assert_allclose(f[~off], expect[~off], rtol=1e-12)


def _rhs_norms(omega, eps, nr=400, nt=720):
    """L2 and Linf of f for the free-space field by polar Gauss-Legendre x trapezoid."""
    p = cutoff.CutoffParams((0.0, 0.0), eps)
    xg, wg = np.polynomial.legendre.leggauss(nr)
    r = eps * (1.5 + 0.5 * xg)
    wr = 0.5 * eps * wg
    th = 2 * np.pi * np.arange(nt) / nt
    R, T = np.meshgrid(r, th)
    pts = np.stack([R * np.cos(T), R * np.sin(T)], -1).reshape(-1, 2)
    f = cutoff.rhs_values(exact_homogeneous(omega, pts, (0, 0)), exact_homogeneous_grad(omega, pts, (0, 0)), p, pts)
    w = (np.tile(wr, nt) * R.ravel()) * (2 * np.pi / nt)
    return np.sqrt(np.sum(w * np.abs(f) ** 2)), np.abs(f).max()


def test_rhs_l2_grows_like_sqrt_omega():
    eps = 1 / (2 * np.pi)
    (a2, ai), (b2, bi) = _rhs_norms(100 * np.pi, eps), _rhs_norms(200 * np.pi, eps)
    assert np.sqrt(2) * 0.8 <= b2 / a2 <= np.sqrt(2) * 1.2
    assert np.sqrt(2) * 0.7 <= bi / ai <= np.sqrt(2) * 1.3


def test_rhs_l2_eps_trend():
    omega = 200 * np.pi
    a, _ = _rhs_norms(omega, 1 / (2 * np.pi))
    b, _ = _rhs_norms(omega, 1 / (4 * np.pi))
    # eps^(-1/2): halving eps multiplies the norm by sqrt(2)
    assert np.sqrt(2) / 1.5 <= b / a <= np.sqrt(2) * 1.5


def test_assemble_rhs_field_requires_cover():
    from hhx import babich as bb
    from hhx.grid import CartesianGrid
    from hhx.media import Medium
    g = CartesianGrid(41, 41, 0.02, 0.02, (-0.4, -0.4))
    ing = bb.compute_ingredients(Medium.homogeneous(), (0.0, 0.0), g)
    ex = bb.assemble_babich(60.0, ing, 0.15)
    f = cutoff.assemble_rhs_field(ex, cutoff.CutoffParams((0.0, 0.0), 0.15))
    X, Y = g.mesh_xy()
    r = np.hypot(X, Y)
    assert np.all(f.values[(r <= 0.15) | (r >= 0.3)] == 0)
    ex.u_b[:] = np.nan
    with pytest.raises(ValueError):
        cutoff.assemble_rhs_field(ex, cutoff.CutoffParams((0.0, 0.0), 0.15))
