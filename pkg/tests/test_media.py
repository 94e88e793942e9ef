import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhx.grid import CartesianGrid
from hhx.media import (GriddedVelocity, Medium, exact_homogeneous, exact_homogeneous_grad,
                       exact_phase_constant_gradient, exact_phase_constant_gradient_grad, read_velocity_file,
                       smooth, write_velocity_file)
from hhx.specfun import hankel1


def test_bump_values():
    m = Medium.gaussian_bump()
    assert m.slowness_sq(np.array([0.2, 0.2])) == pytest.approx(1.2, abs=1e-15)
    far = np.array([[0.2 + 0.22, 0.2], [0.2, 0.2 - 0.3], [-0.5, -0.5]])
    np.testing.assert_array_equal(m.slowness_sq(far), 1.0)
    np.testing.assert_allclose(m.speed(far), 1.0)


def test_bump_smooth_across_radii():
    m = Medium.gaussian_bump()
    h = 2.5e-4
    for r in (0.16, 0.22):
        xs = np.array([[0.2 + r + s * h, 0.2] for s in range(-8, 9)])
        v = m.slowness_sq(xs)
        d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        assert np.all(np.abs(d2) < 10)
        assert np.max(np.abs(np.diff(d2))) < 0.05


def test_constant_gradient_at_source():
    m = Medium.constant_gradient()
    assert float(m.speed(np.array([0.0, 0.0]))) == 1.0
    pts = np.array([[0.3, -0.1]])
    np.testing.assert_allclose(m.slowness_sq(pts), 1 / m.speed(pts) ** 2)


def test_smoothing_rules():
    g = CartesianGrid(21, 17, 0.1, 0.1)
    rng = np.random.default_rng(0)
    v = 1.5 + rng.uniform(0, 1, g.shape)
    gv = GriddedVelocity(g, v)
    np.testing.assert_array_equal(smooth(gv, 0.0).values, v)
    const = GriddedVelocity(g, np.full(g.shape, 2.5))
    np.testing.assert_allclose(smooth(const, 0.3).values, 2.5, rtol=1e-14)
    s = smooth(gv, 0.25).values
    assert s.min() >= v.min() - 1e-12 and s.max() <= v.max() + 1e-12


def test_impulse_kernel_unit_sum():
    g = CartesianGrid(41, 41, 0.05, 0.05)
    v = np.ones(g.shape)
    v[20, 20] += 1.0
    s = smooth(GriddedVelocity(g, v), 0.2).values - 1.0
    assert s.sum() == pytest.approx(1.0, rel=1e-12)
    assert s[20, 20] == s.max()
    np.testing.assert_allclose(s, s.T, atol=1e-15)


def test_velocity_file_roundtrip(tmp_path):
    g = CartesianGrid(4, 3, 0.5, 0.25, (-1.0, 2.0))
    vals = np.arange(12, dtype=float).reshape(3, 4) + 1.0
    write_velocity_file(tmp_path / "v.txt", GriddedVelocity(g, vals))
    back = read_velocity_file(tmp_path / "v.txt")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, vals)
    (tmp_path / "bad.txt").write_text("VELGRID1 2 2 1 1 0 0\n1 2 3\n")
    with pytest.raises(ValueError):
        read_velocity_file(tmp_path / "bad.txt")
    (tmp_path / "bad2.txt").write_text("VELGRID2 2 2 1 1 0 0\n1 2 3 4\n")
    with pytest.raises(ValueError):
        read_velocity_file(tmp_path / "bad2.txt")


def test_gridded_bilinear_and_clamped():
    g = CartesianGrid(3, 2, 1.0, 1.0)
    m = Medium.from_grid(GriddedVelocity(g, np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])))
    assert m.speed(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.5)
    assert m.speed(np.array([[5.0, 0.5]]))[0] == pytest.approx(3.0)


def test_exact_homogeneous_value_and_decay():
    u = exact_homogeneous(100.0, np.array([[0.5, 0.0]]), (0.0, 0.0))[0]
    assert u == pytest.approx(0.25j * hankel1(0, 50.0), rel=1e-15)
    r = np.linspace(5, 10, 5000)
    v = exact_homogeneous(100.0, np.column_stack([r, 0 * r]), (0.0, 0.0))
    np.testing.assert_allclose(np.abs(v) * np.sqrt(r), np.abs(v[0]) * np.sqrt(r[0]), rtol=2e-3)
    ph = np.unwrap(np.angle(v))
    assert np.mean(np.diff(ph) / np.diff(r)) == pytest.approx(100.0, rel=1e-4)
    with pytest.raises(ValueError):
        exact_homogeneous(1.0, np.array([[0.0, 0.0]]), (0.0, 0.0))


def test_exact_homogeneous_gradient_fd(rng):
    pts = rng.uniform(-1, 1, (20, 2))
    g = exact_homogeneous_grad(30.0, pts, (0.1, -0.2))
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (exact_homogeneous(30.0, pts + e, (0.1, -0.2)) - exact_homogeneous(30.0, pts - e, (0.1, -0.2))) / (2 * h)
        np.testing.assert_allclose(g[:, k], fd, rtol=1e-6, atol=1e-8)


def test_constant_gradient_phase_limits():
    pts = np.array([[0.3, 0.4], [-0.2, 0.1]])
    np.testing.assert_allclose(exact_phase_constant_gradient(2.0, (0.0, 0.0), (0, 0), pts),
                               np.hypot(pts[:, 0], pts[:, 1]) / 2.0, rtol=1e-14)
    assert exact_phase_constant_gradient(1.0, (0.1, -0.2), (0, 0), np.array([0.0, 0.0])) == 0.0


def test_constant_gradient_eikonal_residual(rng):
    c0, G0, x0 = 1.0, (0.1, -0.2), (0.0, 0.0)
    pts = rng.uniform(-0.5, 0.5, (1000, 2))
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 1e-2]
    h = 1e-5
    gx = (exact_phase_constant_gradient(c0, G0, x0, pts + [h, 0]) - exact_phase_constant_gradient(c0, G0, x0, pts - [h, 0])) / (2 * h)
    gy = (exact_phase_constant_gradient(c0, G0, x0, pts + [0, h]) - exact_phase_constant_gradient(c0, G0, x0, pts - [0, h])) / (2 * h)
    c = Medium.constant_gradient(c0, G0, x0).speed(pts)
    assert np.max(np.abs(np.hypot(gx, gy) * c - 1)) <= 1e-6
    ga = exact_phase_constant_gradient_grad(c0, G0, x0, pts)
    np.testing.assert_allclose(ga[:, 0], gx, atol=1e-8)
    np.testing.assert_allclose(ga[:, 1], gy, atol=1e-8)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_bump_speed_bounds(x, y):
    m = Medium.gaussian_bump()
    c = float(m.speed(np.array([x, y])))
    assert 1 / np.sqrt(1.2) - 1e-12 <= c <= 1.0


def test_slowness_taylor_constant_gradient():
    m = Medium.constant_gradient()
    x0 = np.array([0.05, -0.1])
    M = m.slowness_taylor(x0, 6)
    y = np.array([[0.01, -0.02], [-0.015, 0.005]])
    approx = sum(M[a, b] * y[:, 0] ** a * y[:, 1] ** b for a in range(7) for b in range(7))
    np.testing.assert_allclose(approx, m.slowness_sq(x0 + y), rtol=1e-10)


def test_homogeneous_near_bump():
    m = Medium.gaussian_bump()
    assert m.is_homogeneous_near((-0.2, -0.2), 0.3)
    assert not m.is_homogeneous_near((0.0, 0.0), 0.1)
