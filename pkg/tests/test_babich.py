import numpy as np
import pytest
from scipy import special

from hhx import babich as bb
from hhx.grid import CartesianGrid
from hhx.media import Medium, exact_homogeneous


def grid_for(omega, eps, npw=8, x0=(0.0, 0.0), extra=4):
    h = 2 * np.pi / (omega * npw)
    n = int(np.ceil((2 * eps) / h)) + extra
    return CartesianGrid(2 * n + 1, 2 * n + 1, h, h, (x0[0] - n * h, x0[1] - n * h))


def annulus(grid, x0, eps):
    X, Y = grid.mesh_xy()
    r = np.hypot(X - x0[0], Y - x0[1])
    return (r >= eps) & (r <= 2 * eps), X, Y


def test_coefficients():
    c0, c1 = bb.coefficients(40.0)
    assert c0 == pytest.approx(0.5j * np.sqrt(np.pi))
    assert c1 == pytest.approx(-1j * np.sqrt(np.pi) / 40.0)


def test_homogeneous_reduces_to_free_space():
    omega, eps = 40 * np.pi, 0.16
    g = grid_for(omega, eps)
    ing = bb.compute_ingredients(Medium.homogeneous(), (0.0, 0.0), g)
    ex = bb.assemble_babich(omega, ing, eps)
    sel, X, Y = annulus(g, (0, 0), eps)
    ref = exact_homogeneous(omega, np.stack([X[sel], Y[sel]], -1), (0.0, 0.0))
    assert np.max(np.abs(ex.u_b[sel] - ref)) / np.max(np.abs(ref)) <= 1e-6
    assert np.all(np.isnan(ex.u_b[~sel]))


def test_gradient_matches_finite_differences():
    omega, eps = 20 * np.pi, 0.16
    g = grid_for(omega, eps, npw=16)
    ing = bb.compute_ingredients(Medium.constant_gradient(), (0.0, 0.0), g)
    ex = bb.assemble_babich(omega, ing, eps, region="disk")
    u, h = ex.u_b, g.hx
    sel, _, _ = annulus(g, (0, 0), eps)
    inner = np.zeros_like(sel)
    inner[1:-1, 1:-1] = sel[1:-1, 1:-1]
    inner &= np.isfinite(np.roll(u, 1, 0)) & np.isfinite(np.roll(u, -1, 0))
    inner &= np.isfinite(np.roll(u, 1, 1)) & np.isfinite(np.roll(u, -1, 1))
    fdx = np.full(u.shape, np.nan + 0j)
    fdx[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2 * h)
    fdy = np.full(u.shape, np.nan + 0j)
    fdy[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    bound = 2 * h**2 / 6 * (omega * 1.3) ** 3 * np.abs(u[inner])
    assert np.all(np.abs(fdx[inner] - ex.grad_u_b[0][inner]) <= bound)
    assert np.all(np.abs(fdy[inner] - ex.grad_u_b[1][inner]) <= bound)


def test_evaluate_matches_nodes():
    omega, eps = 20 * np.pi, 0.16
    g = grid_for(omega, eps)
    ing = bb.compute_ingredients(Medium.constant_gradient(), (0.0, 0.0), g)
    ex = bb.assemble_babich(omega, ing, eps)
    sel, X, Y = annulus(g, (0, 0), eps)
    u, gu = ing.evaluate(omega, np.stack([X[sel], Y[sel]], -1))
    np.testing.assert_allclose(u, ex.u_b[sel], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(gu[:, 0], ex.grad_u_b[0][sel], rtol=1e-7, atol=1e-9)


def test_rays_homogeneous_and_source():
    g = grid_for(40.0, 0.2)
    ing = bb.compute_ingredients(Medium.homogeneous(), (0.0, 0.0), g)
    d = bb.babich_rays(ing.eikonal, 0.4)
    i, j = g.node_index_of((0.0, 0.0))
    assert np.all(np.isnan(d.values[:, j, i]))
    np.testing.assert_allclose(d.values[:, j, i + 3], [1.0, 0.0], atol=1e-12)
    ok = np.isfinite(d.values[0])
    np.testing.assert_allclose(np.hypot(d.values[0][ok], d.values[1][ok]), 1.0, atol=1e-12)


def test_rays_constant_gradient_near_radial():
    g = grid_for(40.0, 0.2)
    ing = bb.compute_ingredients(Medium.constant_gradient(), (0.0, 0.0), g)
    d = bb.babich_rays(ing.eikonal, 0.4)
    X, Y = g.mesh_xy()
    r = np.hypot(X, Y)
    ok = np.isfinite(d.values[0])
    radial = np.stack([X, Y]) / np.where(r > 0, r, 1)
    cross = np.abs(d.values[0] * radial[1] - d.values[1] * radial[0])
    G = np.hypot(0.1, 0.2)
    assert np.all(cross[ok] <= G * r[ok] / 1.0)
    assert cross[ok].max() > 0.1 * G * r[ok].max() * 0.5


def test_leading_term_dominates():
    omega, eps = 40 * np.pi, 0.16
    g = grid_for(omega, eps)
    ing = bb.compute_ingredients(Medium.constant_gradient(), (0.0, 0.0), g)
    sel, _, _ = annulus(g, (0, 0), eps)
    phi = ing.eikonal.phi.values[sel]
    v0, v1 = ing.transport.v0.values[sel], ing.transport.v1.values[sel]
    c0, c1 = bb.coefficients(omega)
    t0 = np.abs(c0 * v0 * special.hankel1(0, omega * phi))
    t1 = np.abs(c1 * v1 * phi * special.hankel1(1, omega * phi))
    assert np.all(t0 >= omega * phi / 10 * t1)


def test_annulus_error_decreases_with_frequency():
    med = Medium.constant_gradient()
    eps = 0.16
    errs = []
    for omega in (20 * np.pi, 40 * np.pi):
        g = grid_for(omega, eps)
        ex = bb.assemble_babich(omega, bb.compute_ingredients(med, (0.0, 0.0), g), eps)
        fine = CartesianGrid(4 * (g.nx - 1) + 1, 4 * (g.ny - 1) + 1, g.hx / 4, g.hy / 4, g.origin)
        ref = bb.compute_ingredients(med, (0.0, 0.0), fine)
        sel, X, Y = annulus(g, (0, 0), eps)
        u_ref, _ = ref.evaluate(omega, np.stack([X[sel], Y[sel]], -1))
        errs.append(np.abs(ex.u_b[sel] - u_ref).max() / np.abs(u_ref).max())
    assert errs[1] <= errs[0]


def test_hankel_floor():
    with pytest.raises(ValueError):
        bb._combine(10.0, np.array([1e-5]), np.zeros((1, 2)), np.ones(1), np.zeros((1, 2)),
                    np.zeros(1), np.zeros((1, 2)))
