import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hhx import eikonal as ek
from hhx.grid import CartesianGrid, cubic_eval
from hhx.media import Medium, exact_phase_constant_gradient

V0 = 1 / (2 * np.sqrt(np.pi))


def square(n, half=0.5, c=(0.0, 0.0)):
    return CartesianGrid.from_bounds(c[0] - half, c[0] + half, c[1] - half, c[1] + half, n, n)


@pytest.fixture(scope="module")
def cg41():
    med = Medium.constant_gradient()
    eik = ek.solve_phase(med, (0.0, 0.0), square(41))
    return med, eik, ek.solve_amplitudes(eik, med)


def test_homogeneous_phase_and_amplitudes():
    med = Medium.homogeneous()
    g = square(31)
    eik = ek.solve_phase(med, (0.1, -0.1), g)
    X, Y = g.mesh_xy()
    r = np.hypot(X - 0.1, Y + 0.1)
    assert np.abs(eik.phi.values - r).max() <= 1e-10
    tr = ek.solve_amplitudes(eik, med)
    assert np.abs(tr.v0.values - V0).max() <= 1e-8
    assert np.abs(tr.v1.values).max() <= 1e-6


def test_homogeneous_phase_derivatives():
    med = Medium.homogeneous()
    g = square(41)
    eik = ek.solve_phase(med, (0.0, 0.0), g)
    X, Y = g.mesh_xy()
    inner = (np.abs(X) < 0.4) & (np.abs(Y) < 0.4) & ~eik.patch
    np.testing.assert_allclose(eik.grad_phi_sq.values[0][inner], 2 * X[inner], atol=1e-8)
    np.testing.assert_allclose(eik.lap_phi_sq.values[inner], 4.0, atol=1e-8)


def test_source_patch_leading_order():
    med = Medium.constant_gradient()
    g = square(41)
    eik = ek.solve_phase(med, (0.0, 0.0), g)
    X, Y = g.mesh_xy()
    p = eik.patch & (np.hypot(X, Y) > 0)
    r = np.hypot(X, Y)[p]
    lead = 2 * 1.0 * np.stack([X[p], Y[p]])
    rel = np.abs(eik.grad_phi_sq.values[:, p] - lead).max(axis=0) / r
    # the correction to 2 m0 (x - x0) is O(|G0| r) relative
    assert np.all(rel <= 4 * np.hypot(0.1, 0.2) * r)


def test_phase_source_value_and_positivity(cg41):
    _, eik, tr = cg41
    i, j = eik.grid.node_index_of((0.0, 0.0))
    assert eik.phi.values[j, i] == 0.0
    assert np.all(eik.phi.values >= 0)
    assert tr.v0.values[j, i] == pytest.approx(V0, abs=1e-14)
    assert np.all(tr.v0.values > 0)
    assert np.all(np.isfinite(tr.v1.values))


def test_grad_phi_residual_fine_grid():
    med = Medium.constant_gradient()
    g = square(201)
    eik = ek.solve_phase(med, (0.0, 0.0), g)
    X, Y = g.mesh_xy()
    c = med.speed(np.stack([X, Y], -1))
    res = np.abs(np.hypot(*eik.grad_phi.values) * c - 1)
    interior = np.zeros(g.shape, bool)
    interior[3:-3, 3:-3] = True
    assert res[interior & ~eik.patch].max() <= 1e-3


def test_grad_phi_consistent_with_grad_phi_sq(cg41):
    _, eik, _ = cg41
    off = (eik.phi.values > 0) & ~eik.patch
    np.testing.assert_allclose((eik.grad_phi_sq.values[:, off] / (2 * eik.phi.values[off])),
                               eik.grad_phi.values[:, off], rtol=1e-12)


def test_phase_symmetry():
    med = Medium.homogeneous(2.0)
    g = square(25)
    phi = ek.solve_factored_eikonal(med, (0.0, 0.0), g).values
    np.testing.assert_allclose(phi, phi[:, ::-1], atol=1e-12)
    np.testing.assert_allclose(phi, phi.T, atol=1e-12)


def test_phase_order_constant_gradient():
    med = Medium.constant_gradient()
    errs, hs = [], []
    for n in (21, 41, 81):
        g = square(n)
        eik = ek.solve_phase(med, (0.0, 0.0), g)
        X, Y = g.mesh_xy()
        ex = exact_phase_constant_gradient(1.0, (0.1, -0.2), (0, 0), np.stack([X, Y], -1))
        errs.append(np.abs(eik.phi.values - ex)[np.hypot(X, Y) <= 0.3].max())
        hs.append(g.hx)
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(2)
    assert np.all(orders >= 4.0), orders


def test_source_must_be_node():
    with pytest.raises(ValueError):
        ek.solve_phase(Medium.homogeneous(), (0.013, 0.0), square(21))


def test_nonconvergence_raises():
    cfg = ek.SweepConfig(5, 6, sweep_tolerance=1e-14, max_sweeps=1)
    with pytest.raises(ek.SweepError):
        ek.solve_phase(Medium.constant_gradient(), (0.0, 0.0), square(41), cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        ek.SweepConfig(weno_order=4)
    with pytest.raises(ValueError):
        ek.SweepConfig(factorization_order=2)
    with pytest.raises(ValueError):
        ek.SweepConfig(sweep_tolerance=0)


def cycle_maxima(hist):
    n = len(hist) // 4 * 4
    return hist[:n].reshape(-1, 4).max(axis=1)


def test_sweep_cycles_monotone_constant_gradient(cg41):
    c = cycle_maxima(cg41[1].history)
    assert len(c) >= 3
    assert np.all(c[1:] <= c[:-1] * (1 + 1e-9))


def test_sweep_cycles_decaying_envelope_bump():
    eik = ek.solve_phase(Medium.gaussian_bump(), (-0.2, -0.2), square(41))
    c = cycle_maxima(eik.history)
    running = np.minimum.accumulate(c)
    assert np.all(c[1:] <= 1.5 * running[:-1])
    assert c[-1] < 1e-3 * c[0]


@settings(max_examples=100)
@given(st.floats(-0.45, 0.45), st.floats(-0.45, 0.45))
def test_causality_descent_path(cg41_path_data, x, y):
    grid, phi, gphi = cg41_path_data
    p = np.array([x, y])
    if np.hypot(*p) < 0.05:
        return
    last = cubic_eval(grid, phi, p[None])[0]
    step = 0.25 * grid.hx
    for _ in range(4000):
        g = np.array([cubic_eval(grid, gphi[k], p[None])[0] for k in range(2)])
        if np.hypot(*p) < 2 * grid.hx:
            break
        p = p - step * g / np.hypot(*g)
        val = cubic_eval(grid, phi, p[None])[0]
        assert val <= last + 1e-9
        last = val
    assert np.hypot(*p) < 2 * grid.hx


@pytest.fixture(scope="module")
def cg41_path_data(cg41):
    _, eik, _ = cg41
    return eik.grid, eik.phi.values, eik.grad_phi.values


def test_amplitude_orders_small_ladder():
    med = Medium.constant_gradient()
    sols = []
    for n in (21, 41, 161):
        eik = ek.solve_phase(med, (0.0, 0.0), square(n))
        sols.append(ek.solve_amplitudes(eik, med))
    g = square(21)
    X, Y = g.mesh_xy()
    mask = np.hypot(X, Y) <= 0.3
    for key, floor in (("v0", 2.5), ("v1", 0.8)):
        ref = getattr(sols[2], key).values
        e0 = np.abs(getattr(sols[0], key).values - ref[::8, ::8])[mask].max()
        e1 = np.abs(getattr(sols[1], key).values[::2, ::2] - ref[::8, ::8])[mask].max()
        assert np.log2(e0 / e1) >= floor, (key, e0, e1)
