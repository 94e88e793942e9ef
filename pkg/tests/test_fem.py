import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hhx import fem
from hhx.grid import CartesianGrid, quadrature, triangulate
from hhx.media import Medium

FAR_PML = fem.PMLProfile(1.0, 1.0, (-10.0, 10.0, -10.0, 10.0))  # never reaches the unit square


def unit_mesh(n):
    return triangulate(CartesianGrid.from_bounds(0.0, 1.0, 0.0, 1.0, n + 1, n + 1))


def test_pml_profile():
    p = fem.PMLProfile(0.1, 20.0, (0, 1, 0, 1))
    sx, sy = fem.pml_sigma(p, np.array([[0.5, 0.5], [0.05, 0.5], [0.5, 1.0]]))
    assert sx[0] == sy[0] == 0
    assert sx[1] == pytest.approx(20 / 0.1 * 0.25)
    assert sy[2] == pytest.approx(200.0)
    assert p.interior == pytest.approx((0.1, 0.9, 0.1, 0.9))
    with pytest.raises(ValueError):
        fem.PMLProfile(0.6, 1.0, (0, 1, 0, 1))
    with pytest.raises(ValueError):
        fem.PMLProfile(0.1, 0.0, (0, 1, 0, 1))


def test_default_pml_whole_cells():
    p = fem.default_pml(20.0, 1.0, (-0.5, 0.5, -0.5, 0.5), 2.0, h=0.03)
    assert p.thickness / 0.03 == pytest.approx(round(p.thickness / 0.03))
    assert p.thickness >= 2 * 2 * np.pi / 20


def test_rayset_construction_and_validation():
    rs = fem.RaySet.from_lists([[0.0], [], [0.0, np.pi / 2, -np.pi / 2]])
    assert rs.n_dofs == 4 and list(rs.counts) == [1, 0, 3]
    np.testing.assert_allclose(rs.node_angles(2), [0, np.pi / 2, 3 * np.pi / 2])
    rs.validate()
    with pytest.raises(ValueError, match="empty"):
        rs.validate(require=[1])
    with pytest.raises(ValueError, match="closer"):
        fem.RaySet.from_lists([[0.0, np.deg2rad(10)]]).validate()
    with pytest.raises(ValueError, match="closer"):
        fem.RaySet.from_lists([[np.deg2rad(355), np.deg2rad(5)]]).validate()
    with pytest.raises(ValueError, match="more than"):
        fem.RaySet.from_lists([np.linspace(0, 5, 5)]).validate()
    with pytest.raises(ValueError):
        fem.RaySet(np.zeros(2), np.array([0, 3]))
    v = fem.RaySet.from_vectors(np.array([[1.0, 0.0], [np.nan, np.nan], [0.0, -2.0]]))
    np.testing.assert_allclose(v.angles, [0.0, 1.5 * np.pi])
    assert list(v.counts) == [1, 0, 1]


def _manufactured(omega, plane):
    def u(p):
        s = np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])
        return s * (np.exp(1j * omega * p[..., 0]) if plane else 1.0)

    def f(p):
        x, y = p[..., 0], p[..., 1]
        s = np.sin(np.pi * x) * np.sin(np.pi * y)
        if not plane:
            return (2 * np.pi**2 - omega**2) * s
        sx = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        return -(-2 * np.pi**2 * s + 2j * omega * sx) * np.exp(1j * omega * x)

    return u, f


def _solve(mesh, omega, f, rays=None):
    med = Medium.homogeneous()
    if rays is None:
        sys_ = fem.assemble_sfem(mesh, med, omega, f, FAR_PML)
    else:
        sys_ = fem.assemble_rayfem(mesh, med, omega, f, FAR_PML, rays)
    x = spla.spsolve(sys_.matrix.tocsc(), sys_.rhs)
    return sys_, fem.FEMSolution.from_system(sys_, x, mesh, rays, med, omega)


def test_sfem_second_order_l2():
    omega = 5.0
    u, f = _manufactured(omega, plane=False)
    errs = []
    for n in (8, 16, 32):
        mesh = unit_mesh(n)
        _, sol = _solve(mesh, omega, f)
        errs.append(fem.relative_l2(sol, u, mesh, (0, 1, 0, 1)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_rayfem_captures_oscillation():
    omega, n = 40.0, 16  # about 2.5 points per wavelength
    u, f = _manufactured(omega, plane=True)
    mesh = unit_mesh(n)
    _, p1 = _solve(mesh, omega, f)
    rays = fem.RaySet.from_vectors(np.tile([1.0, 0.0], (mesh.n_nodes, 1)))
    _, ray = _solve(mesh, omega, f, rays)
    e_p1 = fem.relative_l2(p1, u, mesh, (0, 1, 0, 1))
    e_ray = fem.relative_l2(ray, u, mesh, (0, 1, 0, 1))
    assert e_ray < 0.05
    assert e_ray < 0.1 * e_p1


def test_hermitian_without_absorption():
    mesh = unit_mesh(6)
    med = Medium.gaussian_bump(x1=(0.5, 0.5))
    A = fem.assemble_sfem(mesh, med, 7.0, None, FAR_PML).matrix
    assert abs(A - A.getH()).max() < 1e-12
    rays = fem.RaySet.from_lists([[0.3, 2.0] for _ in range(mesh.n_nodes)])
    B = fem.assemble_rayfem(mesh, med, 7.0, None, FAR_PML, rays).matrix
    assert abs(B - B.getH()).max() < 1e-10 * abs(B).max()


def test_absorbing_layer_breaks_symmetry():
    mesh = unit_mesh(10)
    A = fem.assemble_sfem(mesh, Medium.homogeneous(), 7.0, None, fem.PMLProfile(0.2, 10.0, (0, 1, 0, 1))).matrix
    assert abs(A - A.getH()).max() > 1e-3
    assert abs(A - A.T).max() < 1e-12


def test_dirichlet_elimination_and_expand():
    mesh = unit_mesh(5)
    s = fem.assemble_sfem(mesh, Medium.homogeneous(), 3.0, lambda p: np.ones(p.shape[:-1]), FAR_PML)
    assert s.matrix.shape[0] == mesh.n_nodes - len(mesh.boundary_nodes)
    full = s.expand(np.arange(len(s.free)) + 1.0)
    assert np.all(full[mesh.boundary_nodes] == 0)
    sol = fem.FEMSolution(mesh, full)
    np.testing.assert_allclose(sol.nodal_values(), full, atol=1e-12)


def test_rays_mismatch():
    mesh = unit_mesh(3)
    with pytest.raises(ValueError):
        fem.assemble_rayfem(mesh, Medium.homogeneous(), 3.0, None, FAR_PML, fem.RaySet.from_lists([[0.0]]))


def test_gradient_of_solution():
    mesh = unit_mesh(4)
    coeffs = (2 * mesh.nodes[:, 0] - 3j * mesh.nodes[:, 1]).astype(complex)
    sol = fem.FEMSolution(mesh, coeffs)
    pts = np.array([[0.31, 0.62], [0.9, 0.1]])
    np.testing.assert_allclose(sol(pts), 2 * pts[:, 0] - 3j * pts[:, 1])
    np.testing.assert_allclose(sol.gradient(pts), np.tile([2, -3j], (2, 1)))


def test_l2_norms_region_and_exclusion():
    mesh = unit_mesh(40)
    one = lambda p: np.ones(p.shape[:-1], dtype=complex)
    zero = lambda p: np.zeros(p.shape[:-1], dtype=complex)
    num, den = fem.l2_norms(one, zero, mesh, (0, 1, 0, 1))
    assert num == pytest.approx(1.0) and den == 0
    num, _ = fem.l2_norms(one, zero, mesh, (0, 1, 0, 1), x0=(0.5, 0.5), eta=0.2, quad=quadrature(9))
    assert num**2 == pytest.approx(1 - np.pi * 0.04, abs=5e-3)
    with pytest.raises(ZeroDivisionError):
        fem.relative_l2(one, zero, mesh, (0, 1, 0, 1))
