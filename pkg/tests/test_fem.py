import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczfem import fem
from orliczfem import monotone as mo
from orliczfem import nfunc as nf


def test_mesh_counts():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    assert (m.n_vertices, m.n_cells) == (5, 4)
    np.testing.assert_array_equal(m.vertices[m.boundary].ravel(), [0.0, 1.0])
    m = fem.generate_mesh(fem.Rectangle(0, 1, 0, 1), 0.5)
    assert (m.n_vertices, m.n_cells) == (9, 8)


def test_disk_area():
    m = fem.generate_mesh(fem.Disk(), 0.1)
    assert abs(m.measure - math.pi) < 0.01 * math.pi
    assert np.all(m.volumes > 0)


def test_bad_mesh_inputs():
    with pytest.raises(fem.MeshError):
        fem.generate_mesh(fem.Interval(0, 1), 0.0)
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    with pytest.raises(fem.MeshError):
        fem.FeFunction(m, np.ones(5))


def test_truncate_examples():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    u = fem.FeFunction(m, np.array([0.0, 2.0, -3.0, 0.5, 0.0]))
    np.testing.assert_array_equal(fem.truncate(u, 1.0).values, [0, 1, -1, 0.5, 0])
    np.testing.assert_array_equal(fem.truncate(u, 5.0).values, u.values)
    t = fem.truncate(u, 0.7)
    np.testing.assert_array_equal(fem.truncate(t, 0.7).values, t.values)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0.01, 5))
def test_truncate_properties(vals, k):
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    u = fem.FeFunction.from_interior(m, vals)
    t = fem.truncate(u, k)
    assert np.all(np.abs(t.values) <= k)
    assert np.all(np.abs(t.values) <= np.abs(u.values))
    assert t.l1_norm() <= u.l1_norm() + 1e-12


def test_stiffness_1d():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    a = mo.mollify(mo.identity_graph(1), 1.0)
    J = fem.assemble_jacobian(a, fem.FeFunction.zero(m)).toarray()
    np.testing.assert_allclose(np.diag(J), 8.0)
    np.testing.assert_allclose(np.diag(J, 1), -4.0)
    np.testing.assert_allclose(np.diag(J, -1), -4.0)


def test_residual_zero_cases_and_exact_1d_solution():
    m = fem.generate_mesh(fem.Interval(0, 1), 1 / 64)
    a = mo.mollify(mo.identity_graph(1), 1.0)
    zero = fem.FeFunction.zero(m)
    assert np.all(fem.assemble_residual(a, zero, fem.quadrature_datum(m, 0.0)) == 0)
    datum = fem.quadrature_datum(m, 1.0)
    J = fem.assemble_jacobian(a, zero).tocsc()
    u = fem.FeFunction.from_interior(m, spla.spsolve(J, datum.load_vector()[m.interior]))
    assert np.abs(fem.assemble_residual(a, u, datum)).max() <= 1e-12
    x = m.vertices[:, 0]
    np.testing.assert_allclose(u.values, x * (1 - x) / 2, atol=1e-10)
    assert u.max_abs() == pytest.approx(0.125, abs=1e-10)


def test_load_vector_is_linear_in_datum():
    m = fem.generate_mesh(fem.Disk(), 0.2)
    f1 = fem.quadrature_datum(m, lambda x: x[:, 0] ** 2)
    f2 = fem.quadrature_datum(m, lambda x: np.cos(x[:, 1]))
    f12 = fem.quadrature_datum(m, lambda x: x[:, 0] ** 2 + np.cos(x[:, 1]))
    np.testing.assert_allclose(f12.load_vector(), f1.load_vector() + f2.load_vector(), atol=1e-14)


def test_jacobian_symmetric_for_potential_map():
    m = fem.generate_mesh(fem.Disk(), 0.25)
    a = mo.mollify(mo.power_graph(4, 2), 0.1)
    u = fem.FeFunction.interpolate(m, lambda x: np.sin(2 * x[:, 0]) * (1 - (x**2).sum(1)))
    J = fem.assemble_jacobian(a, u).toarray()
    assert np.abs(J - J.T).max() <= 1e-6 * np.abs(J).max()


@pytest.mark.parametrize("d", [1, 2])
def test_jacobian_consistent_with_residual(d, rng):
    dom = fem.Interval(-1, 1) if d == 1 else fem.Disk()
    m = fem.generate_mesh(dom, 0.25 if d == 2 else 0.1)
    a = mo.mollify(mo.sign_graph(d, plus_identity=True), 0.2)
    datum = fem.quadrature_datum(m, 1.0)
    u = fem.FeFunction.from_interior(m, rng.normal(size=m.interior.size) * 0.3)
    J = fem.assemble_jacobian(a, u)
    v = rng.normal(size=m.interior.size)
    h = 1e-6
    up = fem.FeFunction.from_interior(m, u.interior_values + h * v)
    um = fem.FeFunction.from_interior(m, u.interior_values - h * v)
    fd = (fem.assemble_residual(a, up, datum) - fem.assemble_residual(a, um, datum)) / (2 * h)
    np.testing.assert_allclose(J @ v, fd, atol=2e-2 * np.abs(fd).max())


def test_modular_energy_examples():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.25)
    assert fem.modular_energy(nf.power(2, 1, 1.0), fem.FeFunction.zero(m)) == 0.0
    # a ramp cannot vanish at both ends; use a mesh-free gradient field check instead
    sq = fem.generate_mesh(fem.Rectangle(0, 1, 0, 1), 0.25)
    grads = np.tile([1.0, 0.0], (sq.n_cells, 1))
    assert nf.modular(nf.power(2, 2, 1.0), grads, sq.volumes) == pytest.approx(1.0, abs=1e-12)


def test_modular_energy_hat_function():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.5)
    u = fem.FeFunction(m, np.array([0.0, 0.5, 0.0]))
    # |u'| = 1 on both cells
    assert fem.modular_energy(nf.power(2, 1, 1.0), u) == pytest.approx(1.0, abs=1e-14)


def test_exact_abs_integral_of_sign_changing_p1():
    m = fem.generate_mesh(fem.Interval(0, 1), 0.5)
    u = fem.FeFunction(m, np.array([0.0, 1.0, 0.0]))
    assert u.l1_norm() == pytest.approx(0.5)
    t = fem.generate_mesh(fem.Interval(0, 1), 1 / 3)
    v = fem.FeFunction(t, np.array([0.0, 1.0, -1.0, 0.0]))
    # middle cell crosses zero at its midpoint: area 2 * (1/2 * 1/6 * 1)
    assert v.l1_norm() == pytest.approx(1 / 6 + 1 / 6 + 1 / 6)


def test_discrete_poincare_constant_stable():
    ratios = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        m = fem.generate_mesh(fem.Disk(), h)
        u = fem.FeFunction.interpolate(m, lambda x: (1 - (x**2).sum(1)) * (1 + x[:, 0]))
        grad = float(np.dot(m.volumes, np.linalg.norm(u.gradient(), axis=1)))
        ratios.append(u.l1_norm() / grad)
    assert max(ratios) / min(ratios) < 1.05


def test_singular_datum_quadrature_l1():
    m = fem.generate_mesh(fem.Disk(), 1 / 16)
    q = fem.quadrature_datum(m, lambda x: np.linalg.norm(x, axis=1) ** -1.5, singular_points=[(0.0, 0.0)])
    # int_disk r^-1.5 = 2 pi int_0^1 r^-0.5 dr = 4 pi
    assert q.l1_norm() == pytest.approx(4 * math.pi, rel=0.05)
    assert q.l1_norm(10.0) < q.l1_norm()


def test_linear_solve_matches_direct(rng):
    m = fem.generate_mesh(fem.Disk(), 0.2)
    a = mo.mollify(mo.identity_graph(2), 1.0)
    J = fem.assemble_jacobian(a, fem.FeFunction.zero(m))
    b = rng.normal(size=J.shape[0])
    x = fem.solve_linear(J, b, 2)
    np.testing.assert_allclose(J @ x, b, atol=1e-9 * np.abs(b).max())
