import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczfem import monotone as mo
from orliczfem import nfunc as nf


def quad_witness(d=1, m=0.0):
    return mo.CoercivityWitness(1.0, nf.power(2, d, 0.5), m)


def flat(v):
    return np.asarray(v, dtype=float).ravel()


def test_selection_examples():
    assert np.allclose(mo.selection(mo.identity_graph(2), None, np.array([2.0, -1.0])), [2.0, -1.0])
    assert flat(mo.selection(mo.sign_graph(1), None, 0.0)) == pytest.approx([0.0])
    assert flat(mo.selection(mo.power_graph(3, 1), None, 2.0)) == pytest.approx([4.0])


def test_minty_identity_rotates_to_zero(rng):
    nu = rng.normal(size=(50, 2))
    np.testing.assert_allclose(mo.minty_transform(mo.identity_graph(2), None, nu), 0.0, atol=1e-12)


def test_minty_sign_piecewise_formula():
    nu = np.linspace(-4, 4, 101)
    mu = flat(mo.minty_transform(mo.sign_graph(1), None, nu))
    exp = np.where(nu > 1, 2 - nu, np.where(nu < -1, -2 - nu, nu))
    np.testing.assert_allclose(mu, exp, atol=1e-10)
    assert flat(mo.minty_transform(mo.sign_graph(1), None, 3.0)) == pytest.approx([-1.0])


@pytest.mark.parametrize("G", [mo.identity_graph(1), mo.abs_graph(1), mo.power_graph(3, 1), mo.sign_graph(1, plus_identity=True)], ids=lambda g: g.name)
def test_minty_is_one_lipschitz(G, rng):
    a = rng.normal(scale=3, size=1000)
    b = rng.normal(scale=3, size=1000)
    ma, mb = flat(mo.minty_transform(G, None, a)), flat(mo.minty_transform(G, None, b))
    assert np.all(np.abs(ma - mb) <= np.abs(a - b) * (1 + 1e-9) + 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_resolvent_pair_lies_on_graph(nu1, nu2):
    G = mo.abs_plus_identity_graph(2)
    nu = np.array([nu1, nu2])
    mu, xi, eta = mo.minty_transform(G, None, nu, return_pair=True)
    np.testing.assert_allclose(xi + eta, nu, atol=1e-9)
    assert bool(np.all(G.contains(None, np.atleast_2d(xi), np.atleast_2d(eta))))


def test_check_monotone_detects_decreasing_map():
    G = mo.SingleValuedGraph(lambda x, xi: -xi, 1)
    assert mo.check_monotone(G) < 0
    assert mo.check_monotone(mo.sign_graph(1)) >= -1e-12


def test_curve_graph_midpoint_and_contains():
    G = mo.CurveGraph([(0.0, -1.0, 1.0)], 1, policy="midpoint")
    assert flat(G.select(None, np.array([[0.0]]))) == pytest.approx([0.0])
    assert bool(G.contains(None, np.array([[0.0]]), np.array([[0.7]]))[0])
    assert not bool(G.contains(None, np.array([[0.0]]), np.array([[1.3]]))[0])


def test_mollify_identity_exact(rng):
    xi = rng.normal(size=(40, 2)) * 3
    a = mo.mollify(mo.identity_graph(2), 0.3)
    np.testing.assert_allclose(a(None, xi), xi, atol=1e-13)


def test_mollify_sign_basic_properties():
    a = mo.mollify(mo.sign_graph(1), 0.1)
    assert flat(a(None, np.array([0.0]))) == pytest.approx([0.0], abs=1e-14)
    xi = np.linspace(-0.3, 0.3, 601)
    v = flat(a(None, xi))
    assert np.all(np.abs(v) <= 1 + 1e-14)
    assert np.all(np.diff(v) >= -1e-14)


def _riemann_sign(xi, eps, n=10_000):
    lam = -eps + (np.arange(n) + 0.5) * (2 * eps / n)
    w = mo.bump((lam / eps) ** 2)
    return float(np.sum(w * np.sign(xi - lam)) / np.sum(w))


@pytest.mark.parametrize("tabulate", [False, True])
def test_mollify_sign_matches_riemann_oracle(tabulate):
    a = mo.mollify(mo.sign_graph(1), 0.1, tabulate=tabulate)
    got = float(flat(a(None, np.array([0.05])))[0])
    assert 0 < got < 1
    assert got == pytest.approx(_riemann_sign(0.05, 0.1), abs=1e-6)


@pytest.mark.parametrize("d", [1, 2])
def test_tabulated_matches_direct(d, rng):
    G = mo.sign_graph(d, plus_identity=True)
    xi = rng.normal(size=(300, d)) * rng.choice([0.01, 0.1, 1.0, 30.0], size=(300, 1))
    tab = mo.mollify(G, 0.01, tabulate=True)
    direct = mo.mollify(G, 0.01, tabulate=False)
    assert tab.tabulate and not direct.tabulate
    v1, J1 = tab.value_and_jacobian(None, xi)
    v2, J2 = direct.value_and_jacobian(None, xi)
    np.testing.assert_allclose(v1, v2, atol=1e-6)
    # the interpolant's slope is a limited Hermite derivative, not the kernel derivative
    np.testing.assert_allclose(J1, J2, atol=1e-2 * np.abs(J2).max())


def test_mollified_jacobian_symmetric_for_potential():
    a = mo.mollify(mo.power_graph(4, 2), 0.1)
    J = a.jacobian(None, np.array([[0.3, -0.7], [1.2, 0.4]]))
    np.testing.assert_allclose(J, np.swapaxes(J, 1, 2), atol=1e-6 * np.abs(J).max())


def test_mollified_map_monotone_on_pairs(rng):
    a = mo.mollify(mo.sign_graph(2), 0.05)
    x1, x2 = rng.normal(size=(500, 2)), rng.normal(size=(500, 2))
    prod = np.einsum("nd,nd->n", a(None, x1) - a(None, x2), x1 - x2)
    assert prod.min() >= -1e-12


def test_check_A3_examples():
    rep = mo.check_A3(mo.identity_graph(1, witness=quad_witness()))
    assert rep.passed and abs(rep.worst_margin) < 1e-8
    w = mo.CoercivityWitness(1.0, nf.power(2, 1, 0.5), 0.0)
    rep = mo.check_A3(mo.identity_graph(1, scale=2.0, witness=w))
    assert not rep.passed and rep.worst_margin < 0
    w = mo.CoercivityWitness(1.0, nf.power(2, 1, 1.0), 0.0)
    assert mo.check_A3(mo.identity_graph(1, scale=2.0, witness=w)).passed


def test_witness_validation():
    with pytest.raises(mo.GraphError):
        mo.CoercivityWitness(1.5, nf.power(2), 0.0)


def test_growth_bound(rng):
    G = mo.identity_graph(1, witness=quad_witness())
    assert mo.growth_bound(G, None, 0.0) >= 0
    assert mo.growth_bound(G, None, 1.0) >= 1.0
    G = mo.power_graph(3, 2, witness=mo.CoercivityWitness(1.0, nf.power(3, 2, 1 / 3), 0.0))
    xi = rng.normal(size=(1000, 2))
    eta = np.linalg.norm(mo.selection(G, None, xi), axis=1)
    assert np.all(eta <= mo.growth_bound(G, None, xi) * (1 + 1e-9))


def test_epsilon_estimate_margin_bounded_sign_graph():
    w = mo.CoercivityWitness(1.0, nf.power(2, 1, 0.5), 50.5)
    a = mo.mollify(mo.sign_graph(1, witness=w), 0.01)
    assert mo.epsilon_estimate_margin(a, xi_range=(1e-3, 10.0)) >= -1e-8
