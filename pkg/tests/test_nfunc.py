import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczfem import nfunc as nf


def test_quadratic_is_self_conjugate():
    M = nf.power(2, 2, 0.5)
    assert nf.fenchel_conjugate(M, None, np.array([1.0, 0.0])) == pytest.approx(0.5, abs=1e-12)


def test_cubic_conjugate_closed_and_numeric():
    M = nf.power(3, 1, 1 / 3)
    expected = 8**1.5 * 2 / 3
    assert nf.fenchel_conjugate(M, None, 8.0) == pytest.approx(expected, rel=1e-12)
    assert nf.fenchel_conjugate(M, None, 8.0, method="numeric") == pytest.approx(expected, rel=1e-6)


def test_llogl_conjugate_vanishes_at_zero():
    M = nf.llogl(1)
    assert nf.fenchel_conjugate(M, None, 0.0, method="numeric") == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_radial_numeric_conjugate_2d(p):
    M = nf.power(p, 2, 1 / p)
    q = p / (p - 1)
    eta = np.array([[0.3, 0.4], [2.0, -1.0], [0.0, 7.0]])
    got = nf.fenchel_conjugate(M, None, eta, method="numeric")
    r = np.linalg.norm(eta, axis=1)
    np.testing.assert_allclose(got, r**q / q, rtol=1e-5)


def test_anisotropic_numeric_conjugate_matches_sum_of_conjugates():
    M = nf.anisotropic_sum([(1.0, 2.0), (1.0, 4.0)])
    eta = np.array([[1.0, 2.0]])
    # (c s^p)~ (t) = (p-1)/p * t^(p/(p-1)) / (c p)^(1/(p-1))
    exp = 0.25 * 1.0**2 + 0.75 * 2.0 ** (4 / 3) / 4 ** (1 / 3)
    assert nf.fenchel_conjugate(M, None, eta, method="numeric")[0] == pytest.approx(exp, rel=1e-4)


def test_convex_minorant_examples():
    s = np.arange(0, 3.01, 0.5)
    g = nf.greatest_convex_minorant(s, s**2)
    np.testing.assert_allclose(g(s), s**2, atol=1e-14)
    g = nf.greatest_convex_minorant([0, 1, 2, 3], [0, 2, 1, 3])
    assert g(1.0) == pytest.approx(0.5)
    np.testing.assert_allclose(g(np.array([0.0, 2.0, 3.0])), [0, 1, 3])
    s = np.arange(0, 2.01, 0.25)
    g = nf.greatest_convex_minorant(s, np.minimum(s**2, s))
    assert g(1.0) <= 1.0
    assert g.is_convex()
    assert np.all(g(s) <= np.minimum(s**2, s) + 1e-14)


def test_stability_bounds_isotropic_power():
    grid = np.linspace(0, 4, 9)
    m1, m2 = nf.stability_bounds(nf.power(3, 2), grid)
    np.testing.assert_allclose(m1(grid), grid**3, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(m2(grid), grid**3, rtol=1e-9, atol=1e-12)


def test_stability_bounds_double_phase():
    M = nf.double_phase(2, 4, lambda x: np.clip(x[:, 0], 0, 1), 1)
    xs = np.linspace(0, 1, 11).reshape(-1, 1)
    grid = np.linspace(0, 2, 9)
    m1, m2 = nf.stability_bounds(M, grid, xs)
    np.testing.assert_allclose(m1(grid), grid**2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(m2(grid), grid**2 + grid**4, rtol=1e-9, atol=1e-12)


def test_stability_bounds_anisotropic_sandwich(rng):
    M = nf.anisotropic_sum([(1.0, 2.0), (1.0, 4.0)])
    grid = np.linspace(0, 3, 61)
    m1, m2 = nf.stability_bounds(M, grid, direction_count=128)
    # the sandwich holds at the grid radii; in between m1 is a chord
    th = rng.uniform(0, 2 * np.pi, 1000)
    r = rng.choice(grid, 1000)
    xi = r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
    vals = M(None, xi)
    assert np.all(m1(r) <= vals + 1e-9)
    np.testing.assert_array_less(vals, m2(r) * (1 + 1e-2) + 1e-3)


def test_delta2_examples():
    ok, c = nf.delta2_check(nf.ScalarConvexFn.from_closed(lambda s: s**3, "s^3"), 50)
    assert ok and c == pytest.approx(8.0, rel=1e-9)
    ok, _ = nf.delta2_check(nf.ScalarConvexFn.from_closed(lambda s: s * np.expm1(s), "s(e^s-1)"), 20)
    assert not ok
    ok, c = nf.delta2_check(nf.ScalarConvexFn.from_closed(lambda s: s * np.log1p(s), "s ln(1+s)"), 100)
    assert ok and c <= 4


def test_modular_examples():
    M = nf.power(2, 2)
    assert nf.modular(M, np.zeros((4, 2)), np.full(4, 0.5)) == 0.0
    assert nf.modular(M, np.tile([1.0, 0.0], (4, 1)), np.full(4, 0.5)) == pytest.approx(2.0)
    n = 2000
    x = (np.arange(n) + 0.5) / n
    assert nf.modular(nf.power(2, 1), x, np.full(n, 1 / n)) == pytest.approx(1 / 3, abs=1e-6)


def test_luxemburg_examples():
    M = nf.power(2, 1)
    w = np.full(10, 0.1)
    assert nf.luxemburg_norm(M, np.zeros(10), w) == 0.0
    assert nf.luxemburg_norm(M, np.full(10, -3.0), w) == pytest.approx(3.0, rel=1e-9)
    v = np.linspace(-1, 2, 10)
    assert nf.luxemburg_norm(M, 2 * v, w) == pytest.approx(2 * nf.luxemburg_norm(M, v, w), rel=1e-8)


def test_bad_parameters_raise():
    with pytest.raises(nf.NFunctionError):
        nf.power(1.0)
    with pytest.raises(nf.NFunctionError):
        nf.modular(nf.power(2), np.ones(3), np.ones(2))


@pytest.mark.parametrize(
    "M",
    [nf.power(2.5, 2), nf.llogl(1), nf.exponential(1), nf.anisotropic_sum([(1, 2), (2, 3)])],
    ids=lambda M: M.name,
)
def test_family_invariants(M):
    assert nf.check_invariants(M) == []


@settings(max_examples=50, deadline=None)
@given(
    st.floats(1.2, 4.0),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_fenchel_young(p, xi, eta):
    M = nf.power(p, 1, 1 / p)
    lhs = abs(xi * eta)
    rhs = float(M(None, xi)) + float(nf.fenchel_conjugate(M, None, eta))
    assert lhs <= rhs + 1e-8


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=3, max_size=12))
def test_scalar_biconjugate_is_convex_minorant(vals):
    s = np.linspace(0, 3, len(vals))
    v = np.concatenate([[0.0], np.maximum.accumulate(np.asarray(vals[1:]))])
    g = nf.greatest_convex_minorant(s, v)
    gg = g.conjugate().conjugate()
    np.testing.assert_allclose(gg(s), g(s), atol=1e-8 * (1 + max(vals)))
    assert np.all(g(s) <= v + 1e-12)
