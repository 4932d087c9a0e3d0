import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczfem import nfunc as nf
from orliczfem import rearrange as ra


def test_ball_volume():
    assert ra.ball_volume(1) == pytest.approx(2.0)
    assert ra.ball_volume(2) == pytest.approx(math.pi)
    assert ra.ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_step_function_closed_forms():
    prof = ra.rearrangement_profile([1.0, 0.0], [0.5, 0.5])
    t = np.array([0.0, 0.5, 0.99, 1.0, 3.0])
    np.testing.assert_array_equal(prof.mu_at(t), [0.5, 0.5, 0.5, 0.0, 0.0])
    s = np.array([0.1, 0.49, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(prof.f_star_at(s), [1, 1, 0, 0, 0])
    np.testing.assert_allclose(prof.f_starstar_at(s), [1, 1, 1, 1 / 1.5, 0.5], rtol=1e-15)


def test_constant_field():
    prof = ra.rearrangement_profile(np.full(7, -2.5), np.full(7, 1 / 7))
    s = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(prof.f_star_at(s), 2.5)
    np.testing.assert_allclose(prof.f_starstar_at(s), 2.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(1e-3, 5)), min_size=1, max_size=40))
def test_equimeasurable(cells):
    v = np.array([c[0] for c in cells])
    w = np.array([c[1] for c in cells])
    prof = ra.rearrangement_profile(v, w)
    assert prof.l1_norm() == pytest.approx(float(np.dot(np.abs(v), w)), rel=1e-10, abs=1e-12)
    assert prof.total_measure == pytest.approx(w.sum())
    assert np.all(np.diff(prof.f_star) <= 1e-12)
    assert np.all(prof.f_starstar >= prof.f_star - 1e-9)


def test_symmetral_circ_isotropic_and_ellipse():
    r = np.array([0.5, 1.0, 2.0])
    circ = ra.symmetral_circ(nf.power(2, 2, 1.0))
    np.testing.assert_allclose(circ(r), r**2, rtol=1e-3)
    M = nf.custom(lambda x, xi: xi[:, 0] ** 2 + 4 * xi[:, 1] ** 2, 2, homogeneous=True)
    circ = ra.symmetral_circ(M)
    np.testing.assert_allclose(circ(r), 2 * r**2, rtol=1e-3)
    assert np.all(np.diff(circ.values) >= 0)


def test_diamond_quadratic_chain():
    dm = ra.diamond(nf.power(2, 2, 0.5))
    s = np.array([0.5, 1.0, 2.0, 5.0])
    np.testing.assert_allclose(dm.L_diamond(s), s**2 / 2, rtol=1e-4)
    np.testing.assert_allclose(dm.psi(s), s / 2, rtol=1e-4)
    np.testing.assert_allclose(dm.psi_inverse(np.array([0.25, 1.0])), [0.5, 2.0], rtol=1e-4)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_diamond_power(p):
    dm = ra.diamond(nf.power(p, 2, 1 / p))
    s = np.geomspace(0.1, 10, 15)
    np.testing.assert_allclose(dm.L_diamond(s), s**p / p, rtol=1e-4)
    s = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(dm.psi_inverse(dm.psi(s)), s, rtol=1e-8)
    assert np.all(np.diff(dm.psi(np.linspace(0.1, 5, 50))) > 0)


def test_w1_check_examples():
    dm = ra.diamond(nf.power(2, 2, 0.5))
    finite, value, _ = ra.w1_check(dm, ra.rearrangement_profile([0.0], [math.pi]), 1.0001, 1.0, 2)
    assert finite and value == 0.0
    finite, _, _ = ra.w1_check(dm, (lambda s: 1.0 / s, math.pi), 1.0001, 1.0, 2)
    assert not finite


def test_linfty_bound_torsion_and_zero():
    M = nf.power(2, 2, 0.5)
    br = ra.linfty_bound(M, ra.rearrangement_profile([1.0], [math.pi]), 1.0, 0.0)
    assert br.total == pytest.approx(0.5, rel=2e-3)
    assert br.first_term == 0.0
    br = ra.linfty_bound(M, ra.rearrangement_profile([0.0], [math.pi]), 1.0, 0.0)
    assert br.total == 0.0


def test_linfty_bound_increases_with_m_sup():
    M = nf.power(2, 2, 0.5)
    prof = ra.rearrangement_profile([0.0], [math.pi])
    vals = [ra.linfty_bound(M, prof, 1.0, m, lam=2.0).total for m in (0.5, 1.0, 2.0)]
    assert vals[0] > 0 and np.all(np.diff(vals) > 0)
    # quadratic chain: (M1)<>^{-1}(t) = sqrt(2t), |Omega| = omega
    assert vals[0] == pytest.approx(math.sqrt(2 * 2 * 0.5), rel=1e-3)


def test_linfty_bound_refuses_one_dimension():
    with pytest.raises(ra.RearrangementError, match="d >= 2"):
        ra.linfty_bound(nf.power(2, 1), ra.rearrangement_profile([1.0], [2.0]), 1.0, 0.0)
