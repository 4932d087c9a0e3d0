import math

import numpy as np
import pytest

from orliczfem import fem
from orliczfem import monotone as mo
from orliczfem import nfunc as nf
from orliczfem import solver as so


def witness(d, p=2.0, m=0.0):
    return mo.CoercivityWitness(1.0, nf.power(p, d, 1 / p), m)


def identity(d):
    return mo.identity_graph(d, witness=witness(d))


def plap(d=1):
    return mo.power_graph(3, d, witness=witness(d, 3.0))


@pytest.fixture(scope="module")
def torsion_1d():
    spec = so.ProblemSpec(fem.Interval(0, 1), identity(1), 1.0, h=1 / 64, eps_schedule=(1.0, 0.5))
    return so.continuation(spec)


@pytest.fixture(scope="module")
def torsion_2d():
    spec = so.ProblemSpec(fem.Disk(), identity(2), 1.0, h=1 / 16)
    return so.continuation(spec)


@pytest.fixture(scope="module")
def plap_1d():
    spec = so.ProblemSpec(fem.Interval(-1, 1), plap(), 1.0, h=1 / 256, eps_schedule=(0.1, 0.03, 0.01, 0.003, 0.001))
    return so.continuation(spec)


def test_torsion_1d_nodally_exact(torsion_1d):
    x = torsion_1d.spec.mesh.vertices[:, 0]
    np.testing.assert_allclose(torsion_1d.u.values, x * (1 - x) / 2, atol=1e-10)
    assert torsion_1d.u.max_abs() == pytest.approx(0.125, abs=1e-10)


def test_bounded_datum_gives_zero_cauchy_distances(torsion_2d):
    assert all(c["l1"] == 0.0 for c in torsion_2d.cauchy)
    assert torsion_2d.cauchy_decreasing()


def test_plaplace_exact_solution(plap_1d):
    x = plap_1d.spec.mesh.vertices[:, 0]
    exact = (2 / 3) * (1 - np.abs(x) ** 1.5)
    assert np.abs(plap_1d.u.values - exact).max() <= 1e-3


def test_energy_decreases_along_newton(plap_1d):
    for rec in plap_1d.records:
        e = np.asarray(rec.stats.energy_history)
        assert np.all(np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1])))
        assert rec.stats.residual <= plap_1d.spec.newton_tol or rec.stats.floor_limited


def test_zero_datum_zero_solution():
    spec = so.ProblemSpec(fem.Interval(-1, 1), plap(), 0.0, h=1 / 32, eps_schedule=(0.1,))
    rep = so.continuation(spec)
    assert len(rep.records) == 1
    assert rep.u.max_abs() == 0.0
    est = so.energy_estimates(rep)
    assert est.max_C == 0.0 and est.variation == 0.0


def test_schedule_validation():
    with pytest.raises(so.ProblemError):
        so.ProblemSpec(fem.Interval(0, 1), identity(1), eps_schedule=(0.1, 0.2))
    with pytest.raises(so.ProblemError):
        so.ProblemSpec(fem.Interval(0, 1), mo.identity_graph(1))
    with pytest.raises(so.ProblemError):
        so.ProblemSpec(fem.Disk(), identity(1))


def test_failed_coercivity_needs_force():
    G = mo.identity_graph(1, scale=2.0, witness=witness(1))
    with pytest.raises(so.ProblemError):
        so.ProblemSpec(fem.Interval(0, 1), G)
    spec = so.ProblemSpec(fem.Interval(0, 1), G, force=True)
    assert not spec.a3_report.passed


def test_energy_saturates_for_bounded_solution(torsion_1d):
    rec = torsion_1d.final
    ks = sorted(rec.energies)
    big = [rec.energies[k] for k in ks if k >= 0.125]
    assert np.allclose(big, big[0], rtol=1e-12)
    assert all(rec.radiation[k] == 0.0 for k in ks if k >= 0.125)


def test_energy_constant_under_doubling():
    # saturated energies scale like |f|^2 while the right side scales like |f|
    base = so.ProblemSpec(fem.Interval(0, 1), identity(1), 1.0, h=1 / 64, eps_schedule=(0.1, 0.01))
    c1 = so.energy_estimates(so.continuation(base)).max_C
    c2 = so.energy_estimates(so.continuation(base.replace(datum=2.0))).max_C
    assert c2 == pytest.approx(2 * c1, rel=1e-12)
    base = so.ProblemSpec(fem.Interval(-1, 1), plap(), 1.0, h=1 / 64, eps_schedule=(0.1, 0.01))
    for f in (1.0, 2.0):
        est = so.energy_estimates(so.continuation(base.replace(datum=f)))
        assert math.isfinite(est.max_C) and not est.violations and est.variation < 0.2


def test_radiation_dominated(plap_1d):
    rt = so.controlled_radiation(plap_1d)
    assert rt.dominated and rt.nonincreasing


def test_renormalized_residual_examples(torsion_1d):
    assert so.renormalized_residual(torsion_1d, 1.0, torsion_1d.u) <= 1e-8
    zero = fem.FeFunction.zero(torsion_1d.spec.mesh)
    assert so.renormalized_residual(torsion_1d, 1.0, zero) == 0.0


def test_monotonicity_gap(torsion_2d, plap_1d, rng):
    assert so.monotonicity_gap(torsion_2d, rng.normal(size=(20, 2))) >= 0.0
    assert so.monotonicity_gap(plap_1d, rng.normal(size=(20, 1))) >= -1e-10


def test_strict_monotonicity_check():
    assert so.check_strict_monotone(mo.sign_graph(1, plus_identity=True))
    assert not so.check_strict_monotone(mo.sign_graph(1))


def test_uniqueness_crosscheck_identity_and_plaplace():
    spec = so.ProblemSpec(fem.Interval(0, 1), identity(1), 1.0, h=1 / 64, eps_schedule=(1.0,))
    dist, _, _ = so.uniqueness_crosscheck(spec, {"quad_order": 10}, {"quad_order": 6})
    assert dist <= 1e-14
    spec = so.ProblemSpec(fem.Interval(-1, 1), plap(), 1.0, h=1 / 128, eps_schedule=(1.0, 0.1, 0.01))
    dist, _, _ = so.uniqueness_crosscheck(spec, {"schedule": (0.5, 0.05, 0.01)})
    assert dist <= 1e-6
    # different final widths leave a mollification gap of the order of the width change
    dist, _, _ = so.uniqueness_crosscheck(spec, {"schedule": (0.5, 0.05, 0.005)})
    assert dist <= 1e-4


def test_bound_comparison_torsion(torsion_2d):
    bc = so.bound_comparison(torsion_2d)
    assert bc.u_max == pytest.approx(0.25, abs=0.01)
    assert bc.bound == pytest.approx(0.5, rel=0.02)
    assert bc.margin >= 0 and bc.passed


def test_bound_comparison_scaling(torsion_2d):
    rep2 = so.continuation(torsion_2d.spec.replace(datum=2.0))
    b1, b2 = so.bound_comparison(torsion_2d), so.bound_comparison(rep2)
    assert b2.u_max == pytest.approx(2 * b1.u_max, rel=1e-9)
    assert b2.report.second_term == pytest.approx(2 * b1.report.second_term, rel=1e-3)
    assert b2.margin >= 0


def test_bound_comparison_zero_and_1d(torsion_1d):
    rep = so.continuation(so.ProblemSpec(fem.Disk(), identity(2), 0.0, h=1 / 8, eps_schedule=(0.1,)))
    bc = so.bound_comparison(rep)
    assert (bc.u_max, bc.bound, bc.margin) == (0.0, 0.0, 0.0)
    assert so.bound_comparison(torsion_1d) is None


def test_singular_datum_cauchy_differences_decrease():
    spec = so.ProblemSpec(
        fem.Disk(),
        identity(2),
        lambda x: np.linalg.norm(x, axis=1) ** -1.5,
        h=1 / 16,
        eps_schedule=(1.0, 0.1, 0.01, 0.001),
        singular_points=((0.0, 0.0),),
    )
    rep = so.continuation(spec)
    l1 = [c["l1"] for c in rep.cauchy]
    assert all(b < a for a, b in zip(l1, l1[1:]))


def test_runs_are_bitwise_reproducible():
    spec = so.ProblemSpec(fem.Disk(), mo.sign_graph(2, plus_identity=True, witness=witness(2, m=0.5)), 4.0, h=1 / 12, eps_schedule=(0.1, 0.01))
    a, b = so.continuation(spec), so.continuation(spec.replace())
    assert np.array_equal(a.u.values, b.u.values)
    assert np.array_equal(a.alpha, b.alpha)
