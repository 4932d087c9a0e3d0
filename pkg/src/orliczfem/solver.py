"""Epsilon-continuation for -div A(x, grad u) = f with zero boundary values.

For each width ``eps`` in a decreasing schedule the graph is replaced by its
mollification ``a_eps`` and the datum by its truncation at level ``1/eps``.
The discrete problems are solved by damped Newton with warm starts. The
report carries the diagnostics that the a priori estimates make checkable:
truncated energies, band fluxes, renormalized residuals, monotonicity gaps,
uniqueness cross-checks and the L-infinity bound comparison.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import fem
from .fem import FeFunction, Mesh, QuadratureDatum
from .monotone import MollifiedMap, MonotoneGraph, check_A3, mollify
from .nfunc import NFunction, fenchel_conjugate
from .rearrange import BoundReport, RearrangementError, linfty_bound, rearrangement_profile

__all__ = [
    "DEFAULT_SCHEDULE",
    "ProblemError",
    "SolverError",
    "NewtonStagnation",
    "ProblemSpec",
    "SolveStats",
    "EpsRecord",
    "SolveReport",
    "solve_regularized",
    "continuation",
    "EnergyEstimate",
    "energy_estimates",
    "RadiationTable",
    "controlled_radiation",
    "hat",
    "renormalized_residual",
    "monotonicity_gap",
    "uniqueness_crosscheck",
    "BoundComparison",
    "bound_comparison",
]

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)
DEFAULT_LEVELS = (0.5, 1.0, 2.0, 4.0, 8.0)


class ProblemError(ValueError):
    """Invalid problem specification."""


class SolverError(RuntimeError):
    """Failure of a regularized solve; ``eps`` identifies the failing width."""

    def __init__(self, message: str, eps: float | None = None):
        super().__init__(message if eps is None else f"eps={eps:g}: {message}")
        self.eps = eps


class NewtonStagnation(SolverError):
    """Neither Newton nor the fallback iteration reached the tolerance."""


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A Dirichlet problem with a monotone graph and its regularization data.

    Attributes:
        domain: Interval, rectangle or disk descriptor.
        graph: Monotone graph carrying a coercivity witness ``(c_A, M, m)``.
        datum: ``f`` as a callable on points, a constant or an :class:`FeFunction`.
        h: Mesh resolution.
        eps_schedule: Strictly decreasing widths.
        newton_tol: Residual max-norm tolerance; default 1e-10 (1-D) or 1e-8 (2-D).
        max_newton: Newton step cap per width.
        levels: Truncation levels for the diagnostics.
        singular_points: Points where ``f`` blows up (refined load quadrature).
        quad_order: Mollifier Gauss order.
        panels: Mollifier panels (scheme default when None).
        width_override: Fixed mollification width, decoupled from the truncation level.
        force: Accept a failed coercivity check (recorded in ``a3_report``).
        seed: Seed of the sampled checks.
    """

    domain: object
    graph: MonotoneGraph
    datum: object = 1.0
    h: float = 1.0 / 32
    eps_schedule: tuple = DEFAULT_SCHEDULE
    newton_tol: float | None = None
    max_newton: int = 50
    levels: tuple = DEFAULT_LEVELS
    singular_points: tuple = ()
    quad_order: int = 8
    panels: int | None = None
    width_override: float | None = None
    force: bool = False
    seed: int = 42
    check_samples: int = 300

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eps_schedule)
        if not sched:
            raise ProblemError("empty eps schedule")
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ProblemError("eps schedule must be positive and strictly decreasing")
        object.__setattr__(self, "eps_schedule", sched)
        object.__setattr__(self, "levels", tuple(float(k) for k in self.levels))
        if self.graph.dimension != self.domain.dimension:
            raise ProblemError("graph dimension does not match the domain")
        if self.graph.witness is None:
            raise ProblemError("graph needs a coercivity witness (c_A, M, m)")
        if self.newton_tol is None:
            object.__setattr__(self, "newton_tol", 1e-10 if self.domain.dimension == 1 else 1e-8)
        report = check_A3(self.graph, sample_count=self.check_samples, seed=self.seed, x_samples=self._x_samples())
        object.__setattr__(self, "a3_report", report)
        if not report.passed and not self.force:
            raise ProblemError(f"coercivity check failed (worst margin {report.worst_margin:.3g})")

    def _x_samples(self):
        if self.graph.homogeneous and self.growth.homogeneous and not callable(self.witness.m):
            return None
        return self.mesh.centroids

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def witness(self):
        return self.graph.witness

    @property
    def growth(self) -> NFunction:
        return self.graph.witness.M

    @property
    def c_A(self) -> float:
        return self.graph.witness.c_A

    @cached_property
    def mesh(self) -> Mesh:
        return fem.generate_mesh(self.domain, self.h)

    @cached_property
    def quadrature(self) -> QuadratureDatum:
        return fem.quadrature_datum(self.mesh, self.datum, self.singular_points)

    @cached_property
    def m_cells(self) -> np.ndarray:
        """``m`` at cell centroids."""
        return self.witness.m_at(self.mesh.centroids, self.mesh.n_cells)

    def m_l1(self) -> float:
        return float(np.dot(self.mesh.volumes, self.m_cells))

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


@dataclass
class SolveStats:
    """Per-width solver statistics."""

    eps: float
    newton_steps: int = 0
    fallback_steps: int = 0
    residual: float = math.inf
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    floor_limited: bool = False


def _mollifier(spec: ProblemSpec, eps: float, quad_order=None, width=None) -> MollifiedMap:
    w = width if width is not None else (spec.width_override or eps)
    return mollify(spec.graph, w, quad_order or spec.quad_order, panels=spec.panels)


class _PotentialEnergy:
    """Discrete energy ``sum vol j_eps(grad u) - int T f u`` for potential graphs."""

    def __init__(self, spec, a_eps, level):
        self.ok = hasattr(spec.graph, "potential")
        if not self.ok:
            return
        probe = MollifiedMap(spec.graph, a_eps.eps, 8, panels=2, scheme="tensor")
        self.lam, self.kw = probe._lam, probe._kw
        self.eps = a_eps.eps
        self.spec = spec
        self.load = spec.quadrature.load_vector(level)

    def __call__(self, u: FeFunction) -> float:
        mesh = u.mesh
        g = u.gradient()
        n, d = g.shape
        z = (g[:, None, :] - self.eps * self.lam[None, :, :]).reshape(-1, d)
        x = None if self.spec.graph.homogeneous else np.repeat(mesh.centroids, self.lam.shape[0], axis=0)
        j = np.asarray(self.spec.graph.potential(x, z), dtype=float).reshape(n, -1) @ self.kw
        return float(np.dot(mesh.volumes, j) - np.dot(self.load, u.values))


def solve_regularized(
    spec: ProblemSpec,
    eps: float,
    warm_start: FeFunction | None = None,
    *,
    quad_order: int | None = None,
    width: float | None = None,
    track_energy: bool = False,
) -> tuple[FeFunction, SolveStats, np.ndarray]:
    """Solve the problem with graph width ``eps`` and datum truncated at ``1/eps``.

    Damped Newton with Armijo halving on the residual 2-norm, at most
    ``spec.max_newton`` steps. On stagnation a chord iteration (Jacobian frozen
    at the stagnation point, halving line search) runs for up to 200 steps.

    Returns:
        ``(u_eps, stats, flux)`` with the cellwise flux ``a_eps(x_c, grad u_eps)``.

    Raises:
        NewtonStagnation: when the tolerance is not reached.
        SolverError: on linear-solver breakdown.
    """
    mesh = spec.mesh
    datum = spec.quadrature
    level = 1.0 / eps
    a = _mollifier(spec, eps, quad_order, width)
    energy = _PotentialEnergy(spec, a, level) if track_energy else None
    u = warm_start if warm_start is not None else FeFunction.zero(mesh)
    if u.mesh is not mesh:
        raise SolverError("warm start lives on another mesh", eps)
    stats = SolveStats(eps=eps)
    tol = spec.newton_tol
    dim = mesh.dimension

    # spline and linear maps carry exact Jacobians; otherwise the kernel-derivative
    # Jacobian is used far from the root and central differences near it
    exact = a.tabulate or a.base.linear_scale is not None
    switch = not exact and dim > 1

    def system(u, rnorm):
        fd = None if exact or (switch and rnorm > 1e4 * tol) else 1e-4 * a.eps
        return fem.assemble_system(a, u, datum, level, fd)

    r, J, flux = system(u, math.inf)
    if switch and _maxnorm(r) <= 1e4 * tol:
        r, J, flux = system(u, 0.0)
    stats.residual_history.append(_maxnorm(r))
    if energy is not None and energy.ok:
        stats.energy_history.append(energy(u))

    def armijo(u, r, delta, max_halvings=30):
        n0 = np.linalg.norm(r)
        step = 1.0
        for _ in range(max_halvings):
            trial = FeFunction.from_interior(mesh, u.interior_values + step * delta)
            rt = fem.assemble_residual(a, trial, datum, level)
            if np.linalg.norm(rt) <= (1.0 - 1e-4 * step) * n0:
                return trial
            step *= 0.5
        return None

    def energy_search(u, r, delta, max_iter=40):
        # r is the gradient of a convex energy E; g(t) = dE/dt along delta is nondecreasing
        def g(t):
            trial = FeFunction.from_interior(mesh, u.interior_values + t * delta)
            return float(np.dot(fem.assemble_residual(a, trial, datum, level), delta)), trial

        g0 = float(np.dot(r, delta))
        if not g0 < 0:
            return None
        g1, trial = g(1.0)
        if g1 <= 0.1 * abs(g0):
            return trial
        lo, glo, hi, ghi = 0.0, g0, 1.0, g1
        for _ in range(max_iter):
            t = lo + (hi - lo) * glo / (glo - ghi)
            t = min(max(t, lo + 0.01 * (hi - lo)), hi - 0.01 * (hi - lo))
            gt, trial = g(t)
            if abs(gt) <= 0.1 * abs(g0):
                return trial
            if gt < 0:
                lo, glo = t, gt
            else:
                hi, ghi = t, gt
        return trial if gt < 0 else None

    def line_search(u, r, delta, J, max_halvings=30):
        if _symmetric(J):
            trial = energy_search(u, r, delta)
            if trial is not None:
                return trial
        return armijo(u, r, delta, max_halvings)

    def noise_floor(u, J):
        # rounding of nodal values, amplified by the Jacobian, bounds attainable residuals
        rows = np.asarray(abs(J).sum(axis=1)).ravel()
        return 4.0 * np.finfo(float).eps * max(u.max_abs(), 1.0) * float(rows.max(initial=0.0))

    stalled = False
    while _maxnorm(r) > tol:
        if stats.newton_steps >= spec.max_newton:
            stalled = True
            break
        try:
            delta = fem.solve_linear(J, -r, dim)
        except fem.LinearSolveError as err:
            raise SolverError(f"linear solve failed: {err}", eps) from err
        trial = line_search(u, r, delta, J)
        if trial is None:
            log.debug("eps=%g: line search failed at residual %.3g", eps, _maxnorm(r))
            stalled = True
            break
        log.debug("eps=%g: step %d, residual %.3g, step length %.3g", eps, stats.newton_steps, _maxnorm(r),
                  float(np.max(np.abs(trial.interior_values - u.interior_values))) / max(float(np.max(np.abs(delta))), 1e-300))
        u = trial
        stats.newton_steps += 1
        rn = _maxnorm(fem.assemble_residual(a, u, datum, level)) if switch else 0.0
        r, J, flux = system(u, rn)
        stats.residual_history.append(_maxnorm(r))
        if energy is not None and energy.ok:
            stats.energy_history.append(energy(u))
        prev, cur = stats.residual_history[-2:]
        if tol < cur <= noise_floor(u, J) and cur > 0.5 * prev:
            stalled = True
            break

    if stalled and _maxnorm(r) <= noise_floor(u, J):
        stalled = False
        stats.floor_limited = True
        log.warning("eps=%g: residual %.3g limited by rounding (tolerance %g)", eps, _maxnorm(r), tol)
    if stalled:
        J0 = J
        for _ in range(200):
            if _maxnorm(r) <= tol:
                break
            try:
                delta = fem.solve_linear(J0, -r, dim)
            except fem.LinearSolveError as err:
                raise SolverError(f"linear solve failed: {err}", eps) from err
            trial = line_search(u, r, delta, J0, max_halvings=40)
            if trial is None:
                break
            u = trial
            stats.fallback_steps += 1
            r, _, flux = fem.assemble_system(a, u, datum, level)
            stats.residual_history.append(_maxnorm(r))
        if tol < _maxnorm(r) <= noise_floor(u, J0):
            stats.floor_limited = True
            log.warning("eps=%g: residual %.3g limited by rounding (tolerance %g)", eps, _maxnorm(r), tol)
        elif _maxnorm(r) > tol:
            raise NewtonStagnation(f"residual {_maxnorm(r):.3g} above tolerance {tol:g}; insert intermediate widths", eps)
    stats.residual = _maxnorm(r)
    if flux is None:
        flux = a(fem._flux_x(a, mesh), u.gradient())
    return u, stats, flux


def _symmetric(J, tol: float = 1e-6) -> bool:
    if J.nnz == 0:
        return True
    return abs(J - J.T).max() <= tol * abs(J).max()


def _maxnorm(r) -> float:
    return float(np.max(np.abs(r))) if np.size(r) else 0.0


# ---------------------------------------------------------------------------
# continuation


@dataclass
class EpsRecord:
    """Everything recorded for one width."""

    eps: float
    u: FeFunction
    flux: np.ndarray
    stats: SolveStats
    energies: dict
    conjugate_energies: dict
    radiation: dict
    radiation_majorant: dict


@dataclass
class SolveReport:
    """Output of :func:`continuation`.

    Attributes:
        spec: The problem.
        records: One :class:`EpsRecord` per width, in schedule order.
        cauchy: Per consecutive pair: L1 distance and ``|{|u_j+1 - u_j| > delta}|``.
        membership_residual: Distance of the final ``(grad u, alpha)`` pairs to the graph.
        quad_order: Mollifier order used.
    """

    spec: ProblemSpec
    records: list
    cauchy: list
    membership_residual: float
    quad_order: int
    deltas: tuple = (1e-2, 1e-3)

    @property
    def final(self) -> EpsRecord:
        return self.records[-1]

    @property
    def u(self) -> FeFunction:
        return self.final.u

    @property
    def alpha(self) -> np.ndarray:
        return self.final.flux

    @property
    def width(self) -> float:
        return self.spec.width_override or self.final.eps

    def cauchy_decreasing(self) -> bool:
        """Whether the measure of large increments decreases along the schedule for every delta."""
        ok = True
        for k, _ in enumerate(self.deltas):
            seq = [c["measure"][k] for c in self.cauchy]
            ok &= all(b <= a + 1e-14 for a, b in zip(seq, seq[1:]))
        return bool(ok)


def _band_mask(u: FeFunction, k: float) -> np.ndarray:
    c = np.abs(u.centroid_values())
    return (c > k) & (c < k + 1.0)


def _record(spec: ProblemSpec, eps: float, u: FeFunction, flux: np.ndarray, stats: SolveStats, quad_order=None) -> EpsRecord:
    mesh = spec.mesh
    M = spec.growth
    a = _mollifier(spec, eps, quad_order)
    energies, conj, rad, maj = {}, {}, {}, {}
    cells_abs_f = spec.quadrature.cell_integrals(None)
    xc = None if M.homogeneous else mesh.centroids
    uc = np.abs(u.centroid_values())
    for k in spec.levels:
        tk = fem.truncate(u, k)
        energies[k] = fem.modular_energy(M, tk)
        fk = a(fem._flux_x(a, mesh), tk.gradient())
        conj[k] = float(np.dot(mesh.volumes, fenchel_conjugate(M, xc, fk)))
        band = _band_mask(u, k)
        rad[k] = float(np.dot(mesh.volumes[band], np.einsum("cd,cd->c", flux[band], u.gradient()[band])))
        maj[k] = float(cells_abs_f[uc >= k].sum() + np.dot(mesh.volumes[band], spec.m_cells[band]))
    return EpsRecord(eps, u, flux, stats, energies, conj, rad, maj)


def membership_residual(G: MonotoneGraph, x, xi, alpha) -> float:
    """Largest Minty-coordinate distance of ``(xi, alpha)`` to the graph.

    ``nu = xi + alpha`` is resolved onto the graph; the distance between
    ``xi`` and the resolvent is zero exactly when ``alpha`` lies in ``A(x, xi)``.
    """
    nu = xi + alpha
    z = G.resolve(x, nu)
    return float(np.max(np.linalg.norm(np.asarray(z).reshape(xi.shape) - xi, axis=1), initial=0.0))


def continuation(
    spec: ProblemSpec,
    schedule: Sequence[float] | None = None,
    *,
    quad_order: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> SolveReport:
    """Solve along the width schedule with warm starts and record the diagnostics.

    Raises:
        SolverError: with ``eps`` set to the failing width.
    """
    sched = spec.eps_schedule if schedule is None else tuple(float(e) for e in schedule)
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ProblemError("eps schedule must be nonempty, positive and strictly decreasing")
    records = []
    u = None
    for eps in sched:
        u, stats, flux = solve_regularized(spec, eps, u, quad_order=quad_order)
        if progress:
            progress(f"eps={eps:g}: {stats.newton_steps} Newton + {stats.fallback_steps} fallback steps, residual {stats.residual:.3g}")
        records.append(_record(spec, eps, u, flux, stats, quad_order))
    cauchy = []
    deltas = (1e-2, 1e-3)
    for prev, cur in zip(records, records[1:]):
        diff = cur.u - prev.u
        dc = np.abs(diff.centroid_values())
        cauchy.append(
            {
                "eps": (prev.eps, cur.eps),
                "l1": diff.l1_norm(),
                "measure": [float(spec.mesh.volumes[dc > dl].sum()) for dl in deltas],
            }
        )
    final = records[-1]
    x = None if spec.graph.homogeneous else spec.mesh.centroids
    memb = membership_residual(spec.graph, x, final.u.gradient(), final.flux)
    return SolveReport(spec, records, cauchy, memb, quad_order or spec.quad_order, deltas)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class EnergyEstimate:
    """Smallest constants in ``E_k <= C (|m|_1 + k |f|_1)``.

    Attributes:
        per_eps: ``eps -> C`` for the modular energy.
        conjugate_per_eps: ``eps -> C`` for the conjugate modular of the flux.
        per_eps_truncated: ``eps -> C`` with ``|T_{1/eps} f|_1`` in place of ``|f|_1``.
        max_C: Largest constant over the widths.
        variation: ``(max - min) / max`` of ``per_eps``.
        violations: ``(eps, k)`` pairs where an entry was negative.
    """

    per_eps: dict
    conjugate_per_eps: dict
    per_eps_truncated: dict
    max_C: float
    variation: float
    violations: list


def energy_estimates(report: SolveReport, M: NFunction | None = None, witness=None, eps_subset: Sequence[float] | None = None) -> EnergyEstimate:
    """Fit the energy constant for every width (``eps_subset`` restricts the widths)."""
    spec = report.spec
    w = witness or spec.witness
    m1 = spec.m_l1() if witness is None else float(np.dot(spec.mesh.volumes, w.m_at(spec.mesh.centroids, spec.mesh.n_cells)))
    f1 = spec.quadrature.l1_norm(None)
    per, conj, trunc, bad = {}, {}, {}, []
    for rec in report.records:
        if eps_subset is not None and not any(math.isclose(rec.eps, e) for e in eps_subset):
            continue
        ft = spec.quadrature.l1_norm(1.0 / rec.eps)
        e = rec.energies if M is None else {k: fem.modular_energy(M, fem.truncate(rec.u, k)) for k in rec.energies}
        cs, cc, ct = [0.0], [0.0], [0.0]
        for k, val in e.items():
            if val < 0 or rec.conjugate_energies[k] < 0:
                bad.append((rec.eps, k))
            denom = m1 + k * f1
            dt = m1 + k * ft
            if denom > 0:
                cs.append(val / denom)
                cc.append(rec.conjugate_energies[k] / denom)
            if dt > 0:
                ct.append(val / dt)
        per[rec.eps], conj[rec.eps], trunc[rec.eps] = max(cs), max(cc), max(ct)
    vals = np.array(list(per.values()))
    mx = float(vals.max()) if vals.size else 0.0
    var = float((vals.max() - vals.min()) / mx) if mx > 0 else 0.0
    return EnergyEstimate(per, conj, trunc, mx, var, bad)


@dataclass
class RadiationTable:
    """Band fluxes ``gamma(k)`` of the final width and their majorants."""

    levels: tuple
    gamma: dict
    majorant: dict
    vacuous: bool
    nonincreasing: bool
    decay_ratio: float
    dominated: bool


def controlled_radiation(report: SolveReport, wiggle: float = 0.10) -> RadiationTable:
    """``gamma(k) = sum over cells with k < |u(x_c)| < k+1 of vol a_eps . grad u``."""
    rec = report.final
    ks = tuple(sorted(rec.radiation))
    g = [rec.radiation[k] for k in ks]
    vacuous = all(v == 0.0 for v in g)
    noninc = all(b <= (1.0 + wiggle) * a + 1e-300 for a, b in zip(g, g[1:]))
    ratio = (g[-1] / g[0]) if g and g[0] > 0 else (0.0 if vacuous else math.inf)
    dom = all(rec.radiation[k] <= rec.radiation_majorant[k] * (1.0 + 1e-12) + 1e-14 for k in ks)
    if vacuous:
        log.info("all level bands are empty: the solution is bounded below the smallest level")
    return RadiationTable(ks, dict(rec.radiation), dict(rec.radiation_majorant), vacuous, noninc, ratio, dom)


def hat(s, l: float) -> np.ndarray:
    """``h_l(s)``: 1 on ``|s| <= l``, linear down to 0 at ``|s| = l + 1``."""
    return np.clip(l + 1.0 - np.abs(np.asarray(s, dtype=float)), 0.0, 1.0)


def renormalized_residual(report: SolveReport, l: float, w: FeFunction) -> float:
    """``|int alpha . grad(h_l(u) w) - int T f h_l(u) w|`` with nodal interpolation of ``h_l(u) w``."""
    u = report.u
    if w.mesh is not u.mesh:
        raise fem.MeshError("mesh mismatch")
    v = FeFunction(u.mesh, hat(u.values, l) * w.values)
    mesh = u.mesh
    lhs = float(np.dot(mesh.volumes, np.einsum("cd,cd->c", report.alpha, v.gradient())))
    rhs = float(np.dot(report.spec.quadrature.load_vector(1.0 / report.final.eps), v.values))
    return abs(lhs - rhs)


def monotonicity_gap(report: SolveReport, probes, use_mollified: bool = False, scaled: bool = True) -> float:
    """Minimum over probes and cells of ``(alpha - a(x_c, xi)) . (grad u - xi)``.

    With ``scaled`` each cell value is divided by ``(|alpha| + |a|)(|grad u| + |xi|)``
    (floored at 1), so the result compares with a relative tolerance.
    """
    spec = report.spec
    mesh = spec.mesh
    g = report.u.gradient()
    al = report.alpha
    x = None if spec.graph.homogeneous else mesh.centroids
    a_sel = _mollifier(spec, report.final.eps, report.quad_order) if use_mollified else None
    worst = math.inf
    for xi in np.atleast_2d(np.asarray(probes, dtype=float)):
        xib = np.broadcast_to(xi, g.shape)
        a = a_sel(x, xib) if a_sel is not None else spec.graph.select(x, np.ascontiguousarray(xib))
        val = np.einsum("cd,cd->c", al - a, g - xib)
        if scaled:
            sc = (np.linalg.norm(al, axis=1) + np.linalg.norm(a, axis=1)) * (np.linalg.norm(g, axis=1) + np.linalg.norm(xib, axis=1))
            val = val / np.maximum(sc, 1.0)
        worst = min(worst, float(val.min(initial=math.inf)))
    return worst


def check_strict_monotone(G: MonotoneGraph, count: int = 500, seed: int = 42, x_samples=None) -> bool:
    """Sampled ``(g - h) . (xi - zeta) > 0`` for distinct pairs."""
    rng = np.random.default_rng(seed)
    d = G.dimension
    a = rng.normal(size=(count, d)) * np.exp(rng.uniform(-3, 3, (count, 1)))
    b = rng.normal(size=(count, d)) * np.exp(rng.uniform(-3, 3, (count, 1)))
    xs = None if x_samples is None else np.atleast_2d(x_samples)[rng.integers(0, len(x_samples), count)]
    return bool(np.all(np.einsum("ij,ij->i", G.select(xs, a) - G.select(xs, b), a - b) > 0))


def uniqueness_crosscheck(
    spec: ProblemSpec,
    variant: dict,
    base: dict | None = None,
    parallel: bool = True,
) -> tuple[float, SolveReport, SolveReport]:
    """L1 distance between the limit candidates of two continuation variants.

    Args:
        spec: The problem (graph declared strictly monotone).
        variant: ``{"schedule": [...], "quad_order": q}``, either key optional.
        base: Same keys for the reference run (defaults from ``spec``).
        parallel: Run both variants concurrently.

    Raises:
        ProblemError: when the graph is not strictly monotone or the variants coincide.
    """
    base = dict(base or {})
    if not spec.graph.strictly_monotone:
        raise ProblemError("uniqueness needs a graph declared strictly monotone")
    x = None if spec.graph.homogeneous else spec.mesh.centroids
    if not check_strict_monotone(spec.graph, seed=spec.seed, x_samples=x):
        raise ProblemError("sampled strict monotonicity check failed")
    cfg1 = {"schedule": tuple(base.get("schedule", spec.eps_schedule)), "quad_order": base.get("quad_order", spec.quad_order)}
    cfg2 = {"schedule": tuple(variant.get("schedule", cfg1["schedule"])), "quad_order": variant.get("quad_order", cfg1["quad_order"])}
    if cfg1 == cfg2:
        raise ProblemError("variant is identical to the base run")
    spec.mesh, spec.quadrature  # build shared immutable inputs before fanning out

    def run(cfg):
        return continuation(spec, cfg["schedule"], quad_order=cfg["quad_order"])

    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            r1, r2 = pool.map(run, [cfg1, cfg2])
    else:
        r1, r2 = run(cfg1), run(cfg2)
    return (r1.u - r2.u).l1_norm(), r1, r2


@dataclass
class BoundComparison:
    """``u_max`` of the limit candidate against the L-infinity bound."""

    u_max: float
    bound: float
    margin: float
    report: BoundReport | None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.margin >= 0 or not math.isfinite(self.bound)


def datum_profile(spec: ProblemSpec):
    """Rearrangement of the untruncated datum from the load quadrature points."""
    q = spec.quadrature
    return rearrangement_profile(q.values, q.weights)


def bound_comparison(report: SolveReport, lam: float | None = None) -> BoundComparison | None:
    """Compare ``max |u|`` with the bound; None in one dimension."""
    spec = report.spec
    if spec.dimension < 2:
        log.info("bound comparison skipped: one-dimensional domain")
        return None
    u_max = report.u.max_abs()
    w = spec.witness
    m_sup = w.m_sup if w.m_sup is not None else float(np.max(spec.m_cells, initial=0.0))
    try:
        br = linfty_bound(spec.growth, datum_profile(spec), w.c_A, m_sup, lam=lam, d=spec.dimension)
    except RearrangementError as err:
        return BoundComparison(u_max, math.inf, math.inf, None, note=f"vacuous: {err}")
    return BoundComparison(u_max, br.total, br.total - u_max, br)
