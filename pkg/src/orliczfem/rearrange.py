"""Distribution functions, rearrangements, symmetrals and the L-infinity bound.

The chain for the bound is::

    L  --conjugate-->  L~  --volume-matched radial profile-->  L~o
       --conjugate-->  L<>(s),   Psi<>(s) = L<>(s) / s

and the bound integrates ``Psi<>^{-1}`` against the maximal rearrangement of
the datum. Everything is a pure function of immutable inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .nfunc import NFunction, NFunctionError, ScalarConvexFn, _isotropic, fenchel_conjugate, sample_directions

__all__ = [
    "RearrangementError",
    "RearrangementProfile",
    "rearrangement_profile",
    "ball_volume",
    "SymmetralFn",
    "sublevel_volume",
    "symmetral_circ",
    "symmetral_star",
    "DiamondResult",
    "diamond",
    "w1_check",
    "BoundReport",
    "homogeneous_minorant",
    "linfty_bound",
]


class RearrangementError(ValueError):
    """Invalid input to a rearrangement or symmetral operation."""


def ball_volume(d: int) -> float:
    """Volume of the unit ball in ``R^d``."""
    return math.pi ** (d / 2.0) / math.gamma(1.0 + d / 2.0)


# ---------------------------------------------------------------------------
# rearrangements


@dataclass(frozen=True, eq=False)
class RearrangementProfile:
    """Distribution function and rearrangements of ``|f|``.

    The sampled tables are for export; the ``*_at`` methods evaluate the exact
    step-function objects built from the sorted samples.

    Attributes:
        t_grid: Levels for ``mu``.
        mu: Distribution function ``|{|f| > t}|`` at ``t_grid``.
        s_grid: Abscissae for the rearrangements.
        f_star: Decreasing rearrangement at ``s_grid``.
        f_starstar: Maximal rearrangement (running mean of ``f*``) at ``s_grid``.
        total_measure: ``|Omega|``.
    """

    t_grid: np.ndarray
    mu: np.ndarray
    s_grid: np.ndarray
    f_star: np.ndarray
    f_starstar: np.ndarray
    total_measure: float
    _values: np.ndarray  # |f| sorted decreasingly
    _cum_w: np.ndarray  # cumulative weights in that order
    _cum_int: np.ndarray  # cumulative integrals of f* at _cum_w

    def mu_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        # number of samples with value > t, counted from the top of the decreasing order
        k = np.searchsorted(-self._values, -t, side="left")
        return np.where(k > 0, self._cum_w[np.maximum(k - 1, 0)], 0.0)

    def f_star_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        j = np.searchsorted(self._cum_w, s, side="right")
        return np.where(j < self._values.size, self._values[np.minimum(j, self._values.size - 1)], 0.0)

    def integral_at(self, s) -> np.ndarray:
        """``int_0^s f*``, exact for the step function."""
        s = np.asarray(s, dtype=float)
        cw = np.concatenate([[0.0], self._cum_w])
        ci = np.concatenate([[0.0], self._cum_int])
        j = np.clip(np.searchsorted(cw, s, side="right") - 1, 0, cw.size - 1)
        nxt = np.minimum(j, self._values.size - 1)
        inside = j < self._values.size
        return ci[j] + np.where(inside, (s - cw[j]) * self._values[nxt], 0.0)

    def f_starstar_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        top = self._values[0] if self._values.size else 0.0
        with np.errstate(all="ignore"):
            return np.where(s > 0, self.integral_at(s) / np.where(s > 0, s, 1.0), top)

    def l1_norm(self) -> float:
        return float(self._cum_int[-1]) if self._cum_int.size else 0.0


def _s_grid(total: float, size: int) -> np.ndarray:
    """Geometric near 0, uniform elsewhere."""
    n_geo = size // 2
    geo = total * np.geomspace(1e-12, 0.01, n_geo, endpoint=False)
    uni = np.linspace(0.01 * total, total, size - n_geo)
    return np.concatenate([[0.0], geo, uni])


def rearrangement_profile(values, weights, grid_sizes: tuple[int, int] = (512, 512), total_measure: float | None = None) -> RearrangementProfile:
    """Rearrangements of a sampled field.

    Args:
        values: Field samples (signs are ignored).
        weights: Nonnegative quadrature weights, summing to ``|Omega|``.
        grid_sizes: Sizes of the exported ``t`` and ``s`` grids.
        total_measure: ``|Omega|``; checked against the weight sum when given.

    Raises:
        RearrangementError: on empty input or invalid weights.
    """
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if a.size == 0:
        raise RearrangementError("empty field")
    if a.shape != w.shape:
        raise RearrangementError("values and weights differ in length")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(a)):
        raise RearrangementError("weights must be finite and nonnegative, values finite")
    total = float(w.sum())
    if total_measure is not None:
        if abs(total - total_measure) > 1e-8 * max(1.0, total_measure):
            raise RearrangementError(f"weights sum to {total}, expected {total_measure}")
        total = float(total_measure)
    order = np.argsort(-a, kind="stable")
    a, w = a[order], w[order]
    cw = np.cumsum(w)
    ci = np.cumsum(a * w)
    nt, ns = grid_sizes
    top = a[0]
    t_grid = np.linspace(0.0, top, nt) if top > 0 else np.zeros(1)
    s_grid = _s_grid(total, ns)
    prof = RearrangementProfile(t_grid, np.empty(0), s_grid, np.empty(0), np.empty(0), total, a, cw, ci)
    object.__setattr__(prof, "mu", prof.mu_at(t_grid))
    object.__setattr__(prof, "f_star", prof.f_star_at(s_grid))
    object.__setattr__(prof, "f_starstar", prof.f_starstar_at(s_grid))
    return prof


# ---------------------------------------------------------------------------
# symmetrals


@dataclass(frozen=True)
class SymmetralFn:
    """A one-dimensional function produced by a symmetral pipeline.

    Attributes:
        fn: Piecewise-linear representation.
        kind: ``"circ"``, ``"star"``, ``"diamond"`` or ``"psi"``.
    """

    fn: ScalarConvexFn
    kind: str

    def __call__(self, s):
        return self.fn(s)

    def inverse(self, t):
        return self.fn.inverse(t)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.fn.breakpoints

    @property
    def values(self) -> np.ndarray:
        return self.fn.values


def _ray_radii(L: NFunction, t: np.ndarray, dirs: np.ndarray, iters: int = 200) -> np.ndarray:
    """Radius ``rho`` with ``L(rho theta) = t`` for every level and direction, shape ``(nt, ndir)``."""
    nt, nd = t.size, dirs.shape[0]
    tt = np.repeat(t, nd)
    th = np.tile(dirs, (nt, 1))

    def ev(rho):
        return np.asarray(L(None, rho[:, None] * th), dtype=float)

    hi = np.ones(tt.size)
    for _ in range(400):
        small = ev(hi) <= tt
        if not np.any(small):
            break
        hi = np.where(small, 2.0 * hi, hi)
    else:
        raise RearrangementError("sublevel set appears unbounded")
    lo = np.zeros_like(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = ev(mid) <= tt
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return (0.5 * (lo + hi)).reshape(nt, nd)


def _radial_volume(L: NFunction, t: np.ndarray, direction_count: int) -> np.ndarray:
    d = L.dimension
    if L.isotropic or d == 1:
        dirs = sample_directions(d, 1)[:1] if d > 1 else np.array([[1.0], [-1.0]])
        rho = _ray_radii(L, t, dirs)
        return ball_volume(d) * rho.mean(axis=1) ** d if d > 1 else rho.sum(axis=1)
    dirs = sample_directions(d, direction_count)
    rho = _ray_radii(L, t, dirs)
    # periodic trapezoid in 2-D, equal-area lattice in 3-D
    area = 2.0 * math.pi if d == 2 else 4.0 * math.pi
    return area * np.mean(rho**d, axis=1) / d


def _grid_volume(L: NFunction, t: float, radius: float, base: int, passes: int = 2, refine: int = 4, final_samples: int = 4) -> float:
    d = L.dimension
    h = 2.0 * radius / base
    axes = np.meshgrid(*([np.arange(base)] * d), indexing="ij")
    lower = -radius + h * np.stack([a.ravel() for a in axes], axis=1).astype(float)
    offs = np.stack(np.meshgrid(*([np.array([0.0, 1.0])] * d), indexing="ij"), axis=-1).reshape(-1, d)
    sub = np.stack(np.meshgrid(*([np.arange(refine)] * d), indexing="ij"), axis=-1).reshape(-1, d).astype(float)
    mids = (np.stack(np.meshgrid(*([np.arange(final_samples)] * d), indexing="ij"), axis=-1).reshape(-1, d) + 0.5) / final_samples
    vol = 0.0
    for level in range(passes + 1):
        pts = (lower[:, None, :] + h * offs[None, :, :]).reshape(-1, d)
        vals = np.asarray(L(None, pts), dtype=float).reshape(lower.shape[0], offs.shape[0])
        inside = np.all(vals <= t, axis=1)
        outside = np.all(vals > t, axis=1)
        vol += inside.sum() * h**d
        mixed = lower[~inside & ~outside]
        if level == passes:
            if mixed.size:
                q = (mixed[:, None, :] + h * mids[None, :, :]).reshape(-1, d)
                frac = np.mean(np.asarray(L(None, q), dtype=float).reshape(mixed.shape[0], -1) <= t, axis=1)
                vol += frac.sum() * h**d
            break
        h /= refine
        lower = (mixed[:, None, :] + h * sub[None, :, :]).reshape(-1, d)
    return vol


def sublevel_volume(L: NFunction, t_grid, method: str = "grid", budget: int = 64, direction_count: int = 256) -> np.ndarray:
    """``|{xi : L(xi) <= t}|`` for every ``t`` in ``t_grid``.

    Args:
        L: Homogeneous N-function.
        t_grid: Nonnegative levels.
        method: ``"grid"`` counts cells of an adaptive grid (two refinement
            passes around the level set); ``"radial"`` integrates
            ``rho(theta)^d / d`` over sampled directions, exact for isotropic ``L``.
        budget: Base cells per axis of the grid method.
        direction_count: Directions of the radial method (and of the box size search).
    """
    if not L.homogeneous:
        raise RearrangementError("symmetrals need a homogeneous (x-independent) N-function")
    t = np.asarray(t_grid, dtype=float).ravel()
    if np.any(t < 0):
        raise RearrangementError("levels must be nonnegative")
    if method == "radial" or L.dimension == 1:
        V = _radial_volume(L, t, direction_count)
    elif method == "grid":
        if L.dimension > 3:
            raise RearrangementError("grid volumes limited to d <= 3")
        dirs = sample_directions(L.dimension, 64 if L.dimension == 2 else 200)
        R = 1.05 * _ray_radii(L, t, dirs).max(axis=1)
        V = np.array([_grid_volume(L, ti, Ri, budget) if ti > 0 else 0.0 for ti, Ri in zip(t, R)])
    else:
        raise RearrangementError(f"unknown method {method!r}")
    if not np.all(np.isfinite(V)):
        raise RearrangementError("non-finite sublevel volume")
    return V


def default_level_grid() -> np.ndarray:
    return np.geomspace(1e-8, 1e8, 481)


def symmetral_circ(L: NFunction, t_grid=None, budget: int = 64, method: str = "grid") -> SymmetralFn:
    """Radially increasing profile with the same sublevel volumes as ``L``.

    ``L_circ(r) = t`` where ``omega_d r^d = |{L <= t}|``.
    """
    t = default_level_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    t = np.unique(t[t > 0])
    V = sublevel_volume(L, t, method=method, budget=budget)
    r = (V / ball_volume(L.dimension)) ** (1.0 / L.dimension)
    r = np.maximum.accumulate(r)
    keep = np.concatenate([[True], np.diff(r) > 1e-14 * r[1:]])
    r, t = r[keep], t[keep]
    fn = ScalarConvexFn.piecewise_linear(np.concatenate([[0.0], r]), np.concatenate([[0.0], t]), tag="circ")
    return SymmetralFn(fn, "circ")


def conjugate_nfunction(L: NFunction) -> NFunction:
    """The complementary function as an :class:`NFunction` (homogeneous ``L`` only)."""
    if not L.homogeneous:
        raise RearrangementError("conjugation pipeline needs a homogeneous N-function")
    d = L.dimension
    if L.conjugate_profile is not None:
        cp = L.conjugate_profile
        return _isotropic(lambda x, s: cp(None, s), d, family="conjugate", name=f"conj({L.name})")
    if L.profile is not None:
        s = np.concatenate([[0.0], np.geomspace(1e-8, 1e8, 4001)])
        pl = ScalarConvexFn.piecewise_linear(s, L.profile(None, s)).conjugate()
        return _isotropic(lambda x, sig: pl(sig), d, family="conjugate", name=f"conj({L.name})")

    def evaluate(x, eta):
        return fenchel_conjugate(L, None, eta)

    return NFunction(dimension=d, evaluate=evaluate, family="conjugate", name=f"conj({L.name})")


def symmetral_star(L: NFunction, t_grid=None, method: str = "radial", budget: int = 64) -> SymmetralFn:
    """Volume-matched radial profile of the complementary function of ``L``."""
    circ = symmetral_circ(conjugate_nfunction(L), t_grid, budget=budget, method=method)
    return SymmetralFn(circ.fn, "star")


@dataclass(frozen=True)
class DiamondResult:
    """``L<>`` and ``Psi<>(s) = L<>(s)/s`` as piecewise-linear functions."""

    L_diamond: SymmetralFn
    psi: SymmetralFn

    def psi_inverse(self, t):
        return self.psi.inverse(t)


def _golden_argmax(f, a, b, iters=80):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(iters):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = f(c) > f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    m = 0.5 * (a + b)
    return m, f(m)


def diamond(
    L: NFunction,
    s_grid=None,
    level_grid=None,
    method: str = "radial",
    budget: int = 64,
) -> DiamondResult:
    """Conjugate, volume-match, conjugate again.

    ``L<>(s) = sup_t (s r(t) - t)`` where ``r(t)`` is the radius of the ball
    with the volume of ``{L~ <= t}``. The supremum is taken on a dense level
    grid (with ``log r`` interpolated monotonically in ``log t``) and refined by
    golden-section search.

    Args:
        L: Homogeneous N-function.
        s_grid: Abscissae of the result; default 6001 log-spaced points in
            ``[1e-6, 1e6]`` with 0 prepended.
        level_grid: Levels ``t`` for the volume computation.
        method: Sublevel volume method of the conjugate.
        budget: Grid budget for ``method="grid"``.
    """
    d = L.dimension
    Lc = conjugate_nfunction(L)
    t = np.geomspace(1e-24, 1e24, 961) if level_grid is None else np.asarray(level_grid, dtype=float)
    V = sublevel_volume(Lc, t, method=method, budget=budget)
    r = (V / ball_volume(d)) ** (1.0 / d)
    ok = r > 0
    lt, lr = np.log(t[ok]), np.log(np.maximum.accumulate(r[ok]))
    keep = np.concatenate([[True], np.diff(lr) > 0])
    lt, lr = lt[keep], lr[keep]
    interp = PchipInterpolator(lt, lr, extrapolate=True)
    s = np.geomspace(1e-6, 1e6, 6001) if s_grid is None else np.asarray(s_grid, dtype=float)
    s = s[s > 0]

    def gain(logt, sv=s):
        return sv * np.exp(interp(logt)) - np.exp(logt)

    coarse = s[:, None] * np.exp(lr)[None, :] - np.exp(lt)[None, :]
    k = np.argmax(coarse, axis=1)
    a = lt[np.maximum(k - 1, 0)]
    b = lt[np.minimum(k + 1, lt.size - 1)]
    _, best = _golden_argmax(gain, a, b)
    vals = np.maximum(np.maximum(best, coarse.max(axis=1)), 0.0)
    bp = np.concatenate([[0.0], s])
    Ld = ScalarConvexFn.piecewise_linear(bp, np.concatenate([[0.0], vals]), tag="diamond")
    psi_vals = np.concatenate([[0.0], vals / s])
    psi_vals = np.maximum.accumulate(psi_vals)
    psi = ScalarConvexFn.piecewise_linear(bp, psi_vals, tag="psi")
    return DiamondResult(SymmetralFn(Ld, "diamond"), SymmetralFn(psi, "psi"))


# ---------------------------------------------------------------------------
# bound


def _maximal(profile) -> tuple[Callable, float]:
    if isinstance(profile, RearrangementProfile):
        return profile.f_starstar_at, profile.total_measure
    fn, total = profile
    return fn, float(total)


def _w1_integrand(dm: DiamondResult, fss, lam, c_A, d):
    c = lam / (c_A * d * ball_volume(d) ** (1.0 / d))

    def g(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            return s ** (1.0 / d - 1.0) * dm.psi_inverse(c * s ** (1.0 / d) * fss(s))

    return g


def w1_check(dm: DiamondResult, profile, lam: float, c_A: float, d: int) -> tuple[bool, float, float]:
    """Integrability test of the datum against ``Psi<>^{-1}``.

    Evaluates ``int_0^|Omega| s^{1/d-1} Psi^{-1}(lam / (c_A d omega^{1/d}) s^{1/d} f**(s)) ds``.
    Finiteness is a heuristic: the log-log slope of the integrand over
    ``s in [1e-10, 1e-6] |Omega|`` must exceed ``-1``.

    Args:
        dm: Output of :func:`diamond` for the homogeneous minorant.
        profile: A :class:`RearrangementProfile`, or a pair ``(f**, |Omega|)``
            with ``f**`` a vectorized callable.
        lam: Constant ``> 1``.
        c_A: Coercivity constant.
        d: Dimension, at least 2.

    Returns:
        ``(finite, value, fitted_exponent)``; ``value`` is ``inf`` when not finite.
    """
    if d < 2:
        raise RearrangementError("the bound is restricted to d >= 2")
    if not lam > 1.0:
        raise RearrangementError("lambda must exceed 1")
    fss, total = _maximal(profile)
    g = _w1_integrand(dm, fss, lam, c_A, d)
    probe = total * np.geomspace(1e-10, 1e-6, 9)
    gv = g(probe)
    if np.all(gv == 0):
        exponent = math.inf
    else:
        if np.any(gv <= 0) or not np.all(np.isfinite(gv)):
            return False, math.inf, -math.inf
        exponent = float(np.polyfit(np.log(probe), np.log(gv), 1)[0])
    if exponent <= -1.0 + 1e-3:
        return False, math.inf, exponent
    # r = |Omega| u^d removes the endpoint singularity: r^{1/d-1} dr = d |Omega|^{1/d} du
    scale = d * total ** (1.0 / d)

    def h(u):
        r = total * u**d
        return float(scale * dm.psi_inverse(lam / (c_A * d * ball_volume(d) ** (1.0 / d)) * r ** (1.0 / d) * fss(np.array(r))))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(h, 0.0, 1.0, limit=400, epsabs=1e-13, epsrel=1e-10)
    return True, float(val), exponent


@dataclass(frozen=True)
class BoundReport:
    """Terms of the L-infinity bound."""

    first_term: float
    second_term: float
    total: float
    lam: float
    c_A: float
    m_sup: float
    finite: bool
    exponent: float


def homogeneous_minorant(M: NFunction) -> NFunction:
    """``M`` itself when homogeneous, else an isotropic minorant from the stability envelopes."""
    if M.homogeneous:
        return M
    m1, _ = M.envelopes()
    conj = m1.conjugate()
    return _isotropic(lambda x, s: m1(s), M.dimension, family="minorant", conjugate_profile=lambda x, s: conj(s), name=f"m1({M.name})")


def linfty_bound(
    M: NFunction,
    profile,
    c_A: float,
    m_sup: float,
    lam: float | None = None,
    d: int | None = None,
    omega: float | None = None,
    dm: DiamondResult | None = None,
) -> BoundReport:
    """Bound on ``sup |u|`` from the growth function and the datum's rearrangement.

    ``(M1)<>^{-1}(lam m_sup / (c_A (lam - 1))) (|Omega|/omega)^{1/d}`` plus
    ``1/(d omega^{1/d})`` times the integral of :func:`w1_check`.

    Args:
        M: Growth function; its homogeneous minorant drives the bound.
        profile: Datum rearrangement (see :func:`w1_check`).
        c_A: Coercivity constant.
        m_sup: Supremum of the coercivity defect ``m``.
        lam: Constant ``> 1``; default 1.0001 when ``m_sup = 0`` else 2.
        d: Dimension (default ``M.dimension``), at least 2.
        omega: Unit-ball volume (default from ``d``).
        dm: Precomputed :func:`diamond` output of the minorant.

    Raises:
        RearrangementError: when ``d < 2`` or the integrability test fails.
    """
    d = M.dimension if d is None else int(d)
    if d < 2:
        raise RearrangementError("the bound is restricted to d >= 2; in one dimension W^{1,1} embeds in L-infinity")
    if m_sup < 0:
        raise RearrangementError("m_sup must be nonnegative")
    lam = (1.0001 if m_sup == 0 else 2.0) if lam is None else float(lam)
    omega = ball_volume(d) if omega is None else float(omega)
    if dm is None:
        dm = diamond(homogeneous_minorant(M))
    fss, total = _maximal(profile)
    finite, integral, exponent = w1_check(dm, profile, lam, c_A, d)
    if not finite:
        raise RearrangementError(f"integrability test failed (fitted exponent {exponent:.4g} <= -1)")
    first = 0.0
    if m_sup > 0:
        first = float(dm.L_diamond.inverse(lam * m_sup / (c_A * (lam - 1.0)))) * (total / omega) ** (1.0 / d)
    second = integral / (d * omega ** (1.0 / d))
    return BoundReport(first, second, first + second, lam, c_A, m_sup, True, exponent)
