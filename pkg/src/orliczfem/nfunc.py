"""N-function calculus: evaluation, Fenchel conjugates, convex envelopes and modulars.

An :class:`NFunction` evaluates ``M(x, xi)`` on batches: ``x`` has shape ``(n, dx)``
(or is ``None`` for x-independent functions) and ``xi`` has shape ``(n, d)``.
One-dimensional growth functions (the envelopes ``m1``, ``m2``, symmetrals) are
:class:`ScalarConvexFn` objects, either closed-form or piecewise linear.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "NFunction",
    "ScalarConvexFn",
    "SearchRadiusError",
    "NFunctionError",
    "power",
    "variable_exponent",
    "double_phase",
    "llogl",
    "exponential",
    "anisotropic_sum",
    "custom",
    "fenchel_conjugate",
    "scalar_conjugate",
    "greatest_convex_minorant",
    "stability_bounds",
    "delta2_check",
    "modular",
    "luxemburg_norm",
    "check_invariants",
    "sample_directions",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NFunctionError(ValueError):
    """Invalid N-function input or failed numeric operation."""


class SearchRadiusError(NFunctionError):
    """The conjugate maximizer touched the boundary of the search region."""


def _batch(xi, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xi, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        return arr, True
    if arr.ndim == 1:
        if d == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != d:
            raise NFunctionError(f"expected a vector of length {d}, got {arr.shape[0]}")
        return arr.reshape(1, d), True
    if arr.shape[1] != d:
        raise NFunctionError(f"expected shape (n, {d}), got {arr.shape}")
    return arr, False


def _x_batch(x, n: int) -> np.ndarray | None:
    if x is None:
        return None
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.shape[0] == 1 and n != 1:
        arr = np.repeat(arr, n, axis=0)
    if arr.shape[0] != n:
        raise NFunctionError(f"x has {arr.shape[0]} rows, expected {n}")
    return arr


def _col(c, s: np.ndarray):
    """Broadcast a per-row coefficient against ``s`` of shape (n,) or (n, k)."""
    c = np.asarray(c, dtype=float)
    if c.ndim == 1 and s.ndim == 2:
        return c[:, None]
    return c


# ---------------------------------------------------------------------------
# scalar functions


@dataclass(frozen=True, eq=False)
class ScalarConvexFn:
    """A nondecreasing convex function on ``[0, inf)`` vanishing at 0.

    Either ``closed`` is a vectorized callable, or ``breakpoints``/``values``
    give a piecewise-linear interpolant whose last piece is extended linearly.

    Attributes:
        breakpoints: Strictly increasing abscissae starting at 0.
        values: Function values at the breakpoints.
        closed: Closed-form evaluator, used instead of the samples when set.
        tag: Provenance or closed-form description.
    """

    breakpoints: np.ndarray | None = None
    values: np.ndarray | None = None
    closed: Callable[[np.ndarray], np.ndarray] | None = None
    tag: str = "piecewise-linear"

    def __post_init__(self):
        if self.closed is None:
            s = np.asarray(self.breakpoints, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if s.ndim != 1 or s.shape != v.shape or s.size < 2:
                raise NFunctionError("piecewise-linear function needs at least 2 matching samples")
            if np.any(np.diff(s) <= 0):
                raise NFunctionError("breakpoints must be strictly increasing")
            if not np.all(np.isfinite(v)):
                raise NFunctionError("values must be finite")
            object.__setattr__(self, "breakpoints", s)
            object.__setattr__(self, "values", v)

    @classmethod
    def piecewise_linear(cls, s, v, tag: str = "piecewise-linear") -> "ScalarConvexFn":
        return cls(np.asarray(s, float), np.asarray(v, float), None, tag)

    @classmethod
    def from_closed(cls, fn: Callable[[np.ndarray], np.ndarray], tag: str) -> "ScalarConvexFn":
        return cls(None, None, fn, tag)

    @property
    def is_piecewise_linear(self) -> bool:
        return self.closed is None

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        if self.closed is not None:
            with np.errstate(all="ignore"):
                return np.asarray(self.closed(s), dtype=float)
        bp, v = self.breakpoints, self.values
        out = np.interp(s, bp, v)
        hi = s > bp[-1]
        if np.any(hi):
            slope = (v[-1] - v[-2]) / (bp[-1] - bp[-2])
            out = np.where(hi, v[-1] + slope * (s - bp[-1]), out)
        return out

    def slopes(self) -> np.ndarray:
        self._require_pl()
        return np.diff(self.values) / np.diff(self.breakpoints)

    def is_convex(self, tol: float = 1e-9) -> bool:
        if self.closed is not None:
            s = np.linspace(0.0, 10.0, 401)
            v = self(s)
            return bool(np.all(np.diff(v, 2) >= -tol * (1.0 + np.abs(v[1:-1]))))
        sl = self.slopes()
        return bool(np.all(np.diff(sl) >= -tol * (1.0 + np.abs(sl[1:]))))

    def sampled(self, grid) -> "ScalarConvexFn":
        """Piecewise-linear interpolant on ``grid``."""
        grid = np.asarray(grid, dtype=float)
        return ScalarConvexFn.piecewise_linear(grid, self(grid), tag=self.tag)

    def conjugate(self) -> "ScalarConvexFn":
        """Exact Fenchel conjugate of the piecewise-linear representation.

        Breakpoints map to slopes. The returned function extends with slope
        equal to the last abscissa, matching the linear extension of ``self``.
        """
        self._require_pl()
        bp, v = self.breakpoints, self.values
        sl = np.maximum.accumulate(self.slopes())
        keep = np.concatenate([[True], np.diff(sl) > 0])
        c = sl[keep]
        idx = np.nonzero(keep)[0]
        vals = c * bp[idx] - v[idx]
        sig = [0.0]
        out = [float(-v.min())]
        for ci, vi in zip(c, vals):
            if ci > sig[-1]:
                sig.append(float(ci))
                out.append(float(vi))
        last = sig[-1] + max(1.0, abs(sig[-1]))
        sig.append(last)
        out.append(float(last * bp[-1] - v[-1]))
        return ScalarConvexFn.piecewise_linear(np.array(sig), np.array(out), tag=f"conjugate({self.tag})")

    def inverse(self, t):
        """Smallest ``s >= 0`` with ``self(s) >= t`` (generalized inverse)."""
        t = np.asarray(t, dtype=float)
        if self.closed is not None:
            return _bisect_inverse(self, t)
        bp, v = self.breakpoints, self.values
        vm = np.maximum.accumulate(v)
        slope_last = (v[-1] - v[-2]) / (bp[-1] - bp[-2])
        j = np.clip(np.searchsorted(vm, t, side="left"), 1, bp.size - 1)
        v0, v1 = vm[j - 1], vm[j]
        with np.errstate(all="ignore"):
            inner = bp[j - 1] + (t - v0) / (v1 - v0) * (bp[j] - bp[j - 1])
            tail = bp[-1] + (t - v[-1]) / slope_last if slope_last > 0 else np.full_like(t, np.inf)
        out = np.where(t <= vm[0], bp[0], np.where(t > vm[-1], tail, inner))
        return out if out.ndim else float(out)

    def _require_pl(self):
        if self.closed is not None:
            raise NFunctionError("operation needs a piecewise-linear representation; call sampled() first")


def _bisect_inverse(fn: ScalarConvexFn, t: np.ndarray, iters: int = 200):
    t = np.asarray(t, dtype=float)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    for _ in range(2000):
        small = fn(hi) < t
        if not np.any(small):
            break
        hi = np.where(small, hi * 2.0, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = fn(mid) < t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, hi)):
            break
    return hi if hi.ndim else float(hi)


def greatest_convex_minorant(samples_s, samples_v=None) -> ScalarConvexFn:
    """Lower convex hull of sampled points, as a piecewise-linear function.

    Args:
        samples_s: Strictly increasing abscissae starting at 0, or a sequence of
            ``(s, value)`` pairs when ``samples_v`` is omitted.
        samples_v: Values at the abscissae.

    Returns:
        The hull evaluated back on every input abscissa.
    """
    if samples_v is None:
        pairs = np.asarray(samples_s, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise NFunctionError("expected (s, value) pairs")
        s, v = pairs[:, 0], pairs[:, 1]
    else:
        s = np.asarray(samples_s, dtype=float)
        v = np.asarray(samples_v, dtype=float)
    if s.size < 2:
        raise NFunctionError("need at least 2 samples")
    if np.any(np.diff(s) <= 0):
        raise NFunctionError("abscissae must be strictly increasing")
    if not np.all(np.isfinite(v)):
        raise NFunctionError("values must be finite")
    hull: list[int] = []
    for i in range(s.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (s[b] - s[a]) * (v[i] - v[a]) - (v[b] - v[a]) * (s[i] - s[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    hv = np.interp(s, s[hull], v[hull])
    return ScalarConvexFn.piecewise_linear(s, hv, tag="convex-minorant")


# ---------------------------------------------------------------------------
# N-functions


@dataclass(frozen=True, eq=False)
class NFunction:
    """Growth function ``M(x, xi)`` with metadata.

    Attributes:
        dimension: Length ``d`` of the gradient argument.
        evaluate: ``(x, xi) -> values`` on batches.
        homogeneous: True iff ``M`` does not depend on ``x``.
        family: Family tag, e.g. ``"power"`` or ``"double-phase"``.
        params: Scalar parameters of the family.
        condition_flags: Declared membership flags such as ``{"C1"}``; trusted metadata.
        profile: ``(x, s) -> M`` along ``|xi| = s`` for isotropic functions.
        conjugate_closed: Closed-form conjugate ``(x, eta) -> values``.
        conjugate_profile: Closed-form radial profile of the conjugate.
        components: Scalar profiles ``c_i(s)`` when ``M = sum_i c_i(|xi_i|)``.
        domain_samples: Points of the domain used for envelopes of x-dependent functions.
        name: Label used in reports.
    """

    dimension: int
    evaluate: Callable[[np.ndarray | None, np.ndarray], np.ndarray]
    homogeneous: bool = True
    family: str = "custom"
    params: Mapping = field(default_factory=dict)
    condition_flags: frozenset = frozenset()
    profile: Callable | None = None
    conjugate_closed: Callable | None = None
    conjugate_profile: Callable | None = None
    components: tuple | None = None
    domain_samples: np.ndarray | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __call__(self, x, xi) -> np.ndarray:
        xi, scalar = _batch(xi, self.dimension)
        xb = _x_batch(x, xi.shape[0])
        if xb is None and not self.homogeneous:
            raise NFunctionError(f"{self.family} N-function needs x")
        with np.errstate(all="ignore"):
            out = np.asarray(self.evaluate(xb, xi), dtype=float)
        if np.any(np.isnan(out)):
            raise NFunctionError("non-finite N-function evaluation")
        return float(out[0]) if scalar else out

    @property
    def isotropic(self) -> bool:
        return self.profile is not None

    def envelopes(self) -> tuple[ScalarConvexFn, ScalarConvexFn]:
        """Lazily computed, write-once stability envelopes ``(m1, m2)``."""
        with self._lock:
            if "envelopes" not in self._cache:
                self._cache["envelopes"] = stability_bounds(self, default_radius_grid(), self.domain_samples)
            return self._cache["envelopes"]

    def with_domain_samples(self, pts) -> "NFunction":
        import dataclasses

        return dataclasses.replace(self, domain_samples=np.asarray(pts, float), _cache={}, _lock=threading.Lock())


def default_radius_grid() -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 241)])


def _isotropic(profile, d, **kw) -> NFunction:
    def evaluate(x, xi):
        return profile(x, np.linalg.norm(xi, axis=1))

    return NFunction(dimension=d, evaluate=evaluate, profile=profile, **kw)


def _power_conj(c, p, sigma):
    pp = p / (p - 1.0)
    return (np.abs(sigma) ** pp / pp) * (c * p) ** (-(pp - 1.0))


def power(p: float, dimension: int = 1, coef: float = 1.0) -> NFunction:
    """``M(xi) = coef * |xi|^p`` with ``p > 1``."""
    if not p > 1.0 or not coef > 0:
        raise NFunctionError("power family needs p > 1 and coef > 0")

    def prof(x, s):
        return coef * np.abs(s) ** p

    def conj_prof(x, sigma):
        return _power_conj(coef, p, sigma)

    return _isotropic(
        prof,
        dimension,
        family="power",
        params={"p": p, "coef": coef},
        conjugate_profile=conj_prof,
        conjugate_closed=lambda x, eta: conj_prof(x, np.linalg.norm(eta, axis=1)),
        name=f"power(p={p:g})",
    )


def variable_exponent(p_of_x: Callable, dimension: int, coef: float = 1.0) -> NFunction:
    """``M(x, xi) = coef * |xi|^{p(x)}`` with ``p(x) > 1`` supplied as a callback on ``(n, dx)`` points."""

    def prof(x, s):
        return coef * np.abs(s) ** _col(p_of_x(x), s)

    def conj_prof(x, sigma):
        return _power_conj(coef, _col(p_of_x(x), sigma), sigma)

    return _isotropic(
        prof,
        dimension,
        homogeneous=False,
        family="variable-exponent",
        params={"coef": coef},
        conjugate_profile=conj_prof,
        conjugate_closed=lambda x, eta: conj_prof(x, np.linalg.norm(eta, axis=1)),
        name="variable-exponent",
    )


def double_phase(p: float, q: float, a_of_x: Callable, dimension: int) -> NFunction:
    """``M(x, xi) = |xi|^p + a(x) |xi|^q`` with ``1 < p <= q`` and ``a >= 0``."""
    if not 1.0 < p <= q:
        raise NFunctionError("double phase needs 1 < p <= q")

    def prof(x, s):
        s = np.abs(s)
        return s**p + _col(a_of_x(x), s) * s**q

    return _isotropic(prof, dimension, homogeneous=False, family="double-phase", params={"p": p, "q": q}, name="double-phase")


def llogl(dimension: int = 1, coef: float = 1.0) -> NFunction:
    """``M(xi) = coef * |xi| ln(1 + |xi|)``."""

    def prof(x, s):
        s = np.abs(s)
        return coef * s * np.log1p(s)

    return _isotropic(prof, dimension, family="LlogL", params={"coef": coef}, name="LlogL")


def exponential(dimension: int = 1, coef: float = 1.0) -> NFunction:
    """``M(xi) = coef * |xi| (exp|xi| - 1)``, not of class Delta2."""

    def prof(x, s):
        s = np.abs(s)
        return coef * s * np.expm1(s)

    return _isotropic(prof, dimension, family="exponential", params={"coef": coef}, name="exponential")


def anisotropic_sum(terms: Sequence[tuple[float, float]]) -> NFunction:
    """``M(xi) = sum_i c_i |xi_i|^{p_i}`` for ``terms = [(c_1, p_1), ...]``."""
    terms = [(float(c), float(p)) for c, p in terms]
    for c, p in terms:
        if not (c > 0 and p > 1):
            raise NFunctionError("anisotropic terms need c > 0 and p > 1")
    d = len(terms)

    def evaluate(x, xi):
        return sum(c * np.abs(xi[:, i]) ** p for i, (c, p) in enumerate(terms))

    def conj(x, eta):
        return sum(_power_conj(c, p, eta[:, i]) for i, (c, p) in enumerate(terms))

    comps = tuple((lambda x, s, c=c, p=p: c * np.abs(s) ** p) for c, p in terms)
    return NFunction(
        dimension=d,
        evaluate=evaluate,
        family="anisotropic-sum",
        params={"terms": tuple(terms)},
        conjugate_closed=conj,
        components=comps,
        name="anisotropic-sum",
    )


def custom(
    evaluate: Callable,
    dimension: int,
    *,
    homogeneous: bool = True,
    profile: Callable | None = None,
    name: str = "custom",
) -> NFunction:
    """Wrap a user integrand. ``profile`` may be given for isotropic functions."""
    if profile is not None:
        return _isotropic(profile, dimension, homogeneous=homogeneous, family="custom", name=name)
    return NFunction(dimension=dimension, evaluate=evaluate, homogeneous=homogeneous, family="custom", name=name)


# ---------------------------------------------------------------------------
# conjugation


def fenchel_conjugate(
    M: NFunction,
    x,
    eta,
    search_radius: float | None = None,
    grid_density: int = 512,
    method: str = "auto",
):
    """Pointwise Fenchel conjugate ``sup_xi (xi . eta - M(x, xi))``.

    Args:
        M: The N-function.
        x: Domain point(s) or None for homogeneous ``M``.
        eta: Vector of length ``d`` or batch ``(n, d)``.
        search_radius: Radius of the search region. When None, the radius is
            enlarged until the maximizer is interior.
        grid_density: Points of the coarse scan (a total over the box for box scans, capped per axis).
        method: ``"auto"`` uses closed forms when known, ``"numeric"`` forces the
            grid-plus-golden-section search, ``"closed"`` requires a closed form.

    Raises:
        SearchRadiusError: if the maximizer sits on the boundary of a fixed radius.
    """
    eta_b, scalar = _batch(eta, M.dimension)
    n = eta_b.shape[0]
    xb = _x_batch(x, n)
    if xb is None and not M.homogeneous:
        raise NFunctionError("x-dependent N-function needs x")
    if method not in ("auto", "numeric", "closed"):
        raise NFunctionError(f"unknown method {method!r}")
    if method != "numeric" and M.conjugate_closed is not None:
        with np.errstate(all="ignore"):
            out = np.asarray(M.conjugate_closed(xb, eta_b), dtype=float)
        return float(out[0]) if scalar else out
    if method == "closed":
        raise NFunctionError(f"no closed-form conjugate for family {M.family}")
    if search_radius is None:
        radius = 4.0 * (1.0 + float(np.max(np.abs(eta_b))))
        for _ in range(40):
            try:
                out = _numeric_conjugate(M, xb, eta_b, radius, grid_density)
                break
            except SearchRadiusError:
                radius *= 4.0
        else:
            raise SearchRadiusError("could not find an interior maximizer")
    else:
        out = _numeric_conjugate(M, xb, eta_b, float(search_radius), grid_density)
    return float(out[0]) if scalar else out


def _numeric_conjugate(M: NFunction, xb, eta_b, radius, grid_density):
    if M.profile is not None:
        sigma = np.linalg.norm(eta_b, axis=1)
        return _radial_conjugate(M.profile, xb, sigma, radius, grid_density)
    if M.components is not None:
        total = np.zeros(eta_b.shape[0])
        for i, comp in enumerate(M.components):
            total += _radial_conjugate(comp, xb, np.abs(eta_b[:, i]), radius, grid_density)
        return total
    if M.dimension > 3:
        raise NFunctionError("box search limited to d <= 3")
    return _box_conjugate(M, xb, eta_b, radius, grid_density)


def _radial_conjugate(prof, xb, sigma, radius, grid_density, chunk: int = 2048):
    """sup over t in [0, R] of t*sigma - prof(x, t), vectorized over rows."""
    n = sigma.shape[0]
    out = np.empty(n)
    t = np.linspace(0.0, radius, int(grid_density) + 1)
    dt = t[1] - t[0]
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        sg = sigma[lo:hi]
        xs = None if xb is None else xb[lo:hi]
        tt = np.broadcast_to(t, (hi - lo, t.size))
        with np.errstate(all="ignore"):
            vals = sg[:, None] * tt - prof(xs, tt)
        if np.any(np.isnan(vals)):
            raise NFunctionError("non-finite N-function evaluation")
        j = np.argmax(vals, axis=1)
        if np.any(j == t.size - 1):
            raise SearchRadiusError(f"maximizer on the search boundary (radius {radius:g})")
        a = np.maximum(t[j] - dt, 0.0)
        b = t[j] + dt

        def f(tv):
            with np.errstate(all="ignore"):
                return sg * tv - prof(xs, tv)

        best_t, best_v = _golden_max(f, a, b, 50)
        grid_best = vals[np.arange(hi - lo), j]
        out[lo:hi] = np.maximum(best_v, grid_best)
    return out


def _golden_max(f, a, b, iters):
    """Vectorized golden-section maximization of concave ``f`` on ``[a, b]``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nc = np.where(left, b - GOLDEN * (b - a), d)
        nd = np.where(left, c, a + GOLDEN * (b - a))
        fnew = f(np.where(left, nc, nd))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = nc, nd
    t = np.where(fc >= fd, c, d)
    return t, np.maximum(fc, fd)


def _box_conjugate(M: NFunction, xb, eta_b, radius, grid_density, chunk: int = 64):
    d = M.dimension
    per_axis = max(9, int(round(grid_density ** (1.0 / d))) if d > 1 else int(grid_density))
    per_axis = min(per_axis, {1: 4097, 2: 129, 3: 33}[d])
    ax = np.linspace(-radius, radius, per_axis)
    h = ax[1] - ax[0]
    mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    n = eta_b.shape[0]
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        m = hi - lo
        pts = np.broadcast_to(mesh, (m,) + mesh.shape).reshape(-1, d)
        xs = None if xb is None else np.repeat(xb[lo:hi], mesh.shape[0], axis=0)
        with np.errstate(all="ignore"):
            mv = np.asarray(M.evaluate(xs, pts), float).reshape(m, -1)
        vals = eta_b[lo:hi] @ mesh.T - mv
        if np.any(np.isnan(vals)):
            raise NFunctionError("non-finite N-function evaluation")
        j = np.argmax(vals, axis=1)
        start = mesh[j].copy()
        if np.any(np.abs(start) >= radius - 0.5 * h):
            raise SearchRadiusError(f"maximizer on the search boundary (radius {radius:g})")
        xs_rows = None if xb is None else xb[lo:hi]
        cur = start
        width = np.full(m, h)
        best = vals[np.arange(m), j]
        for _sweep in range(60):
            prev = best.copy()
            for k in range(d):
                base = cur.copy()

                def f(tv, base=base, k=k):
                    pt = base.copy()
                    pt[:, k] = tv
                    with np.errstate(all="ignore"):
                        return np.einsum("ij,ij->i", eta_b[lo:hi], pt) - M.evaluate(xs_rows, pt)

                tk, vk = _golden_max(f, base[:, k] - width, base[:, k] + width, 40)
                better = vk > best
                cur[:, k] = np.where(better, tk, cur[:, k])
                best = np.maximum(best, vk)
            if np.all(best - prev <= 1e-15 * (1.0 + np.abs(best))):
                break
        if np.any(np.abs(cur) >= radius - 1e-12 * radius):
            raise SearchRadiusError(f"maximizer on the search boundary (radius {radius:g})")
        out[lo:hi] = best
    return out


def scalar_conjugate(m: ScalarConvexFn, sigma, search_radius: float | None = None, grid_density: int = 2048):
    """Conjugate of a one-dimensional function evaluated at ``sigma``.

    Piecewise-linear inputs use the exact breakpoint-to-slope formula; closed
    forms use the numeric search.
    """
    sigma = np.asarray(sigma, dtype=float)
    if m.is_piecewise_linear:
        return m.conjugate()(sigma)
    prof = lambda x, s: m(s)  # noqa: E731
    flat = np.abs(sigma).ravel()
    radius = search_radius or 4.0 * (1.0 + float(flat.max(initial=0.0)))
    for _ in range(40):
        try:
            out = _radial_conjugate(prof, None, flat, radius, grid_density)
            return out.reshape(sigma.shape) if sigma.ndim else float(out[0])
        except SearchRadiusError:
            if search_radius is not None:
                raise
            radius *= 4.0
    raise SearchRadiusError("could not find an interior maximizer")


# ---------------------------------------------------------------------------
# envelopes, Delta2, modulars


def sample_directions(d: int, count: int) -> np.ndarray:
    """Deterministic unit directions: signs in 1-D, uniform angles in 2-D, a Fibonacci lattice in 3-D."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if d == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        r = np.sqrt(1.0 - z * z)
        ph = np.pi * (1.0 + math.sqrt(5.0)) * k
        return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    raise NFunctionError("directions supported for d <= 3")


def stability_bounds(
    M: NFunction,
    radius_grid,
    x_samples=None,
    direction_count: int = 64,
) -> tuple[ScalarConvexFn, ScalarConvexFn]:
    """Homogeneous isotropic envelopes ``m1(|xi|) <= M(x, xi) <= m2(|xi|)``.

    ``m2`` is the sampled supremum over points and directions, ``m1`` the
    greatest convex minorant of the sampled infimum. In 2-D the extreme
    direction at each radius is refined by golden-section search.

    Args:
        M: The N-function.
        radius_grid: Radii; 0 is prepended when missing.
        x_samples: Domain points, required when ``M`` depends on x.
        direction_count: Sampled directions in 2-D/3-D.
    """
    r = np.unique(np.asarray(radius_grid, dtype=float))
    if r.size == 0:
        raise NFunctionError("empty radius grid")
    if r[0] != 0.0:
        r = np.concatenate([[0.0], r])
    if M.homogeneous:
        xs = None
        nx = 1
    else:
        if x_samples is None or len(x_samples) == 0:
            raise NFunctionError("x-dependent N-function needs x samples")
        xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
        nx = xs.shape[0]
    d = M.dimension
    lo = np.full(r.size, np.inf)
    hi = np.full(r.size, -np.inf)
    for ix in range(nx):
        xrow = None if xs is None else xs[ix : ix + 1]
        if M.profile is not None:
            rx = None if xrow is None else np.repeat(xrow, r.size, axis=0)
            v = np.asarray(M.profile(rx, r), dtype=float)
            lo = np.minimum(lo, v)
            hi = np.maximum(hi, v)
            continue
        dirs = sample_directions(d, direction_count)
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        rx = None if xrow is None else np.repeat(xrow, pts.shape[0], axis=0)
        v = np.asarray(M.evaluate(rx, pts), dtype=float).reshape(r.size, dirs.shape[0])
        vmin, vmax = v.min(axis=1), v.max(axis=1)
        if d == 2:
            vmin = np.minimum(vmin, _angle_refine(M, xrow, r, np.argmin(v, axis=1), direction_count, sign=-1.0))
            vmax = np.maximum(vmax, _angle_refine(M, xrow, r, np.argmax(v, axis=1), direction_count, sign=1.0))
        lo = np.minimum(lo, vmin)
        hi = np.maximum(hi, vmax)
    lo[0] = 0.0
    hi[0] = 0.0
    m1 = greatest_convex_minorant(r, lo)
    m2 = ScalarConvexFn.piecewise_linear(r, hi, tag="sup-envelope")
    return ScalarConvexFn.piecewise_linear(r, m1.values, tag="m1"), m2


def _angle_refine(M, xrow, r, k, count, sign):
    step = 2.0 * np.pi / count
    th0 = 2.0 * np.pi * k / count
    rx = None if xrow is None else np.repeat(xrow, r.size, axis=0)

    def f(th):
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        return sign * np.asarray(M.evaluate(rx, pts), dtype=float)

    _, v = _golden_max(f, th0 - step, th0 + step, 40)
    return sign * v


def delta2_check(m: ScalarConvexFn, s_max: float, grid_density: int = 400) -> tuple[bool, float]:
    """Empirical Delta2 test on ``[1, s_max]``.

    Returns:
        ``(satisfied, constant)`` where ``constant = max m(2s)/m(s)`` over the
        grid and ``satisfied`` requires a finite constant and a log-ratio versus
        log-s slope below 0.1 over the last decade of the grid. The result is
        empirical, never a proof.

    Raises:
        NFunctionError: if ``m`` vanishes at some positive grid point.
    """
    lo = 1.0 if s_max > 1.0 else s_max / 100.0
    s = np.geomspace(lo, s_max, grid_density)
    probe = np.geomspace(min(lo, 1e-6 * s_max), s_max, grid_density)
    if np.any(m(probe) <= 0.0):
        raise NFunctionError("m vanishes on an interval other than {0}")
    with np.errstate(all="ignore"):
        ratio = m(2.0 * s) / m(s)
    if not np.all(np.isfinite(ratio)):
        return False, float("inf")
    const = float(ratio.max())
    tail = s >= s_max / 10.0
    if tail.sum() < 2:
        tail = slice(-2, None)
    slope = np.polyfit(np.log(s[tail]), np.log(ratio[tail]), 1)[0]
    return bool(slope < 0.1), const


def modular(M: NFunction, v, weights, x=None) -> float:
    """Quadrature modular ``sum_q w_q M(x_q, v_q)``."""
    vb, _ = _batch(v, M.dimension)
    w = np.asarray(weights, dtype=float).ravel()
    if vb.shape[0] != w.size:
        raise NFunctionError(f"length mismatch: {vb.shape[0]} values, {w.size} weights")
    if np.any(w < 0):
        raise NFunctionError("weights must be nonnegative")
    return float(np.dot(w, M(x, vb)))


def luxemburg_norm(M: NFunction, v, weights, x=None, tol: float = 1e-10, max_doublings: int = 200) -> float:
    """Smallest ``lam > 0`` with ``modular(M, v / lam) <= 1``, by bracketing and bisection."""
    vb, _ = _batch(v, M.dimension)
    if not np.any(vb):
        return 0.0

    def mod(lam):
        return modular(M, vb / lam, weights, x)

    hi = 1.0
    for _ in range(max_doublings):
        if mod(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise NFunctionError("bracketing failed: modular stays above 1")
    lo = hi
    for _ in range(max_doublings):
        lo *= 0.5
        if mod(lo) > 1.0:
            break
    else:
        return 0.0
    while (hi - lo) > tol * hi:
        mid = 0.5 * (lo + hi)
        if mod(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def check_invariants(M: NFunction, x_samples=None, count: int = 200, seed: int = 42) -> list[str]:
    """Sampled checks of vanishing at 0, evenness and midpoint convexity.

    Returns:
        Human-readable descriptions of violations, empty when all pass.
    """
    rng = np.random.default_rng(seed)
    d = M.dimension
    problems = []
    if M.homogeneous:
        xs = None
    else:
        if x_samples is None:
            raise NFunctionError("x-dependent N-function needs x samples")
        base = np.atleast_2d(np.asarray(x_samples, float))
        xs = base[rng.integers(0, base.shape[0], count)]
    mag = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), count))
    a = rng.normal(size=(count, d))
    a *= (mag / np.linalg.norm(a, axis=1))[:, None]
    b = rng.normal(size=(count, d))
    b *= (np.exp(rng.uniform(np.log(1e-3), np.log(1e2), count)) / np.linalg.norm(b, axis=1))[:, None]
    zero = M(xs, np.zeros((count, d)))
    if np.any(zero != 0.0):
        problems.append("M(x, 0) != 0")
    ma, mneg = M(xs, a), M(xs, -a)
    if np.any(np.abs(ma - mneg) > 1e-12 * np.maximum(1.0, np.abs(ma))):
        problems.append("M(x, -xi) != M(x, xi)")
    mb = M(xs, b)
    mid = M(xs, 0.5 * (a + b))
    if np.any(mid > 0.5 * (ma + mb) + 1e-10 * (1.0 + np.abs(ma) + np.abs(mb))):
        problems.append("midpoint convexity violated")
    if np.any(ma < 0):
        problems.append("negative values")
    return problems
