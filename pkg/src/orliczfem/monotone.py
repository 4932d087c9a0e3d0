"""Maximal monotone graphs, resolvents, the Minty transform and mollified selections.

Three representations are supported:

* :class:`PotentialGraph`: subdifferential of a convex potential ``j(x, .)``,
  optionally with a closed-form gradient, proximal map and radial profile.
* :class:`CurveGraph`: a one-dimensional nondecreasing curve given by rows
  ``(xi_i, eta_i^-, eta_i^+)``; vertical segments sit at the breakpoints and
  the curve is linear in between. Marked radial, it acts on ``R^d`` through
  ``A(xi) = rho(|xi|) xi / |xi|``.
* :class:`SingleValuedGraph`: a continuous monotone map ``a(x, xi)``.

All evaluations are batched: ``x`` is ``(n, dx)`` or None, ``xi`` is ``(n, d)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .nfunc import NFunction, ScalarConvexFn, fenchel_conjugate, stability_bounds, default_radius_grid

__all__ = [
    "GraphError",
    "ResolventError",
    "CoercivityWitness",
    "MonotoneGraph",
    "PotentialGraph",
    "CurveGraph",
    "SingleValuedGraph",
    "identity_graph",
    "power_graph",
    "abs_graph",
    "abs_plus_identity_graph",
    "sign_graph",
    "selection",
    "resolvent",
    "minty_transform",
    "MollifiedMap",
    "mollify",
    "kernel_constant",
    "A3Report",
    "check_A3",
    "check_monotone",
    "growth_bound",
    "epsilon_estimate_margin",
    "commutator_integral",
]


class GraphError(ValueError):
    """Invalid graph definition or evaluation request."""


class ResolventError(RuntimeError):
    """The resolvent root finder did not converge."""


def _batch(xi, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xi, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if d == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != d:
            raise GraphError(f"expected a vector of length {d}")
        return arr.reshape(1, d), True
    if arr.shape[1] != d:
        raise GraphError(f"expected shape (n, {d}), got {arr.shape}")
    return arr, False


def _xrows(x, n):
    if x is None:
        return None
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.shape[0] == 1 and n != 1:
        arr = np.repeat(arr, n, axis=0)
    if arr.shape[0] != n:
        raise GraphError(f"x has {arr.shape[0]} rows, expected {n}")
    return arr


def _unbatch(out, scalar):
    return out[0] if scalar else out


@dataclass(frozen=True)
class CoercivityWitness:
    """Constants asserting ``eta . xi >= c_A (M(x, xi) + M~(x, eta)) - m(x)``.

    Attributes:
        c_A: Constant in ``(0, 1]``.
        M: The N-function.
        m: Nonnegative field ``m(x)``, a callable on ``(n, dx)`` points or a constant.
        m_sup: Supremum of ``m`` when known (needed by the boundedness estimate).
    """

    c_A: float
    M: NFunction
    m: Callable | float = 0.0
    m_sup: float | None = None

    def __post_init__(self):
        if not 0.0 < self.c_A <= 1.0:
            raise GraphError("c_A must lie in (0, 1]")
        if self.m_sup is None and not callable(self.m):
            object.__setattr__(self, "m_sup", float(self.m))

    def m_at(self, x, n: int) -> np.ndarray:
        if callable(self.m):
            if x is None:
                raise GraphError("x-dependent m needs points")
            return np.asarray(self.m(x), dtype=float).reshape(n)
        return np.full(n, float(self.m))


class MonotoneGraph:
    """Common interface of the graph representations.

    Attributes:
        dimension: Length of ``xi``.
        kind: ``"potential"``, ``"curve"`` or ``"single"``.
        witness: Optional coercivity witness.
        strictly_monotone: Declared strict monotonicity (sample-checked on use).
        name: Label for reports.
        homogeneous: True when the graph does not depend on ``x``.
    """

    kind = "abstract"

    def __init__(
        self,
        dimension: int,
        witness: CoercivityWitness | None = None,
        strictly_monotone: bool = False,
        name: str = "",
        homogeneous: bool = True,
    ):
        if dimension < 1:
            raise GraphError("dimension must be positive")
        self.dimension = int(dimension)
        self.homogeneous = bool(homogeneous)
        self.witness = witness
        self.strictly_monotone = bool(strictly_monotone)
        self.name = name or self.kind

    # Radial profile rho(x, r) for r > 0, when the graph is radial (or odd in 1-D).
    radial_profile: Callable | None = None
    # Radii (or 1-D abscissae) where the selection is not smooth.
    kinks: tuple = ()
    # Radius of the set A(x, 0) for radial graphs.
    zero_radius: float = 0.0
    # c when A(x, xi) = c xi; mollification then reproduces A exactly.
    linear_scale: float | None = None

    def select(self, x, xi) -> np.ndarray:
        raise NotImplementedError

    def resolve(self, x, nu, tol: float = 1e-12) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, xi, eta, tol: float = 1e-9) -> np.ndarray:
        """Whether ``eta`` lies in ``A(x, xi)`` up to ``tol`` (row-wise)."""
        xi, _ = _batch(xi, self.dimension)
        eta, _ = _batch(eta, self.dimension)
        return np.linalg.norm(eta - self.select(x, xi), axis=1) <= tol * (1.0 + np.linalg.norm(eta, axis=1))

    def extreme_samples(self, rng, count: int = 8) -> list[tuple[np.ndarray, np.ndarray]]:
        """Pairs ``(xi, eta)`` at set-valued points, for coercivity sampling."""
        return []

    def _radial_select(self, x, xi):
        r = np.linalg.norm(xi, axis=1)
        with np.errstate(all="ignore"):
            rho = np.asarray(self.radial_profile(x, r), dtype=float)
            out = np.where(r[:, None] > 0, (rho / np.where(r > 0, r, 1.0))[:, None] * xi, 0.0)
        return out

    def _radial_resolve(self, x, nu, tol):
        """Scalar bisection on ``t + rho(t) = |nu|`` along the direction of ``nu``."""
        s = np.linalg.norm(nu, axis=1)
        inside = s <= self.zero_radius
        lo = np.zeros_like(s)
        hi = np.maximum(s, 1e-300)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            with np.errstate(all="ignore"):
                g = mid + np.asarray(self.radial_profile(x, mid), dtype=float) - s
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
            if np.all(hi - lo <= 0.25 * tol * np.maximum(1.0, s)):
                break
        t = np.where(inside, 0.0, 0.5 * (lo + hi))
        with np.errstate(all="ignore"):
            return np.where(s[:, None] > 0, (t / np.where(s > 0, s, 1.0))[:, None] * nu, 0.0)


class PotentialGraph(MonotoneGraph):
    """Subdifferential of a convex potential ``j(x, xi)``.

    Args:
        potential: ``(x, xi) -> j`` on batches.
        dimension: Length of ``xi``.
        gradient: Closed-form selection ``(x, xi) -> eta``. Without it a central
            difference of ``j`` is used, which returns the midpoint at kinks.
        prox: Proximal map ``(x, nu) -> argmin j(xi) + |xi - nu|^2 / 2``.
        radial_profile: ``(x, r) -> rho`` when ``grad j = rho(|xi|) xi / |xi|``.
        kinks: Radii where the selection is not smooth.
        zero_radius: Radius of the subdifferential at 0.
    """

    kind = "potential"

    def __init__(
        self,
        potential: Callable,
        dimension: int,
        *,
        gradient: Callable | None = None,
        prox: Callable | None = None,
        radial_profile: Callable | None = None,
        kinks: Sequence[float] = (),
        zero_radius: float = 0.0,
        **kw,
    ):
        super().__init__(dimension, **kw)
        self.potential = potential
        self.gradient = gradient
        self.prox = prox
        self.radial_profile = radial_profile
        self.kinks = tuple(float(k) for k in kinks)
        self.zero_radius = float(zero_radius)

    def select(self, x, xi):
        xi, scalar = _batch(xi, self.dimension)
        xr = _xrows(x, xi.shape[0])
        if self.gradient is not None:
            out = np.asarray(self.gradient(xr, xi), dtype=float).reshape(xi.shape)
        elif self.radial_profile is not None:
            out = self._radial_select(xr, xi)
        else:
            out = np.empty_like(xi)
            for k in range(self.dimension):
                h = 1e-6 * np.maximum(1.0, np.abs(xi[:, k]))
                e = np.zeros_like(xi)
                e[:, k] = h
                out[:, k] = (self.potential(xr, xi + e) - self.potential(xr, xi - e)) / (2.0 * h)
        return _unbatch(out, scalar)

    def resolve(self, x, nu, tol=1e-12):
        nu, scalar = _batch(nu, self.dimension)
        xr = _xrows(x, nu.shape[0])
        if self.prox is not None:
            out = np.asarray(self.prox(xr, nu), dtype=float).reshape(nu.shape)
        elif self.radial_profile is not None:
            out = self._radial_resolve(xr, nu, tol)
        else:
            out = _newton_resolvent(lambda z: self.select(xr, z), nu, tol, self.dimension)
        return _unbatch(out, scalar)

    def contains(self, x, xi, eta, tol=1e-9):
        xi, _ = _batch(xi, self.dimension)
        eta, _ = _batch(eta, self.dimension)
        base = super().contains(x, xi, eta, tol)
        if self.zero_radius > 0:
            at0 = np.linalg.norm(xi, axis=1) == 0
            base = np.where(at0, np.linalg.norm(eta, axis=1) <= self.zero_radius + tol, base)
        return base

    def extreme_samples(self, rng, count=8):
        if self.zero_radius <= 0:
            return []
        e = rng.normal(size=(count, self.dimension))
        e /= np.linalg.norm(e, axis=1)[:, None]
        return [(np.zeros((count, self.dimension)), self.zero_radius * e)]


class CurveGraph(MonotoneGraph):
    """Nondecreasing curve with vertical segments, optionally extended radially.

    Args:
        rows: Sequence of ``(xi_i, eta_minus_i, eta_plus_i)`` with increasing ``xi_i``.
        dimension: 1, or ``>= 2`` together with ``radial=True``.
        radial: Extend the curve to ``R^d`` as ``rho(|xi|) xi / |xi|``; the curve
            must then be odd.
        policy: Selection at jumps, ``"midpoint"`` or ``"min-norm"``.
    """

    kind = "curve"

    def __init__(self, rows, dimension: int = 1, *, radial: bool = False, policy: str = "midpoint", **kw):
        super().__init__(dimension, **kw)
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise GraphError("curve rows must be (xi, eta_minus, eta_plus) triples")
        bp, lo, hi = arr[:, 0], arr[:, 1], arr[:, 2]
        if np.any(np.diff(bp) <= 0):
            raise GraphError("curve breakpoints must be strictly increasing")
        if np.any(lo > hi):
            raise GraphError("curve rows need eta_minus <= eta_plus")
        if np.any(hi[:-1] > lo[1:]):
            raise GraphError("curve is decreasing between breakpoints: not monotone")
        if policy not in ("midpoint", "min-norm"):
            raise GraphError(f"unknown selection policy {policy!r}")
        if dimension > 1 and not radial:
            raise GraphError("curves act on d >= 2 only when marked radial")
        self.bp, self.lo, self.hi = bp, lo, hi
        self.radial = bool(radial or dimension > 1)
        self.policy = policy
        n = bp.size
        self._s_first = (lo[1] - hi[0]) / (bp[1] - bp[0]) if n > 1 else 0.0
        self._s_last = (lo[-1] - hi[-2]) / (bp[-1] - bp[-2]) if n > 1 else 0.0
        if self._s_first < 0 or self._s_last < 0:
            raise GraphError("curve extension would be decreasing")
        if self.radial:
            probe = np.concatenate([bp, bp + 0.5, np.linspace(0.0, 2.0 * max(1.0, np.abs(bp).max()), 17)])
            probe = probe[probe > 0]
            if not np.allclose(self._value(-probe), -self._value(probe), atol=1e-12):
                raise GraphError("radial curves must be odd")
            if 0.0 not in bp and not np.isclose(self._value(np.array([0.0]))[0], 0.0):
                raise GraphError("radial curves must pass through the origin")
            self.radial_profile = lambda x, r: self._value(np.asarray(r, dtype=float))
            self.kinks = tuple(float(b) for b in bp if b > 0)
            at0 = np.nonzero(bp == 0.0)[0]
            self.zero_radius = float(hi[at0[0]]) if at0.size else 0.0
        else:
            self.kinks = tuple(float(b) for b in bp)

    def _value(self, t: np.ndarray, at_jump: str | None = None) -> np.ndarray:
        """Curve value; at breakpoints use the selection policy (or ``"lo"``/``"hi"``)."""
        bp, lo, hi = self.bp, self.lo, self.hi
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(bp, t, side="left")
        ic = np.clip(i, 0, bp.size - 1)
        exact = bp[ic] == t
        ip = np.clip(i - 1, 0, bp.size - 1)
        inner_slope = np.where(
            (i > 0) & (i < bp.size),
            (lo[ic] - hi[ip]) / np.where(bp[ic] > bp[ip], bp[ic] - bp[ip], 1.0),
            0.0,
        )
        val = hi[ip] + (t - bp[ip]) * inner_slope
        val = np.where(i == 0, lo[0] + (t - bp[0]) * self._s_first, val)
        val = np.where(i == bp.size, hi[-1] + (t - bp[-1]) * self._s_last, val)
        policy = at_jump or self.policy
        if policy == "lo":
            jump = lo[ic]
        elif policy == "hi":
            jump = hi[ic]
        elif policy == "midpoint":
            jump = 0.5 * (lo[ic] + hi[ic])
        else:
            jump = np.clip(0.0, lo[ic], hi[ic])
        return np.where(exact, jump, val)

    def interval(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Closed interval ``A(t)`` of the scalar curve."""
        return self._value(t, "lo"), self._value(t, "hi")

    def select(self, x, xi):
        xi, scalar = _batch(xi, self.dimension)
        if self.dimension == 1 and not self.radial:
            out = self._value(xi[:, 0])[:, None]
        else:
            out = self._radial_select(None, xi)
        return _unbatch(out, scalar)

    def _scalar_resolve(self, s: np.ndarray) -> np.ndarray:
        """Unique ``t`` with ``s in t + A(t)``, by locating the piece of the curve."""
        bp, lo, hi = self.bp, self.lo, self.hi
        h_lo, h_hi = bp + lo, bp + hi
        out = np.empty_like(s)
        i = np.searchsorted(h_hi, s, side="left")
        ic = np.clip(i, 0, bp.size - 1)
        on_jump = (i < bp.size) & (s >= h_lo[ic])
        ip = np.clip(i - 1, 0, bp.size - 1)
        slope = np.where(
            (i > 0) & (i < bp.size),
            (lo[ic] - hi[ip]) / np.where(bp[ic] > bp[ip], bp[ic] - bp[ip], 1.0),
            0.0,
        )
        inner = bp[ip] + (s - bp[ip] - hi[ip]) / (1.0 + slope)
        left = bp[0] + (s - bp[0] - lo[0]) / (1.0 + self._s_first)
        right = bp[-1] + (s - bp[-1] - hi[-1]) / (1.0 + self._s_last)
        out = np.where(i == 0, left, np.where(i == bp.size, right, inner))
        out = np.where(on_jump, bp[ic], out)
        return out

    def resolve(self, x, nu, tol=1e-12):
        nu, scalar = _batch(nu, self.dimension)
        if not self.radial:
            out = self._scalar_resolve(nu[:, 0])[:, None]
        else:
            s = np.linalg.norm(nu, axis=1)
            t = self._scalar_resolve(s)
            with np.errstate(all="ignore"):
                out = np.where(s[:, None] > 0, (t / np.where(s > 0, s, 1.0))[:, None] * nu, 0.0)
        return _unbatch(out, scalar)

    def contains(self, x, xi, eta, tol=1e-9):
        xi, _ = _batch(xi, self.dimension)
        eta, _ = _batch(eta, self.dimension)
        if not self.radial:
            a, b = self.interval(xi[:, 0])
            return (eta[:, 0] >= a - tol) & (eta[:, 0] <= b + tol)
        r = np.linalg.norm(xi, axis=1)
        a, b = self.interval(r)
        e = np.where(r[:, None] > 0, xi / np.where(r > 0, r, 1.0)[:, None], 0.0)
        proj = np.einsum("ij,ij->i", eta, e)
        perp = np.linalg.norm(eta - proj[:, None] * e, axis=1)
        on_ray = (proj >= a - tol) & (proj <= b + tol) & (perp <= tol)
        return np.where(r > 0, on_ray, np.linalg.norm(eta, axis=1) <= self.zero_radius + tol)

    def extreme_samples(self, rng, count=8):
        out = []
        if not self.radial:
            for b, l, h in zip(self.bp, self.lo, self.hi):
                xi = np.full((3, 1), b)
                out.append((xi, np.array([[l], [h], [0.5 * (l + h)]])))
            return out
        e = rng.normal(size=(count, self.dimension))
        e /= np.linalg.norm(e, axis=1)[:, None]
        if self.zero_radius > 0:
            out.append((np.zeros_like(e), self.zero_radius * e * rng.uniform(0, 1, (count, 1))))
        for b, l, h in zip(self.bp, self.lo, self.hi):
            if b > 0:
                out.append((b * e, l * e))
                out.append((b * e, h * e))
        return out


class SingleValuedGraph(MonotoneGraph):
    """A continuous monotone map ``a(x, xi)`` given as a callback."""

    kind = "single"

    def __init__(self, fn: Callable, dimension: int, *, radial_profile: Callable | None = None, kinks=(), **kw):
        super().__init__(dimension, **kw)
        self.fn = fn
        self.radial_profile = radial_profile
        self.kinks = tuple(kinks)

    def select(self, x, xi):
        xi, scalar = _batch(xi, self.dimension)
        out = np.asarray(self.fn(_xrows(x, xi.shape[0]), xi), dtype=float).reshape(xi.shape)
        return _unbatch(out, scalar)

    def resolve(self, x, nu, tol=1e-12):
        nu, scalar = _batch(nu, self.dimension)
        xr = _xrows(x, nu.shape[0])
        try:
            out = _newton_resolvent(lambda z: self.select(xr, z), nu, tol, self.dimension)
        except ResolventError:
            if self.dimension == 1:
                out = _bisect_resolvent_1d(lambda z: self.select(xr, z), nu, tol)
            elif self.radial_profile is not None:
                out = self._radial_resolve(xr, nu, tol)
            else:
                raise
        return _unbatch(out, scalar)


def _newton_resolvent(a: Callable, nu: np.ndarray, tol: float, d: int, max_iter: int = 100) -> np.ndarray:
    """Damped Newton on ``xi + a(xi) = nu`` with step halving (60-step cap)."""
    xi = 0.5 * nu.copy()
    eye = np.eye(d)

    def res(z):
        return z + a(z) - nu

    r = res(xi)
    for _ in range(max_iter):
        nr = np.linalg.norm(r, axis=1)
        if np.all(nr <= tol):
            return xi
        J = np.empty((nu.shape[0], d, d))
        for k in range(d):
            h = 1e-7 * np.maximum(1.0, np.abs(xi[:, k]))
            e = np.zeros_like(xi)
            e[:, k] = h
            J[:, :, k] = (a(xi + e) - a(xi - e)) / (2.0 * h)[:, None]
        J += eye
        try:
            step = np.linalg.solve(J, -r[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as err:
            raise ResolventError("singular Newton system") from err
        t = np.ones(nu.shape[0])
        active = nr > tol
        for _ in range(60):
            trial = xi + t[:, None] * step
            rt = res(trial)
            ok = (np.linalg.norm(rt, axis=1) < (1.0 - 1e-4 * t) * nr) | ~active
            if np.all(ok):
                break
            t = np.where(ok, t, 0.5 * t)
        else:
            raise ResolventError("line search failed in resolvent")
        xi = np.where(active[:, None], trial, xi)
        r = res(xi)
    if np.all(np.linalg.norm(r, axis=1) <= tol):
        return xi
    raise ResolventError("resolvent Newton iteration did not converge")


def _bisect_resolvent_1d(a, nu, tol):
    s = nu[:, 0]
    lo = np.minimum(s, 0.0) - 1.0
    hi = np.maximum(s, 0.0) + 1.0
    for _ in range(2000):
        flo = lo + a(lo[:, None])[:, 0] - s
        fhi = hi + a(hi[:, None])[:, 0] - s
        if np.all((flo <= 0) & (fhi >= 0)):
            break
        lo = np.where(flo > 0, 2 * lo - 1, lo)
        hi = np.where(fhi < 0, 2 * hi + 1, hi)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        g = mid + a(mid[:, None])[:, 0] - s
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g < 0, hi, mid)
        if np.all(hi - lo <= 0.25 * tol):
            break
    return (0.5 * (lo + hi))[:, None]


# ---------------------------------------------------------------------------
# built-in graphs


def identity_graph(dimension: int = 1, scale: float = 1.0, **kw) -> PotentialGraph:
    """``A(xi) = scale * xi``, the subdifferential of ``scale |xi|^2 / 2``."""
    G = PotentialGraph(
        lambda x, xi: 0.5 * scale * np.sum(xi * xi, axis=1),
        dimension,
        gradient=lambda x, xi: scale * xi,
        prox=lambda x, nu: nu / (1.0 + scale),
        radial_profile=lambda x, r: scale * np.asarray(r, dtype=float),
        strictly_monotone=True,
        name=kw.pop("name", "identity"),
        **kw,
    )
    G.linear_scale = float(scale)
    return G


def power_graph(p: float, dimension: int = 1, **kw) -> PotentialGraph:
    """Subdifferential of ``|xi|^p / p``: ``A(xi) = |xi|^{p-2} xi``."""
    if p <= 1:
        raise GraphError("power graph needs p > 1")

    def grad(x, xi):
        r = np.linalg.norm(xi, axis=1)
        with np.errstate(all="ignore"):
            f = np.where(r > 0, r ** (p - 2.0), 0.0)
        return f[:, None] * xi

    return PotentialGraph(
        lambda x, xi: np.linalg.norm(xi, axis=1) ** p / p,
        dimension,
        gradient=grad,
        radial_profile=lambda x, r: np.abs(np.asarray(r, dtype=float)) ** (p - 1.0),
        kinks=(0.0,),
        strictly_monotone=True,
        name=kw.pop("name", f"power(p={p:g})"),
        **kw,
    )


def _unit(xi):
    r = np.linalg.norm(xi, axis=1)
    with np.errstate(all="ignore"):
        return np.where(r[:, None] > 0, xi / np.where(r > 0, r, 1.0)[:, None], 0.0), r


def abs_graph(dimension: int = 1, **kw) -> PotentialGraph:
    """Subdifferential of ``|xi|``: the sign graph, ``A(0)`` the closed unit ball."""

    def prox(x, nu):
        e, r = _unit(nu)
        return np.maximum(r - 1.0, 0.0)[:, None] * e

    return PotentialGraph(
        lambda x, xi: np.linalg.norm(xi, axis=1),
        dimension,
        gradient=lambda x, xi: _unit(xi)[0],
        prox=prox,
        radial_profile=lambda x, r: np.where(np.asarray(r) > 0, 1.0, 0.0),
        kinks=(0.0,),
        zero_radius=1.0,
        name=kw.pop("name", "abs"),
        **kw,
    )


def abs_plus_identity_graph(dimension: int = 1, **kw) -> PotentialGraph:
    """Subdifferential of ``|xi|^2 / 2 + |xi|``: strictly monotone with a jump at 0."""

    def prox(x, nu):
        e, r = _unit(nu)
        return (0.5 * np.maximum(r - 1.0, 0.0))[:, None] * e

    return PotentialGraph(
        lambda x, xi: 0.5 * np.sum(xi * xi, axis=1) + np.linalg.norm(xi, axis=1),
        dimension,
        gradient=lambda x, xi: xi + _unit(xi)[0],
        prox=prox,
        radial_profile=lambda x, r: np.where(np.asarray(r) > 0, np.asarray(r, dtype=float) + 1.0, 0.0),
        kinks=(0.0,),
        zero_radius=1.0,
        strictly_monotone=True,
        name=kw.pop("name", "abs+identity"),
        **kw,
    )


def sign_graph(dimension: int = 1, *, plus_identity: bool = False, **kw) -> CurveGraph:
    """The sign graph as a breakpoint table, optionally plus the identity."""
    if plus_identity:
        rows = [(-1.0, -2.0, -2.0), (0.0, -1.0, 1.0), (1.0, 2.0, 2.0)]
        kw.setdefault("strictly_monotone", True)
        kw.setdefault("name", "sign+identity")
    else:
        rows = [(0.0, -1.0, 1.0)]
        kw.setdefault("name", "sign")
    return CurveGraph(rows, dimension, radial=dimension > 1, **kw)


# ---------------------------------------------------------------------------
# functional interface


def selection(G: MonotoneGraph, x, xi) -> np.ndarray:
    """One element of ``A(x, xi)``; deterministic."""
    return G.select(x, xi)


def resolvent(G: MonotoneGraph, x, nu, tol: float = 1e-12) -> np.ndarray:
    """``(I + A(x, .))^{-1} nu``."""
    return G.resolve(x, nu, tol)


def minty_transform(G: MonotoneGraph, x, nu, tol: float = 1e-10, return_pair: bool = False):
    """Rotated graph map ``mu = nu - 2 xi`` with ``xi`` the resolvent of ``nu``.

    Args:
        G: The graph.
        x: Domain point(s) or None.
        nu: Vector or batch.
        tol: Accuracy of the resolvent.
        return_pair: Also return the graph point ``(xi, eta)`` with ``xi + eta = nu``.

    Raises:
        ResolventError: when the root finder fails (non-monotone or non-maximal graph).
    """
    nu_b, scalar = _batch(nu, G.dimension)
    xi = np.asarray(G.resolve(x, nu_b, tol)).reshape(nu_b.shape)
    eta = nu_b - xi
    ok = G.contains(x, xi, eta, tol=max(tol, 1e-9))
    if not np.all(ok):
        raise ResolventError("resolvent residual above tolerance")
    mu = nu_b - 2.0 * xi
    if return_pair:
        return _unbatch(mu, scalar), _unbatch(xi, scalar), _unbatch(eta, scalar)
    return _unbatch(mu, scalar)


# ---------------------------------------------------------------------------
# mollification


def bump(r2) -> np.ndarray:
    """Unnormalized kernel ``exp(1 / (|s|^2 - 1))`` as a function of ``|s|^2``."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return out


@lru_cache(maxsize=None)
def kernel_constant(d: int) -> float:
    """Normalizing constant ``C`` with ``C * int_{|s|<1} bump = 1`` in dimension ``d``."""
    from scipy.integrate import quad

    area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    val, _ = quad(lambda r: math.exp(1.0 / (r * r - 1.0)) * r ** (d - 1), 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (area * val)


@lru_cache(maxsize=None)
def _composite_gauss(order: int, panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    nodes = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * t for a, b in zip(edges[:-1], edges[1:])])
    weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return nodes, weights


class MollifiedMap:
    """Mollified selection ``a_eps(x, xi) = int phi_eps(lam) a(x, xi - lam) dlam``.

    The quadrature depends on the graph:

    * 1-D: composite Gauss-Legendre on the window ``[xi - eps, xi + eps]``,
      split at the kinks of the selection;
    * radial graphs in 2-D: polar quadrature centred at the origin of the
      ``xi``-plane, split at kink radii, so the discontinuity of ``xi / |xi|``
      sits on a quadrature boundary;
    * otherwise: a tensor Gauss-Legendre rule over the kernel's cube.

    Kernel weights are normalized on each node set, so affine selections are
    reproduced exactly by the symmetric rules.

    Args:
        base: The graph.
        eps: Mollification width.
        quad_order: Gauss-Legendre nodes per panel and axis.
        panels: Panels per axis and per sub-interval.
        scheme: Force ``"interval"``, ``"polar"`` or ``"tensor"``.
        tabulate: For ``x``-independent graphs under the interval or polar
            rule, sample the one-dimensional profile once on a kink-adapted
            grid and evaluate a cubic spline through it (default). The spline
            matches the quadrature to about ``1e-8`` relative and its
            derivative is the exact Jacobian of the evaluated map.
    """

    def __init__(
        self,
        base: MonotoneGraph,
        eps: float,
        quad_order: int = 8,
        panels: int | None = None,
        scheme: str | None = None,
        tabulate: bool | None = None,
    ):
        if not eps > 0:
            raise GraphError("eps must be positive")
        if quad_order < 2:
            raise GraphError("quad_order must be at least 2")
        self.base = base
        self.eps = float(eps)
        self.quad_order = int(quad_order)
        d = base.dimension
        self.dimension = d
        self.kernel_constant = kernel_constant(d)
        if scheme is None:
            if d == 1:
                scheme = "interval"
            elif d == 2 and base.radial_profile is not None:
                scheme = "polar"
            else:
                scheme = "tensor"
        if scheme not in ("interval", "polar", "tensor"):
            raise GraphError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        if panels is None:
            panels = {"interval": 4, "polar": 2, "tensor": 2}[scheme]
        self.panels = int(panels)
        self._u, self._w = _composite_gauss(self.quad_order, self.panels)
        if scheme == "tensor":
            t = 2.0 * self._u - 1.0
            w = 2.0 * self._w
            grids = np.meshgrid(*([t] * d), indexing="ij")
            lam = np.stack([g.ravel() for g in grids], axis=1)
            wt = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
            k = bump(np.sum(lam * lam, axis=1)) * wt
            keep = k > 0
            self._lam = lam[keep]
            self._kw = k[keep] / k[keep].sum()
        if d == 1:
            ks = set(base.kinks)
            if base.radial_profile is not None and base.kind != "curve":
                ks |= {-k for k in base.kinks}
            self._kinks_1d = np.array(sorted(ks), dtype=float)
        else:
            self._kinks_r = np.array(sorted(k for k in base.kinks if k > 0), dtype=float)
        can_tab = base.homogeneous and scheme in ("interval", "polar") and base.linear_scale is None
        self.tabulate = can_tab if tabulate is None else bool(tabulate) and can_tab
        self._table = None
        self._table_lock = threading.Lock()

    def __call__(self, x, xi, chunk: int = 4096) -> np.ndarray:
        xi_b, scalar = _batch(xi, self.dimension)
        out, _ = self._run(x, xi_b, False, chunk)
        return _unbatch(out, scalar)

    def value_and_jacobian(self, x, xi, step: float | None = None, chunk: int = 4096):
        """Values ``(n, d)`` and Jacobians ``(n, d, d)``; column ``k`` is ``d a / d xi_k``.

        For the interval and polar rules the Jacobian differentiates the kernel
        with the nodes held fixed. The kernel vanishes to all orders on the
        window boundary, so node motion contributes only at quadrature-error
        level. The tensor rule, and any explicit ``step``, use central
        differences.
        """
        xi_b, _ = _batch(xi, self.dimension)
        if step is None and self.scheme != "tensor":
            return self._run(x, xi_b, True, chunk)
        val = self(x, xi_b)
        return val, self._fd_jacobian(x, xi_b, step)

    def jacobian(self, x, xi, step: float | None = None) -> np.ndarray:
        return self.value_and_jacobian(x, xi, step)[1]

    def _fd_jacobian(self, x, xi_b, step):
        n, d = xi_b.shape
        h = step if step is not None else 1e-4 * self.eps
        J = np.empty((n, d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            J[:, :, k] = (self(x, xi_b + e) - self(x, xi_b - e)) / (2.0 * h)
        return J

    def _run(self, x, xi_b, with_jac, chunk):
        n, d = xi_b.shape
        c = self.base.linear_scale
        if c is not None:
            # symmetric normalized rules reproduce linear maps exactly
            return c * xi_b, (np.broadcast_to(c * np.eye(d), (n, d, d)).copy() if with_jac else None)
        if self.tabulate:
            return self._eval_table(xi_b, with_jac)
        return self._run_direct(x, xi_b, with_jac, chunk)

    def _run_direct(self, x, xi_b, with_jac, chunk):
        n, d = xi_b.shape
        xr = _xrows(x, n)
        out = np.empty_like(xi_b)
        jac = np.empty((n, d, d)) if with_jac else None
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            xs = None if xr is None else xr[lo:hi]
            if self.scheme == "tensor":
                out[lo:hi] = self._eval_tensor(xs, xi_b[lo:hi])
                continue
            if self.scheme == "interval":
                v, j = self._eval_interval(xs, xi_b[lo:hi], with_jac)
                out[lo:hi] = v
                if with_jac:
                    jac[lo:hi] = j
                continue
            # polar: points whose window excludes the origin need no inner split
            blk = xi_b[lo:hi]
            near = np.linalg.norm(blk, axis=1) < self.eps
            for mask, inner in ((near, True), (~near, False)):
                if not np.any(mask):
                    continue
                v, j = self._eval_polar(None if xs is None else xs[mask], blk[mask], inner, with_jac)
                idx = np.arange(lo, hi)[mask]
                out[idx] = v
                if with_jac:
                    jac[idx] = j
        return out, jac

    # Tabulated profiles cover |xi| <= _TABLE_REACH; the range is fixed so that
    # evaluation does not depend on the order of calls.
    _TABLE_REACH = 1e3

    def _spline(self):
        with self._table_lock:
            if self._table is None:
                self._table = self._build_table(max(self._TABLE_REACH, 4.0 * float(np.max(np.abs(self._kinks()), initial=0.0))))
            return self._table

    def _kinks(self):
        return self._kinks_1d if self.scheme == "interval" else self._kinks_r

    def _build_table(self, reach):
        eps = self.eps
        radial = self.scheme == "polar"
        if radial:
            centres = np.concatenate([[0.0], self._kinks_r])
        else:
            centres = self._kinks_1d if self._kinks_1d.size else np.zeros(1)
        span = 2.0 * reach
        far = eps * np.geomspace(4.0, max(span / eps, 8.0), 1 + int(np.log(max(span / (4.0 * eps), 2.0)) / np.log(1.02)))
        pts = [np.linspace(-reach, reach, 201)]
        for c in centres:
            pts += [c + eps * np.linspace(-4.0, 4.0, 401), c + far, c - far]
        g = np.unique(np.concatenate(pts))
        g = g[(g >= 0.0 if radial else np.abs(g) <= reach) & (np.abs(g) <= reach)]
        g = g[np.concatenate([[True], np.diff(g) > eps / 200.0])]
        # central differences of the quadrature; the step scales with the distance to the nearest kink
        dist = np.min(np.abs(g[:, None] - centres[None, :]), axis=1)
        step = 1e-4 * np.maximum(eps, 1e-2 * dist)
        pts = np.concatenate([g, g + step, g - step])
        if radial:
            xi = np.stack([np.abs(pts), np.zeros_like(pts)], axis=1)
            v = np.sign(pts) * self._run_direct(None, xi, False, 4096)[0][:, 0]
        else:
            v = self._run_direct(None, pts[:, None], False, 4096)[0][:, 0]
        n = g.size
        vals, slope = v[:n], (v[n : 2 * n] - v[2 * n :]) / (2.0 * step)
        if radial:
            # odd extension; psi(0) = 0 by symmetry
            vals[0] = 0.0
            g = np.concatenate([-g[:0:-1], g])
            vals = np.concatenate([-vals[:0:-1], vals])
            slope = np.concatenate([slope[:0:-1], slope])
        spl = CubicHermiteSpline(g, vals, _monotone_slopes(g, vals, slope))
        spl.reach = reach
        return spl

    def _eval_table(self, xi_b, with_jac):
        n, d = xi_b.shape
        spl = self._spline()
        R = np.abs(xi_b[:, 0]) if d == 1 else np.linalg.norm(xi_b, axis=1)
        outside = R > spl.reach
        if d == 1:
            t = xi_b[:, 0]
            val = spl(t)[:, None]
            jac = spl(t, 1)[:, None, None] if with_jac else None
        else:
            psi = spl(R)
            pos = R > 0
            e = np.zeros_like(xi_b)
            e[pos] = xi_b[pos] / R[pos, None]
            val = psi[:, None] * e
            jac = None
            if with_jac:
                dpsi = spl(R, 1)
                ratio = np.where(pos, psi / np.where(pos, R, 1.0), dpsi)
                jac = ratio[:, None, None] * np.eye(d)[None] + (dpsi - ratio)[:, None, None] * np.einsum("ni,nj->nij", e, e)
        if np.any(outside):
            v, j = self._run_direct(None, xi_b[outside], with_jac, 4096)
            val[outside] = v
            if with_jac:
                jac[outside] = j
        return val, jac

    def _eval_tensor(self, xs, xi):
        n, d = xi.shape
        K = self._lam.shape[0]
        z = (xi[:, None, :] - self.eps * self._lam[None, :, :]).reshape(-1, d)
        xr = None if xs is None else np.repeat(xs, K, axis=0)
        a = np.asarray(self.base.select(xr, z), dtype=float).reshape(n, K, d)
        return np.einsum("k,nkd->nd", self._kw, a)

    def _eval_interval(self, xs, xi, with_jac):
        n = xi.shape[0]
        c = xi[:, 0]
        eps = self.eps
        a0, b0 = c - eps, c + eps
        inner = np.clip(self._kinks_1d[None, :], a0[:, None], b0[:, None])
        edges = np.concatenate([a0[:, None], inner, b0[:, None]], axis=1)
        length = np.diff(edges, axis=1)
        z = (edges[:, :-1, None] + length[:, :, None] * self._u[None, None, :]).reshape(n, -1)
        w = (length[:, :, None] * self._w[None, None, :]).reshape(n, -1)
        diff = (c[:, None] - z) / eps
        d2 = diff**2
        W = w * bump(d2)
        K = z.shape[1]
        xr = None if xs is None else np.repeat(xs, K, axis=0)
        a = np.asarray(self.base.select(xr, z.reshape(-1, 1)), dtype=float).reshape(n, K)
        D = np.sum(W, axis=1)
        val = np.sum(W * a, axis=1) / D
        if not with_jac:
            return val[:, None], None
        dW = W * _log_bump_slope(d2) * 2.0 * diff / eps
        jac = (np.sum(dW * a, axis=1) - val * np.sum(dW, axis=1)) / D
        return val[:, None], jac[:, None, None]

    def _eval_polar(self, xs, xi, near_origin, with_jac):
        n = xi.shape[0]
        eps = self.eps
        R = np.linalg.norm(xi, axis=1)
        th0 = np.arctan2(xi[:, 1], xi[:, 0])
        r_lo = np.maximum(0.0, R - eps)
        r_hi = R + eps
        cuts = [np.broadcast_to(self._kinks_r, (n, self._kinks_r.size))]
        if near_origin:
            cuts.append((eps - R)[:, None])
        splits = np.sort(np.clip(np.concatenate(cuts, axis=1), r_lo[:, None], r_hi[:, None]), axis=1)
        edges = np.concatenate([r_lo[:, None], splits, r_hi[:, None]], axis=1)
        length = np.diff(edges, axis=1)
        r = (edges[:, :-1, None] + length[:, :, None] * self._u[None, None, :]).reshape(n, -1)
        wr = (length[:, :, None] * self._w[None, None, :]).reshape(n, -1)
        with np.errstate(all="ignore"):
            cosd = (R[:, None] ** 2 + r**2 - eps**2) / (2.0 * r * R[:, None])
        full = (r + R[:, None]) <= eps
        delta = np.where(full, np.pi, np.arccos(np.clip(np.nan_to_num(cosd, nan=1.0), -1.0, 1.0)))
        v = 2.0 * self._u - 1.0
        wv = 2.0 * self._w
        th = th0[:, None, None] + delta[:, :, None] * v[None, None, :]
        wt = delta[:, :, None] * wv[None, None, :]
        cth, sth = np.cos(th), np.sin(th)
        dx = (xi[:, 0, None, None] - r[:, :, None] * cth) / eps
        dy = (xi[:, 1, None, None] - r[:, :, None] * sth) / eps
        d2 = dx * dx + dy * dy
        W = (wr * r)[:, :, None] * wt * bump(d2)
        L = r.shape[1]
        xr = None if xs is None else np.repeat(xs, L, axis=0)
        rho = np.asarray(self.base.radial_profile(xr, r.reshape(-1)), dtype=float).reshape(n, L)
        Wr = W * rho[:, :, None]
        D = np.sum(W, axis=(1, 2))
        val = np.stack([np.sum(Wr * cth, axis=(1, 2)), np.sum(Wr * sth, axis=(1, 2))], axis=1) / D[:, None]
        if not with_jac:
            return val, None
        g = W * _log_bump_slope(d2) * 2.0 / eps
        jac = np.empty((n, 2, 2))
        for k, dk in enumerate((dx, dy)):
            dW = g * dk
            dWr = dW * rho[:, :, None]
            dD = np.sum(dW, axis=(1, 2))
            jac[:, 0, k] = (np.sum(dWr * cth, axis=(1, 2)) - val[:, 0] * dD) / D
            jac[:, 1, k] = (np.sum(dWr * sth, axis=(1, 2)) - val[:, 1] * dD) / D
        return val, jac


def _monotone_slopes(x, y, m):
    """Limit Hermite slopes so the interpolant of nondecreasing data is nondecreasing (Fritsch-Carlson)."""
    m = np.maximum(np.asarray(m, dtype=float).copy(), 0.0)
    delta = np.diff(y) / np.diff(x)
    flat = delta <= 0.0
    m[:-1][flat] = 0.0
    m[1:][flat] = 0.0
    with np.errstate(all="ignore"):
        al = np.where(flat, 0.0, m[:-1] / delta)
        be = np.where(flat, 0.0, m[1:] / delta)
    r = np.hypot(al, be)
    tau = np.where(r > 3.0, 3.0 / np.where(r > 0, r, 1.0), 1.0)
    m[:-1] = np.minimum(m[:-1], np.where(flat, 0.0, tau * al * delta))
    m[1:] = np.minimum(m[1:], np.where(flat, 0.0, tau * be * delta))
    return m


def _log_bump_slope(d2):
    """Derivative of ``log bump`` with respect to ``|s|^2``, zero outside the support."""
    with np.errstate(all="ignore"):
        return np.where(d2 < 1.0, -1.0 / (d2 - 1.0) ** 2, 0.0)


def mollify(G: MonotoneGraph, eps: float, quad_order: int = 8, **kw) -> MollifiedMap:
    """Build the mollified selection of ``G`` with width ``eps``."""
    return MollifiedMap(G, eps, quad_order, **kw)


# ---------------------------------------------------------------------------
# checks


def _log_uniform_vectors(rng, count, d, lo=1e-3, hi=1e2):
    mag = np.exp(rng.uniform(np.log(lo), np.log(hi), count))
    v = rng.normal(size=(count, d))
    v /= np.linalg.norm(v, axis=1)[:, None]
    if d == 1:
        v = np.sign(v)
    return v * mag[:, None]


def check_monotone(G, x_samples=None, count: int = 1000, seed: int = 42, scale: float = 10.0) -> float:
    """Minimum of ``(g - h) . (xi - zeta)`` over sampled pairs (should be ``>= 0``)."""
    rng = np.random.default_rng(seed)
    d = G.dimension
    a = rng.uniform(-scale, scale, (count, d))
    b = rng.uniform(-scale, scale, (count, d))
    xs = None if x_samples is None else np.atleast_2d(x_samples)[rng.integers(0, len(x_samples), count)]
    g, h = G.select(xs, a), G.select(xs, b)
    return float(np.min(np.einsum("ij,ij->i", g - h, a - b)))


@dataclass
class A3Report:
    """Outcome of the sampled coercivity check.

    Attributes:
        worst_margin: Minimum of ``eta.xi - c_A (M + M~) + m`` over samples.
        violations: Offending ``(xi, eta, margin)`` rows below ``-tol``.
        passed: Whether ``worst_margin >= -tol``.
    """

    worst_margin: float
    violations: list = field(default_factory=list)
    passed: bool = True
    tol: float = 1e-6


def check_A3(
    G: MonotoneGraph,
    M: NFunction | None = None,
    sample_count: int = 500,
    seed: int = 42,
    *,
    x_samples=None,
    xi_range: tuple[float, float] = (1e-3, 1e2),
    tol: float = 1e-6,
) -> A3Report:
    """Sampled check of the coercivity inequality for the graph's witness.

    ``|xi|`` is drawn log-uniformly in ``xi_range``; set-valued points of the
    graph contribute their extreme elements.
    """
    w = G.witness
    if w is None:
        raise GraphError("graph has no coercivity witness")
    M = M or w.M
    rng = np.random.default_rng(seed)
    d = G.dimension
    xi = _log_uniform_vectors(rng, sample_count, d, *xi_range)
    xs = None
    if x_samples is not None:
        base = np.atleast_2d(np.asarray(x_samples, float))
        xs = base[rng.integers(0, base.shape[0], sample_count)]
    eta = np.asarray(G.select(xs, xi)).reshape(xi.shape)
    pairs = [(xs, xi, eta)]
    for xe, ee in G.extreme_samples(rng):
        xse = None if x_samples is None else base[rng.integers(0, base.shape[0], xe.shape[0])]
        pairs.append((xse, xe, ee))
    worst = np.inf
    bad = []
    for xsp, a, e in pairs:
        margin = np.einsum("ij,ij->i", e, a) - w.c_A * (M(xsp, a) + fenchel_conjugate(M, xsp, e)) + w.m_at(xsp, a.shape[0])
        worst = min(worst, float(margin.min()))
        for i in np.nonzero(margin < -tol)[0]:
            bad.append((a[i].tolist(), e[i].tolist(), float(margin[i])))
    return A3Report(worst_margin=worst, violations=bad, passed=worst >= -tol, tol=tol)


def _m2_covering(M: NFunction, s_needed: float, x_samples=None) -> ScalarConvexFn:
    m1, m2 = M.envelopes() if (M.homogeneous or M.domain_samples is not None) and x_samples is None else (None, None)
    if m2 is None or m2.breakpoints[-1] < s_needed:
        grid = np.concatenate([[0.0], np.geomspace(1e-3, max(1e3, 2.0 * s_needed), 241)])
        xs = x_samples if x_samples is not None else M.domain_samples
        _, m2 = stability_bounds(M, grid, xs)
    return m2


def growth_bound(G: MonotoneGraph, M: NFunction | None, xi, x=None, x_samples=None) -> np.ndarray:
    """Upper bound ``(m2~)^{-1}((2/c_A) m2(2|xi|/c_A) + (2/c_A) m(x))`` for ``|eta|``, ``eta in A(x, xi)``."""
    w = G.witness
    if w is None:
        raise GraphError("graph has no coercivity witness")
    M = M or w.M
    xi_b, scalar = _batch(xi, G.dimension)
    s = 2.0 * np.linalg.norm(xi_b, axis=1) / w.c_A
    m2 = _m2_covering(M, float(s.max(initial=0.0)), x_samples)
    xr = _xrows(x, xi_b.shape[0])
    arg = (2.0 / w.c_A) * m2(s) + (2.0 / w.c_A) * w.m_at(xr, xi_b.shape[0])
    out = np.asarray(m2.conjugate().inverse(arg))
    return float(out[0]) if scalar else out


def epsilon_estimate_margin(
    a_eps: MollifiedMap,
    witness: CoercivityWitness | None = None,
    count: int = 500,
    seed: int = 42,
    *,
    x_samples=None,
    xi_range: tuple[float, float] = (1e-3, 1e2),
) -> float:
    """Minimum over samples of the mollified coercivity margin.

    The margin is ``a_eps.xi - c_A M(xi) - (c_A/2) M~(a_eps) + m(x) + m2(2 eps / c_A)``,
    the uniform-in-eps estimate for mollified selections; the shift uses the
    kernel radius ``eps``, which is at most the eps-free bound ``m2(2/c_A)``
    once ``eps <= 1``.
    """
    w = witness or a_eps.base.witness
    if w is None:
        raise GraphError("graph has no coercivity witness")
    rng = np.random.default_rng(seed)
    d = a_eps.dimension
    xi = _log_uniform_vectors(rng, count, d, *xi_range)
    xs = None
    if x_samples is not None:
        base = np.atleast_2d(np.asarray(x_samples, float))
        xs = base[rng.integers(0, base.shape[0], count)]
    a = a_eps(xs, xi)
    m2 = _m2_covering(w.M, 2.0 * a_eps.eps / w.c_A, x_samples)
    shift = float(m2(2.0 * a_eps.eps / w.c_A))
    margin = (
        np.einsum("ij,ij->i", a, xi)
        - w.c_A * w.M(xs, xi)
        - 0.5 * w.c_A * fenchel_conjugate(w.M, xs, a)
        + w.m_at(xs, count)
        + shift
    )
    return float(margin.min())


def commutator_integral(G: MonotoneGraph, eps: float, grads, weights, x=None, quad_order: int = 8, panels: int = 2) -> float:
    """Quadrature of ``sum_c w_c int |a(x_c, g_c - s) . s| phi_eps(s) ds`` over cells."""
    probe = MollifiedMap(G, eps, quad_order, panels=panels, scheme="tensor")
    g, _ = _batch(grads, G.dimension)
    n, d = g.shape
    lam = probe._lam
    K = lam.shape[0]
    z = (g[:, None, :] - eps * lam[None, :, :]).reshape(-1, d)
    xr = None if x is None else np.repeat(_xrows(x, n), K, axis=0)
    a = np.asarray(G.select(xr, z), dtype=float).reshape(n, K, d)
    inner = np.abs(np.einsum("nkd,kd->nk", a, eps * lam))
    per_cell = inner @ probe._kw
    return float(np.dot(np.asarray(weights, dtype=float), per_cell))
