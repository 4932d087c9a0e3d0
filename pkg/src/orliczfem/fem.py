"""Meshes, P1 finite-element functions, load vectors and nonlinear assembly.

Cells are intervals (1-D) or triangles (2-D). Gradients of P1 functions are
cellwise constant, so the flux term uses the centroid. Assembly accumulates
cell contributions with ``np.bincount`` in cell order, which is serial and
bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "MeshError",
    "Interval",
    "Rectangle",
    "Disk",
    "Mesh",
    "generate_mesh",
    "FeFunction",
    "QuadratureDatum",
    "quadrature_datum",
    "truncate",
    "assemble_residual",
    "assemble_jacobian",
    "assemble_system",
    "modular_energy",
    "solve_linear",
    "LinearSolveError",
]


class MeshError(ValueError):
    """Degenerate domain, resolution or mesh mismatch."""


class LinearSolveError(RuntimeError):
    """Linear solver breakdown."""


@dataclass(frozen=True)
class Interval:
    a: float = 0.0
    b: float = 1.0

    @property
    def measure(self) -> float:
        return self.b - self.a

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class Rectangle:
    a: float = 0.0
    b: float = 1.0
    c: float = 0.0
    d: float = 1.0

    @property
    def measure(self) -> float:
        return (self.b - self.a) * (self.d - self.c)

    @property
    def dimension(self) -> int:
        return 2


@dataclass(frozen=True)
class Disk:
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    @property
    def measure(self) -> float:
        return math.pi * self.radius**2

    @property
    def dimension(self) -> int:
        return 2


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh with per-cell geometry.

    Attributes:
        vertices: Coordinates ``(nv, dim)``.
        cells: Vertex indices ``(nc, dim + 1)``.
        boundary: Boolean mask of boundary vertices.
        volumes: Cell lengths or areas.
        grads: Basis-function gradients ``(nc, dim + 1, dim)``.
        domain: The domain descriptor.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    volumes: np.ndarray = field(init=False)
    grads: np.ndarray = field(init=False)
    domain: object = None

    def __post_init__(self):
        vol, grads = _geometry(self.vertices, self.cells)
        if np.any(vol <= 0):
            raise MeshError("non-positive cell volume")
        object.__setattr__(self, "volumes", vol)
        object.__setattr__(self, "grads", grads)
        object.__setattr__(self, "interior", np.nonzero(~self.boundary)[0])

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def measure(self) -> float:
        return float(self.volumes.sum())

    @property
    def area_deficit(self) -> float:
        """Measure of the true domain minus the mesh measure (nonzero for polygonal disks)."""
        exact = getattr(self.domain, "measure", None)
        return 0.0 if exact is None else float(exact - self.measure)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def h(self) -> float:
        pts = self.vertices[self.cells]
        diam = np.zeros(self.n_cells)
        k = self.cells.shape[1]
        for i in range(k):
            for j in range(i + 1, k):
                diam = np.maximum(diam, np.linalg.norm(pts[:, i] - pts[:, j], axis=1))
        return float(diam.max())

    def write(self, path) -> None:
        """Plain-text export: vertex block then cell block, with headers."""
        with open(path, "w", newline="\n") as fh:
            fh.write(f"vertices {self.n_vertices} dim {self.dimension}\n")
            for i, v in enumerate(self.vertices):
                fh.write(" ".join([str(i)] + [f"{c:.17g}" for c in v] + [str(int(self.boundary[i]))]) + "\n")
            fh.write(f"cells {self.n_cells}\n")
            for c in self.cells:
                fh.write(" ".join(str(int(i)) for i in c) + "\n")


def _geometry(vertices, cells):
    pts = vertices[cells]
    if vertices.shape[1] == 1:
        length = pts[:, 1, 0] - pts[:, 0, 0]
        g = np.stack([-1.0 / length, 1.0 / length], axis=1)[:, :, None]
        return length, g
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of the inverse edge matrix are the gradients of barycentric coordinates 1 and 2
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    return 0.5 * det, np.stack([g0, g1, g2], axis=1)


def generate_mesh(domain, h: float) -> Mesh:
    """Build a mesh of resolution ``h``.

    Args:
        domain: :class:`Interval`, :class:`Rectangle` or :class:`Disk`.
        h: Target cell size.

    Returns:
        Uniform subdivision of an interval; a structured triangulation of a
        rectangle with alternating diagonals; or concentric rings of ``6 i``
        vertices triangulating a regular ``6 n``-gon inscribed in a disk.
    """
    if not h > 0:
        raise MeshError("h must be positive")
    if isinstance(domain, Interval):
        if not domain.b > domain.a:
            raise MeshError("degenerate interval")
        if h >= domain.measure:
            raise MeshError("h must be smaller than the domain diameter")
        n = max(1, int(math.ceil(domain.measure / h - 1e-9)))
        x = np.linspace(domain.a, domain.b, n + 1)
        cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        bnd = np.zeros(n + 1, dtype=bool)
        bnd[[0, -1]] = True
        return Mesh(x[:, None], cells, bnd, domain=domain)
    if isinstance(domain, Rectangle):
        lx, ly = domain.b - domain.a, domain.d - domain.c
        if not (lx > 0 and ly > 0):
            raise MeshError("degenerate rectangle")
        if h >= math.hypot(lx, ly):
            raise MeshError("h must be smaller than the domain diameter")
        nx = max(1, int(math.ceil(lx / h - 1e-9)))
        ny = max(1, int(math.ceil(ly / h - 1e-9)))
        xs = np.linspace(domain.a, domain.b, nx + 1)
        ys = np.linspace(domain.c, domain.d, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        verts = np.stack([X.ravel(), Y.ravel()], axis=1)
        idx = lambda i, j: i * (ny + 1) + j  # noqa: E731
        cells = []
        for i in range(nx):
            for j in range(ny):
                v00, v10, v01, v11 = idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)
                if (i + j) % 2 == 0:
                    cells += [(v00, v10, v11), (v00, v11, v01)]
                else:
                    cells += [(v00, v10, v01), (v10, v11, v01)]
        bnd = (np.isclose(verts[:, 0], domain.a) | np.isclose(verts[:, 0], domain.b)
               | np.isclose(verts[:, 1], domain.c) | np.isclose(verts[:, 1], domain.d))
        return Mesh(verts, _orient(verts, np.array(cells)), bnd, domain=domain)
    if isinstance(domain, Disk):
        if not domain.radius > 0:
            raise MeshError("degenerate disk")
        if h >= 2.0 * domain.radius:
            raise MeshError("h must be smaller than the domain diameter")
        return _disk_mesh(domain, h)
    raise MeshError(f"unsupported domain {domain!r}")


def _orient(verts, cells):
    pts = verts[cells]
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    cells = cells.copy()
    flip = det < 0
    cells[flip, 1], cells[flip, 2] = cells[flip, 2].copy(), cells[flip, 1].copy()
    return cells


def _disk_mesh(domain: Disk, h: float) -> Mesh:
    rings = max(1, int(math.ceil(domain.radius / h - 1e-9)))
    verts = [np.array([0.0, 0.0])]
    ring_idx = [np.array([0])]
    for i in range(1, rings + 1):
        n = 6 * i
        th = 2.0 * np.pi * np.arange(n) / n
        r = domain.radius * i / rings
        start = len(verts)
        verts.extend(np.stack([r * np.cos(th), r * np.sin(th)], axis=1))
        ring_idx.append(np.arange(start, start + n))
    verts = np.array(verts)
    cells = []
    for i in range(1, rings + 1):
        inner, outer = ring_idx[i - 1], ring_idx[i]
        n_in, n_out = inner.size, outer.size
        if n_in == 1:
            for b in range(n_out):
                cells.append((inner[0], outer[b], outer[(b + 1) % n_out]))
            continue
        a = b = 0
        while a < n_in or b < n_out:
            next_in = (a + 1) / n_in
            next_out = (b + 1) / n_out
            if b < n_out and (a >= n_in or next_out <= next_in + 1e-12):
                cells.append((inner[a % n_in], outer[b], outer[(b + 1) % n_out]))
                b += 1
            else:
                cells.append((inner[a], outer[b % n_out], inner[(a + 1) % n_in]))
                a += 1
    verts = verts + np.asarray(domain.center)[None, :]
    bnd = np.zeros(verts.shape[0], dtype=bool)
    bnd[ring_idx[-1]] = True
    return Mesh(verts, _orient(verts, np.array(cells)), bnd, domain=domain)


# ---------------------------------------------------------------------------
# functions


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Continuous P1 function vanishing on the boundary.

    Attributes:
        mesh: The mesh.
        values: Nodal values; boundary entries must be zero.
    """

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise MeshError("nodal value count does not match the mesh")
        if np.any(v[self.mesh.boundary] != 0.0):
            raise MeshError("boundary values must vanish")
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, mesh: Mesh) -> "FeFunction":
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def from_interior(cls, mesh: Mesh, interior_values) -> "FeFunction":
        v = np.zeros(mesh.n_vertices)
        v[mesh.interior] = interior_values
        return cls(mesh, v)

    @classmethod
    def interpolate(cls, mesh: Mesh, fn: Callable[[np.ndarray], np.ndarray]) -> "FeFunction":
        v = np.asarray(fn(mesh.vertices), dtype=float).reshape(mesh.n_vertices).copy()
        v[mesh.boundary] = 0.0
        return cls(mesh, v)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.mesh.interior]

    def gradient(self) -> np.ndarray:
        """Cellwise gradient ``(nc, dim)``."""
        return np.einsum("cv,cvd->cd", self.values[self.mesh.cells], self.mesh.grads)

    def centroid_values(self) -> np.ndarray:
        return self.values[self.mesh.cells].mean(axis=1)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def l1_norm(self) -> float:
        """Exact integral of ``|u|`` for P1 functions."""
        return float(np.dot(self.mesh.volumes, _cell_abs_mean(self.values[self.mesh.cells])))

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        if other.mesh is not self.mesh:
            raise MeshError("mesh mismatch")
        return FeFunction(self.mesh, self.values - other.values)

    def __add__(self, other: "FeFunction") -> "FeFunction":
        if other.mesh is not self.mesh:
            raise MeshError("mesh mismatch")
        return FeFunction(self.mesh, self.values + other.values)

    def __mul__(self, c: float) -> "FeFunction":
        return FeFunction(self.mesh, c * self.values)

    __rmul__ = __mul__


def _cell_abs_mean(v: np.ndarray) -> np.ndarray:
    """Mean of ``|u|`` over each cell for linear ``u`` with vertex values ``v``.

    Sign-definite cells give the mean of ``|v|``; mixed cells are split by
    numerical integration on a fine barycentric lattice.
    """
    out = np.abs(v).mean(axis=1)
    mixed = (v.min(axis=1) < 0) & (v.max(axis=1) > 0)
    if np.any(mixed):
        vm = v[mixed]
        if v.shape[1] == 2:
            a, b = vm[:, 0], vm[:, 1]
            # |linear| on [0,1] crossing zero at t0 = a/(a-b)
            out[mixed] = 0.5 * (a * a + b * b) / (np.abs(a) + np.abs(b))
        else:
            out[mixed] = _tri_abs_mean(vm)
    return out


def _tri_abs_mean(v: np.ndarray) -> np.ndarray:
    # The zero line cuts off a sub-triangle at the vertex whose sign differs
    # from the other two; integrate both signed parts exactly.
    pos = v > 0
    lone = np.where(pos.sum(axis=1) == 1, np.argmax(pos, axis=1), np.argmax(~pos, axis=1))
    rows = np.arange(v.shape[0])
    a = v[rows, lone]
    o1 = v[rows, (lone + 1) % 3]
    o2 = v[rows, (lone + 2) % 3]
    frac = (a / (a - o1)) * (a / (a - o2))
    small = frac * a / 3.0
    return np.abs(small) + np.abs(v.mean(axis=1) - small)


def truncate(u: FeFunction, k: float) -> FeFunction:
    """Nodal clamp to ``[-k, k]`` (the interpolant of the truncation)."""
    if not k > 0:
        raise MeshError("truncation level must be positive")
    return FeFunction(u.mesh, np.clip(u.values, -k, k))


# ---------------------------------------------------------------------------
# quadrature data

_GAUSS3_1D = (np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)]), np.array([5.0, 8.0, 5.0]) / 18.0)

_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
_TRI7_W = np.array([0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506, 0.125939180544827, 0.125939180544827, 0.125939180544827])


def _cell_rule(dim: int):
    if dim == 1:
        t, w = _GAUSS3_1D
        return np.stack([1.0 - t, t], axis=1), w
    return _TRI7_BARY, _TRI7_W


@dataclass(frozen=True, eq=False)
class QuadratureDatum:
    """Datum ``f`` sampled at cell quadrature points.

    Attributes:
        mesh: The mesh.
        cell: Owning cell of each point.
        bary: Barycentric coordinates of each point in its cell.
        weights: Quadrature weights (sum to the mesh measure).
        values: ``f`` at the points.
    """

    mesh: Mesh
    cell: np.ndarray
    bary: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.einsum("qv,qvd->qd", self.bary, self.mesh.vertices[self.mesh.cells[self.cell]])

    def truncated(self, level: float | None) -> np.ndarray:
        if level is None or not np.isfinite(level):
            return self.values
        return np.clip(self.values, -level, level)

    def load_vector(self, level: float | None = None) -> np.ndarray:
        """``int T_level(f) phi_i`` for every vertex."""
        fv = self.truncated(level) * self.weights
        idx = self.mesh.cells[self.cell]
        return np.bincount(idx.ravel(), (self.bary * fv[:, None]).ravel(), minlength=self.mesh.n_vertices)

    def cell_integrals(self, level: float | None = None, absolute: bool = True) -> np.ndarray:
        fv = self.truncated(level)
        if absolute:
            fv = np.abs(fv)
        return np.bincount(self.cell, fv * self.weights, minlength=self.mesh.n_cells)

    def l1_norm(self, level: float | None = None) -> float:
        return float(np.dot(np.abs(self.truncated(level)), self.weights))

    def scaled(self, c: float) -> "QuadratureDatum":
        return QuadratureDatum(self.mesh, self.cell, self.bary, self.weights, c * self.values)


def quadrature_datum(mesh: Mesh, f, singular_points: Sequence = (), subdivision: int = 1) -> QuadratureDatum:
    """Sample ``f`` with a 7-point triangle rule (3-point Gauss in 1-D).

    Cells touching a listed singular point are refined ``subdivision`` times
    (4 children per triangle, 2 per interval) before applying the rule.

    Args:
        mesh: The mesh.
        f: Callable on ``(n, dim)`` points, a constant, or an :class:`FeFunction`
            (interpolated linearly).
        singular_points: Points where ``f`` blows up.
        subdivision: Refinement levels for those cells.
    """
    dim = mesh.dimension
    bary0, w0 = _cell_rule(dim)
    sub_b, sub_w = _refined_rule(bary0, w0, dim, subdivision)
    nc = mesh.n_cells
    touch = np.zeros(nc, dtype=bool)
    if len(singular_points):
        pts = mesh.vertices[mesh.cells]
        for sp_ in np.atleast_2d(np.asarray(singular_points, float)):
            touch |= _contains(pts, sp_)
    plain = np.nonzero(~touch)[0]
    ref = np.nonzero(touch)[0]
    cell = np.concatenate([np.repeat(plain, len(w0)), np.repeat(ref, len(sub_w))])
    bary = np.concatenate([np.tile(bary0, (plain.size, 1)), np.tile(sub_b, (ref.size, 1))])
    wts = np.concatenate([np.tile(w0, plain.size), np.tile(sub_w, ref.size)]) * mesh.volumes[cell]
    order = np.argsort(cell, kind="stable")
    cell, bary, wts = cell[order], bary[order], wts[order]
    if isinstance(f, FeFunction):
        vals = np.einsum("qv,qv->q", bary, f.values[mesh.cells[cell]])
    elif callable(f):
        pts = np.einsum("qv,qvd->qd", bary, mesh.vertices[mesh.cells[cell]])
        with np.errstate(all="ignore"):
            vals = np.asarray(f(pts), dtype=float).reshape(-1)
        if vals.size == 1:
            vals = np.full(cell.size, float(vals[0]))
    else:
        vals = np.full(cell.size, float(f))
    if not np.all(np.isfinite(vals)):
        raise MeshError("datum is not finite at a quadrature point")
    return QuadratureDatum(mesh, cell, bary, wts, vals)


def _contains(pts, p, tol=1e-12):
    if pts.shape[2] == 1:
        return (pts[:, :, 0].min(axis=1) - tol <= p[0]) & (p[0] <= pts[:, :, 0].max(axis=1) + tol)
    a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]

    def cross(u, v, w):
        return (v[:, 0] - u[:, 0]) * (w[1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w[0] - u[:, 0])

    d1, d2, d3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
    scale = tol * (np.abs(d1) + np.abs(d2) + np.abs(d3) + 1.0)
    return ((d1 >= -scale) & (d2 >= -scale) & (d3 >= -scale)) | ((d1 <= scale) & (d2 <= scale) & (d3 <= scale))


def _refined_rule(bary0, w0, dim, levels):
    """Apply the base rule on uniformly refined children, in parent barycentrics."""
    if dim == 1:
        children = [np.array([[1.0, 0.0], [0.0, 1.0]])]
        for _ in range(levels):
            nxt = []
            for ch in children:
                m = 0.5 * (ch[0] + ch[1])
                nxt += [np.array([ch[0], m]), np.array([m, ch[1]])]
            children = nxt
    else:
        children = [np.eye(3)]
        for _ in range(levels):
            nxt = []
            for ch in children:
                a, b, c = ch
                ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
                nxt += [np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]), np.array([ab, bc, ca])]
            children = nxt
    frac = 1.0 / len(children)
    b = np.concatenate([bary0 @ ch for ch in children])
    w = np.concatenate([w0 * frac for _ in children])
    return b, w


# ---------------------------------------------------------------------------
# assembly


def _flux_x(a_eps, mesh):
    return None if getattr(a_eps.base, "homogeneous", True) else mesh.centroids


def assemble_residual(a_eps, u: FeFunction, datum: QuadratureDatum, level: float | None = None) -> np.ndarray:
    """Interior residual ``sum_c vol a_eps(grad u) . grad phi_i - int T_level(f) phi_i``."""
    if datum.mesh is not u.mesh:
        raise MeshError("mesh mismatch")
    mesh = u.mesh
    flux = a_eps(_flux_x(a_eps, mesh), u.gradient())
    return _residual_from_flux(mesh, flux, datum.load_vector(level))


def _residual_from_flux(mesh, flux, load):
    local = mesh.volumes[:, None] * np.einsum("cvd,cd->cv", mesh.grads, flux)
    r = np.bincount(mesh.cells.ravel(), local.ravel(), minlength=mesh.n_vertices) - load
    return r[mesh.interior]


def _jacobian_from_local(mesh, D):
    K = mesh.volumes[:, None, None] * np.einsum("cid,cde,cje->cij", mesh.grads, D, mesh.grads)
    k = mesh.cells.shape[1]
    rows = np.repeat(mesh.cells, k, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, k)).ravel()
    J = sp.csr_matrix((K.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    inter = mesh.interior
    return J[inter][:, inter].tocsr()


def assemble_jacobian(a_eps, u: FeFunction, fd_step: float | None = None) -> sp.csr_matrix:
    """Interior Jacobian of the residual with respect to interior nodal values."""
    return assemble_system(a_eps, u, None, None, fd_step)[1]


def assemble_system(a_eps, u: FeFunction, datum: QuadratureDatum | None, level=None, fd_step=None):
    """Residual (or None without datum), Jacobian and cell fluxes in one pass."""
    mesh = u.mesh
    flux, D = a_eps.value_and_jacobian(_flux_x(a_eps, mesh), u.gradient(), fd_step)
    J = _jacobian_from_local(mesh, D)
    r = None if datum is None else _residual_from_flux(mesh, flux, datum.load_vector(level))
    return r, J, flux


def modular_energy(M, u: FeFunction) -> float:
    """``sum_c vol M(x_c, grad u)``."""
    mesh = u.mesh
    x = None if M.homogeneous else mesh.centroids
    return float(np.dot(mesh.volumes, M(x, u.gradient())))


def solve_linear(J: sp.spmatrix, rhs: np.ndarray, dimension: int, sym_tol: float = 1e-6, rtol: float = 1e-12) -> np.ndarray:
    """Solve ``J x = rhs``: banded direct in 1-D, Jacobi-preconditioned CG in 2-D.

    In 2-D the matrix is symmetrized when ``|J - J^T| <= sym_tol |J|``; a
    nonsymmetric matrix or a CG failure falls back to a sparse direct solve.
    """
    if dimension == 1:
        J = J.tocsr()
        n = J.shape[0]
        if n == 0:
            return np.zeros(0)
        ab = np.zeros((3, n))
        ab[1] = J.diagonal()
        ab[0, 1:] = J.diagonal(1)
        ab[2, :-1] = J.diagonal(-1)
        try:
            return scipy.linalg.solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as err:
            raise LinearSolveError(str(err)) from err
    J = J.tocsr()
    asym = abs(J - J.T).max() if J.nnz else 0.0
    scale = abs(J).max() if J.nnz else 1.0
    if asym <= sym_tol * scale:
        A = (0.5 * (J + J.T)).tocsr()
        diag = A.diagonal()
        if np.all(diag > 0):
            Minv = sp.diags(1.0 / diag)
            x, info = spla.cg(A, rhs, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0], M=Minv)
            if info == 0:
                return x
    try:
        x = spla.spsolve(J.tocsc(), rhs)
    except Exception as err:  # noqa: BLE001
        raise LinearSolveError(str(err)) from err
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("direct solve produced non-finite values")
    return x
