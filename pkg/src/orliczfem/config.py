"""Structured-text problem configuration.

A configuration is an INI file of named blocks::

    [nfunction M]
    family = power          # M = coef |xi|^p, coef defaults to 1/p
    p = 2
    dimension = 2

    [graph A]
    family = identity
    dimension = 2
    nfunction = M           # coercivity witness: c_A, m and the N-function
    c_A = 1
    m = 0

    [problem torsion]
    graph = A
    domain = disk
    h = 1/64
    datum = 1

    [run]
    seed = 42

Scalars may be written as constant expressions (``1/64``). Coefficient
fields use the expression grammar of :mod:`orliczfem.expr` with spatial
variables ``x1..xd`` (and ``r = |x|`` in data), gradient variables
``xi1..xid`` and the radius ``s`` in radial profiles. Keys are
case-insensitive. Expression errors are reported with the file line and
column of the offending character.

Recognized families:

* ``nfunction``: power (p, coef), variable-exponent (p_of_x, coef),
  double-phase (p, q, a_of_x), llogl (coef), exponential (coef),
  anisotropic-sum (terms = ``c:p, c:p, ...``), custom (expression or profile).
* ``graph``: identity (scale), power (p), abs, abs+identity, sign,
  sign+identity, curve (rows = ``xi:eta_minus:eta_plus; ...``, radial,
  policy), potential (potential, optional profile and kinks), map
  (``map = expr; expr`` one expression per component, optional profile).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import re
import threading
from dataclasses import dataclass, field

import numpy as np

from . import fem, monotone as mo, nfunc as nf
from .expr import ExpressionError, compile_expression

__all__ = [
    "ConfigError",
    "Block",
    "Config",
    "parse_config",
    "load_config",
    "build_nfunction",
    "build_graph",
    "build_problem",
    "ProblemOptions",
]

KINDS = ("nfunction", "graph", "problem", "sweep", "run")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` and ``column`` are 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0, column: int = 0, path: str = "<config>"):
        loc = f"{path}:{line}:{column}: " if line else f"{path}: "
        super().__init__(loc + message)
        self.message = message
        self.line = line
        self.column = column
        self.path = path


@dataclass
class Block:
    """One ``[kind name]`` section with value positions for error reports."""

    kind: str
    name: str
    entries: dict
    positions: dict = field(default_factory=dict)
    line: int = 0
    path: str = "<config>"

    @property
    def header(self) -> str:
        return f"{self.kind} {self.name}".strip()

    def has(self, key: str) -> bool:
        return key in self.entries

    def error(self, key: str | None, message: str) -> ConfigError:
        line, col = self.positions.get(key, (self.line, 1)) if key else (self.line, 1)
        return ConfigError(f"[{self.header}] {message}", line, col, self.path)

    def raw(self, key: str, default=None) -> str | None:
        return self.entries.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.entries:
            raise self.error(None, f"missing key {key!r}")
        return self.entries[key]

    def expression(self, key: str, names, default: str | None = None):
        src = self.entries.get(key, default)
        if src is None:
            raise self.error(None, f"missing key {key!r}")
        line, col = self.positions.get(key, (0, 1))
        try:
            return compile_expression(src, names, line_offset=max(line - 1, 0), column_offset=col - 1)
        except ExpressionError as err:
            raise ConfigError(f"[{self.header}] {key}: {err.message}", err.line if line else 0, err.column, self.path) from None

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.entries:
            if default is None:
                raise self.error(None, f"missing key {key!r}")
            return float(default)
        e = self.expression(key, ())
        return float(e({}))

    def integer(self, key: str, default: int | None = None) -> int:
        v = self.number(key, default)
        if v != int(v):
            raise self.error(key, f"{key} must be an integer")
        return int(v)

    def flag(self, key: str, default: bool = False) -> bool:
        v = self.entries.get(key)
        if v is None:
            return default
        s = v.strip().lower()
        if s in ("1", "yes", "true", "on"):
            return True
        if s in ("0", "no", "false", "off"):
            return False
        raise self.error(key, f"{key} must be a boolean")

    def numbers(self, key: str, default=None) -> tuple:
        if key not in self.entries:
            if default is None:
                raise self.error(None, f"missing key {key!r}")
            return tuple(default)
        out = []
        for part in _split_top(self.entries[key], ","):
            if not part.strip():
                continue
            try:
                out.append(float(compile_expression(part, ())({})))
            except ExpressionError as err:
                raise self.error(key, f"{key}: {err.message}") from None
        return tuple(out)

    def rows(self, key: str, width: int | None = None) -> list[tuple]:
        """Rows separated by ``;`` or newlines, fields by ``,``.

        When the text uses ``:`` the fields are ``:``-separated and commas also
        separate rows, so ``1:2, 1:4`` is two rows.
        """
        text = self.entries.get(key, "")
        colon = ":" in text
        out = []
        for chunk in re.split(r"[;\n,]" if colon else r"[;\n]", text):
            if not chunk.strip():
                continue
            fields = [f for f in chunk.split(":" if colon else ",") if f.strip()]
            try:
                row = tuple(float(compile_expression(f, ())({})) for f in fields)
            except ExpressionError as err:
                raise self.error(key, f"{key}: {err.message}") from None
            if width is not None and len(row) != width:
                raise self.error(key, f"{key}: rows need {width} fields, got {len(row)}")
            out.append(row)
        return out

    def words(self, key: str, default=()) -> tuple:
        if key not in self.entries:
            return tuple(default)
        return tuple(w.strip().lower() for w in self.entries[key].split(",") if w.strip())


def _split_top(text: str, sep: str) -> list[str]:
    """Split at ``sep`` outside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


_SECTION = re.compile(r"^\s*\[([^\]]*)\]")
_ENTRY = re.compile(r"^(\s*)([^=:#;\s\[][^=:]*?)\s*[=:]\s*")


def _positions(text: str) -> tuple[dict, dict]:
    """Map ``(section, key)`` to the (line, column) of the value, and sections to lines."""
    pos, sections = {}, {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            sections[section] = i
            continue
        if section is None or not line.strip() or line[0].isspace():
            continue
        m = _ENTRY.match(line)
        if m:
            pos[(section, m.group(2).strip().lower())] = (i, m.end() + 1)
    return pos, sections


@dataclass
class Config:
    """Parsed configuration: blocks keyed by ``(kind, name)``."""

    blocks: dict
    path: str = "<config>"

    def get(self, kind: str, name: str | None = None) -> Block:
        """The named block, or the only block of ``kind`` when ``name`` is None."""
        if name is not None:
            b = self.blocks.get((kind, name))
            if b is None:
                raise ConfigError(f"no [{kind} {name}] block", path=self.path)
            return b
        found = [b for (k, _), b in self.blocks.items() if k == kind]
        if len(found) != 1:
            what = "no" if not found else "more than one"
            raise ConfigError(f"{what} [{kind} ...] block; name one explicitly", path=self.path)
        return found[0]

    def find(self, name: str, kinds=KINDS) -> Block:
        """The block called ``name`` among ``kinds``."""
        found = [b for (k, n), b in self.blocks.items() if n == name and k in kinds]
        if not found:
            raise ConfigError(f"no block named {name!r}", path=self.path)
        if len(found) > 1:
            raise ConfigError(f"block name {name!r} is ambiguous", path=self.path)
        return found[0]

    def names(self, kind: str) -> list[str]:
        return [n for (k, n) in self.blocks if k == kind]

    def override(self, assignment: str, default: Block | None = None) -> None:
        """Apply ``NAME.key=value`` (or ``key=value`` to ``default``)."""
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not KEY=VALUE", path=self.path)
        key, value = (s.strip() for s in assignment.split("=", 1))
        if "." in key:
            name, key = key.split(".", 1)
            block = self.find(name)
        else:
            if default is None:
                raise ConfigError(f"override {assignment!r} needs a NAME. prefix", path=self.path)
            block = default
        block.entries[key.lower()] = value
        block.positions.pop(key.lower(), None)

    def set_seed(self, seed: int) -> None:
        run = self.blocks.setdefault(("run", ""), Block("run", "", {}, path=self.path))
        run.entries["seed"] = str(int(seed))

    @property
    def seed(self) -> int:
        run = self.blocks.get(("run", ""))
        return run.integer("seed", 42) if run is not None else 42

    def dumps(self) -> str:
        """Re-parseable text of the configuration, overrides included."""
        buf = io.StringIO()
        for (kind, name), b in self.blocks.items():
            buf.write(f"[{kind} {name}]\n" if name else f"[{kind}]\n")
            for k, v in b.entries.items():
                v = str(v).replace("\n", "\n    ")
                buf.write(f"{k} = {v}\n")
            buf.write("\n")
        return buf.getvalue()


def parse_config(text: str, path: str = "<config>") -> Config:
    """Parse configuration text.

    Raises:
        ConfigError: on syntax errors, unknown block kinds or duplicate blocks.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#",), strict=True, default_section="\x00")
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError("text before the first [block] header", err.lineno, 1, path) from None
    except configparser.DuplicateSectionError as err:
        raise ConfigError(f"duplicate block [{err.section}]", err.lineno or 0, 1, path) from None
    except configparser.DuplicateOptionError as err:
        raise ConfigError(f"duplicate key {err.option!r} in [{err.section}]", err.lineno or 0, 1, path) from None
    except configparser.ParsingError as err:
        lineno = err.errors[0][0] if err.errors else 0
        raise ConfigError("malformed line", lineno, 1, path) from None
    pos, lines = _positions(text)
    blocks: dict = {}
    for section in cp.sections():
        parts = section.split()
        kind = parts[0].lower() if parts else ""
        name = " ".join(parts[1:])
        if kind not in KINDS:
            raise ConfigError(f"unknown block kind {kind!r}", lines.get(section, 0), 1, path)
        if kind != "run" and not name:
            raise ConfigError(f"[{kind}] block needs a name", lines.get(section, 0), 1, path)
        entries = dict(cp.items(section))
        where = {k: pos[(section, k)] for k in entries if (section, k) in pos}
        blocks[(kind, name)] = Block(kind, name, entries, where, lines.get(section, 0), path)
    return Config(blocks, path)


def load_config(path: str) -> Config:
    """Read and parse a file; ``FileNotFoundError`` propagates."""
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


# ---------------------------------------------------------------------------
# builders


def _xnames(d: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(d))


def _xinames(d: int) -> tuple[str, ...]:
    return tuple(f"xi{i + 1}" for i in range(d))


def _field(expr, d: int, with_r: bool = False):
    """Callable on ``(n, d)`` point arrays from an expression in ``x1..xd`` (and ``r``)."""

    def fn(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {f"x{i + 1}": x[:, i] for i in range(min(d, x.shape[1]))}
        if with_r:
            env["r"] = np.linalg.norm(x, axis=1)
        return np.broadcast_to(expr(env), (x.shape[0],)).copy()

    return fn


def _gradient_env(d, x, xi, extra=None):
    env = {f"xi{i + 1}": xi[:, i] for i in range(d)}
    if x is not None:
        x = np.atleast_2d(x)
        env.update({f"x{i + 1}": x[:, i] for i in range(x.shape[1])})
    if extra:
        env.update(extra)
    return env


def _profile(expr):
    """Callable ``(x, s)`` from an expression in ``s`` and ``x1..xd``."""

    def fn(x, s):
        s = np.asarray(s, dtype=float)
        env = {"s": s}
        if x is not None:
            x = np.atleast_2d(x)
            env.update({f"x{i + 1}": (x[:, i, None] if s.ndim > 1 else x[:, i]) for i in range(x.shape[1])})
        return expr(env)

    return fn


def _with_flags(M: nf.NFunction, b: Block) -> nf.NFunction:
    flags = frozenset(w.upper() for w in b.words("flags"))
    bad = flags - {"C1", "C2"}
    if bad:
        raise b.error("flags", f"unknown condition flags {sorted(bad)}")
    return dataclasses.replace(M, condition_flags=flags, name=b.name, _cache={}, _lock=threading.Lock())


def build_nfunction(cfg: Config, name: str | None = None) -> nf.NFunction:
    """Construct the N-function of an ``[nfunction NAME]`` block."""
    b = cfg.get("nfunction", name)
    fam = b.require("family").strip().lower()
    d = b.integer("dimension", 1)
    if d < 1:
        raise b.error("dimension", "dimension must be positive")
    xs = _xnames(d)
    try:
        if fam == "power":
            p = b.number("p")
            M = nf.power(p, d, b.number("coef", 1.0 / p if p > 0 else 1.0))
        elif fam == "variable-exponent":
            M = nf.variable_exponent(_field(b.expression("p_of_x", xs), d), d, b.number("coef", 1.0))
        elif fam == "double-phase":
            M = nf.double_phase(b.number("p"), b.number("q"), _field(b.expression("a_of_x", xs), d), d)
        elif fam == "llogl":
            M = nf.llogl(d, b.number("coef", 1.0))
        elif fam == "exponential":
            M = nf.exponential(d, b.number("coef", 1.0))
        elif fam == "anisotropic-sum":
            terms = b.rows("terms", 2)
            if len(terms) != d and b.has("dimension"):
                raise b.error("terms", f"{len(terms)} terms for dimension {d}")
            M = nf.anisotropic_sum(terms)
        elif fam == "custom":
            M = _custom_nfunction(b, d)
        else:
            raise b.error("family", f"unknown N-function family {fam!r}")
    except nf.NFunctionError as err:
        raise b.error("family", str(err)) from None
    return _with_flags(M, b)


def _custom_nfunction(b: Block, d: int) -> nf.NFunction:
    xs = _xnames(d)
    if b.has("profile"):
        e = b.expression("profile", ("s",) + xs)
        return nf.custom(None, d, homogeneous=not (e.used & set(xs)), profile=_profile(e), name=b.name)
    e = b.expression("expression", _xinames(d) + xs)
    hom = not (e.used & set(xs))
    return nf.custom(lambda x, xi: e(_gradient_env(d, x, xi)), d, homogeneous=hom, name=b.name)


def _witness(cfg: Config, b: Block, d: int):
    if not b.has("nfunction"):
        return None
    M = build_nfunction(cfg, b.raw("nfunction").strip())
    if M.dimension != d:
        raise b.error("nfunction", f"N-function dimension {M.dimension} differs from graph dimension {d}")
    m_expr = b.expression("m", _xnames(d), default="0")
    if m_expr.is_constant:
        m = float(m_expr({}))
        m_sup = None
    else:
        m = _field(m_expr, d)
        m_sup = b.number("m_sup") if b.has("m_sup") else None
    try:
        return mo.CoercivityWitness(b.number("c_a", 1.0), M, m, m_sup)
    except mo.GraphError as err:
        raise b.error("c_a", str(err)) from None


def build_graph(cfg: Config, name: str | None = None, *, seed: int = 42, check: bool = True) -> mo.MonotoneGraph:
    """Construct the graph of a ``[graph NAME]`` block.

    With ``check`` the sampled monotonicity test runs, and a violation is a
    configuration error.
    """
    b = cfg.get("graph", name)
    fam = b.require("family").strip().lower()
    d = b.integer("dimension", 1)
    if d < 1:
        raise b.error("dimension", "dimension must be positive")
    kw = {"witness": _witness(cfg, b, d), "name": b.name}
    if b.has("strict"):
        kw["strictly_monotone"] = b.flag("strict")
    try:
        G = _graph_family(b, fam, d, kw)
    except mo.GraphError as err:
        raise b.error("family", str(err)) from None
    if check:
        worst = mo.check_monotone(G, seed=seed)
        if worst < -1e-9:
            raise b.error("family", f"graph is not monotone (sampled pair product {worst:.3g})")
    return G


def _graph_family(b: Block, fam: str, d: int, kw: dict) -> mo.MonotoneGraph:
    xs, xis = _xnames(d), _xinames(d)
    if fam == "identity":
        return mo.identity_graph(d, b.number("scale", 1.0), **kw)
    if fam == "power":
        return mo.power_graph(b.number("p"), d, **kw)
    if fam == "abs":
        return mo.abs_graph(d, **kw)
    if fam == "abs+identity":
        return mo.abs_plus_identity_graph(d, **kw)
    if fam in ("sign", "sign+identity"):
        if b.has("policy"):
            kw["policy"] = b.raw("policy").strip().lower()
        return mo.sign_graph(d, plus_identity=fam == "sign+identity", **kw)
    if fam == "curve":
        rows = b.rows("rows", 3)
        if not rows:
            raise b.error("rows", "curve needs at least one row")
        return mo.CurveGraph(rows, d, radial=b.flag("radial", d > 1), policy=b.raw("policy", "midpoint").strip().lower(), **kw)
    profile = None
    if b.has("profile"):
        profile = _profile(b.expression("profile", ("s",) + xs))
    kinks = b.numbers("kinks", ())
    homogeneous = True
    if fam == "potential":
        pot = b.expression("potential", xis + xs)
        homogeneous = not (pot.used & set(xs))
        return mo.PotentialGraph(lambda x, xi: pot(_gradient_env(d, x, xi)), d, radial_profile=profile, kinks=kinks, homogeneous=homogeneous, **kw)
    if fam == "map":
        parts = [p for p in _split_top(b.require("map"), ";") if p.strip()]
        if len(parts) != d:
            raise b.error("map", f"map needs {d} component expressions, got {len(parts)}")
        comps = []
        for i, src in enumerate(parts):
            sub = Block(b.kind, b.name, {"map": src}, {"map": b.positions.get("map", (0, 1))}, b.line, b.path)
            comps.append(sub.expression("map", xis + xs))
        homogeneous = not any(c.used & set(xs) for c in comps)

        def fn(x, xi):
            env = _gradient_env(d, x, xi)
            return np.stack([np.broadcast_to(c(env), (xi.shape[0],)) for c in comps], axis=1)

        return mo.SingleValuedGraph(fn, d, radial_profile=profile, kinks=kinks, homogeneous=homogeneous, **kw)
    raise b.error("family", f"unknown graph family {fam!r}")


@dataclass
class ProblemOptions:
    """Diagnostic settings of a ``[problem]`` block outside the problem definition.

    Attributes:
        diagnostics: Names of the checks to run.
        lam: Bound constant (None for the default).
        probes: Number of constant probes of the monotonicity gap.
        energy_eps: Widths entering the energy-constant variation (None: widths <= 0.1).
        energy_tolerance: Allowed relative variation of the energy constant.
        gap_tolerance: Allowed negative scaled monotonicity gap.
        wiggle: Allowed relative increase of the band fluxes.
    """

    diagnostics: tuple = ("energy", "radiation", "bound", "monotonicity", "membership")
    lam: float | None = None
    probes: int = 20
    energy_eps: tuple | None = None
    energy_tolerance: float = 0.2
    gap_tolerance: float = 1e-10
    wiggle: float = 0.1


DIAGNOSTICS = ("energy", "radiation", "bound", "monotonicity", "membership")


def _domain(b: Block, d: int):
    kind = b.raw("domain", "interval" if d == 1 else "disk").strip().lower()
    try:
        if kind == "interval":
            lo, hi = b.numbers("bounds", (-1.0, 1.0))
            return fem.Interval(lo, hi)
        if kind == "rectangle":
            vals = b.numbers("bounds", (0.0, 1.0, 0.0, 1.0))
            if len(vals) != 4:
                raise b.error("bounds", "rectangle bounds are a, b, c, d")
            return fem.Rectangle(*vals)
        if kind == "disk":
            return fem.Disk(b.number("radius", 1.0), b.numbers("center", (0.0, 0.0)))
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise b.error("domain", str(err)) from None
    raise b.error("domain", f"unknown domain {kind!r}")


def build_problem(cfg: Config, name: str | None = None, *, seed: int | None = None, force: bool = False):
    """Construct ``(ProblemSpec, ProblemOptions)`` from a ``[problem NAME]`` block.

    Raises:
        ConfigError: on any validation failure, including a failed coercivity check.
    """
    from .solver import DEFAULT_LEVELS, DEFAULT_SCHEDULE, ProblemError, ProblemSpec

    b = cfg.get("problem", name)
    seed = cfg.seed if seed is None else int(seed)
    G = build_graph(cfg, b.require("graph").strip(), seed=seed)
    d = G.dimension
    dom = _domain(b, d)
    if dom.dimension != d:
        raise b.error("domain", f"{dom.dimension}-D domain for a {d}-D graph")
    datum = _field(b.expression("datum", _xnames(d) + ("r",), default="1"), d, with_r=True)
    sing = tuple(tuple(r) for r in b.rows("singular_points", d)) if b.has("singular_points") else ()
    panels = b.integer("panels") if b.has("panels") else None
    try:
        spec = ProblemSpec(
            domain=dom,
            graph=G,
            datum=datum,
            h=b.number("h", 1.0 / 32),
            eps_schedule=b.numbers("eps_schedule", DEFAULT_SCHEDULE),
            newton_tol=b.number("newton_tol") if b.has("newton_tol") else None,
            max_newton=b.integer("max_newton", 50),
            levels=b.numbers("levels", DEFAULT_LEVELS),
            singular_points=sing,
            quad_order=b.integer("quad_order", 8),
            panels=panels,
            width_override=b.number("width") if b.has("width") else None,
            force=force,
            seed=seed,
        )
    except (ProblemError, mo.GraphError, fem.MeshError, nf.NFunctionError) as err:
        raise b.error(None, str(err)) from None
    diags = b.words("diagnostics", DIAGNOSTICS)
    unknown = set(diags) - set(DIAGNOSTICS)
    if unknown:
        raise b.error("diagnostics", f"unknown diagnostics {sorted(unknown)}")
    opts = ProblemOptions(
        diagnostics=diags,
        lam=b.number("lam") if b.has("lam") else None,
        probes=b.integer("probes", 20),
        energy_eps=b.numbers("energy_eps") if b.has("energy_eps") else None,
        energy_tolerance=b.number("energy_tolerance", 0.2),
        gap_tolerance=b.number("gap_tolerance", 1e-10),
        wiggle=b.number("wiggle", 0.1),
    )
    if opts.lam is not None and not opts.lam > 1:
        raise b.error("lam", "lam must exceed 1")
    if not math.isfinite(spec.h) or spec.h <= 0:
        raise b.error("h", "h must be positive")
    return spec, opts
