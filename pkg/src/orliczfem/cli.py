"""Command-line front end.

Subcommands: ``solve``, ``conjugate``, ``minty``, ``bound``, ``rearrange``,
``sweep`` and ``selftest``. Exit codes: 0 success, 2 diagnostics failed,
1 solver failure, 64 usage or configuration error (with line/column when the
error is in the file), 66 missing input file.

CSV output has a header row, comma separators, 17 significant digits and LF
line endings.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, acceptance, fem
from . import monotone as mo
from . import nfunc as nf
from . import rearrange as ra
from . import solver as so
from .config import Config, ConfigError, build_graph, build_nfunction, build_problem, load_config, parse_config
from .expr import ExpressionError

log = logging.getLogger("orliczfem")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_DIAGNOSTICS = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66


class UsageError(Exception):
    """Bad command line or unusable output location."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Parsed command line."""

    subcommand: str
    config_path: str | None
    out: str | None
    overrides: list = field(default_factory=list)
    seed: int | None = None
    force: bool = False
    quiet: bool = False
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# output helpers


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv_text(header, rows))


def _emit(run: RunConfig, filename: str, header, rows) -> None:
    """Write a table to ``--out DIR/filename`` or to stdout."""
    if run.out is None:
        sys.stdout.write(csv_text(header, rows))
        return
    os.makedirs(run.out, exist_ok=True)
    path = os.path.join(run.out, filename)
    if os.path.exists(path) and not run.force:
        raise UsageError(f"{path} exists; use --force to overwrite")
    write_csv(path, header, rows)
    log.info("wrote %s", path)


class RunDirectory:
    """Build a run directory in a sibling temporary and move it into place on success."""

    def __init__(self, target: str, force: bool):
        self.target = os.path.abspath(target)
        parent = os.path.dirname(self.target) or "."
        if os.path.exists(self.target):
            if not os.path.isdir(self.target):
                raise UsageError(f"{self.target} exists and is not a directory")
            if os.listdir(self.target) and not force:
                raise UsageError(f"{self.target} holds a previous run; use --force to replace it")
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=f".{os.path.basename(self.target)}.", dir=parent)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def commit(self) -> str:
        old = None
        if os.path.exists(self.target):
            old = self.tmp + ".old"
            os.rename(self.target, old)
        os.rename(self.tmp, self.target)
        if old:
            shutil.rmtree(old, ignore_errors=True)
        return self.target

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


# ---------------------------------------------------------------------------
# solve


@dataclass
class Diagnostic:
    name: str
    status: str  # PASS, FAIL, SKIP or INFO
    detail: str


def _energy_widths(spec: so.ProblemSpec, opts) -> tuple:
    if opts.energy_eps is not None:
        return tuple(opts.energy_eps)
    tail = tuple(e for e in spec.eps_schedule if e <= 0.1)
    return tail or spec.eps_schedule


def diagnose(report: so.SolveReport, opts, seed: int) -> tuple[list, dict]:
    """Run the requested diagnostics; returns the verdicts and the raw tables."""
    spec = report.spec
    out, tables = [], {}
    wanted = set(opts.diagnostics)
    if "energy" in wanted:
        widths = _energy_widths(spec, opts)
        est = so.energy_estimates(report, eps_subset=widths)
        tables["energy"] = so.energy_estimates(report)
        ok = math.isfinite(est.max_C) and not est.violations and est.variation < opts.energy_tolerance
        out.append(Diagnostic("energy", "PASS" if ok else "FAIL", f"max C {est.max_C:.6g}, variation {100 * est.variation:.2f}% over widths {', '.join('%g' % e for e in widths)}"))
    if "radiation" in wanted:
        rt = so.controlled_radiation(report, wiggle=opts.wiggle)
        tables["radiation"] = rt
        ok = rt.nonincreasing and rt.dominated
        note = "all bands empty" if rt.vacuous else f"decay ratio {rt.decay_ratio:.3g}"
        out.append(Diagnostic("radiation", "PASS" if ok else "FAIL", f"nonincreasing {rt.nonincreasing}, dominated {rt.dominated}, {note}"))
    if "bound" in wanted:
        if spec.dimension < 2:
            out.append(Diagnostic("bound", "SKIP", "one-dimensional domain"))
        else:
            bc = so.bound_comparison(report, lam=opts.lam)
            tables["bound"] = bc
            if bc.report is None:
                out.append(Diagnostic("bound", "SKIP", bc.note))
            else:
                out.append(Diagnostic("bound", "PASS" if bc.margin >= 0 else "FAIL", f"u_max {bc.u_max:.6g} <= bound {bc.bound:.6g} (margin {bc.margin:.4g})"))
    if "monotonicity" in wanted:
        probes = np.random.default_rng(seed).normal(size=(opts.probes, spec.dimension))
        gap = so.monotonicity_gap(report, probes)
        out.append(Diagnostic("monotonicity", "PASS" if gap >= -opts.gap_tolerance else "FAIL", f"min scaled gap {gap:.3e} over {opts.probes} probes"))
    if "membership" in wanted:
        out.append(Diagnostic("membership", "INFO", f"graph-membership residual of the final flux {report.membership_residual:.3e}"))
    return out, tables


def _write_report(rd: RunDirectory, cfg: Config, report: so.SolveReport, diags, tables, name: str) -> None:
    spec = report.spec
    mesh = spec.mesh
    d = spec.dimension
    with open(rd.path("config.ini"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.dumps())
    rows = []
    for i, rec in enumerate(report.records):
        st = rec.stats
        rows.append((i, rec.eps, st.newton_steps, st.fallback_steps, st.residual, st.floor_limited))
        xcols = [mesh.vertices[:, j] for j in range(d)]
        write_csv(rd.path(f"u_{i:02d}.csv"), [f"x{j + 1}" for j in range(d)] + ["u"], zip(*xcols, rec.u.values))
    write_csv(rd.path("widths.csv"), ["index", "eps", "newton_steps", "fallback_steps", "residual", "floor_limited"], rows)
    write_csv(
        rd.path("energy.csv"),
        ["eps", "k", "energy", "conjugate_energy"],
        [(rec.eps, k, rec.energies[k], rec.conjugate_energies[k]) for rec in report.records for k in sorted(rec.energies)],
    )
    if "energy" in tables:
        est = tables["energy"]
        write_csv(
            rd.path("energy_constants.csv"),
            ["eps", "C", "C_conjugate", "C_truncated_datum"],
            [(e, est.per_eps[e], est.conjugate_per_eps[e], est.per_eps_truncated[e]) for e in est.per_eps],
        )
    fin = report.final
    write_csv(rd.path("radiation.csv"), ["k", "gamma", "majorant"], [(k, fin.radiation[k], fin.radiation_majorant[k]) for k in sorted(fin.radiation)])
    write_csv(
        rd.path("cauchy.csv"),
        ["eps_from", "eps_to", "l1"] + [f"measure_delta_{dl:g}" for dl in report.deltas],
        [(c["eps"][0], c["eps"][1], c["l1"], *c["measure"]) for c in report.cauchy],
    )
    bc = tables.get("bound")
    if bc is not None and bc.report is not None:
        br = bc.report
        write_csv(
            rd.path("bound.csv"),
            ["u_max", "bound", "margin", "lam", "c_A", "m_sup", "first_term", "second_term", "w1_exponent"],
            [(bc.u_max, bc.bound, bc.margin, br.lam, br.c_A, br.m_sup, br.first_term, br.second_term, br.exponent)],
        )
    failed = any(dg.status == "FAIL" for dg in diags)
    lines = [
        f"problem: {name}",
        f"graph: {spec.graph.name} (dimension {d})",
        f"domain: {spec.domain}",
        f"mesh: h={spec.h:g}, {mesh.n_vertices} vertices, {mesh.n_cells} cells",
        f"widths: {', '.join('%g' % r.eps for r in report.records)}",
        f"newton steps: {sum(r.stats.newton_steps for r in report.records)}, fallback steps: {sum(r.stats.fallback_steps for r in report.records)}",
        f"rounding-limited widths: {', '.join('%g' % r.eps for r in report.records if r.stats.floor_limited) or 'none'}",
        f"coercivity check: worst sampled margin {spec.a3_report.worst_margin:.4g} ({'passed' if spec.a3_report.passed else 'FAILED, forced'})",
        f"u_max = {report.u.max_abs():.10g}",
    ]
    if bc is not None and bc.report is not None:
        lines.append(f"bound = {bc.bound:.10g}")
    lines.append("")
    lines += [f"{dg.name}: {dg.status} ({dg.detail})" for dg in diags]
    lines += ["", f"result: {'FAIL' if failed else 'PASS'}"]
    with open(rd.path("summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def solve_problem(cfg: Config, name: str | None, out: str, force: bool, progress=None) -> tuple[int, str, so.SolveReport]:
    """Solve one problem block into a run directory; returns ``(exit code, directory, report)``."""
    block = cfg.get("problem", name)
    spec, opts = build_problem(cfg, block.name, force=block.flag("force_coercivity"))
    rd = RunDirectory(out, force)
    try:
        report = so.continuation(spec, progress=progress)
        diags, tables = diagnose(report, opts, cfg.seed)
        _write_report(rd, cfg, report, diags, tables, block.name)
    except BaseException:
        rd.discard()
        raise
    path = rd.commit()
    code = EXIT_DIAGNOSTICS if any(dg.status == "FAIL" for dg in diags) else EXIT_OK
    return code, path, report


def cmd_solve(run: RunConfig, cfg: Config) -> int:
    if run.out is None:
        raise UsageError("solve needs --out DIR")
    name = run.extra.get("problem")
    code, path, report = solve_problem(cfg, name, run.out, run.force, progress=log.info)
    with open(os.path.join(path, "summary.txt"), encoding="utf-8") as fh:
        summary = fh.read()
    if not run.quiet:
        sys.stdout.write(summary)
    return code


# ---------------------------------------------------------------------------
# thin wrappers


def _point(text: str | None, d: int):
    if not text:
        return None
    vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    if len(vals) != d:
        raise UsageError(f"--x needs {d} coordinates")
    return np.array(vals)


def cmd_conjugate(run: RunConfig, cfg: Config) -> int:
    M = build_nfunction(cfg, run.extra.get("nfunction"))
    d = M.dimension
    lo, hi, n = run.extra["eta_min"], run.extra["eta_max"], run.extra["points"]
    if not (0 <= lo <= hi) or n < 1:
        raise UsageError("need 0 <= --eta-min <= --eta-max and --points >= 1")
    mags = np.geomspace(lo, hi, n) if lo > 0 and n > 1 else np.linspace(lo, hi, n)
    eta = np.zeros((n, d))
    eta[:, 0] = mags
    x = _point(run.extra.get("x"), d)
    xb = None if x is None else np.broadcast_to(x, (n, d))
    if xb is None and not M.homogeneous:
        raise UsageError("x-dependent N-function: give the point with --x")
    vals = nf.fenchel_conjugate(M, xb, eta, method="numeric" if run.extra.get("numeric") else "auto")
    header = ["eta", "value"] if d == 1 else [f"eta{j + 1}" for j in range(d)] + ["value"]
    rows = [(m, v) for m, v in zip(mags, vals)] if d == 1 else [(*e, v) for e, v in zip(eta, vals)]
    _emit(run, "conjugate.csv", header, rows)
    return EXIT_OK


def _nu_rows(text: str, d: int) -> np.ndarray:
    text = text.strip()
    if not text:
        return np.zeros((0, d))
    if d == 1:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
        return np.array(vals).reshape(-1, 1)
    rows = []
    for chunk in text.split(";"):
        if chunk.strip():
            row = [float(v) for v in chunk.replace(",", " ").split()]
            if len(row) != d:
                raise UsageError(f"each nu needs {d} components")
            rows.append(row)
    return np.array(rows, dtype=float).reshape(-1, d)


def cmd_minty(run: RunConfig, cfg: Config) -> int:
    G = build_graph(cfg, run.extra.get("graph"), seed=cfg.seed)
    d = G.dimension
    block = cfg.get("graph", run.extra.get("graph"))
    text = run.extra.get("nu")
    if text is None:
        text = block.raw("nu", "")
    try:
        nu = _nu_rows(text, d)
    except ValueError as err:
        raise UsageError(f"bad nu list: {err}") from None
    x = _point(run.extra.get("x"), d)
    if x is None and not G.homogeneous:
        raise UsageError("x-dependent graph: give the point with --x")
    names = ("nu", "xi", "eta", "mu")
    header = list(names) if d == 1 else [f"{n}{j + 1}" for n in names for j in range(d)]
    rows = []
    if nu.shape[0]:
        xb = None if x is None else np.broadcast_to(x, nu.shape)
        mu, xi, eta = (np.asarray(v).reshape(nu.shape) for v in mo.minty_transform(G, xb, nu, return_pair=True))
        rows = [tuple(np.concatenate([a, b, c, e])) for a, b, c, e in zip(nu, xi, eta, mu)]
    _emit(run, "minty.csv", header, rows)
    return EXIT_OK


def cmd_bound(run: RunConfig, cfg: Config) -> int:
    block = cfg.get("problem", run.extra.get("problem"))
    spec, opts = build_problem(cfg, block.name, force=block.flag("force_coercivity"))
    if spec.dimension < 2:
        raise UsageError("the L-infinity bound is restricted to d >= 2 (in one dimension W^{1,1} embeds in L-infinity)")
    w = spec.witness
    m_sup = w.m_sup if w.m_sup is not None else float(np.max(spec.m_cells, initial=0.0))
    lam = run.extra.get("lam") or opts.lam
    br = ra.linfty_bound(spec.growth, so.datum_profile(spec), w.c_A, m_sup, lam=lam, d=spec.dimension)
    _emit(
        run,
        "bound.csv",
        ["lam", "c_A", "m_sup", "first_term", "second_term", "total", "w1_exponent"],
        [(br.lam, br.c_A, br.m_sup, br.first_term, br.second_term, br.total, br.exponent)],
    )
    return EXIT_OK


def cmd_rearrange(run: RunConfig, cfg: Config) -> int:
    if run.extra.get("nfunction"):
        L = build_nfunction(cfg, run.extra["nfunction"])
        if not L.homogeneous:
            L = ra.homogeneous_minorant(L)
        s = np.geomspace(run.extra["s_min"], run.extra["s_max"], run.extra["points"])
        circ = ra.symmetral_circ(L)
        dm = ra.diamond(L)
        _emit(run, "symmetral.csv", ["s", "L_circ", "L_diamond", "psi"], zip(s, circ(s), dm.L_diamond(s), dm.psi(s)))
        return EXIT_OK
    block = cfg.get("problem", run.extra.get("problem"))
    spec, _ = build_problem(cfg, block.name, force=block.flag("force_coercivity"))
    prof = so.datum_profile(spec)
    if run.extra.get("table") == "distribution":
        _emit(run, "distribution.csv", ["t", "mu"], zip(prof.t_grid, prof.mu))
    else:
        _emit(run, "rearrangement.csv", ["s", "f_star", "f_starstar"], zip(prof.s_grid, prof.f_star, prof.f_starstar))
    return EXIT_OK


def cmd_sweep(run: RunConfig, cfg: Config) -> int:
    """Solve a problem for each value of one parameter, concurrently, one directory per value."""
    if run.out is None:
        raise UsageError("sweep needs --out DIR")
    sw = cfg.get("sweep", run.extra.get("sweep"))
    problem = sw.require("problem").strip()
    key = sw.require("parameter").strip().lower()
    values = [v.strip() for v in sw.require("values").split(",") if v.strip()]
    if not values:
        raise sw.error("values", "empty value list")
    jobs = run.extra.get("jobs") or sw.integer("jobs", 1)
    cfg.get("problem", problem)
    os.makedirs(run.out, exist_ok=True)

    def one(i_value):
        i, value = i_value
        sub = parse_config(cfg.dumps(), cfg.path)
        sub.get("problem", problem).entries[key] = value
        del sub.blocks[("sweep", sw.name)]
        target = os.path.join(run.out, f"{problem}-{i:03d}")
        try:
            code, path, report = solve_problem(sub, problem, target, run.force)
            return i, value, code, report.u.max_abs(), path
        except so.SolverError as err:
            log.error("%s=%s: %s", key, value, err)
            return i, value, EXIT_SOLVER, math.nan, target

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(one, enumerate(values)))
    write_csv(os.path.join(run.out, "sweep.csv"), ["index", key, "exit_code", "u_max", "directory"], results)
    codes = {r[2] for r in results}
    if not run.quiet:
        for r in results:
            sys.stdout.write(f"{key}={r[1]}: exit {r[2]}, u_max {r[3]:.6g}, {r[4]}\n")
    return EXIT_SOLVER if EXIT_SOLVER in codes else EXIT_DIAGNOSTICS if EXIT_DIAGNOSTICS in codes else EXIT_OK


def cmd_selftest(run: RunConfig, cfg: Config | None) -> int:
    only = run.extra.get("only")
    only = [s.strip().upper() for s in only.split(",")] if only else None
    seed = 42 if run.seed is None else run.seed
    results = acceptance.run_suite(seed=seed, only=only, report=(None if run.quiet else lambda r: print(r.line(), flush=True)))
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_DIAGNOSTICS


COMMANDS = {
    "solve": cmd_solve,
    "conjugate": cmd_conjugate,
    "minty": cmd_minty,
    "bound": cmd_bound,
    "rearrange": cmd_rearrange,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (tables go to stdout when omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override NAME.key=value (repeatable)")
    common.add_argument("--seed", type=int, help="seed of all sampled checks (default 42)")
    common.add_argument("--force", action="store_true", help="replace existing output")
    common.add_argument("--quiet", action="store_true", help="only errors on stderr")

    p = _Parser(prog="orliczfem", description="Monotone elliptic inclusions with Orlicz growth and L1 data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="continuation solve plus diagnostics into a run directory")
    s.add_argument("--problem", metavar="NAME")

    s = sub.add_parser("conjugate", parents=[common], help="table of the complementary function")
    s.add_argument("--nfunction", metavar="NAME")
    s.add_argument("--eta-min", type=float, default=0.1)
    s.add_argument("--eta-max", type=float, default=10.0)
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--x", metavar="X1,X2", help="domain point for x-dependent functions")
    s.add_argument("--numeric", action="store_true", help="skip closed forms")

    s = sub.add_parser("minty", parents=[common], help="Minty transform of a graph")
    s.add_argument("--graph", metavar="NAME")
    s.add_argument("--nu", metavar="LIST", help="1-D: comma list; d>1: rows separated by ';'")
    s.add_argument("--x", metavar="X1,X2")

    s = sub.add_parser("bound", parents=[common], help="L-infinity bound of a problem")
    s.add_argument("--problem", metavar="NAME")
    s.add_argument("--lam", type=float)

    s = sub.add_parser("rearrange", parents=[common], help="rearrangements of the datum or symmetrals of an N-function")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--problem", metavar="NAME")
    g.add_argument("--nfunction", metavar="NAME")
    s.add_argument("--table", choices=("rearrangement", "distribution"), default="rearrangement")
    s.add_argument("--s-min", type=float, default=1e-2)
    s.add_argument("--s-max", type=float, default=1e2)
    s.add_argument("--points", type=int, default=41)

    s = sub.add_parser("sweep", parents=[common], help="concurrent solves over one parameter")
    s.add_argument("--sweep", metavar="NAME")
    s.add_argument("--jobs", type=int)

    s = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    s.add_argument("--only", metavar="AC-1,AC-3")
    return p


def parse_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    d = vars(ns).copy()
    base = {k: d.pop(k) for k in ("subcommand", "config", "out", "overrides", "seed", "force", "quiet")}
    return RunConfig(base["subcommand"], base["config"], base["out"], base["overrides"], base["seed"], base["force"], base["quiet"], d)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        run = parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if run.quiet else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = None
        if run.config_path is not None:
            cfg = load_config(run.config_path)
            default = None
            for key in ("problem", "graph", "nfunction", "sweep"):
                name = run.extra.get(key)
                if name:
                    default = cfg.get(key, name)
                    break
            for item in run.overrides:
                cfg.override(item, default)
            cfg.set_seed(cfg.seed if run.seed is None else run.seed)
        elif run.subcommand != "selftest":
            raise UsageError(f"{run.subcommand} needs --config PATH")
        return COMMANDS[run.subcommand](run, cfg)
    except FileNotFoundError as err:
        print(f"error: {err.filename or err}: no such file", file=sys.stderr)
        return EXIT_NOINPUT
    except (UsageError, ConfigError, ExpressionError, mo.GraphError, nf.NFunctionError, ra.RearrangementError, so.ProblemError, fem.MeshError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (so.SolverError, mo.ResolventError, fem.LinearSolveError) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
