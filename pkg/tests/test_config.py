import math

import numpy as np
import pytest

from orliczfem import monotone as mo
from orliczfem import nfunc as nf
from orliczfem.config import ConfigError, build_graph, build_nfunction, build_problem, load_config, parse_config

TORSION = """\
[nfunction quad]
family = power
p = 2
dimension = 2

[graph A]
family = identity
dimension = 2
nfunction = quad
c_A = 1
m = 0

[problem torsion]
graph = A
domain = disk
h = 1/16
datum = 1
"""


def test_parse_and_build_problem():
    cfg = parse_config(TORSION)
    spec, opts = build_problem(cfg, "torsion")
    assert spec.h == pytest.approx(1 / 16)
    assert spec.dimension == 2
    assert spec.witness.c_A == 1.0
    assert opts.diagnostics == ("energy", "radiation", "bound", "monotonicity", "membership")
    assert cfg.seed == 42


def test_power_coefficient_defaults_to_reciprocal_exponent():
    M = build_nfunction(parse_config("[nfunction c]\nfamily = power\np = 3\n"))
    assert float(M(None, 2.0)) == pytest.approx(8 / 3)


@pytest.mark.parametrize(
    "body",
    [
        "family = variable-exponent\np_of_x = 2 + x1^2",
        "family = double-phase\np = 2\nq = 4\na_of_x = abs(x1)",
        "family = llogl",
        "family = exponential",
        "family = anisotropic-sum\nterms = 1:2, 1:4\ndimension = 2",
        "family = custom\nprofile = s^2 + s^4",
        "family = custom\nexpression = xi1^2 + 3*xi1^4",
    ],
)
def test_nfunction_families(body):
    M = build_nfunction(parse_config(f"[nfunction F]\n{body}\n"))
    x = np.zeros((1, M.dimension))
    xi = np.full((1, M.dimension), 0.5)
    v = M(x, xi)
    assert np.all(np.isfinite(v)) and np.all(v > 0)


@pytest.mark.parametrize(
    "body,probe,expected",
    [
        ("family = identity\nscale = 2", 1.5, 3.0),
        ("family = power\np = 3", -2.0, -4.0),
        ("family = sign", 0.0, 0.0),
        ("family = sign+identity", 2.0, 3.0),
        ("family = abs+identity", -1.0, -2.0),
        ("family = curve\nrows = 0:-1:1", 0.0, 0.0),
        ("family = potential\npotential = xi1^2/2\nkinks = ", 1.0, 1.0),
        ("family = map\nmap = 2*xi1", 1.0, 2.0),
    ],
)
def test_graph_families(body, probe, expected):
    G = build_graph(parse_config(f"[graph G]\n{body}\n"))
    assert float(np.ravel(mo.selection(G, None, np.array([[probe]])))[0]) == pytest.approx(expected, abs=1e-6)


def test_non_monotone_graph_rejected_with_position():
    with pytest.raises(ConfigError) as info:
        build_graph(parse_config("[graph B]\nfamily = map\nmap = -xi1\n"))
    assert info.value.line == 2
    assert "not monotone" in str(info.value)


def test_expression_error_points_into_file():
    text = "[nfunction bad]\nfamily = custom\nexpression = xi1 + * 2\n"
    with pytest.raises(ConfigError) as info:
        build_nfunction(parse_config(text, "cfg.ini"))
    err = info.value
    assert err.line == 3 and err.column == text.splitlines()[2].index("*") + 1
    assert str(err).startswith("cfg.ini:3:")


@pytest.mark.parametrize(
    "text",
    ["[widget w]\nx = 1\n", "[graph]\nfamily = sign\n", "no header\n", "[graph G]\nfamily = sign\n[graph G]\nfamily = abs\n"],
)
def test_structural_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validation_errors():
    cfg = parse_config(TORSION + "lam = 0.5\n")
    with pytest.raises(ConfigError, match="lam"):
        build_problem(cfg, "torsion")
    cfg = parse_config(TORSION.replace("h = 1/16", "eps_schedule = 0.1, 0.2"))
    with pytest.raises(ConfigError):
        build_problem(cfg, "torsion")
    cfg = parse_config(TORSION.replace("domain = disk", "domain = interval"))
    with pytest.raises(ConfigError, match="domain"):
        build_problem(cfg, "torsion")
    with pytest.raises(ConfigError):
        build_graph(parse_config("[graph G]\nfamily = warp\n"))


def test_overrides_and_echo_roundtrip():
    cfg = parse_config(TORSION)
    cfg.override("torsion.h=1/8")
    cfg.override("datum = 2", cfg.get("problem", "torsion"))
    cfg.set_seed(7)
    again = parse_config(cfg.dumps())
    assert again.seed == 7
    spec, _ = build_problem(again, "torsion")
    assert spec.h == pytest.approx(1 / 8)
    assert again.dumps() == cfg.dumps()
    with pytest.raises(ConfigError):
        cfg.override("nokey")


def test_x_dependent_witness_field():
    text = TORSION.replace("m = 0", "m = x1^2\nm_sup = 1")
    spec, _ = build_problem(parse_config(text), "torsion")
    assert spec.witness.m_sup == 1.0
    assert spec.m_l1() == pytest.approx(math.pi / 4, rel=0.05)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.ini")
    p = tmp_path / "t.ini"
    p.write_text(TORSION)
    assert load_config(str(p)).names("problem") == ["torsion"]
