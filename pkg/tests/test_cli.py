import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from orliczfem.cli import main

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

PLAP = """\
[nfunction cube]
family = power
p = 3

[graph A]
family = power
p = 3
nfunction = cube

[problem plap]
graph = A
domain = interval
h = 1/32
eps_schedule = 0.1, 0.01
diagnostics = energy, radiation, monotonicity, membership

[sweep mesh]
problem = plap
parameter = h
values = 1/16, 1/32, 1/64
jobs = 3
"""

SIGN = """\
[nfunction quad]
family = power
p = 2

[graph S]
family = sign
nfunction = quad
m = 0.5

[graph I]
family = identity

[nfunction cube]
family = power
p = 3

[nfunction bad]
family = custom
expression = xi1 ^ ^ 2
"""


@pytest.fixture
def cfgfile(tmp_path):
    def make(text, name="c.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return make


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_torsion_solve(cfgfile, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--config", cfgfile(TORSION), "--out", str(out), "--quiet"]) == 0
    summary = (out / "summary.txt").read_text()
    assert "result: PASS" in summary
    u_max = float(summary.split("u_max = ")[1].split()[0])
    bound = float(summary.split("bound = ")[1].split()[0])
    assert u_max == pytest.approx(0.25, abs=0.01)
    assert bound == pytest.approx(0.5, rel=0.02)
    names = set(os.listdir(out))
    assert {"config.ini", "widths.csv", "energy.csv", "radiation.csv", "bound.csv", "cauchy.csv", "u_00.csv"} <= names
    assert "seed = 42" in (out / "config.ini").read_text()
    assert not [n for n in os.listdir(tmp_path) if n.startswith(".run")]


def test_csv_format(cfgfile, tmp_path):
    out = tmp_path / "run"
    main(["solve", "--config", cfgfile(TORSION), "--out", str(out), "--quiet"])
    raw = (out / "u_00.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = table(raw.decode())
    assert list(rows[0]) == ["x1", "x2", "u"]
    v = float(rows[0]["u"])
    assert rows[0]["u"] == "%.17g" % v


def test_refuses_to_overwrite_without_force(cfgfile, tmp_path):
    out = str(tmp_path / "run")
    cfg = cfgfile(TORSION)
    assert main(["solve", "--config", cfg, "--out", out, "--quiet"]) == 0
    assert main(["solve", "--config", cfg, "--out", out, "--quiet"]) == 64
    assert main(["solve", "--config", cfg, "--out", out, "--quiet", "--force", "--set", "torsion.h=1/8"]) == 0
    assert "h = 1/8" in open(os.path.join(out, "config.ini")).read()


def test_outputs_bitwise_reproducible(cfgfile, tmp_path):
    cfg = cfgfile(PLAP)
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["solve", "--config", cfg, "--out", str(d), "--quiet", "--seed", "7"]) == 0
    for name in os.listdir(a):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_exit_codes_for_errors(cfgfile, tmp_path, capsys):
    bad = cfgfile("[nfunction q]\nfamily = power\np = 2\n[graph B]\nfamily = map\nmap = -xi1\nnfunction = q\n[problem p]\ngraph = B\n")
    assert main(["solve", "--config", bad, "--out", str(tmp_path / "r")]) == 64
    assert "not monotone" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path / "r")]) == 66
    assert "no such file" in capsys.readouterr().err
    assert main(["frobnicate"]) == 64
    assert main(["solve", "--out", str(tmp_path / "r")]) == 64
    assert not (tmp_path / "r").exists()


NOSOLUTION = """\
[nfunction quad]
family = power
p = 2

[graph S]
family = sign
nfunction = quad
m = 0.5

[problem p]
graph = S
domain = interval
h = 1/16
datum = 100
eps_schedule = 0.1
force_coercivity = yes
"""


def test_solver_failure_exit_one(cfgfile, tmp_path, capsys):
    # a flux bounded by 1 cannot balance f = 100
    cfg = cfgfile(NOSOLUTION)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "r"), "--quiet"]) == 1
    assert not (tmp_path / "r").exists()
    assert "solver error" in capsys.readouterr().err


def test_failed_diagnostic_exit_two(cfgfile, tmp_path):
    cfg = cfgfile(PLAP.replace("h = 1/32", "h = 1/32\nenergy_tolerance = 0"))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "r"), "--quiet"]) == 2
    assert "energy: FAIL" in (tmp_path / "r" / "summary.txt").read_text()


def test_conjugate(cfgfile, capsys):
    cfg = cfgfile(SIGN)
    assert main(["conjugate", "--config", cfg, "--nfunction", "cube", "--eta-min", "0.1", "--eta-max", "10", "--points", "9"]) == 0
    rows = table(capsys.readouterr().out)
    eta = np.array([float(r["eta"]) for r in rows])
    val = np.array([float(r["value"]) for r in rows])
    np.testing.assert_allclose(val, eta**1.5 / 1.5, rtol=1e-6)
    assert main(["conjugate", "--config", cfg, "--nfunction", "quad", "--points", "5", "--numeric"]) == 0
    rows = table(capsys.readouterr().out)
    for r in rows:
        assert float(r["value"]) == pytest.approx(float(r["eta"]) ** 2 / 2, rel=1e-6)
    assert main(["conjugate", "--config", cfg, "--nfunction", "bad"]) == 64
    assert ":19:" in capsys.readouterr().err


def test_minty(cfgfile, capsys):
    cfg = cfgfile(SIGN)
    assert main(["minty", "--config", cfg, "--graph", "S", "--nu", "3, -3, 0.25"]) == 0
    rows = table(capsys.readouterr().out)
    assert [float(r["mu"]) for r in rows] == pytest.approx([-1.0, 1.0, 0.25])
    assert list(rows[0]) == ["nu", "xi", "eta", "mu"]
    assert main(["minty", "--config", cfg, "--graph", "I", "--nu", "-2, 5"]) == 0
    assert [float(r["mu"]) for r in table(capsys.readouterr().out)] == pytest.approx([0.0, 0.0])
    assert main(["minty", "--config", cfg, "--graph", "S", "--nu", ""]) == 0
    assert capsys.readouterr().out == "nu,xi,eta,mu\n"


def test_bound(cfgfile, capsys):
    assert main(["bound", "--config", cfgfile(TORSION)]) == 0
    assert float(table(capsys.readouterr().out)[0]["total"]) == pytest.approx(0.5, rel=0.02)
    assert main(["bound", "--config", cfgfile(TORSION), "--set", "torsion.datum=0"]) == 0
    assert float(table(capsys.readouterr().out)[0]["total"]) == 0.0
    assert main(["bound", "--config", cfgfile(PLAP)]) == 64
    assert "d >= 2" in capsys.readouterr().err


def test_rearrange(cfgfile, tmp_path, capsys):
    cfg = cfgfile(TORSION)
    assert main(["rearrange", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    rows = table((tmp_path / "t" / "rearrangement.csv").read_text())
    assert all(float(r["f_star"]) == 1.0 and float(r["f_starstar"]) == 1.0 for r in rows if float(r["s"]) < 3.0)
    assert main(["rearrange", "--config", cfg, "--table", "distribution"]) == 0
    assert list(table(capsys.readouterr().out)[0]) == ["t", "mu"]
    assert main(["rearrange", "--config", cfg, "--nfunction", "quad", "--points", "3"]) == 0
    rows = table(capsys.readouterr().out)
    for r in rows:
        s = float(r["s"])
        assert float(r["L_circ"]) == pytest.approx(s**2 / 2, rel=1e-3)


def test_sweep(cfgfile, tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfgfile(PLAP), "--out", str(out), "--quiet"]) == 0
    rows = table((out / "sweep.csv").read_text())
    assert [r["h"] for r in rows] == ["1/16", "1/32", "1/64"]
    assert all(r["exit_code"] == "0" for r in rows)
    for i in range(3):
        assert "h = " in (out / f"plap-{i:03d}" / "config.ini").read_text()
        assert (out / f"plap-{i:03d}" / "summary.txt").exists()


def test_selftest_subset(capsys):
    assert main(["selftest", "--only", "AC-2,AC-10"]) == 0
    out = capsys.readouterr().out
    assert "AC-2" in out and "AC-10" in out and "2/2" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "orliczfem", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "selftest" in res.stdout
