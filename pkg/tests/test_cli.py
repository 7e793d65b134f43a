import math
import subprocess
import sys

import numpy as np
import pytest

from coldwave import cli, floquet
from coldwave.core import ValidationError

MINIMAL = "sim.b0 = 1\ndata.family = small-perturbation\ndata.epsilon = 0.1\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def summary(path):
    out = {}
    for line in (path / "summary.txt").read_text().splitlines():
        k, v = line.split(": ", 1)
        out[k] = v
    return out


def test_minimal_config_defaults(tmp_path):
    r = cli.parse_config(write(tmp_path, MINIMAL))
    assert r.config.B0 == 1.0
    assert r.config.rel_tol == 1e-10
    assert r.config.horizon == pytest.approx(10 * 2 * math.pi / math.sqrt(2))
    assert r.relativistic
    assert r.data.label == "small-perturbation"


def test_negative_epsilon_is_validation_error(tmp_path):
    with pytest.raises(ValidationError):
        cli.parse_config(write(tmp_path, "sim.b0 = 1\ndata.epsilon = -1\n"))


def test_unknown_key_named(tmp_path):
    with pytest.raises(cli.ParseError, match=r":2: unknown key 'sim.bo0'"):
        cli.parse_config(write(tmp_path, "sim.b0 = 1\nsim.bo0 = 1\n"))


@pytest.mark.parametrize("text,match", [
    ("sim.b0 1\n", "expected 'key = value'"),
    ("sim.b0 = one\n", "cannot read"),
    ("sim.b0 = 1\nsim.b0 = 2\n", "duplicate"),
])
def test_parse_errors(tmp_path, text, match):
    with pytest.raises(cli.ParseError, match=match):
        cli.parse_config(write(tmp_path, text))


def test_comments_and_case(tmp_path):
    r = cli.parse_config(write(tmp_path, "# header\nSIM.B0 = 2   # field\n\nrun.horizon = 3\n"))
    assert (r.config.B0, r.config.horizon) == (2.0, 3.0)


def test_missing_b0(tmp_path):
    with pytest.raises(ValidationError):
        cli.parse_config(write(tmp_path, "data.epsilon = 0.1\n"))


def test_exit_codes(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(write(tmp_path, "sim.bo0 = 1\n")), "--out", str(out), "--quiet"]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--out", str(out), "--quiet"]) == 2
    bad = write(tmp_path, "sim.b0 = 1\ndata.family = constant-k2\ndata.p2 = 0\ndata.e1 = 0\ndata.k2 = 1\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(out), "--quiet"]) == 2
    # too few characteristics to cover the domain is a numerical failure
    few = write(tmp_path, MINIMAL + "crosscheck.n_characteristics = 8\ncrosscheck.n = 64\n", "few.cfg")
    assert cli.main(["crosscheck", "--config", str(few), "--out", str(out), "--quiet"]) == 3


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, MINIMAL + "run.periods = 2\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(a), "--quiet", "--seed-rho", "0.5"]) == 0
    header = (a / "trace_0.csv").read_text().splitlines()[0]
    assert header == "theta,rho,P1,P2,E1,p1,p2,e,K1,K2,N"
    data = np.loadtxt(a / "trace_0.csv", delimiter=",", skiprows=1)
    assert data[0, 1] == 0.5
    assert np.allclose(data[:, 10], 1 - data[:, 7])
    s = summary(a)
    assert s["status"] == "horizon" and float(s["drift_K2"]) < 1e-9
    # re-running from the manifest reproduces the CSV bytes
    assert cli.main(["simulate", "--config", str(a / "manifest.txt"), "--out", str(b), "--quiet",
                     "--seed-rho", "0.5"]) == 0
    assert (a / "trace_0.csv").read_bytes() == (b / "trace_0.csv").read_bytes()
    manifest = (a / "manifest.txt").read_text()
    assert "# subcommand: simulate" in manifest and "# wall_clock_seconds:" in manifest


def test_summary_values_reproducible_from_library(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert cli.main(["floquet", "--config", str(cfg), "--out", str(tmp_path / "f"), "--quiet"]) == 0
    s = summary(tmp_path / "f")
    assert float(s["asymptotic_coshmupi"]) == pytest.approx(-1 - 5.1647e-7, abs=1e-11)
    assert float(s["asymptotic_coshmupi"]) == floquet.asymptotic_coshmupi(0.1, 1.0)
    assert float(s["hill_coshmupi"]) == floquet.hill_floquet(0.1, 1.0).cosh_mu_pi
    assert s["mathieu_classification"] == "stable-oscillatory"


def test_criteria_subcommand(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert cli.main(["criteria", "--config", str(cfg), "--out", str(tmp_path / "c"), "--quiet"]) == 0
    assert "nonrel_smooth: true" in (tmp_path / "c" / "summary.txt").read_text()
    hot = write(tmp_path, "sim.b0 = 0\nsim.model = nonrelativistic\ndata.family = general\n"
                          "data.p1 = 0.9*cos(rho)\ndata.p2 = 0\ndata.e1 = 0.9*sin(rho)\n", "hot.cfg")
    assert cli.main(["criteria", "--config", str(hot), "--out", str(tmp_path / "h"), "--quiet"]) == 0
    assert "nonrel_smooth: false" in (tmp_path / "h" / "summary.txt").read_text()


def test_period_and_wave(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert cli.main(["period", "--config", str(cfg), "--out", str(tmp_path / "p"), "--quiet"]) == 0
    s = summary(tmp_path / "p")
    assert float(s["period"]) == pytest.approx(float(s["return_map_period"]), rel=1e-10)
    assert cli.main(["wave", "--config", str(cfg), "--out", str(tmp_path / "w"), "--quiet"]) == 0
    assert (tmp_path / "w" / "wave.csv").read_text().startswith("xi,P2,P1,E1\n")


def test_ensemble_and_crosscheck(tmp_path):
    cfg = write(tmp_path, MINIMAL + "sim.n_characteristics = 4\nrun.periods = 1\ncrosscheck.n = 256\n")
    assert cli.main(["ensemble", "--config", str(cfg), "--out", str(tmp_path / "e"), "--quiet"]) == 0
    assert sorted(p.name for p in (tmp_path / "e").glob("trace_*.csv")) == [f"trace_{i}.csv" for i in range(4)]
    assert cli.main(["crosscheck", "--config", str(cfg), "--out", str(tmp_path / "x"), "--quiet"]) == 0
    s = summary(tmp_path / "x")
    assert float(s["max_norm_P1"]) < 1e-3
    assert (tmp_path / "x" / "grid.csv").read_text().startswith("rho,P1,P2,E1,N\n")


def test_breaking_map(tmp_path):
    cfg = write(tmp_path, MINIMAL + "sim.n_characteristics = 2\nrun.horizon = 5\nbreaking.b0_list = 0, 1\n")
    assert cli.main(["breaking-map", "--config", str(cfg), "--out", str(tmp_path / "b"), "--quiet"]) == 0
    rows = (tmp_path / "b" / "breaking_map.csv").read_text().splitlines()
    assert rows[0] == "B0,breaking_time" and len(rows) == 3


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    res = subprocess.run([sys.executable, "-m", "coldwave.cli", "criteria", "--config", str(cfg), "--out",
                          str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "coldwave criteria" in res.stderr
