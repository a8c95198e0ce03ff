import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gstab.ambiguity import AmbiguitySet
from gstab.cli import main
from gstab.config import ConfigError, defaults_for_A4, load_config, parse_config

FIX = Path(__file__).parent / "fixtures"
COMMANDS = ["modulus", "bound", "simulate", "stability", "contraction", "saturate", "asymptotics"]


def _run(tmp_path, fixture, command, *extra):
    out = tmp_path / f"{fixture}-{command}"
    code = main([command, "--config", str(FIX / f"{fixture}.toml"), "--out", str(out), *extra])
    return code, out


def test_defaults_for_A4_examples():
    assert defaults_for_A4(AmbiguitySet(0.5, 1.0), 0, 1) == {"C_BDG": 4.0, "C_QV": 1.0}
    d = defaults_for_A4(AmbiguitySet(0.8, 1.2), 0, 1)
    assert d["C_BDG"] == pytest.approx(5.76, rel=1e-15) and d["C_QV"] == pytest.approx(2.0736, rel=1e-15)


def test_equal_data_exit_zero(tmp_path):
    code, out = _run(tmp_path, "zero_gap", "stability")
    assert code == 0
    rows = list(csv.DictReader(open(out / "certificate.csv")))
    assert all(float(r["u"]) == 0.0 for r in rows)


def test_bad_kernel_names_field(tmp_path, capsys):
    code, _ = _run(tmp_path, "bad_kernel", "modulus")
    assert code == 1
    assert "kernel.rho1.family" in capsys.readouterr().err


def test_validation_failure_prints_point(tmp_path, capsys):
    code, _ = _run(tmp_path, "understated_bound", "stability")
    assert code == 1
    err = capsys.readouterr().err
    assert "increment bound for b violated at s=" in err and "x'=" in err


def test_violated_and_inconclusive_exit_codes(tmp_path):
    assert _run(tmp_path, "violated", "stability")[0] == 2
    assert _run(tmp_path, "inconclusive", "stability")[0] == 3


def test_linear_drift_golden(tmp_path):
    code, out = _run(tmp_path, "linear_drift", "stability")
    assert code == 0
    got = (out / "certificate.csv").read_text()
    assert got == (FIX / "golden" / "linear_drift_certificate.csv").read_text()
    # the golden curve itself against closed forms: running sup stays at the gap,
    # the bound is C1 e^{L C1 s} gap with Gamma = 1
    rows = list(csv.DictReader(got.splitlines()))
    s = np.array([float(r["s"]) for r in rows])
    np.testing.assert_array_equal([float(r["u"]) for r in rows], 0.25)
    np.testing.assert_allclose([float(r["bound"]) for r in rows], np.exp(4 * s), rtol=1e-13)
    rep = json.loads((out / "stability.json").read_text())
    assert rep["schema_version"] == 1 and rep["certificate"]["verdict"] == "Certified"
    assert rep["config"]["constants"]["C_BDG"] == pytest.approx(5.76)
    assert rep["config"]["constants"]["source"] == {"C_BDG": "default", "C_QV": "default"}


@pytest.mark.parametrize("fixture", ["linear_drift", "diffusion", "analysis"])
def test_byte_determinism(tmp_path, fixture):
    for cmd in COMMANDS:
        if fixture == "analysis" and cmd in ("simulate", "stability"):
            continue
        a = _run(tmp_path / "a", fixture, cmd)[1]
        b = _run(tmp_path / "b", fixture, cmd)[1]
        for f in sorted(a.iterdir()):
            assert f.read_bytes() == (b / f.name).read_bytes(), f"{fixture}/{cmd}/{f.name}"


def test_seed_override_changes_random_output(tmp_path):
    a = _run(tmp_path / "a", "diffusion", "simulate")[1]
    b = _run(tmp_path / "b", "diffusion", "simulate", "--seed", "99")[1]
    assert (a / "deviation.csv").read_text() != (b / "deviation.csv").read_text()
    assert json.loads((b / "simulate.json").read_text())["config"]["simulation"]["seed"] == 99


def test_format_selection(tmp_path):
    _, out = _run(tmp_path, "analysis", "modulus", "--format", "csv")
    assert [p.name for p in out.iterdir()] == ["modulus.csv"]
    header = (out / "modulus.csv").read_text().splitlines()[0]
    assert header == "u,psi,closed_form,numeric,rel_diff,printed_form"


def test_stdout_json(capsys):
    code = main(["asymptotics", "--config", str(FIX / "analysis.toml")])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["command"] == "asymptotics"
    assert rep["regime"].startswith("regularly-varying")


def test_analysis_outputs(tmp_path):
    _, out = _run(tmp_path, "analysis", "saturate")
    row = next(csv.DictReader(open(out / "saturation.csv")))
    assert float(row["endpoint"]) == pytest.approx(1 / 98, rel=1e-9)
    _, out = _run(tmp_path, "analysis", "contraction")
    rep = json.loads((out / "contraction.json").read_text())
    assert rep["amplification"]["contraction_horizon"] is None
    assert rep["partition"]["factors"][0] >= 1.0
    _, out = _run(tmp_path, "analysis", "modulus")
    rep = json.loads((out / "modulus.json").read_text())
    assert rep["max_rel_diff"] < 1e-6


def test_ensemble_export(tmp_path):
    cfg = tmp_path / "export.toml"
    cfg.write_text(f"""
[grid]
steps = 4
[kernel]
rho1 = {{ family = "linear" }}
[bounds]
c_b = 1.0
beta_h = 1.0
[ambiguity]
sigma_low = 1.0
sigma_high = 1.0
control_steps = 1
[coefficients]
name = "linear_drift"
[initial]
xi = 1.0
eta = 0.0
[simulation]
paths_per_scenario = 3
[output]
export_ensemble = "csv"
dir = "{tmp_path / 'ens'}"
""")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "ens" / "ensemble.csv").read_text().splitlines()
    assert lines[0] == "scenario,path,time_index,dB,dQV" and len(lines) == 1 + 3 * 4


BASE = {
    "grid": {"t": 0.0, "T": 1.0, "steps": 8},
    "kernel": {"rho1": {"family": "linear"}},
    "ambiguity": {"sigma_low": 0.8, "sigma_high": 1.2},
}


def _with(section, **kw):
    raw = {k: dict(v) for k, v in BASE.items()}
    raw.setdefault(section, {}).update(kw)
    return raw


@pytest.mark.parametrize("raw, field", [
    (_with("grid", T=0.0), "grid.T"),
    (_with("grid", steps="many"), "grid.steps"),
    (_with("ambiguity", sigma_low=0.0), "ambiguity"),
    (_with("ambiguity", strategies=["adaptive"]), "ambiguity.strategies"),
    (_with("ambiguity", control_steps=3), "ambiguity.control_steps"),
    (_with("bounds", c_b=-1.0), "bounds.c_b"),
    (_with("bounds", c_q=1.0), "bounds.c_q"),
    (_with("constants", C1=0.0), "constants.C1"),
    (_with("coefficients", name="cubic"), "coefficients.name"),
    (_with("coefficients", name="linear_drift", params={"gamma": 1.0}), "coefficients.params"),
    (_with("initial", xi={"kind": "cauchy"}), "initial.xi"),
    ({"grid": {}}, "kernel"),
])
def test_config_errors_name_field(raw, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    assert exc.value.field == field
    assert str(exc.value).startswith(field)


def test_config_accepts_scientific_notation_and_overrides():
    cfg = parse_config(_with("constants", C_BDG="1e-1", C_QV=2.5e0))
    assert cfg.C_BDG == 0.1 and cfg.C_QV == 2.5
    assert cfg.constants_source == {"C_BDG": "config", "C_QV": "config"}


def test_config_sum_kernel():
    raw = _with("kernel", rho2={"family": "power", "alpha": 2.0})
    cfg = parse_config(raw)
    assert cfg.kernel(0.5) == pytest.approx(0.5 + 0.25)


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[grid\nsteps = ")
    with pytest.raises(ConfigError, match="config"):
        load_config(p)
    assert main(["modulus", "--config", str(p)]) == 1
    assert main(["modulus", "--config", str(tmp_path / "missing.toml")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gstab", "bound", "--config", str(FIX / "linear_drift.toml"),
                           "--format", "csv"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    lines = proc.stdout.splitlines()
    assert lines[0] == "s,C0,bound" and len(lines) == 1 + 65
    assert float(lines[-1].split(",")[2]) == pytest.approx(4 * 0.25 * math.exp(4.0), rel=1e-13)
