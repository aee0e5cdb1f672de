import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tcvolterra.cli import main

ROOT = Path(__file__).parents[1]
CONFIGS = ROOT / "configs"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture(scope="module")
def det_harvest(tmp_path_factory):
    out = tmp_path_factory.mktemp("det")
    code = main(["harvest", "--config", str(CONFIGS / "harvest_deterministic.yaml"), "--out", str(out), "--quiet"])
    return code, out


def test_simulate_unit_rate(tmp_path):
    cfg = _write(tmp_path, "grid: {steps: 16}\nmarks: {z: [0.5], weights: [1.0]}\nmoment_level: 1\nplots: false\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--paths", "1000", "--seed", "3", "--quiet"]) == 0
    z = [float(r["z"]) for r in _rows(out / "moment_pairs.csv")]
    assert z and np.all(np.isfinite(z))
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["n_paths"] == 1000 and man["exit_status"] == 0
    for name, digest in man["outputs"].items():
        assert (out / name).exists() and len(digest) == 64


def test_negative_K_is_a_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, "grid: {steps: 8}\nharvest:\n  K: -2.0\n")
    code = main(["harvest", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "run.yaml:3: harvest.K" in err
    assert not (tmp_path / "o" / "manifest.json").exists()


@pytest.mark.parametrize("flags", [["--paths", "0"], ["--seed", "-1"]])
def test_bad_overrides(tmp_path, flags, capsys):
    cfg = _write(tmp_path, "grid: {steps: 8}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), *flags]) == 2
    assert flags[0] in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "model: {name: linear, params: {r: 100.0, sigma: 0.0}}\nensemble: {n_paths: 100}\nplots: false\n")
    out = tmp_path / "o"
    assert main(["forward", "--config", str(cfg), "--out", str(out)]) == 3
    assert "numerical failure in volterra" in capsys.readouterr().err
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == 3


def test_check_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, "grid: {steps: 16}\nensemble: {n_paths: 200}\nrates: {B: {kind: constant, level: 1.0}}\n"
                           "mp: {problem: lq, candidate: {kind: constant, value: 0.9}}\nplots: false\n")
    assert main(["check-mp", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 4


def test_deterministic_harvest_against_oracle_script(det_harvest, tmp_path):
    code, out = det_harvest
    assert code == 0
    oracle = tmp_path / "oracle.csv"
    subprocess.run([sys.executable, str(ROOT / "scripts" / "harvest_oracle.py"),
                    str(CONFIGS / "harvest_deterministic.yaml"), str(oracle)], check=True)
    got, want = _rows(out / "j_scan.csv"), _rows(oracle)
    assert len(got) == len(want) == 21
    for g, w in zip(got, want):
        assert float(g["u0"]) == pytest.approx(float(w["u0"]), abs=1e-15)
        assert float(g["J"]) == pytest.approx(float(w["J_left_sum"]), rel=1e-12, abs=1e-15)
        # left sum versus the exact integral: O(dt)
        assert abs(float(g["J"]) - float(w["J_integral"])) <= 0.01


def test_rerun_is_byte_identical(tmp_path):
    cfg = CONFIGS / "forward.yaml"
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["forward", "--config", str(cfg), "--out", str(d), "--paths", "300", "--quiet"]) == 0
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.json")
    assert any(n.endswith(".png") for n in names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("created"), mb.pop("created")
    assert ma == mb


def test_resolved_config_reproduces_run(tmp_path):
    a = tmp_path / "a"
    assert main(["simulate", "--config", str(CONFIGS / "simulate.yaml"), "--out", str(a), "--paths", "500",
                 "--seed", "11", "--quiet"]) == 0
    b = tmp_path / "b"
    assert main(["simulate", "--config", str(a / "resolved_config.yaml"), "--out", str(b), "--quiet"]) == 0
    for n in ("moments.csv", "moment_pairs.csv", "variance.csv", "rates.csv"):
        assert (a / n).read_bytes() == (b / n).read_bytes()
    assert json.loads((a / "manifest.json").read_text())["config_hash"] == \
        json.loads((b / "manifest.json").read_text())["config_hash"]


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "grid: {steps: 8}\nplots: false\n")
    res = subprocess.run([sys.executable, "-m", "tcvolterra", "bsde", "--config", str(cfg), "--out",
                          str(tmp_path / "o"), "--paths", "200"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "[PASS]" in res.stdout
