import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from eptrace.cli import main
from eptrace.config import parse_config
from eptrace.runner import CSV_HEADERS, emit, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_cli(tmp_path, name, *extra):
    out = tmp_path / name
    proc = subprocess.run(
        [sys.executable, "-m", "eptrace", "run", str(CONFIGS / f"{name}.json"), "--out", str(out), *extra],
        capture_output=True, text=True,
    )
    return proc, out


def load(out):
    return json.loads((out / "result.json").read_text())


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_ep_find_recovers_analytic_point(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_ep_find")
    assert proc.returncode == 0, proc.stderr
    res = load(out)
    x, y = res["payload"]["point"]
    assert abs(x) < 1e-6 and abs(y - 1) < 1e-6
    assert res["payload"]["converged"] is True
    assert res["warnings"] == []
    assert header(out / "ep_find.csv") == CSV_HEADERS["ep_find"]


def test_encircle_permutation(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_encircle")
    assert proc.returncode == 0, proc.stderr
    assert load(out)["payload"]["permutation"] == [1, 0]
    proc, out = run_cli(tmp_path, "two_level_encircle_control")
    assert proc.returncode == 0
    assert load(out)["payload"]["permutation"] == [0, 1]


def test_left_domain_is_fatal(tmp_path):
    proc, out = run_cli(tmp_path, "ep_find_left_domain")
    assert proc.returncode == 1
    res = load(out)
    assert res["error"]["kind"] == "LeftDomain"
    assert not (out / "ep_find.csv").exists()


def test_near_defective_warning_exit_code(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_rigidity_map")
    assert proc.returncode == 2
    res = load(out)
    assert res["warnings"] and all(w["kind"] == "NearDefective" for w in res["warnings"])
    assert header(out / "rigidity_map.csv") == ["x", "y", "state", "re_r", "im_r", "abs_r"]
    with open(out / "rigidity_map.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    keys = [(float(r[0]), float(r[1]), int(r[2])) for r in rows]
    assert keys == sorted(keys)
    assert all(float(r[5]) <= 1 + 1e-12 for r in rows)


def test_trap_header(tmp_path):
    proc, out = run_cli(tmp_path, "trap")
    assert proc.returncode == 0, proc.stderr
    assert header(out / "trap.csv") == ["alpha"] + [f"Gamma_{k}" for k in range(1, 11)] + ["sum_residual"]


def test_json_format_embeds_table(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_eig", "--format", "json")
    assert proc.returncode == 0
    res = load(out)
    assert res["table"]["header"] == CSV_HEADERS["eig"]
    assert not (out / "eig.csv").exists()


def test_seed_is_echoed(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_eig", "--seed", "42")
    assert load(out)["seed"] == 42


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"two_level": {"e1": 1, "e2": 0, "omega": 0}},
                               "task": {"eig": {"bogus": 1}}}))
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "/task/eig/bogus" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 1


def test_empty_warning_list_is_written(tmp_path):
    cfg = parse_config((CONFIGS / "two_level_eig.json").read_text())
    env = run(cfg)
    emit(env, "csv", tmp_path)
    text = (tmp_path / "result.json").read_text()
    assert '"warnings": []' in text


@pytest.mark.parametrize("name", ["two_level_eig", "two_level_sweep", "energy_dependent_eig"])
def test_repeat_runs_identical(tmp_path, name):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        cfg = parse_config((CONFIGS / f"{name}.json").read_text())
        emit(run(cfg), "csv", out)
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_eig_csv_values(tmp_path):
    proc, out = run_cli(tmp_path, "two_level_eig")
    with open(out / "eig.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    # [[1, 0.5i], [0.5i, -1]] has eigenvalues +/- sqrt(0.75)
    vals = sorted(float(r["re_lambda"]) for r in rows)
    assert vals == pytest.approx([-0.75 ** 0.5, 0.75 ** 0.5], abs=1e-14)
    assert all(abs(float(r["im_lambda"])) < 1e-14 for r in rows)
