import json
import os
import subprocess
import sys

import pytest

from occupancy_lab import __version__
from occupancy_lab.cli import run_command

GEOM = '{"family": "geometric", "q": 0.5}'
POWER = '{"family": "power_law", "exponent": 2}'


def run(args, env=None):
    full = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "occupancy_lab", *args], capture_output=True,
                          text=True, env=full, timeout=600)


def data_rows(csv_text):
    lines = [l for l in csv_text.splitlines() if not l.startswith("#")]
    return lines[1:]


def test_moments_csv_forty_rows(tmp_path):
    spec = tmp_path / "geom.json"
    spec.write_text(GEOM)
    out = run(["moments", "--spec", str(spec), "--r", "1,2", "--t-grid", "1:2:20", "--format", "csv"])
    assert out.returncode == 0, out.stderr
    assert len(data_rows(out.stdout)) == 40
    assert out.stdout.startswith(f"# occupancy-lab {__version__} moments")
    assert '"q": 0.5' in out.stdout.splitlines()[1]


def test_moments_json_embeds_config_and_version():
    out = run(["moments", "--spec", GEOM, "--r", "1", "--t-grid", "1:2:3"])
    doc = json.loads(out.stdout)
    assert doc["version"] == __version__
    assert doc["config"]["t_grid"]["n"] == 3
    assert len(doc["result"]["entries"]) == 3


def test_bgy_verdict():
    doc = json.loads(run(["reproduce", "bgy-ex2"]).stdout)
    assert doc["result"]["verdict"] == "Regime2"
    assert doc["result"]["r0"] == 1


def test_genex_series():
    out = run(["reproduce", "genex", "--beta", "0.5", "--alpha", "1", "--r", "2"])
    doc = json.loads(out.stdout)
    summary = doc["result"]["summary"]
    assert summary["phi_inv_q_above_10"] and summary["phi_t_prime_below_half"]
    assert summary["largest_l"] == [9, 10, 11]


def test_output_file(tmp_path):
    dest = tmp_path / "lim.csv"
    assert run_command(["limit-cov", "--alpha", "0.5", "--format", "csv", "--out", str(dest)]) == 0
    assert len(data_rows(dest.read_text())) == 9


@pytest.mark.parametrize("args", [
    ["moments", "--spec", "/nonexistent/spec.json"],
    ["moments", "--spec", "{not json"],
    ["moments", "--spec", GEOM, "--t-grid", "1:0.5:3"],
    ["moments", "--spec", GEOM, "--r", "0"],
    ["moments", "--spec", '{"family": "geometric", "q": 2}'],
    ["simulate", "--spec", POWER],
    ["simulate", "--spec", POWER, "--n", "10", "--t", "5"],
    ["limit-cov"],
    ["limit-cov", "--alpha", "3"],
    ["frobnicate"],
    ["reproduce", "nope"],
])
def test_config_errors_exit_2(args, capsys):
    assert run_command(args) == 2
    assert capsys.readouterr().err


def test_inapplicable_bound_is_not_a_failure():
    out = run(["depoisson", "--spec", POWER, "--n", "1000", "--m", "500"])
    assert out.returncode == 0
    assert json.loads(out.stdout)["result"][0]["applicable"] is False


def test_degenerate_scan_points_reported():
    out = run(["scan-sigma", "--spec", '{"family": "explicit", "p": [1.0]}', "--R", "1,2",
               "--t-grid", "0.001:2:40"])
    assert out.returncode == 0
    assert json.loads(out.stdout)["result"]["skipped_points"]


def test_runtime_failure_exit_1(capsys):
    # about 1e9 balls would have to be placed one by one
    code = run_command(["simulate", "--spec", '{"family": "blocks", "rule": "factorial"}',
                        "--t", "1e9", "--reps", "2"])
    assert code == 1
    assert "ball" in capsys.readouterr().err


def test_degenerate_variance_reported_not_failed():
    out = run(["simulate", "--spec", '{"family": "explicit", "p": [1.0]}', "--t", "1e-9",
               "--reps", "5", "--R", "1,2"])
    assert out.returncode == 0
    res = json.loads(out.stdout)["result"]
    assert res["status"] == "degenerate_variance" and res["r"] == 2


def test_simulate_identical_across_threads():
    args = ["simulate", "--spec", POWER, "--t", "1000", "--reps", "300", "--seed", "4"]
    a = run(args, {"OCCUPANCY_THREADS": "1"})
    b = run(args, {"OCCUPANCY_THREADS": "3"})
    assert a.returncode == 0
    assert a.stdout == b.stdout


def test_uncertifiable_time_exits_one():
    res = run(["classify", "--spec", POWER, "--t-grid", "2^2000:2:40"])
    assert res.returncode == 1
    assert "head terms" in res.stderr
