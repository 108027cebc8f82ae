import json
import subprocess
import sys

import pytest
import yaml

from sparsewbc.cli import main
from sparsewbc.sim.scenario import shipped_scenarios


@pytest.fixture
def tiny_scenario(tmp_path):
    """Shipped test1 layout cut down to 30 ms of standing."""
    data = yaml.safe_load(shipped_scenarios()["test1_planar"].read_text())
    data.update(name="tiny", start_time=0.0)
    data["phases"] = [{"name": "settle", "duration": 0.03, "supporting": ["l_foot", "r_foot"], "tasks": ["com", "posture"]}]
    data["metrics"] = {"com_tracking": {"window": [0.0, 0.03]}}
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def test_help_and_version():
    out = subprocess.run([sys.executable, "-m", "sparsewbc.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("verify", "bench", "simulate", "export"):
        assert cmd in out.stdout
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_verify_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["verify", "--instances", "5", "--seed", "7", "--json", str(a)]) == 0
    assert main(["verify", "--instances", "5", "--seed", "7", "--json", str(b)]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["passed"] and strip_timing(ra) == strip_timing(rb)
    assert "verify: PASS" in capsys.readouterr().out


def test_verify_bad_arguments(capsys):
    assert main(["verify", "--instances", "0"]) == 2


def test_verify_corrupt_model(tmp_path, capsys):
    bad = tmp_path / "broken.yaml"
    bad.write_text("format: [unclosed\n")
    assert main(["verify", "--instances", "1", "--model", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_verify_extra_model(capsys):
    assert main(["verify", "--instances", "2", "--model", "planar_biped"]) == 0


def test_bench_json(tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert main(["bench", "--n", "6", "--ks", "6", "--kf", "3", "--repetitions", "5", "--json", str(out)]) == 0
    rep = json.loads(out.read_text())["decomposition"]
    assert rep["n"] == 6 and rep["k_s"] == 6 and rep["k_f"] == 3 and rep["ratio"] > 0
    assert "speedup" in capsys.readouterr().out


def test_bench_alternate_sizes(capsys):
    assert main(["bench", "--n", "30", "--ks", "12", "--kf", "6", "--repetitions", "3"]) == 0
    line = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("{")][-1]
    rep = json.loads(line)["decomposition"]
    assert (rep["n"], rep["k_s"], rep["k_f"]) == (30, 12, 6)


def test_bench_usage_errors(capsys):
    assert main(["bench", "--ks", "2"]) == 2
    assert main(["bench", "--repetitions", "0"]) == 2
    assert main(["bench", "--n", "2", "--ks", "6", "--kf", "40", "--repetitions", "1"]) == 2


def test_bench_min_ratio_gate(capsys):
    assert main(["bench", "--n", "6", "--ks", "6", "--kf", "0", "--repetitions", "2", "--min-ratio", "1e9"]) == 1


def test_bench_kernels(capsys):
    assert main(["bench", "--n", "6", "--ks", "6", "--kf", "0", "--repetitions", "2", "--kernels"]) == 0
    assert "kernels[python]" in capsys.readouterr().out


def test_simulate_records_dt(tmp_path, tiny_scenario, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(tiny_scenario), "--out", str(out), "--dt", "0.0005", "--quiet"]) == 0
    side = json.loads((out / "tiny.json").read_text())
    assert side["meta"]["sim_dt"] == pytest.approx(5e-4) and side["meta"]["substeps"] == 2
    assert side["meta"]["command_line"]["dt"] == 0.0005
    assert "com_tracking" in side["metrics"]
    first = (out / "tiny.csv").read_bytes()
    assert main(["simulate", str(tiny_scenario), "--out", str(out), "--dt", "0.0005", "--quiet"]) == 0
    assert (out / "tiny.csv").read_bytes() == first


def test_simulate_bad_dt(tmp_path, tiny_scenario, capsys):
    assert main(["simulate", str(tiny_scenario), "--out", str(tmp_path), "--dt", "0.0003"]) == 2


def test_simulate_missing_scenario(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_export_from_log_and_scenario(tmp_path, tiny_scenario, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(tiny_scenario), "--out", str(out), "--quiet"]) == 0
    target = tmp_path / "series.csv"
    assert main(["export", str(out / "tiny.csv"), "--out", str(target), "--series", "tau_l_knee,com_x"]) == 0
    lines = target.read_text().splitlines()
    assert lines[0] == "t,series,value"
    assert {ln.split(",")[1] for ln in lines[1:]} == {"tau_l_knee", "com_x", "com_error"}
    assert main(["export", str(out / "tiny.csv"), "--series", "nothing"]) == 2
    assert main(["export", str(tiny_scenario), "--out", str(tmp_path / "s2.csv"), "--quiet"]) == 0
    assert main(["export", str(tmp_path / "absent.csv")]) == 2
