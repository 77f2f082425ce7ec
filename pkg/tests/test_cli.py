import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gauzecut import stewart
from gauzecut.cli import main

RESULT_FILES = ["trajectory.csv", "grasp_reports.csv", "policy.txt", "train_log.csv",
                "episode.csv", "score.csv", "final_cloth.csv"]


def run(*argv):
    return main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def line_pipeline(tmp_path_factory, line_scenario_path):
    out = tmp_path_factory.mktemp("pipe")
    assert run("pipeline", "--scenario", line_scenario_path, "--out", out, "--no-figures") == 0
    return out


def test_plan_on_line(tmp_path, line_scenario_path):
    assert run("plan", "--scenario", line_scenario_path, "--out", tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["result"]["segments"] == 1 and manifest["result"]["notches"] == 0
    assert manifest["seed"] == 3
    assert set(manifest["outputs"]) == {"trajectory.csv", "figures/trajectory.png"}
    assert (tmp_path / "figures" / "trajectory.png").stat().st_size > 0


def test_seed_flag_overrides_scenario(tmp_path, line_scenario_path):
    assert run("plan", "--scenario", line_scenario_path, "--out", tmp_path,
               "--seed", 11, "--no-figures") == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 11


def test_stewart_ik_at_home(tmp_path):
    assert run("stewart", "ik", "--out", tmp_path) == 0
    angles = stewart.read_angles_csv(tmp_path / "angles.csv")[0]
    assert np.allclose(angles, angles[0])
    row = read_rows(tmp_path / "angles.csv")[0]
    assert float(row["max_residual"]) < 1e-9 and row["in_range"] == "1"


def test_stewart_fk_inverts_ik(tmp_path):
    pose = [0.3, -0.2, 5.2, 4.0, -3.0, 6.0]
    assert run("stewart", "ik", "--out", tmp_path / "ik", "--pose", *pose) == 0
    assert run("stewart", "fk", "--out", tmp_path / "fk",
               "--angles-csv", tmp_path / "ik" / "angles.csv") == 0
    back = stewart.read_poses_csv(tmp_path / "fk" / "poses.csv")[0]
    assert np.abs(back.as_array() - pose).max() < 1e-6


def test_stewart_mode(tmp_path):
    assert run("stewart", "mode", "--out", tmp_path, "--axis", "z", "--mode", "breathing",
               "--A", 0.5, "--omega", 0.5, "--no-figures") == 0
    rows = read_rows(tmp_path / "mode.csv")
    vals = np.array([float(r["value"]) for r in rows])
    assert vals.min() >= 0 and vals.max() <= 1.0 + 1e-12
    assert float(rows[0]["value"]) == pytest.approx(1.0 / (np.e + 1), abs=1e-8)


def test_sync_budget_and_run(tmp_path):
    (tmp_path / "s.yaml").write_text("sync: {trials: 20, path_s: 2.0}\n")
    assert run("sync", "budget", "--scenario", tmp_path / "s.yaml", "--out", tmp_path / "b",
               "--no-figures") == 0
    summary = {r["controller"]: r for r in read_rows(tmp_path / "b" / "budget_summary.csv")}
    assert float(summary["full_sync"]["analytic_phase_only"]) == pytest.approx(1.0)
    assert run("sync", "run", "--scenario", tmp_path / "s.yaml", "--out", tmp_path / "r",
               "--no-figures") == 0
    names = [r["controller"] for r in read_rows(tmp_path / "r" / "run_summary.csv")]
    assert names == ["open_loop", "full_sync", "intermittent"]


def test_camera_map(tmp_path):
    np.savetxt(tmp_path / "C.csv", [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]], delimiter=",")
    v = np.linspace(-5, 5, 3)
    np.savetxt(tmp_path / "S.csv", np.array(np.meshgrid(v, v, v)).reshape(3, -1).T, delimiter=",")
    np.savetxt(tmp_path / "T.csv", [[1, 0, 3], [0, 1, -2], [0, 0, 1]], delimiter=",")
    assert run("camera", "map", "--out", tmp_path / "o", "--camera", tmp_path / "C.csv",
               "--samples", tmp_path / "S.csv", "--transform", tmp_path / "T.csv") == 0
    pose = read_rows(tmp_path / "o" / "pose.csv")[0]
    assert float(pose["x"]) == pytest.approx(0.3) and float(pose["y"]) == pytest.approx(-0.2)
    assert pose["out_of_range"] == "0"


def test_pipeline_outputs(line_pipeline):
    for name in RESULT_FILES + ["manifest.json"]:
        assert (line_pipeline / name).exists(), name
    scores = {r["policy"]: r for r in read_rows(line_pipeline / "score.csv")}
    assert set(scores) == {"trained", "no_tension", "orthogonal"}
    assert int(scores["trained"]["score_count"]) <= int(scores["no_tension"]["score_count"])
    manifest = json.loads((line_pipeline / "manifest.json").read_text())
    assert len(manifest["scenario_sha256"]) == 64
    assert {"numpy", "python", "gauzecut"} <= set(manifest["versions"])


def test_staged_run_equals_pipeline(tmp_path, line_pipeline, line_scenario_path):
    for cmd in ("plan", "grasp", "execute"):
        assert run(cmd, "--scenario", line_scenario_path, "--out", tmp_path, "--no-figures") == 0
    for name in RESULT_FILES:
        assert (tmp_path / name).read_bytes() == (line_pipeline / name).read_bytes(), name


def test_rerun_is_byte_identical(tmp_path, line_pipeline, line_scenario_path):
    assert run("pipeline", "--scenario", line_scenario_path, "--out", tmp_path, "--no-figures") == 0
    for name in RESULT_FILES:
        assert (tmp_path / name).read_bytes() == (line_pipeline / name).read_bytes(), name
    a = json.loads((tmp_path / "manifest.json").read_text())
    b = json.loads((line_pipeline / "manifest.json").read_text())
    assert a["outputs"] == b["outputs"]


def test_execute_with_explicit_policy(tmp_path, line_pipeline, line_scenario_path):
    assert run("execute", "--scenario", line_scenario_path, "--out", tmp_path, "--no-figures",
               "--policy", line_pipeline / "policy.txt") == 0
    assert (tmp_path / "score.csv").read_bytes() == (line_pipeline / "score.csv").read_bytes()


def test_bad_scenario_writes_error_record(tmp_path):
    (tmp_path / "bad.yaml").write_text("colth: {}\n")
    code = run("plan", "--scenario", tmp_path / "bad.yaml", "--out", tmp_path / "o")
    assert code == 2
    record = json.loads((tmp_path / "o" / "error.json").read_text())
    assert record["status"] == "error" and record["type"] == "ConfigError"


def test_missing_scenario_file(tmp_path):
    assert run("plan", "--scenario", tmp_path / "nope.yaml", "--out", tmp_path / "o") == 2
    assert (tmp_path / "o" / "error.json").exists()


def test_unreachable_pose_is_a_runtime_error(tmp_path):
    assert run("stewart", "ik", "--out", tmp_path, "--pose", 0, 0, 20, 0, 0, 0) == 1
    assert json.loads((tmp_path / "error.json").read_text())["type"] == "Unreachable"


def test_default_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GAUZECUT_OUT", str(tmp_path))
    assert run("stewart", "ik") == 0
    assert (tmp_path / "stewart" / "angles.csv").exists()


def test_bench_scores_identical(tmp_path, line_scenario_path):
    assert run("bench", "--scenario", line_scenario_path, "--out", tmp_path / "a",
               "--episodes", 1, "--no-figures") == 0
    assert run("bench", "--scenario", line_scenario_path, "--out", tmp_path / "b",
               "--episodes", 20, "--threads", 2, "--no-figures") == 0
    one = read_rows(tmp_path / "a" / "bench.csv")
    many = read_rows(tmp_path / "b" / "bench.csv")
    assert len(many) == 2
    assert all(r["identical_scores"] == "True" for r in many)
    assert {r["score_count"] for r in one + many} == {one[0]["score_count"]}


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gauzecut", "stewart", "ik", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout.strip().splitlines()[-1])["status"] == "ok"
