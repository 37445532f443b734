import json
import subprocess
import sys

import numpy as np
import pytest

from motionopt.cli import main
from motionopt.dataio import load_checkpoint, read_trajectory_csv, write_trajectory_csv
from motionopt.gru import rollout
from motionopt.kinematics import default_skeleton, forward_kinematics

SMALL_TRAIN = ["--epochs", "2", "--hidden", "8", "--stride", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--num-trajectories", "6", "--train-count", "4"]) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "model.json"), *SMALL_TRAIN]) == 0
    skel = default_skeleton()
    traj = read_trajectory_csv(root / "data" / "traj_005.csv", skel)
    write_trajectory_csv(traj.slice(0, 33), root / "obs.csv")
    return root


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_gen_data_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--out", str(tmp_path / name), "--num-trajectories", "3", "--train-count", "2",
                     "--seed", "4"]) == 0
    a, b = files_of(tmp_path / "a"), files_of(tmp_path / "b")
    assert a == b
    assert {"skeleton.json", "reaches.json", "manifest.json", "traj_000.csv"} <= set(a)
    meta = json.loads(a["reaches.json"])
    assert [t["split"] for t in meta["trajectories"]] == ["train", "train", "test"]


def test_train_outputs_and_repeatability(workspace, tmp_path):
    out = tmp_path / "again.json"
    assert main(["train", "--data", str(workspace / "data"), "--out", str(out), *SMALL_TRAIN]) == 0
    assert out.read_bytes() == (workspace / "model.json").read_bytes()
    assert (tmp_path / "again_log.csv").read_text() == (workspace / "model_log.csv").read_text()
    log = (workspace / "model_log.csv").read_text().splitlines()
    assert log[0] == "epoch,mean_loss" and len(log) == 3
    manifest = json.loads((workspace / "model.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["outputs"]["checkpoint"]["file"] == "model.json"


def test_optimize_toward_plain_endpoint_equals_predict(workspace):
    skel = default_skeleton()
    model = load_checkpoint(workspace / "model.json", skel)
    obs = read_trajectory_csv(workspace / "obs.csv", skel)
    plain, _ = rollout(model, obs, 24)
    wrist = forward_kinematics(skel, plain.states[-1])[skel.index("wrist_r")]
    goal = ",".join(repr(float(v)) for v in wrist)
    common = ["--model", str(workspace / "model.json"), "--observed", str(workspace / "obs.csv")]
    assert main(["predict", *common, "--out", str(workspace / "plain.csv")]) == 0
    assert main(["optimize", *common, "--out", str(workspace / "opt.csv"), "--goal", goal]) == 0
    assert (workspace / "opt.csv").read_bytes() == (workspace / "plain.csv").read_bytes()
    summary = json.loads((workspace / "opt_summary.json").read_text())
    assert summary["iterations"] == 0 and summary["delta_norm"] == 0.0
    # timestamps continue from the observed clip
    times = np.loadtxt(workspace / "plain.csv", delimiter=",", skiprows=1)[:, 0]
    np.testing.assert_allclose(times[0], 33 / 24, atol=1e-9)


def test_optimize_reaches_goal(workspace):
    out = workspace / "reach.csv"
    assert main(["optimize", "--model", str(workspace / "model.json"), "--observed", str(workspace / "obs.csv"),
                 "--out", str(out), "--goal", "0.3,-0.2,1.2"]) == 0
    summary = json.loads((workspace / "reach_summary.json").read_text())
    assert summary["final_goal_error_m"] < 0.02
    assert summary["final_cost"] < summary["initial_cost"]


def test_evaluate_and_plot_are_deterministic(workspace):
    table = workspace / "table.csv"
    assert main(["evaluate", "--model", str(workspace / "model.json"), "--data", str(workspace / "data"),
                 "--out", str(table)]) == 0
    assert table.read_text().splitlines()[0] == "method," + ",".join(f"h{125 * k}" for k in range(1, 9))
    assert (workspace / "table.txt").exists()
    svgs = []
    for name in ("t1.svg", "t2.svg"):
        assert main(["plot", "--input", str(table), "--out", str(workspace / name)]) == 0
        svgs.append((workspace / name).read_bytes())
    assert svgs[0] == svgs[1] and svgs[0].startswith(b"<svg")
    assert main(["plot", "--input", str(workspace / "plain.csv"), "--kind", "skeleton",
                 "--out", str(workspace / "sk.svg")]) == 0


def test_config_file_precedence(workspace, tmp_path):
    cfg = tmp_path / "opt.cfg"
    cfg.write_text("# goal settings\ngoal = 0.3,-0.2,1.2\nmax_iters = 0\n")
    common = ["--model", str(workspace / "model.json"), "--observed", str(workspace / "obs.csv"),
              "--config", str(cfg)]
    assert main(["optimize", *common, "--out", str(tmp_path / "a.csv")]) == 0
    assert json.loads((tmp_path / "a_summary.json").read_text())["iterations"] == 0
    assert main(["optimize", *common, "--out", str(tmp_path / "b.csv"), "--max-iters", "50"]) == 0
    assert json.loads((tmp_path / "b_summary.json").read_text())["iterations"] > 0


def test_bad_inputs_exit_nonzero(workspace, tmp_path, capsys):
    model = str(workspace / "model.json")
    obs = str(workspace / "obs.csv")
    cases = [
        ["predict", "--model", str(tmp_path / "missing.json"), "--observed", obs, "--out", str(tmp_path / "x.csv")],
        ["optimize", "--model", model, "--observed", obs, "--out", str(tmp_path / "x.csv"), "--goal", "1,2"],
        ["optimize", "--model", model, "--observed", obs, "--out", str(tmp_path / "x.csv"), "--goal", "1,2,3",
         "--end-effector", "tail"],
        ["train", "--data", str(tmp_path), "--out", str(tmp_path / "m.json")],
    ]
    for argv in cases:
        assert main(argv) == 1
        err = capsys.readouterr().err
        assert err.startswith("motionopt: error:") and err.count("\n") == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["predict", "--model", model, "--observed", obs, "--out", str(tmp_path / "x.csv"),
                 "--config", str(bad)]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_usage_errors_exit_two():
    proc = subprocess.run([sys.executable, "-m", "motionopt", "predict"], capture_output=True, text=True)
    assert proc.returncode == 2 and "required" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "motionopt", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-data" in proc.stdout
