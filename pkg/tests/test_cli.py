import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from gaitloop.cli import main
from gaitloop.imu import merge_streams, write_imu_csv
from gaitloop.session.config import DEFAULT_WALKER
from gaitloop.slc_model import write_training_csv
from gaitloop.walker_sim import synthesize_imu


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    path = d / "session.yaml"
    cfg = dict(
        baseline_duration=20.0,
        beats_per_block=8,
        condition_duration=20.0,
        strategy="Fixed",
        secondary_task=False,
        walker=dict(DEFAULT_WALKER, noise_f=0.0, noise_l=0.0),
    )
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def simulated(config_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["--config", str(config_file), "--seed", "4", "--out", str(out), "simulate"]) == 0
    return out


def test_simulate_writes_logs_and_charts(simulated):
    for name in ("steps.csv", "cues.csv", "metrics.csv", "imu.csv", "delta_stride.svg", "percent_on.svg", "slc.svg"):
        assert (simulated / name).exists(), name
    summary = json.loads((simulated / "session.json").read_text().split("\n", 1)[1])
    assert summary["config"]["seed"] == 4


def test_replay_matches_simulate(simulated, config_file, tmp_path):
    rc = main(["replay", "--config", str(config_file), "--seed", "4", "--out", str(tmp_path), "--input", str(simulated / "imu.csv")])
    assert rc == 0
    assert (tmp_path / "steps.csv").read_bytes() == (simulated / "steps.csv").read_bytes()


def test_metrics_and_plot_subcommands(simulated, tmp_path, capsys):
    assert main(["metrics", str(simulated), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").read_bytes() == (simulated / "metrics.csv").read_bytes()
    assert "baseline:" in capsys.readouterr().out
    assert main(["plot", str(simulated), "--out", str(tmp_path / "p")]) == 0
    assert {p.name for p in (tmp_path / "p").glob("*.svg")} == {"delta_stride.svg", "percent_on.svg", "slc.svg"}


def test_fit_slc(tmp_path, capsys):
    f = [1.16, 1.41, 1.58, 1.75, 1.91]
    path = tmp_path / "training.csv"
    write_training_csv(path, [(c, 0.5 + 0.2 * c, c) for c in f])
    assert main(["fit-slc", str(path), "--baseline", "2.0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["slc"]["degree"] == 1
    assert doc["slc"]["coeffs"] == pytest.approx([0.2, 0.5])
    assert doc["targets"]["f_target"] == pytest.approx(2.2)
    assert doc["targets"]["l_target"] == pytest.approx(1.04)


def test_estimate(tmp_path):
    imu = tmp_path / "imu.csv"
    streams = {"L": synthesize_imu(1.6, 1.1, 8.0), "R": synthesize_imu(1.6, 1.1, 8.0, t0=0.3125)}
    write_imu_csv(imu, merge_streams(streams))
    assert main(["estimate", str(imu), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "strides.csv").read_text().splitlines()
    assert lines[0] == "#gaitloop-v1"
    assert lines[1].split(",")[:5] == ["foot", "start_t", "end_t", "stride_length", "cadence"]
    strides = np.array([float(l.split(",")[3]) for l in lines[2:]])
    assert len(strides) >= 20 and np.allclose(strides, 1.1, atol=0.02)


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 1\n")
    assert main(["--config", str(bad), "simulate"]) == 1
    assert "nonsense_key" in capsys.readouterr().err
    assert main(["fit-slc", str(tmp_path / "missing.csv")]) == 1
    assert main(["replay", "--out", str(tmp_path)]) == 1


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "gaitloop.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "replay", "fit-slc", "estimate", "metrics", "plot"):
        assert cmd in res.stdout
