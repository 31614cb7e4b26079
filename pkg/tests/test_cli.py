import json

import numpy as np
import pytest

from pvcg import Economy, save_economy, total_payment
from pvcg.cli import main
from pvcg.experiment import ExperimentConfig, SurfaceGrid
from pvcg.learner import TrainingConfig


@pytest.fixture
def economy_file(tmp_path):
    economy = Economy.sqrt_sum([1.0, 1.0], [0.1, 10.0], [1.0])
    path = tmp_path / "economy.json"
    save_economy(economy, path)
    return economy, path


@pytest.fixture
def config_file(tmp_path):
    config = ExperimentConfig(
        n=4,
        m=2,
        training=TrainingConfig(
            batch_size=64, epochs=200, learning_rate=2e-2, momentum=0.9, hidden=(8,), seed=2
        ),
        surface=SurfaceGrid(x_points=6, gamma_points=5),
        dsic_trials=10,
        dsic_deviations=5,
        ir_samples=50,
        monotonicity_trials=30,
        existence_samples=50,
        seed=2,
    )
    path = tmp_path / "config.json"
    config.save(path)
    return config, path


def test_simulate_prints_payments(economy_file, capsys):
    economy, path = economy_file
    assert main(["simulate", "--economy", str(path)]) == 0
    record = json.loads(capsys.readouterr().out)
    expected = total_payment(economy)
    assert record["total"] == pytest.approx(list(expected.total), abs=1e-9)
    assert record["surplus"] == pytest.approx(expected.surplus, abs=1e-9)
    assert record["punished"] == [False, False]


def test_simulate_writes_file(economy_file, tmp_path):
    _, path = economy_file
    out = tmp_path / "out"
    assert main(["simulate", "--economy", str(path), "--out", str(out)]) == 0
    assert (out / "payments.json").exists()


def test_check_assumptions_clean_family(capsys):
    assert main(["check-assumptions", "--family", "sqrt_sum", "--producers", "3",
                 "--samples", "500", "--seed", "1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] is True


def test_check_assumptions_detects_bad_scale(capsys):
    # scale far below the producer count breaks the synergy inequality
    code = main(["check-assumptions", "--family", "sqrt_sum", "--producers", "4",
                 "--scale", "1.0", "--samples", "500", "--seed", "1"])
    assert code == 1


def test_train_and_surface_and_verify(config_file, tmp_path, capsys):
    _, config_path = config_file
    out = tmp_path / "artifacts"
    assert main(["train", "--config", str(config_path), "--out", str(out)]) == 0
    assert (out / "model.json").exists() and (out / "loss_trace.csv").exists()

    assert main(["surface", "--config", str(config_path), "--out", str(out),
                 "--adjustment", f"learned:{out / 'model.json'}"]) == 0
    header = (out / "surface.csv").read_text().splitlines()[0]
    assert header == "x0,gamma0,tau0,adjustment0,p0"

    assert main(["verify", "--config", str(config_path), "--out", str(out),
                 "--adjustment", "analytic"]) == 0
    report = json.loads((out / "verification.json").read_text())
    assert report["passed"] is True
    assert report["ir_wbb"]["min_pass_rate"] == 1.0

    # a trained network is gated on expected penalty, not per-instance feasibility
    assert main(["verify", "--config", str(config_path), "--out", str(out),
                 "--adjustment", f"learned:{out / 'model.json'}"]) == 0
    report = json.loads((out / "verification.json").read_text())
    assert report["passed"] is True
    assert report["ir_wbb"]["max_mean_penalty"] == pytest.approx(0.01)
    capsys.readouterr()


def test_run_subcommand(config_file, tmp_path):
    _, config_path = config_file
    out = tmp_path / "full"
    assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
    assert (out / "report.json").exists()
