import hashlib
import json

import pytest
import yaml

from rsmgan.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run
from rsmgan.evaluation import MetricReport

TINY = {
    "seed": 4,
    "data": {"n": 5, "T": 4000, "test_anomaly_count": 2, "magnitude": 3.0},
    "features": {"h": 2},
    "network": {
        "conv_layers": [[4, 3, 2], [8, 3, 1]],
        "critic_filters": [4, 8],
        "epochs": 2,
        "batch_size": 16,
        "critic_iters": 1,
    },
    "scoring": {"validation_anomalies": 2, "beta_grid": [1.0, 2.0]},
}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    p.write_text(yaml.safe_dump(TINY))
    return p


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory, config_file):
    out = tmp_path_factory.mktemp("run") / "a"
    for cmd in ("synth", "train", "detect", "evaluate"):
        assert run([cmd, "--config", str(config_file), "--out", str(out)]) == EXIT_OK, cmd
    return out


def test_full_pipeline_artifacts(pipeline_run):
    for name in (
        "data.csv", "labels.json", "calendar.json", "config.yaml", "checkpoint.npz", "losses.csv",
        "thresholds.json", "scores.csv", "root_causes.json", "scores.png", "metrics.json", "metrics.csv",
        "train.config.yaml", "detect.config.yaml", "evaluate.config.yaml",
    ):
        assert (pipeline_run / name).exists(), name
    assert (pipeline_run / "scores.png").stat().st_size > 0
    assert len((pipeline_run / "losses.csv").read_text().splitlines()) == 3
    report = MetricReport.load(pipeline_run / "metrics.json")
    assert report.tp + report.fp + report.fn + report.tn == 2000
    assert set(json.loads((pipeline_run / "thresholds.json").read_text())) == {
        "latent_b", "context_b", "context_h", "combined"
    }


def test_config_echo_round_trips(pipeline_run, config_file):
    echoed = yaml.safe_load((pipeline_run / "config.yaml").read_text())
    assert echoed["network"]["epochs"] == 2 and echoed["seed"] == 4
    assert echoed["network"]["seed"] == 4


def test_no_contamination_labels(pipeline_run):
    train_labels = json.loads((pipeline_run / "train_labels.json").read_text())
    test_labels = json.loads((pipeline_run / "test_labels.json").read_text())
    assert train_labels == [] and len(test_labels) == 2


def test_rerun_is_byte_identical(tmp_path, config_file, pipeline_run):
    out = tmp_path / "b"
    for cmd in ("synth", "train", "detect", "evaluate"):
        assert run([cmd, "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    for name in ("data.csv", "labels.json", "calendar.json", "checkpoint.npz", "thresholds.json", "scores.csv",
                 "root_causes.json", "metrics.json"):
        assert digest(out / name) == digest(pipeline_run / name), name


def test_write_once(pipeline_run, config_file):
    assert run(["synth", "--config", str(config_file), "--out", str(pipeline_run)]) == EXIT_USAGE


def test_invalid_mode_is_usage_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"data": {"mode": "hourly"}}))
    assert run(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_unknown_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["synth", "--frobnicate", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_USAGE


def test_missing_dataset_before_training(tmp_path, config_file):
    assert run(["train", "--config", str(config_file), "--out", str(tmp_path / "empty")]) == EXIT_DATA
    assert not (tmp_path / "empty" / "checkpoint.npz").exists()


def test_signature_mismatch_is_data_error(tmp_path, config_file, pipeline_run):
    cfg = dict(TINY, data=dict(TINY["data"], n=6))
    other = tmp_path / "six.yaml"
    other.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "c"
    assert run(["synth", "--config", str(other), "--out", str(out)]) == EXIT_OK
    for name in ("checkpoint.npz", "thresholds.json"):
        (out / name).write_bytes((pipeline_run / name).read_bytes())
    assert run(["detect", "--config", str(other), "--out", str(out)]) == EXIT_DATA


def test_repeats_and_report(tmp_path, config_file):
    out = tmp_path / "rep"
    args = ["--config", str(config_file), "--out", str(out), "--repeats", "2", "--seed", "10"]
    for cmd in ("synth", "train", "detect", "evaluate"):
        assert run([cmd, *args]) == EXIT_OK
    assert (out / "seed_10" / "metrics.json").exists() and (out / "seed_11" / "metrics.json").exists()
    assert (out / "metrics_mean.json").exists()
    assert run(["report", "--out", str(out)]) == EXIT_OK
    rows = (out / "report.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows] == ["setting", "seed_10", "seed_11", "mean"]
    assert (out / "losses.png").stat().st_size > 0


def test_report_one_row_per_run(tmp_path, pipeline_run):
    assert run(["report", "--out", str(tmp_path), "--runs", str(pipeline_run)]) == EXIT_OK
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("a,")
