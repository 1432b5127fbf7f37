"""
Tests della CLI: pipeline completa, determinismo ed exit code
"""
import json

import numpy as np
import pandas as pd
import pytest

from conftest import write_config
from main import main

PIPELINE = ["synthesize", "inject", "train", "score", "eval"]
ARTIFACTS = ["ground_truth.txt", "mechanisms.tsv", "checkpoint.json", "train_report.json",
             "scores.csv", "metrics.json", "roc.tsv"]


def _run(command, config, *extra):
    return main(["-q", command, "--config", str(config), *map(str, extra)])


def _pipeline(config, output_dir=None):
    extra = ["--output-dir", output_dir] if output_dir is not None else []
    return [_run(command, config, *extra) for command in PIPELINE]


# ==================== Pipeline ====================

def test_full_pipeline(run_config, tmp_path, capsys):
    assert _pipeline(run_config) == [0, 0, 0, 0, 0]
    out = tmp_path / "out"
    for name in ARTIFACTS:
        assert (out / name).is_file(), name
    assert (out / "perturbed" / "manifest.ini").is_file()

    scores = pd.read_csv(out / "scores.csv")
    assert list(scores.columns) == ["node_id", "score", "rank"]
    assert len(scores) == 40
    assert sorted(scores["node_id"]) == list(range(40))
    assert scores["rank"].tolist() == list(range(1, 41))
    assert scores["score"].is_monotonic_decreasing

    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["accuracy_at_k"]) == {"5", "10"}
    assert metrics["n_anomalies"] == 8
    assert 0.0 <= metrics["auc"] <= 1.0

    report = json.loads((out / "train_report.json").read_text())
    assert report["status"] == "completed"
    assert len(report["epochs"]) == 5
    assert "seconds" not in report["epochs"][0]
    assert "AUC=" in capsys.readouterr().out


def test_pipeline_is_byte_identical_across_runs(run_config, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert _pipeline(run_config, first) == [0] * 5
    assert _pipeline(run_config, second) == [0] * 5
    for name in ARTIFACTS:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_rescoring_is_byte_identical(run_config, tmp_path):
    _pipeline(run_config)
    scores = tmp_path / "out" / "scores.csv"
    before = scores.read_bytes()
    assert _run("score", run_config) == 0
    assert scores.read_bytes() == before


def test_train_uses_explicit_dataset(run_config, tmp_path):
    assert _run("synthesize", run_config) == 0
    assert _run("inject", run_config) == 0
    assert _run("train", run_config, "--dataset", tmp_path / "data" / "manifest.ini", "--epochs", 2) == 0
    report = json.loads((tmp_path / "out" / "train_report.json").read_text())
    assert len(report["epochs"]) == 2


# ==================== Spectral and Sweep ====================

def test_spectral_outputs(run_config, tmp_path, capsys):
    assert _run("synthesize", run_config) == 0
    assert _run("spectral", run_config) == 0
    for view in ("view1", "view2"):
        table = pd.read_csv(tmp_path / "out" / f"spectrum_{view}.tsv", sep="\t")
        assert list(table.columns) == ["frequency", "response"]
        assert len(table) == 40
        assert table["frequency"].min() == pytest.approx(0.0, abs=1e-10)
    assert "max_frequency=" in capsys.readouterr().out


def test_spectral_signal_column(run_config, tmp_path):
    assert _run("synthesize", run_config) == 0
    assert _run("spectral", run_config, "--view", "view2", "--signal-column", 0) == 0
    table = pd.read_csv(tmp_path / "out" / "spectrum_view2.tsv", sep="\t")
    assert list(table.columns) == ["frequency", "response", "raw_energy", "filtered_energy"]
    assert not (tmp_path / "out" / "spectrum_view1.tsv").exists()


def test_sweep_epsilon(run_config, tmp_path):
    with open(run_config, "a", encoding="utf-8") as handle:
        handle.write("epsilon_sweep: [0.3, 0.7]\n")
    assert _run("synthesize", run_config) == 0
    assert _run("inject", run_config) == 0
    assert _run("sweep-epsilon", run_config, "--epochs", 2) == 0
    lines = (tmp_path / "out" / "sweep_epsilon.jsonl").read_text().splitlines()
    assert [json.loads(line)["epsilon"] for line in lines] == [0.3, 0.7]
    table = pd.read_csv(tmp_path / "out" / "sweep_epsilon.tsv", sep="\t")
    assert list(table.columns) == ["epsilon", "auc", "acc@5", "acc@10"]


# ==================== Exit Codes ====================

def test_missing_config_exit_code(tmp_path):
    assert _run("train", tmp_path / "missing.yaml") == 3


def test_invalid_config_exit_code(tmp_path):
    config = write_config(tmp_path / "bad.yaml", "dataset: data/manifest.ini\nhyperparams:\n  epsilon: 2\n")
    write_config(tmp_path / "data" / "manifest.ini", "attributes = x.csv\n")
    assert _run("train", config) == 1
    assert not (tmp_path / "out").exists()


def test_unknown_command_and_flag(run_config):
    assert main(["frobnicate"]) == 1
    assert main(["train", "--config", str(run_config), "--epsilon", "abc"]) == 1


def test_corrupt_dataset_writes_nothing(run_config, tmp_path):
    write_config(tmp_path / "data" / "attributes.csv", "1,2\n3,oops\n")
    write_config(tmp_path / "data" / "v.edges", "0 1\n")
    write_config(tmp_path / "data" / "manifest.ini", "attributes = attributes.csv\n[view.v]\nedges = v.edges\n")
    assert _run("train", run_config) == 1
    assert not (tmp_path / "out" / "checkpoint.json").exists()
    assert not (tmp_path / "out" / "train_report.json").exists()


def test_divergence_exit_code(run_config, tmp_path):
    attributes = np.full((4, 2), 1e160)
    write_config(tmp_path / "data" / "attributes.csv",
                 "".join(",".join(repr(v) for v in row) + "\n" for row in attributes))
    write_config(tmp_path / "data" / "v.edges", "0 1\n1 2\n2 3\n")
    write_config(tmp_path / "data" / "manifest.ini", "attributes = attributes.csv\n[view.v]\nedges = v.edges\n")
    assert _run("train", run_config) == 2
    report = json.loads((tmp_path / "out" / "train_report.json").read_text())
    assert report["status"] == "diverged"
    assert not (tmp_path / "out" / "checkpoint.json").exists()


def test_unknown_view_exit_code(run_config, tmp_path):
    assert _run("synthesize", run_config) == 0
    assert _run("spectral", run_config, "--view", "nope") == 1
    assert not list(tmp_path.glob("out/spectrum_*.tsv"))


def test_score_without_checkpoint(run_config):
    assert _run("synthesize", run_config) == 0
    assert _run("score", run_config) == 3


def test_eval_k_larger_than_n(run_config):
    _pipeline(run_config)
    assert _run("eval", run_config, "--k-list", 5, 100) == 1


# ==================== Flags and Inputs ====================

def test_sweep_rejects_epsilon_flag(run_config):
    assert _run("synthesize", run_config) == 0
    assert _run("inject", run_config) == 0
    assert _run("sweep-epsilon", run_config, "--epsilon", 0.3) == 1


def test_train_needs_only_the_dataset_it_uses(run_config, tmp_path):
    assert _run("synthesize", run_config) == 0
    assert _run("inject", run_config) == 0
    (tmp_path / "data" / "manifest.ini").unlink()
    assert _run("train", run_config) == 0
    assert _run("score", run_config) == 0
    assert _run("train", run_config, "--dataset", tmp_path / "data" / "manifest.ini") == 3


def test_inject_with_default_spec(tmp_path):
    config = write_config(tmp_path / "run.yaml", """\
dataset: data/manifest.ini
output_dir: out
synthetic:
  n_nodes: 400
  n_views: 2
  n_attributes: 5
""")
    assert _run("synthesize", config) == 0
    assert _run("inject", config) == 0
    ids = [line for line in (tmp_path / "out" / "ground_truth.txt").read_text().splitlines()
           if line and not line.startswith("#")]
    assert len(ids) == 25 * 6 + 150
    assert len(set(ids)) == 300


def test_train_report_echoes_default_hyperparams(tmp_path):
    config = write_config(tmp_path / "run.yaml", """\
dataset: data/manifest.ini
output_dir: out
synthetic:
  n_nodes: 30
  n_views: 2
  n_attributes: 4
""")
    assert _run("synthesize", config) == 0
    assert _run("train", config, "--epochs", 1) == 0
    hyperparams = json.loads((tmp_path / "out" / "train_report.json").read_text())["hyperparams"]
    assert (hyperparams["embedding_dim"], hyperparams["filter_order"]) == (30, 3)
    assert (hyperparams["learning_rate"], hyperparams["epsilon"]) == (0.001, 0.5)
    assert hyperparams["n_views"] == 2
    assert (tmp_path / "out" / "checkpoint.json").is_file()
