#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行与流水线测试：合成 -> 训练 -> 预测/解释/评估，以及配置与错误输出
"""

import json
import os
import sys

import pandas as pd
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.hybrid_model import FinalModel
from core.learners.artifact import load_artifact
from core.pipeline import Pipeline
from main import main
from utils.config_manager import DEFAULT_CONFIG, ConfigManager

# 小规模、快速的训练参数
FAST_CONFIG = {
    "gbt_n_rounds": 5,
    "forest_n_trees": 5,
    "logreg_epochs": 50,
    "svm_epochs": 50,
    "grid_step": 0.5,
    "outlier_n_trees": 20,
    "lime_n": 100,
    "bootstrap_n": 100,
    "gsb_sample_size": 50,
}


def write_config(path, values):
    path.write_text(json.dumps(values), encoding="utf-8")
    return str(path)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert main(["synth", "--n", "400", "--seed", "5", "--out", str(data)]) == 0
    config = write_config(root / "fast.json", FAST_CONFIG)
    model_dir = root / "model"
    assert main(["train", "--config", config, "--input", str(data / "events.jsonl"),
                 "--annotations", str(data / "annotations.csv"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(model_dir)]) == 0
    return {"root": root, "data": data, "config": config, "model_dir": model_dir,
            "model": str(model_dir / "model.json")}


def test_synth_outputs(workspace):
    data = workspace["data"]
    for name in ("events.jsonl", "annotations.csv", "truth.csv", "query_stats.tsv",
                 "run_config.json"):
        assert (data / name).exists(), name
    assert len(pd.read_csv(data / "truth.csv")) == 400


def test_train_writes_artifact_and_metrics(workspace):
    artifact = load_artifact(workspace["model"])
    assert artifact["format_version"] == 1
    assert artifact["class_list"] == [0, 1, 2, 3]
    model = FinalModel.from_artifact(artifact)
    assert set(model.combiners) == {"ovr", "dag_classic", "dag_sat_dissat"}
    assert len(model.hybrid.weights) == 4

    metrics = json.loads((workspace["model_dir"] / "validation_metrics.json").read_text())
    for name in ("gbt", "cart", "forest", "gbdt", "logreg", "linsvm_ovr", "ovo", "ovr",
                 "dag_classic", "dag_sat_dissat", "hybrid"):
        assert 0.0 <= metrics["validation"][name]["macro"]["f1"] <= 1.0, name
    # 网格含全1权重，验证集上混合模型不低于提升树
    assert metrics["validation"]["hybrid"]["macro"]["f1"] >= \
        metrics["validation"]["gbt"]["macro"]["f1"] - 1e-12
    assert set(metrics["test"]) == {"hybrid", "single", "total"}
    assert metrics["ordering"]["hybrid_vs_multiclass"]["holds"]
    assert set(metrics["ordering"]["ranking"]) == set(metrics["validation"])


def test_training_is_deterministic(workspace):
    other = workspace["root"] / "model_again"
    data = workspace["data"]
    assert main(["train", "--config", workspace["config"], "--input", str(data / "events.jsonl"),
                 "--annotations", str(data / "annotations.csv"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(other)]) == 0
    assert read_bytes(other / "model.json") == read_bytes(workspace["model"])
    assert read_bytes(other / "validation_metrics.json") == \
        read_bytes(workspace["model_dir"] / "validation_metrics.json")


def test_predict_and_evaluate(workspace):
    data, out = workspace["data"], workspace["root"] / "predict"
    common = ["--model", workspace["model"], "--input", str(data / "events.jsonl"),
              "--query-stats", str(data / "query_stats.tsv"), "--out", str(out)]
    assert main(["predict"] + common) == 0
    predictions = pd.read_csv(out / "predictions.csv", dtype={"goal_id": str})
    assert len(predictions) == 400
    assert set(predictions["model_tag"]) == {"hybrid", "single"}
    assert set(predictions["label"]) <= {0, 1, 2, 3}

    assert main(["evaluate", "--truth", str(data / "truth.csv")] + common) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["n_sessions"] == 400
    assert {"total", "hybrid", "single"} <= set(metrics)


def test_explain(workspace):
    data, out = workspace["data"], workspace["root"] / "explain"
    assert main(["explain", "--config", workspace["config"], "--model", workspace["model"],
                 "--input", str(data / "events.jsonl"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(out)]) == 0
    lines = (out / "explanations.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 400
    first = json.loads(lines[0])
    assert set(first) == {"goal_id", "label", "signals", "fidelity"}
    rules = pd.read_csv(out / "rules.csv")
    assert rules["coverage_cum"].is_monotonic_increasing


def test_gsb_and_abtest(workspace):
    data, root = workspace["data"], workspace["root"]
    out = root / "gsb"
    assert main(["gsb", "--config", workspace["config"], "--model", workspace["model"],
                 "--input", str(data / "events.jsonl"), "--truth", str(data / "truth.csv"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(out)]) == 0
    report = pd.read_csv(out / "gsb_report.csv")
    assert report["metric"].tolist() == ["has_click_ratio", "click_ratio", "long_click_ratio"]
    assert (report["good"] + report["same"] + report["bad"]).tolist() == [50, 50, 50]

    treatment = root / "treatment"
    assert main(["synth", "--n", "300", "--seed", "6", "--shift", "0.3",
                 "--out", str(treatment)]) == 0
    out = root / "abtest"
    assert main(["abtest", "--config", workspace["config"], "--model", workspace["model"],
                 "--control", str(data / "events.jsonl"),
                 "--treatment", str(treatment / "events.jsonl"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(out)]) == 0
    ab = json.loads((out / "ab_report.json").read_text())
    assert ab["group_sizes"] == {"control": 400, "treatment": 300}
    assert set(ab["deltas"]) == {"session_score", "has_click_ratio", "click_ratio",
                                 "long_click_ratio"}


def test_ingest_extract_analyze(workspace):
    data, out = workspace["data"], workspace["root"] / "stages"
    assert main(["ingest", "--input", str(data / "events.jsonl"), "--out", str(out)]) == 0
    report = json.loads((out / "ingest_report.json").read_text())
    assert report["n_sessions"] == 400 and report["malformed"] == []

    assert main(["extract", "--input", str(out / "sessions.h5"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(out)]) == 0
    multi = pd.read_csv(out / "features.csv")
    single = pd.read_csv(out / "single_query_features.csv")
    assert len(multi) + len(single) == 400

    assert main(["analyze", "--input", str(out / "sessions.h5"),
                 "--annotations", str(data / "annotations.csv"), "--out", str(out)]) == 0
    assert (out / "correlation.csv").exists() and (out / "feature_levels.png").exists()


def test_predict_without_model_fails(tmp_path, capsys):
    events = tmp_path / "events.jsonl"
    events.write_text("", encoding="utf-8")
    code = main(["predict", "--input", str(events), "--out", str(tmp_path / "out")])
    assert code != 0
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["error"]["code"] == "model.NotFound"


def test_missing_input_is_reported(tmp_path, capsys):
    code = main(["ingest", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)])
    assert code == 2
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["error"]["code"] == "cli.MissingInput"


def test_config_precedence(tmp_path):
    config = write_config(tmp_path / "config.json", {"seed": 11, "grid_step": 0.25, "synth_n": 50})
    out = tmp_path / "out"
    assert main(["synth", "--config", config, "--seed", "13", "--n", "30", "--out", str(out)]) == 0
    effective = json.loads((out / "run_config.json").read_text())
    assert effective["seed"] == 13
    assert effective["grid_step"] == 0.25
    assert effective["synth_n"] == 30
    assert effective["keep_fraction"] == DEFAULT_CONFIG["keep_fraction"]
    assert len(pd.read_csv(out / "truth.csv")) == 30


def test_unknown_config_key(tmp_path, capsys):
    config = write_config(tmp_path / "config.json", {"gird_step": 0.5})
    assert main(["synth", "--config", config, "--out", str(tmp_path / "out")]) == 2
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["error"]["code"] == "cli.UnknownConfigKey"
    assert payload["error"]["details"]["keys"] == ["gird_step"]


def test_config_manager_overrides_skip_none():
    manager = ConfigManager()
    manager.apply_overrides({"seed": None, "alpha": 0.01})
    assert manager.get("seed") == DEFAULT_CONFIG["seed"]
    assert manager.get("alpha") == 0.01


def test_pipeline_unknown_command(tmp_path):
    pipeline = Pipeline(dict(DEFAULT_CONFIG, out=str(tmp_path)))
    success, result, message = pipeline.run("frobnicate")
    assert not success and "frobnicate" in message
