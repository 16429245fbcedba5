#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
默认合成基准测试：5000个会话、种子7、60/20/20划分、全部默认参数
检查验证集上的模型排序：混合模型不低于多分类模型且两者都不低于0.80，树集成不低于线性模型
"""

import json
import os
import sys

import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from main import main
from utils.config_manager import DEFAULT_CONFIG


@pytest.fixture(scope="module")
def benchmark_metrics(tmp_path_factory):
    root = tmp_path_factory.mktemp("benchmark")
    data = root / "data"
    assert main(["synth", "--n", "5000", "--seed", "7", "--out", str(data)]) == 0
    model_dir = root / "model"
    assert main(["train", "--input", str(data / "events.jsonl"),
                 "--annotations", str(data / "annotations.csv"),
                 "--query-stats", str(data / "query_stats.tsv"), "--out", str(model_dir)]) == 0
    effective = json.loads((model_dir / "run_config.json").read_text())
    assert effective["seed"] == 7
    assert effective["split_ratios"] == DEFAULT_CONFIG["split_ratios"] == [0.6, 0.2, 0.2]
    return json.loads((model_dir / "validation_metrics.json").read_text())


@pytest.mark.slow
def test_hybrid_not_worse_than_multiclass(benchmark_metrics):
    f1 = {name: item["macro"]["f1"] for name, item in benchmark_metrics["validation"].items()}
    assert f1["hybrid"] >= f1["gbt"] - 1e-12
    assert f1["gbt"] >= 0.80 and f1["hybrid"] >= 0.80
    assert benchmark_metrics["ordering"]["hybrid_vs_multiclass"]["holds"]


@pytest.mark.slow
def test_tree_ensembles_not_worse_than_linear_models(benchmark_metrics):
    f1 = {name: item["macro"]["f1"] for name, item in benchmark_metrics["validation"].items()}
    assert min(f1["forest"], f1["gbt"]) >= max(f1["logreg"], f1["linsvm_ovr"])
    summary = benchmark_metrics["ordering"]["ensembles_vs_linear"]
    assert summary["holds"]
    assert summary["ensemble_min"] == min(f1["forest"], f1["gbt"])


@pytest.mark.slow
def test_ranking_is_recorded(benchmark_metrics):
    ordering = benchmark_metrics["ordering"]
    assert set(ordering["ranking"]) == set(benchmark_metrics["validation"])
    scores = [ordering["macro_f1"][name] for name in ordering["ranking"]]
    assert scores == sorted(scores, reverse=True)
