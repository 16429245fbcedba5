#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相关性分析测试
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.correlation import (GROUPS, correlation_report, pearson, plot_feature_levels,
                              select_features, significance)
from core.errors import ZeroVariance
from core.feature_extractor import build_feature_frames
from core.preprocessor import impute_missing
from core.session_model import build_sessions, parse_log
from core.synth_generator import SynthConfig, synth_generate


def test_pearson_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson(x, [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(ZeroVariance):
        pearson(x, [5, 5, 5, 5])


def test_pearson_symmetric_and_affine_invariant():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=50), rng.normal(size=50)
    assert pearson(x, y) == pytest.approx(pearson(y, x))
    assert pearson(3 * x + 2, y) == pytest.approx(pearson(x, y))


def test_significance_examples():
    assert significance(0.0, 25) == pytest.approx(1.0)
    assert significance(0.999999, 10) < 1e-6
    assert significance(0.5, 30) == pytest.approx(0.00487, abs=5e-5)


def test_feature_equal_to_label():
    labels = np.repeat(np.arange(4), 25)
    frame = pd.DataFrame({"f": labels.astype(float)})
    report = correlation_report(frame, labels)
    for group in GROUPS:
        assert report.value("f", group) == pytest.approx(1.0)
    assert report.get("f", "L/M").n == 50


def test_noise_feature_mostly_omitted():
    rng = np.random.default_rng(12)
    labels = rng.integers(0, 4, size=400)
    frame = pd.DataFrame({"noise": rng.normal(size=400)})
    report = correlation_report(frame, labels, alpha=0.05)
    omitted = sum(report.value("noise", group) is None for group in GROUPS)
    assert omitted >= 3


def test_v_shaped_feature_flips_sign():
    rng = np.random.default_rng(3)
    labels = np.repeat(np.arange(4), 100)
    frame = pd.DataFrame({"v": -np.abs(labels - 1.5) + rng.normal(0, 0.1, size=400)})
    report = correlation_report(frame, labels)
    assert report.value("v", "L/M") > 0
    assert report.value("v", "H/VH") < 0
    assert abs(report.get("v", "All").r) < 0.2


def test_report_text_uses_dash(tmp_path):
    labels = np.repeat(np.arange(4), 10)
    frame = pd.DataFrame({"const": np.ones(40), "f": labels.astype(float)})
    report = correlation_report(frame, labels)
    text = report.to_text()
    assert "const" in text and "-" in text.splitlines()[2]
    path = tmp_path / "correlation.csv"
    report.to_csv(str(path))
    assert pd.read_csv(path)["feature"].tolist() == ["const", "f"]
    assert select_features(report) == ["f"]


def test_planted_structure_on_generated_data(tmp_path):
    result = synth_generate(SynthConfig(n_sessions=2000, seed=7))
    sessions, _ = build_sessions(parse_log(result.event_lines())[0])
    multi, _ = build_feature_frames(sessions)
    filled, _ = impute_missing(multi)
    labels = np.array([result.labels[goal_id] for goal_id in filled.index])
    report = correlation_report(filled, labels)

    assert report.value("Q_num_click_ge60", "All") > 0
    assert report.value("S_num_click", "L/M") > 0
    assert report.value("S_num_click", "H/VH") < 0
    assert report.value("S_num_click", "M/H") < 0

    path = tmp_path / "levels.png"
    plot_feature_levels(filled, labels, ["Q_num_click_ge60", "S_num_click"], str(path))
    assert path.stat().st_size > 0
