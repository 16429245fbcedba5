#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
解释模块测试：局部代理模型、分位离散、规则归纳
"""

import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.errors import DegenerateSample
from core.explainer import (Explanation, SignalFeature, abstract_rules, check_response_variance,
                            discretize_explanation, fit_local_surrogate, load_category_map,
                            sample_perturbations, training_quantiles, value_bin)
from core.feature_extractor import FEATURE_TO_CATEGORY

NAMES = [f"f{i}" for i in range(10)]


def planted_linear(Z):
    """只依赖 f0、f3、f5 的线性概率"""
    p = 0.6 + 0.01 * (2.0 * Z[:, 0] - 1.5 * Z[:, 3] + 1.0 * Z[:, 5])
    return np.column_stack([1.0 - p, p])


def test_perturbations_keep_first_row():
    reference = np.random.default_rng(0).normal(size=(100, 4))
    x = np.array([9.0, 9.0, 9.0, 9.0])
    Z = sample_perturbations(x, reference, 200, seed=1)
    assert Z.shape == (200, 4)
    np.testing.assert_array_equal(Z[0], x)
    # 约一半的特征被替换
    replaced = np.mean(Z[1:] != x)
    assert 0.4 < replaced < 0.6
    np.testing.assert_array_equal(Z, sample_perturbations(x, reference, 200, seed=1))


def test_planted_linear_model_is_recovered():
    reference = np.random.default_rng(2).normal(size=(500, 10))
    explanation = fit_local_surrogate(planted_linear, np.zeros(10), reference, NAMES,
                                      n=1000, top_k=6, seed=3, goal_id="g1")
    assert explanation.label == 1
    assert not explanation.degenerate
    top = [signal.name for signal in explanation.signals[:3]]
    assert set(top) == {"f0", "f3", "f5"}
    assert explanation.fidelity >= 0.99
    signs = {signal.name: signal.direction for signal in explanation.signals}
    assert (signs["f0"], signs["f3"], signs["f5"]) == ("+", "-", "+")


def test_constant_model_is_degenerate():
    reference = np.random.default_rng(4).normal(size=(50, 10))

    def constant(Z):
        return np.tile([0.1, 0.2, 0.3, 0.4], (len(Z), 1))

    explanation = fit_local_surrogate(constant, np.zeros(10), reference, NAMES, n=100)
    assert explanation.degenerate
    assert explanation.signals == []
    assert explanation.label == 3


def test_value_bins():
    bounds = [1.0, 2.0, 3.0, 4.0]
    assert value_bin(0.0, bounds) == "very_low"
    assert value_bin(1.0, bounds) == "very_low"
    assert value_bin(1.5, bounds) == "low"
    assert value_bin(2.5, bounds) == "medium"
    assert value_bin(4.0, bounds) == "high"
    assert value_bin(4.1, bounds) == "very_high"


def test_training_quantiles_and_discretize():
    frame = pd.DataFrame({"S_num_click": np.arange(1, 101, dtype=float)})
    quantiles = training_quantiles(frame)
    assert quantiles["S_num_click"] == pytest.approx([20.8, 40.6, 60.4, 80.2])
    explanation = Explanation("g", 2, [SignalFeature("S_num_click", 0.3, "+", 95.0)])
    discretize_explanation(explanation, quantiles)
    assert explanation.signals[0].bin == "very_high"
    assert explanation.describe() == "High: very high clicks"


def make_explanation(label, feature, direction, bin_name):
    return Explanation("g", label, [SignalFeature(feature, 1.0, direction, 0.0, bin_name)])


def rule_fixture():
    return ([make_explanation(3, "S_num_click", "+", "high")] * 50
            + [make_explanation(0, "SessionDuration", "-", "very_low")] * 30
            + [make_explanation(2, "S_num_click", "+", "medium")] * 15
            + [make_explanation(1, "QEditDistance", "+", "low")] * 5)


def test_rule_abstraction_coverage():
    rules = abstract_rules(rule_fixture(), coverage_target=0.9)
    assert [rule.support for rule in rules.rules] == [50, 30, 15]
    assert rules.coverage == pytest.approx(0.95)
    assert rules.n_signatures == 4
    assert [round(rule.coverage_cum, 2) for rule in rules.rules] == [0.5, 0.8, 0.95]

    everything = abstract_rules(rule_fixture(), coverage_target=1.0)
    assert len(everything.rules) == 4 and everything.coverage == pytest.approx(1.0)

    frame = everything.to_frame()
    assert frame.columns.tolist() == ["rank", "signature", "label", "support", "coverage_cum",
                                      "template"]
    assert frame["rank"].tolist() == [1, 2, 3, 4]


def test_same_category_signals_share_a_rule():
    # very_low 与 low 都归入粗粒度的 low
    explanations = [make_explanation(0, "SessionDuration", "-", "very_low"),
                    make_explanation(0, "SessionDuration", "-", "low")]
    rules = abstract_rules(explanations, coverage_target=1.0)
    assert len(rules.rules) == 1 and rules.rules[0].support == 2


def test_empty_explanations():
    rules = abstract_rules([], coverage_target=0.98)
    assert rules.rules == [] and rules.coverage == 0.0


def test_category_map_override(tmp_path):
    path = tmp_path / "categories.json"
    path.write_text(json.dumps({"S_num_click": "custom"}), encoding="utf-8")
    mapping = load_category_map(str(path))
    assert mapping["S_num_click"] == "custom"
    assert mapping["SessionDuration"] == FEATURE_TO_CATEGORY["SessionDuration"]


def test_same_signature_with_mixed_labels_is_one_rule():
    explanations = ([make_explanation(0, "SessionDuration", "-", "low")] * 3
                    + [make_explanation(2, "SessionDuration", "-", "low")] * 2)
    rules = abstract_rules(explanations, coverage_target=1.0)
    assert len(rules.rules) == 1
    rule = rules.rules[0]
    assert rule.label == 0 and rule.support == 5
    assert rule.label_counts == {0: 3, 2: 2}
    assert rules.n_signatures == 1 and rules.coverage == pytest.approx(1.0)


def test_rules_are_disjoint_by_signature():
    explanations = (rule_fixture()
                    + [make_explanation(1, "S_num_click", "+", "very_high")] * 20
                    + [make_explanation(2, "SessionDuration", "-", "low")] * 10)
    rules = abstract_rules(explanations, coverage_target=1.0)
    signatures = [rule.signature for rule in rules.rules]
    assert len(signatures) == len(set(signatures))
    assert len(rules.rules) <= rules.n_signatures == 4
    assert sum(rule.support for rule in rules.rules) == len(explanations)


def test_majority_label_tie_goes_to_lowest():
    explanations = ([make_explanation(3, "QEditDistance", "+", "high")] * 2
                    + [make_explanation(1, "QEditDistance", "+", "very_high")] * 2)
    rules = abstract_rules(explanations, coverage_target=1.0)
    assert [(rule.label, rule.support) for rule in rules.rules] == [(1, 4)]


def test_zero_variance_response_raises():
    weights = np.ones(5)
    with pytest.raises(DegenerateSample):
        check_response_variance(np.full(5, 0.25), weights, goal_id="g")
    assert check_response_variance(np.array([0.0, 1.0, 0.0, 1.0, 0.0]), weights) > 0
