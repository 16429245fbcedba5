#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
解释模块 - Local surrogate explanations and rule abstraction
三步：
1. 在待解释样本附近按训练边缘分布扰动，拟合核加权岭回归，得到信号特征
2. 按训练分位数把信号特征的取值离散成五档
3. 把信号特征归并到特征大类，形成粗粒度规则签名，统计支持度与覆盖率
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from core.errors import DegenerateSample
from core.feature_extractor import FEATURE_TO_CATEGORY

logger = logging.getLogger("Explainer")

BINS = ("very_low", "low", "medium", "high", "very_high")
COARSE_BINS = {"very_low": "low", "low": "low", "medium": "mid", "high": "high", "very_high": "high"}
QUANTILE_LEVELS = (0.2, 0.4, 0.6, 0.8)
LEVEL_NAMES = {0: "Low", 1: "Medium", 2: "High", 3: "Very high"}

BIN_PHRASES = {"very_low": "ultra-low", "low": "low", "medium": "moderate",
               "high": "high", "very_high": "very high"}
COARSE_PHRASES = {"low": "low", "mid": "moderate", "high": "high"}
CATEGORY_PHRASES = {
    "outcome": "search outcome",
    "cost": "search cost",
    "effort": "user effort",
    "change": "outcome/effort change",
}
FEATURE_PHRASES = {
    "Q_SumClickDwell": "click dwell per query",
    "S_SumClickDwell": "total click dwell",
    "S_ClickDwell": "dwell per click",
    "QueryInterval": "time per query",
    "S_SumQueryInterval": "total query time",
    "SessionDuration": "session duration",
    "Q_num_click_ge40": "long clicks per query",
    "Q_num_click_ge60": "very long clicks per query",
    "Q_num_click_lt20": "short clicks per query",
    "Q_num_click_lt5": "very short clicks per query",
    "S_num_click": "clicks",
    "S_num_click_ge185": "very long clicks",
    "S_num_click_lt10": "short clicks",
    "S_Qlength": "query length",
    "S_num_query": "queries",
    "S_num_inp_query": "typed queries",
    "S_num_his_query": "history queries",
    "S_num_sug_query": "suggestion queries",
    "S_num_rs_query": "related-search queries",
    "S_AvgClickPos": "average click position",
    "S_MinClickPos": "minimum click position",
    "Q_MinClickPos": "minimum click position per query",
    "Q_AvgClickPos": "average click position per query",
    "S_num_query_noclick": "queries without clicks",
    "S_MaxClickPos": "maximum click position",
    "Q_MaxClickPos": "maximum click position per query",
    "S_num_forw_query": "page turns",
    "S_MaxQlength": "maximum query length",
    "QEditDistance": "query edit distance",
    "QJaccardSim": "query similarity",
    "Q_num_click": "clicks per query",
    "DeltaQ_SumClickDwell": "change in click dwell",
    "DeltaQ_num_click_ge60": "change in long clicks",
    "DeltaQ_num_click_lt50": "change in short clicks",
    "DeltaQEditDistance": "change in reformulation distance",
    "DeltaQJaccardSim": "change in reformulation similarity",
    "DeltaQlength": "change in query length",
    "DeltaQMaxClickPos": "change in maximum click position",
    "no_click": "no-click indicator",
    "query_frequency": "query popularity",
    "query_click_ratio": "query click ratio",
}


@dataclass
class SignalFeature:
    name: str
    weight: float
    direction: str
    value: float = 0.0
    bin: str = ""

    def to_dict(self):
        item = {"name": self.name, "weight": self.weight, "direction": self.direction}
        if self.bin:
            item["bin"] = self.bin
        return item

    def phrase(self):
        feature = FEATURE_PHRASES.get(self.name, self.name)
        return f"{BIN_PHRASES.get(self.bin, self.bin)} {feature}" if self.bin else feature


@dataclass
class Explanation:
    goal_id: str
    label: int
    signals: List[SignalFeature] = field(default_factory=list)
    fidelity: float = 0.0
    degenerate: bool = False

    def to_dict(self):
        return {"goal_id": self.goal_id, "label": int(self.label),
                "signals": [signal.to_dict() for signal in self.signals],
                "fidelity": self.fidelity}

    def describe(self):
        phrases = " and ".join(signal.phrase() for signal in self.signals) or "no signal"
        return f"{LEVEL_NAMES.get(self.label, self.label)}: {phrases}"


def sample_perturbations(x, reference, n, seed=0):
    """
    第0行为x本身；其余每行每个特征以0.5概率从参考样本的经验边缘分布中重抽
    """
    x = np.asarray(x, dtype=float)
    reference = np.asarray(reference, dtype=float)
    rng = np.random.default_rng(seed)
    Z = np.tile(x, (n, 1))
    if n <= 1:
        return Z
    m, d = reference.shape
    mask = rng.random((n - 1, d)) < 0.5
    picks = rng.integers(0, m, size=(n - 1, d))
    draws = reference[picks, np.arange(d)[None, :]]
    Z[1:] = np.where(mask, draws, Z[1:])
    return Z


def weighted_ridge(Z, y, weights, alpha=1.0):
    """加权中心化后的岭回归，返回 (系数, 截距, 加权R²)"""
    w = weights / weights.sum()
    z_mean = w @ Z
    y_mean = float(w @ y)
    Zc = Z - z_mean
    yc = y - y_mean
    A = Zc.T @ (Zc * weights[:, None]) + alpha * np.eye(Z.shape[1])
    beta = np.linalg.solve(A, Zc.T @ (weights * yc))
    residual = yc - Zc @ beta
    ss_res = float(weights @ (residual ** 2))
    ss_tot = float(weights @ (yc ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return beta, y_mean - float(z_mean @ beta), float(np.clip(r2, 0.0, 1.0))


def check_response_variance(response, weights, goal_id=""):
    """核加权响应方差为0时抛出DegenerateSample"""
    w = weights / weights.sum()
    variance = float(w @ (response - w @ response) ** 2)
    if variance <= 1e-15:
        raise DegenerateSample(f"Degenerate response for {goal_id}", goal_id=goal_id)
    return variance


def fit_local_surrogate(predict_proba, x, reference, feature_names, n=1000, top_k=6,
                        kernel_width=None, ridge=1.0, seed=0, goal_id=""):
    """
    predict_proba: 接受矩阵、返回类别概率的函数
    解释的标签为模型在x处的argmax，响应为该标签的概率
    """
    reference = np.asarray(reference, dtype=float)
    Z = sample_perturbations(x, reference, n, seed)
    proba = np.asarray(predict_proba(Z), dtype=float)
    label_index = int(np.argmax(proba[0]))
    response = proba[:, label_index]

    scale = reference.std(axis=0)
    scale[scale == 0] = 1.0
    Zs = (Z - Z[0]) / scale
    width = kernel_width if kernel_width else 0.75 * np.sqrt(Z.shape[1])
    weights = np.exp(-np.sum(Zs ** 2, axis=1) / width ** 2)

    try:
        check_response_variance(response, weights, goal_id)
    except DegenerateSample as e:
        logger.debug(f"{e.message}, no signal extracted")
        return Explanation(goal_id, label_index, [], 0.0, degenerate=True)

    beta, _, fidelity = weighted_ridge(Zs, response, weights, ridge)
    importance = np.abs(beta)
    order = np.lexsort((np.arange(len(beta)), -importance))
    signals = []
    for index in order[:top_k]:
        if importance[index] <= 0:
            break
        signals.append(SignalFeature(feature_names[index], float(beta[index]),
                                     "+" if beta[index] >= 0 else "-", float(Z[0, index])))
    return Explanation(goal_id, label_index, signals, fidelity)


def training_quantiles(frame):
    """每个特征的20/40/60/80分位点"""
    return {name: [float(v) for v in np.quantile(frame[name].to_numpy(dtype=float), QUANTILE_LEVELS)]
            for name in frame.columns}


def value_bin(value, bounds):
    """五档离散，边界值归入较低一档"""
    return BINS[int(np.searchsorted(np.asarray(bounds, dtype=float), value, side="left"))]


def discretize_explanation(explanation, quantiles):
    for signal in explanation.signals:
        if signal.name in quantiles:
            signal.bin = value_bin(signal.value, quantiles[signal.name])
    return explanation


@dataclass
class Rule:
    label: int
    signature: frozenset
    support: int = 0
    coverage_cum: float = 0.0
    # 组内各标签的会话数
    label_counts: Dict[int, int] = field(default_factory=dict)

    def signature_text(self):
        return ";".join(f"{c}{d}{b}" for c, d, b in sorted(self.signature))

    def template(self):
        parts = [f"{COARSE_PHRASES[b]} {CATEGORY_PHRASES.get(c, c)} ({d})"
                 for c, d, b in sorted(self.signature)]
        return f"{LEVEL_NAMES.get(self.label, self.label)} satisfaction: " + \
            (", ".join(parts) if parts else "no dominant signal")


@dataclass
class RuleSet:
    rules: List[Rule]
    coverage: float
    total: int
    n_signatures: int

    def to_frame(self):
        rows = [{"rank": rank, "signature": rule.signature_text(), "label": rule.label,
                 "support": rule.support, "coverage_cum": round(rule.coverage_cum, 6),
                 "template": rule.template()}
                for rank, rule in enumerate(self.rules, start=1)]
        return pd.DataFrame(rows, columns=["rank", "signature", "label", "support",
                                           "coverage_cum", "template"])


def load_category_map(file_path=None):
    """特征 -> 大类 的映射，可用JSON文件覆盖部分条目"""
    mapping = dict(FEATURE_TO_CATEGORY)
    if file_path:
        with open(file_path, "r", encoding="utf-8") as f:
            mapping.update(json.load(f))
        logger.info(f"Category map overridden from {file_path}")
    return mapping


def signature_of(explanation, category_map):
    return frozenset((category_map.get(signal.name, "other"), signal.direction,
                      COARSE_BINS.get(signal.bin, "mid"))
                     for signal in explanation.signals)


def abstract_rules(explanations, coverage_target=0.98, category_map=None):
    """
    相同签名的解释合并为一条规则，规则标签取组内多数标签（平票取较小标签）
    按支持度降序输出，直到累计覆盖率达到 coverage_target
    """
    category_map = category_map or FEATURE_TO_CATEGORY
    groups = {}
    for explanation in explanations:
        signature = signature_of(explanation, category_map)
        counts = groups.setdefault(signature, {})
        counts[int(explanation.label)] = counts.get(int(explanation.label), 0) + 1

    total = len(explanations)
    candidates = []
    for signature, counts in groups.items():
        label = min(counts, key=lambda item: (-counts[item], item))
        candidates.append(Rule(label, signature, sum(counts.values()), label_counts=counts))
    candidates.sort(key=lambda rule: (-rule.support, rule.label, rule.signature_text()))

    rules, covered = [], 0
    for rule in candidates:
        if total and covered / total >= coverage_target:
            break
        covered += rule.support
        rule.coverage_cum = covered / total
        rules.append(rule)

    coverage = covered / total if total else 0.0
    logger.info(f"Rule abstraction: {len(rules)} rules cover {coverage:.3f} of {total} sessions "
                f"({len(groups)} distinct signatures)")
    return RuleSet(rules, coverage, total, len(groups))
