#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
单查询会话模型 - Rule list + decision-tree fallback
规则按顺序匹配，第一条命中的规则给出标签；都不命中时交给决策树
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from core.feature_extractor import REDUCED_FEATURE_NAMES
from core.learners.tree import DecisionTree

logger = logging.getLogger("SingleQueryModel")

FALLBACK_TAG = "tree"


@dataclass(frozen=True)
class SingleQueryThresholds:
    hot_frequency: float = float("inf")
    cold_frequency: float = 0.0
    short_duration_ms: float = 10_000.0

    @classmethod
    def from_stats(cls, stats, hot_quantile=0.99, cold_quantile=0.5, short_duration_ms=10_000.0):
        """热门阈值取频次表的高分位，冷门阈值取中位数"""
        frequencies = stats.frequencies() if stats is not None else np.array([])
        if frequencies.size == 0:
            logger.warning("Empty query stats table, single-query rules disabled")
            return cls(short_duration_ms=short_duration_ms)
        return cls(float(np.quantile(frequencies, hot_quantile)),
                   float(np.quantile(frequencies, cold_quantile)),
                   float(short_duration_ms))

    def to_dict(self):
        return asdict(self)


def _rule_masks(frame, thresholds):
    no_click = frame["no_click"].to_numpy() >= 0.5
    frequency = frame["query_frequency"].to_numpy(dtype=float)
    short = frame["SessionDuration"].to_numpy(dtype=float) * 1000.0 <= thresholds.short_duration_ms
    return [
        # 热门查询、无点击、很快结束：结果页直接满足
        ("R1", (frequency >= thresholds.hot_frequency) & no_click & short, 3),
        # 冷门查询、无点击、很快结束：放弃
        ("R2", no_click & (frequency < thresholds.cold_frequency) & short, 0),
    ]


class SingleQueryModel:
    """规则列表 + 决策树兜底"""

    def __init__(self, thresholds, fallback, imputation_stats, classes=(0, 1, 2, 3)):
        self.thresholds = thresholds
        self.fallback = fallback
        self.imputation_stats = dict(imputation_stats)
        self.classes = [int(c) for c in classes]

    def _fallback_matrix(self, frame):
        filled = frame[REDUCED_FEATURE_NAMES].fillna(value=self.imputation_stats)
        return filled.to_numpy(dtype=float)

    def predict_proba(self, frame):
        """规则命中的行为one-hot分布"""
        proba = self.fallback.predict_proba(self._fallback_matrix(frame))
        matched = np.zeros(len(frame), dtype=bool)
        for _, mask, label in _rule_masks(frame, self.thresholds):
            hit = mask & ~matched
            proba[hit] = 0.0
            proba[hit, self.classes.index(label)] = 1.0
            matched |= hit
        return proba

    def predict(self, frame):
        """返回：(标签数组, 命中的规则名或'tree')"""
        labels = np.asarray(self.fallback.predict(self._fallback_matrix(frame)), dtype=int)
        tags = np.array([FALLBACK_TAG] * len(frame), dtype=object)
        matched = np.zeros(len(frame), dtype=bool)
        for name, mask, label in _rule_masks(frame, self.thresholds):
            hit = mask & ~matched
            labels[hit] = label
            tags[hit] = name
            matched |= hit
        return labels, list(tags)

    def to_dict(self):
        return {"thresholds": self.thresholds.to_dict(), "fallback": self.fallback.to_dict(),
                "imputation_stats": self.imputation_stats, "classes": self.classes}

    @classmethod
    def from_dict(cls, data):
        return cls(SingleQueryThresholds(**data["thresholds"]),
                   DecisionTree.from_dict(data["fallback"]),
                   data["imputation_stats"], data["classes"])


def train_single_query(frame, labels, thresholds, classes=(0, 1, 2, 3), max_depth=4,
                       min_leaf=5, seed=0):
    """
    frame: 精简特征DataFrame；labels: 对齐的标签
    决策树只在规则未命中的行上训练（全部命中时退回全部行）
    """
    frame = frame[REDUCED_FEATURE_NAMES]
    labels = np.asarray(labels, dtype=int)
    matched = np.zeros(len(frame), dtype=bool)
    for name, mask, _ in _rule_masks(frame, thresholds):
        logger.info(f"Rule {name} matches {int((mask & ~matched).sum())} training sessions")
        matched |= mask

    rest = ~matched if (~matched).any() else np.ones(len(frame), dtype=bool)
    medians = {name: (float(frame[name][rest].median()) if frame[name][rest].notna().any() else 0.0)
               for name in REDUCED_FEATURE_NAMES}
    X = frame[rest].fillna(value=medians).to_numpy(dtype=float)
    fallback = DecisionTree(max_depth=max_depth, min_leaf=min_leaf, seed=seed,
                            classes=list(classes)).fit(X, labels[rest])
    logger.info(f"Single-query fallback tree trained on {int(rest.sum())} sessions")
    return SingleQueryModel(thresholds, fallback, medians, classes)
