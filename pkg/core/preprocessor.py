#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
预处理模块 - Annotation, label and dataset preprocessing
标注平均与离散化、缺失值填补、标准化、分层划分、重采样
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List

import numpy as np
import pandas as pd

from core.errors import AllMissingSlot, InvalidRatios, OutOfRange, SingleClass
from core.outlier_detector import detect_outliers

logger = logging.getLogger("Preprocessor")

SESSION_LABEL_THRESHOLDS = (0.67, 1.67, 2.67)
SEARCH_LABEL_THRESHOLDS = (0.67, 1.33)

# 标注数据的典型标签分布，用作合成数据的默认先验
DEFAULT_LABEL_PRIOR = (0.182, 0.182, 0.413, 0.223)


class SessionLabel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2
    VERY_HIGH = 3

    @property
    def short_name(self):
        return ("L", "M", "H", "VH")[self.value]


N_LABELS = len(SessionLabel)


def discretize_session_label(s):
    """会话分数 [0,3] -> 4级标签，边界值归入较低一级"""
    if s is None or not np.isfinite(s) or s < 0 or s > 3:
        raise OutOfRange(f"session score {s} outside [0, 3]", value=s)
    for label, upper in enumerate(SESSION_LABEL_THRESHOLDS):
        if s <= upper:
            return SessionLabel(label)
    return SessionLabel.VERY_HIGH


def discretize_search_label(q):
    """查询分数 [0,2] -> 3级标签"""
    if q is None or not np.isfinite(q) or q < 0 or q > 2:
        raise OutOfRange(f"search score {q} outside [0, 2]", value=q)
    for label, upper in enumerate(SEARCH_LABEL_THRESHOLDS):
        if q <= upper:
            return label
    return 2


@dataclass(frozen=True)
class AnnotatedSession:
    """一个会话的多个标注"""
    goal_id: str
    annotator_scores: tuple
    per_query_scores: tuple = ()

    @property
    def s(self):
        return float(np.mean(self.annotator_scores))

    @property
    def q(self):
        if not self.per_query_scores:
            return []
        width = min(len(scores) for scores in self.per_query_scores)
        matrix = np.array([scores[:width] for scores in self.per_query_scores], dtype=float)
        return list(np.nanmean(matrix, axis=0)) if width else []

    @property
    def label(self):
        return discretize_session_label(self.s)

    @property
    def search_labels(self):
        return [discretize_search_label(value) for value in self.q]


def load_annotations(file_path):
    """
    读取标注CSV: goal_id,annotator_id,session_score,q1,q2,...
    返回：{goal_id: AnnotatedSession}（按文件中首次出现顺序）
    """
    frame = pd.read_csv(file_path, dtype={"goal_id": str, "annotator_id": str})
    q_columns = [c for c in frame.columns if c.startswith("q") and c[1:].isdigit()]
    q_columns.sort(key=lambda c: int(c[1:]))

    annotations = {}
    for goal_id, group in frame.groupby("goal_id", sort=False):
        scores = tuple(float(v) for v in group["session_score"])
        per_query = tuple(
            tuple(float(v) for v in row if not pd.isna(v))
            for row in group[q_columns].itertuples(index=False, name=None)
        ) if q_columns else ()
        annotations[goal_id] = AnnotatedSession(goal_id, scores, per_query)
    logger.info(f"Loaded annotations for {len(annotations)} sessions from {file_path}")
    return annotations


def labels_from_annotations(annotations):
    """{goal_id: AnnotatedSession} -> Series of int labels"""
    return pd.Series({goal_id: int(item.label) for goal_id, item in annotations.items()},
                     name="label", dtype=int)


def impute_missing(frame, stats=None):
    """
    按列中位数填补缺失值
    stats 为空时从 frame 计算（训练集），否则复用给定统计量
    返回：(填补后的DataFrame, {列名: 中位数})
    """
    if stats is None:
        stats = {}
        for name in frame.columns:
            column = frame[name]
            if column.notna().sum() == 0:
                raise AllMissingSlot(name)
            stats[name] = float(column.median())
    filled = frame.fillna(value={name: stats[name] for name in frame.columns})
    return filled, stats


def compute_standardization(frame):
    """列均值与标准差，标准差为0时记为1"""
    stats = {}
    for name in frame.columns:
        values = frame[name].to_numpy(dtype=float)
        std = float(values.std())
        stats[name] = {"mean": float(values.mean()), "std": std if std > 0 else 1.0}
    return stats


def apply_standardization(frame, stats):
    means = np.array([stats[name]["mean"] for name in frame.columns])
    stds = np.array([stats[name]["std"] for name in frame.columns])
    return pd.DataFrame((frame.to_numpy(dtype=float) - means) / stds,
                        index=frame.index, columns=frame.columns)


def rebalance(X, labels, target_label, seed=0):
    """
    一对多训练用的过采样
    正类 = labels == target_label；少数类有放回采样直到 1:1
    返回：(X', 二值标签y')
    """
    X = np.asarray(X, dtype=float)
    y = (np.asarray(labels) == target_label).astype(int)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"label {target_label} gives a single-class problem",
                          positives=n_pos, negatives=n_neg)
    if n_pos == n_neg:
        return X.copy(), y

    minority = 1 if n_pos < n_neg else 0
    rng = np.random.default_rng(seed)
    pool = np.flatnonzero(y == minority)
    extra = rng.choice(pool, size=abs(n_neg - n_pos), replace=True)
    rows = np.concatenate([np.arange(len(y)), extra])
    return X[rows], y[rows]


def stratified_split(labels, ratios=(0.6, 0.2, 0.2), seed=0):
    """
    分层划分
    每个标签内部随机排列后赋予等距秩 (i+0.5)/n_l，全体按秩排序后按比例切分，
    因此每个标签在各部分中的比例与总体一致（误差不超过1行）
    返回：三个整数位置索引数组
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise InvalidRatios(f"ratios {ratios} must be three non-negative values summing to 1",
                            ratios=list(ratios))

    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(seed)
    rank = np.zeros(n, dtype=float)
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        members = members[rng.permutation(len(members))]
        rank[members] = (np.arange(len(members)) + 0.5) / len(members)

    order = np.lexsort((np.arange(n), rank))
    n_train = int(np.floor(ratios[0] * n + 0.5))
    n_valid = min(int(np.floor(ratios[1] * n + 0.5)), n - n_train)
    train = np.sort(order[:n_train])
    valid = np.sort(order[n_train:n_train + n_valid])
    test = np.sort(order[n_train + n_valid:])
    return train, valid, test


@dataclass
class LabeledDataset:
    """填补、去异常并计算了标准化统计量的数据集"""
    features: pd.DataFrame
    labels: pd.Series
    imputation_stats: Dict[str, float] = field(default_factory=dict)
    standardization_stats: Dict[str, dict] = field(default_factory=dict)
    outlier_report: List[dict] = field(default_factory=list)

    @property
    def goal_ids(self):
        return list(self.features.index)

    @property
    def feature_names(self):
        return list(self.features.columns)

    def __len__(self):
        return len(self.features)

    def matrix(self, standardized=True):
        frame = self.features
        if standardized and self.standardization_stats:
            frame = apply_standardization(frame, self.standardization_stats)
        return frame.to_numpy(dtype=float)

    def label_array(self):
        return self.labels.to_numpy(dtype=int)

    def transform(self, frame):
        """用本数据集的统计量处理新数据"""
        filled, _ = impute_missing(frame[self.feature_names], self.imputation_stats)
        return apply_standardization(filled, self.standardization_stats).to_numpy(dtype=float)

    def subset(self, positions):
        return LabeledDataset(self.features.iloc[positions], self.labels.iloc[positions],
                              self.imputation_stats, self.standardization_stats, [])


def build_labeled_dataset(features, labels, outlier_params=None, remove_outliers=True):
    """
    构建训练数据集：填补 -> 异常检测并删除 -> 重新计算填补统计量 -> 标准化统计量
    features: 以goal_id为索引的原始特征（含NaN）
    labels: 以goal_id为索引的标签
    """
    common = [goal_id for goal_id in features.index if goal_id in labels.index]
    frame = features.loc[common]
    y = labels.loc[common].astype(int)

    filled, _ = impute_missing(frame)
    report = []
    if remove_outliers and len(filled) > 0:
        params = dict(outlier_params or {})
        result = detect_outliers(filled.to_numpy(dtype=float),
                                 n_trees=params.get("n_trees", 100),
                                 subsample=params.get("subsample", 256),
                                 contamination=params.get("contamination", 0.02),
                                 seed=params.get("seed", 0))
        report = [{"goal_id": goal_id, "score": float(score)}
                  for goal_id, score, flag in zip(filled.index, result.scores, result.flags) if flag]
        keep = ~result.flags
        frame, y = frame[keep], y[keep]
        logger.info(f"Removed {int(result.flags.sum())} outliers")

    filled, imputation_stats = impute_missing(frame)
    standardization_stats = compute_standardization(filled)
    return LabeledDataset(filled, y, imputation_stats, standardization_stats, report)
