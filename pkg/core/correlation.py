#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相关性分析模块 - Feature/satisfaction correlation study
全体数据及相邻满意度等级分组上的Pearson相关、显著性检验、报告与分等级特征图
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats as sps

from core.errors import ZeroVariance

logger = logging.getLogger("Correlation")

GROUPS = ("All", "L/M", "M/H", "H/VH")
# 相邻等级分组，组内标签编码为 {0, 1}
GROUP_LABELS = {"L/M": (0, 1), "M/H": (1, 2), "H/VH": (2, 3)}
OMITTED = "-"


def pearson(x, y):
    """样本Pearson相关系数；任一方差为0时抛出ZeroVariance"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("pearson needs two equal-length vectors with at least 3 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx <= 0 or syy <= 0:
        raise ZeroVariance("zero variance input", n=int(x.size))
    r = float(np.dot(dx, dy) / np.sqrt(sxx * syy))
    return float(np.clip(r, -1.0, 1.0))


def significance(r, n):
    """双侧t检验p值，t = r*sqrt((n-2)/(1-r^2))，自由度 n-2"""
    if n < 3:
        raise ValueError("significance needs n >= 3")
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * sps.t.sf(abs(t), df=n - 2))


@dataclass
class CorrelationEntry:
    r: float = None
    p: float = None
    n: int = 0

    def omitted(self, alpha):
        return self.r is None or self.p is None or self.p >= alpha


@dataclass
class CorrelationReport:
    """feature x group 的相关性表"""
    alpha: float = 0.05
    features: list = field(default_factory=list)
    entries: dict = field(default_factory=dict)

    def get(self, feature, group):
        return self.entries[(feature, group)]

    def value(self, feature, group):
        """显著时返回r，否则None"""
        entry = self.entries[(feature, group)]
        return None if entry.omitted(self.alpha) else entry.r

    def to_frame(self):
        rows = []
        for feature in self.features:
            row = {"feature": feature}
            for group in GROUPS:
                entry = self.entries[(feature, group)]
                row[f"{group}_r"] = OMITTED if entry.omitted(self.alpha) else f"{entry.r:.3f}"
                row[f"{group}_p"] = "" if entry.p is None else f"{entry.p:.4g}"
                row[f"{group}_n"] = entry.n
            rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self, file_path):
        self.to_frame().to_csv(file_path, index=False, lineterminator="\n")

    def to_text(self):
        """对齐文本表，不显著的值显示为 '-'"""
        width = max([len("Feature")] + [len(f) for f in self.features]) + 2
        lines = ["Feature".ljust(width) + "".join(g.rjust(9) for g in GROUPS)]
        lines.append("-" * len(lines[0]))
        for feature in self.features:
            cells = []
            for group in GROUPS:
                value = self.value(feature, group)
                cells.append((OMITTED if value is None else f"{value:.3f}").rjust(9))
            lines.append(feature.ljust(width) + "".join(cells))
        return "\n".join(lines) + "\n"


def _group_rows(labels, group):
    if group == "All":
        return np.ones(len(labels), dtype=bool), labels.astype(float)
    low, high = GROUP_LABELS[group]
    mask = (labels == low) | (labels == high)
    return mask, (labels[mask] == high).astype(float)


def correlation_report(features, labels, alpha=0.05):
    """
    计算每个特征在 All, L/M, M/H, H/VH 四组上与标签的相关性
    features: DataFrame（已填补）; labels: 与之对齐的整数标签
    """
    labels = np.asarray(labels, dtype=int)
    report = CorrelationReport(alpha=alpha, features=list(features.columns))
    for group in GROUPS:
        mask, coded = _group_rows(labels, group)
        n = int(mask.sum())
        for name in features.columns:
            x = features[name].to_numpy(dtype=float)[mask]
            entry = CorrelationEntry(n=n)
            if n >= 3:
                try:
                    entry.r = pearson(x, coded)
                    entry.p = significance(entry.r, n)
                except ZeroVariance:
                    logger.debug(f"{name} has zero variance in group {group}, omitted")
            report.entries[(name, group)] = entry
    logger.info(f"Correlation report over {len(report.features)} features, n = {len(labels)}")
    return report


def select_features(report, min_groups=1):
    """保留至少在 min_groups 个分组中显著的特征"""
    selected = [feature for feature in report.features
                if sum(report.value(feature, group) is not None for group in GROUPS) >= min_groups]
    logger.info(f"Feature selection kept {len(selected)} of {len(report.features)} features")
    return selected


def plot_feature_levels(features, labels, names, file_path):
    """每个等级上特征均值 ± 标准误，线性与非线性特征一目了然"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = np.asarray(labels, dtype=int)
    levels = [0, 1, 2, 3]
    n_cols = min(3, max(1, len(names)))
    n_rows = int(np.ceil(len(names) / n_cols)) if names else 1
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(4 * n_cols, 3 * n_rows), squeeze=False)

    for ax, name in zip(axes.flat, names):
        values = features[name].to_numpy(dtype=float)
        means, errors = [], []
        for level in levels:
            subset = values[labels == level]
            means.append(subset.mean() if subset.size else np.nan)
            errors.append(subset.std(ddof=1) / np.sqrt(subset.size) if subset.size > 1 else 0.0)
        ax.errorbar(levels, means, yerr=errors, marker="o", capsize=3)
        ax.set_xticks(levels)
        ax.set_xticklabels(["L", "M", "H", "VH"])
        ax.set_title(name, fontsize=9)
    for ax in list(axes.flat)[len(names):]:
        ax.axis("off")

    fig.tight_layout()
    fig.savefig(file_path, dpi=80, metadata={"Software": None})
    plt.close(fig)
    logger.info(f"Feature level plot saved to {file_path}")
