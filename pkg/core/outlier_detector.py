#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常检测模块 - Isolation forest outlier detection
用随机划分树估计每行的平均路径长度，路径越短越异常
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.errors import DegenerateMatrix

logger = logging.getLogger("OutlierDetector")

EULER_GAMMA = 0.5772156649015329


def average_path_length(n):
    """n个样本的二叉搜索树平均不成功查找路径长度 c(n)"""
    n = np.asarray(n, dtype=float)
    result = np.zeros_like(n)
    result[n == 2] = 1.0
    mask = n > 2
    result[mask] = 2.0 * (np.log(n[mask] - 1.0) + EULER_GAMMA) - 2.0 * (n[mask] - 1.0) / n[mask]
    return result


class IsolationTree:
    """单棵隔离树，节点以数组形式存储"""

    def __init__(self, height_limit):
        self.height_limit = height_limit
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.size = []

    def _new_node(self, size):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(size)
        return len(self.size) - 1

    def fit(self, X, rng):
        # 显式栈
        root = self._new_node(len(X))
        stack = [(root, np.arange(len(X)), 0)]
        while stack:
            node, rows, depth = stack.pop()
            if depth >= self.height_limit or len(rows) <= 1:
                continue
            sample = X[rows]
            lo = sample.min(axis=0)
            hi = sample.max(axis=0)
            candidates = np.flatnonzero(hi > lo)
            if candidates.size == 0:
                continue
            feature = int(candidates[rng.integers(candidates.size)])
            threshold = float(rng.uniform(lo[feature], hi[feature]))
            go_left = sample[:, feature] < threshold
            left_rows, right_rows = rows[go_left], rows[~go_left]
            if left_rows.size == 0 or right_rows.size == 0:
                continue
            self.feature[node] = feature
            self.threshold[node] = threshold
            self.left[node] = self._new_node(len(left_rows))
            self.right[node] = self._new_node(len(right_rows))
            stack.append((self.right[node], right_rows, depth + 1))
            stack.append((self.left[node], left_rows, depth + 1))

        self.feature = np.array(self.feature, dtype=int)
        self.threshold = np.array(self.threshold, dtype=float)
        self.left = np.array(self.left, dtype=int)
        self.right = np.array(self.right, dtype=int)
        self.size = np.array(self.size, dtype=float)
        return self

    def path_length(self, X):
        node = np.zeros(len(X), dtype=int)
        depth = np.zeros(len(X), dtype=float)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            go_left = X[idx, self.feature[current]] < self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            depth[idx] += 1.0
            active = self.feature[node] >= 0
        return depth + average_path_length(self.size[node])


class IsolationForest:
    """隔离森林"""

    def __init__(self, n_trees=100, subsample=256, seed=0):
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed
        self.trees = []
        self.sample_size = 0

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        if len(X) == 0 or np.all(X == X[0]):
            raise DegenerateMatrix("all rows are identical", n_rows=len(X))

        self.sample_size = min(self.subsample, len(X))
        height_limit = int(np.ceil(np.log2(max(self.sample_size, 2))))
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            rows = rng.choice(len(X), size=self.sample_size, replace=False)
            self.trees.append(IsolationTree(height_limit).fit(X[rows], rng))
        logger.debug(f"Fitted {self.n_trees} isolation trees, sample size {self.sample_size}")
        return self

    def score_samples(self, X):
        """异常分数 s = 2^(-E[h(x)] / c(ψ))，越接近1越异常"""
        X = np.asarray(X, dtype=float)
        mean_path = np.mean([tree.path_length(X) for tree in self.trees], axis=0)
        c = float(average_path_length(np.array([self.sample_size]))[0])
        if c <= 0:
            return np.full(len(X), 0.5)
        return np.power(2.0, -mean_path / c)


@dataclass
class OutlierResult:
    flags: np.ndarray
    scores: np.ndarray

    @property
    def n_flagged(self):
        return int(self.flags.sum())


def detect_outliers(matrix, n_trees=100, subsample=256, contamination=0.02, seed=0):
    """
    对特征矩阵做异常检测
    缺失值按列中位数替换后再打分；分数最高的 floor(contamination * n) 行被标记
    """
    X = np.array(matrix, dtype=float, copy=True)
    n = len(X)
    if n == 0:
        return OutlierResult(np.zeros(0, dtype=bool), np.zeros(0))

    if np.isnan(X).any():
        with np.errstate(all="ignore"):
            medians = np.nanmedian(np.where(np.isnan(X).all(axis=0), 0.0, X), axis=0)
        rows, cols = np.nonzero(np.isnan(X))
        X[rows, cols] = medians[cols]

    try:
        forest = IsolationForest(n_trees=n_trees, subsample=subsample, seed=seed).fit(X)
    except DegenerateMatrix:
        logger.info("All rows identical, no outlier flagged")
        return OutlierResult(np.zeros(n, dtype=bool), np.full(n, 0.5))

    scores = forest.score_samples(X)
    n_flag = int(np.floor(contamination * n + 1e-9))
    flags = np.zeros(n, dtype=bool)
    if n_flag > 0:
        order = np.argsort(-scores, kind="stable")
        flags[order[:n_flag]] = True
    logger.info(f"Outlier detection: {n_flag} of {n} rows flagged")
    return OutlierResult(flags, scores)
