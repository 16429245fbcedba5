#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
决策树模块 - CART classification tree and gradient regression tree
两种树共用同一套节点存储和基于预排序的分裂搜索：
- 分类树按Gini不纯度下降分裂
- 回归树按一阶/二阶梯度统计量分裂（供提升树使用）
平局时取特征下标最小者，再取阈值最小者
"""

import numpy as np

from core.learners.base import BaseLearner, as_2d, check_training_data, logger, register_model

MIN_GAIN = 1e-12


class TreeStructure:
    """
    数组形式的二叉树
    feature[i] < 0 表示叶子；x[feature] <= threshold 走左子树
    """

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.n_samples = []

    def add_node(self, value, n_samples):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_samples.append(float(n_samples))
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=int)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=int)
        self.right = np.asarray(self.right, dtype=int)
        self.value = np.asarray(self.value, dtype=float)
        self.n_samples = np.asarray(self.n_samples, dtype=float)
        return self

    @property
    def n_nodes(self):
        return len(self.feature)

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X):
        """每行到达的叶子下标"""
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            go_left = X[idx, self.feature[current]] <= self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return node

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        tree = cls()
        for key in ("feature", "threshold", "left", "right", "value", "n_samples"):
            setattr(tree, key, data[key])
        return tree.finalize()


def _sorted_rows(order, member, n_node, features):
    """节点内样本按各特征值排序后的行号，形状 (n_node, len(features))"""
    sub = order[:, features]
    mask = member[sub]
    return sub.T[mask.T].reshape(len(features), n_node).T


def _split_point(values, gain, features):
    """从增益矩阵中选出最优 (增益, 特征, 阈值)"""
    position = np.argmax(gain, axis=0)
    best_per_feature = gain[position, np.arange(len(features))]
    column = int(np.argmax(best_per_feature))
    best_gain = float(best_per_feature[column])
    if not np.isfinite(best_gain) or best_gain <= MIN_GAIN:
        return None
    pos = position[column]
    lo, hi = values[pos, column], values[pos + 1, column]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:
        threshold = lo
    return best_gain, int(features[column]), float(threshold)


def best_gini_split(X, counts, rows, features, min_leaf):
    """
    Gini分裂搜索
    counts: 每行的加权类别计数 (n, K)
    rows: 节点内按特征排序的行号 (n_node, m)
    """
    n_node = rows.shape[0]
    if n_node < 2:
        return None
    values = X[rows, features[None, :]]
    sorted_counts = counts[rows]
    left = np.cumsum(sorted_counts, axis=0)[:-1]
    total = sorted_counts[:, 0, :].sum(axis=0)
    n_total = total.sum()
    right = total[None, None, :] - left
    n_left = left.sum(axis=2)
    n_right = n_total - n_left

    with np.errstate(divide="ignore", invalid="ignore"):
        gini_left = 1.0 - np.sum((left / n_left[..., None]) ** 2, axis=2)
        gini_right = 1.0 - np.sum((right / n_right[..., None]) ** 2, axis=2)
    parent = 1.0 - np.sum((total / n_total) ** 2)
    weighted = (n_left * gini_left + n_right * gini_right) / n_total
    gain = parent - weighted

    valid = (values[:-1] < values[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    return _split_point(values, gain, features)


def best_gradient_split(X, grad, hess, rows, features, reg_lambda, gamma, min_child_weight, min_leaf):
    """二阶梯度分裂搜索：gain = 1/2 [GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)] - γ"""
    n_node = rows.shape[0]
    if n_node < 2:
        return None
    values = X[rows, features[None, :]]
    g_sorted = grad[rows]
    h_sorted = hess[rows]
    g_left = np.cumsum(g_sorted, axis=0)[:-1]
    h_left = np.cumsum(h_sorted, axis=0)[:-1]
    g_total = g_sorted[:, 0].sum()
    h_total = h_sorted[:, 0].sum()
    g_right = g_total - g_left
    h_right = h_total - h_left

    gain = 0.5 * (g_left ** 2 / (h_left + reg_lambda)
                  + g_right ** 2 / (h_right + reg_lambda)
                  - g_total ** 2 / (h_total + reg_lambda)) - gamma

    n_left = np.arange(1, n_node)[:, None]
    valid = ((values[:-1] < values[1:])
             & (h_left >= min_child_weight) & (h_right >= min_child_weight)
             & (n_left >= min_leaf) & (n_node - n_left >= min_leaf))
    gain = np.where(valid, gain, -np.inf)
    return _split_point(values, gain, features)


def grow_tree(X, weights, max_depth, leaf_fn, split_fn, feature_sampler=None):
    """
    通用的树生长过程（先序，左子树优先）
    leaf_fn(rows_mask) -> (叶子值, 样本量)
    split_fn(sorted_rows, features) -> (gain, feature, threshold) 或 None
    """
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    tree = TreeStructure()
    root_member = weights > 0
    value, size = leaf_fn(root_member)
    root = tree.add_node(value, size)
    stack = [(root, root_member, 0)]

    while stack:
        node, member, depth = stack.pop()
        n_node = int(member.sum())
        if depth >= max_depth or n_node < 2:
            continue
        features = feature_sampler() if feature_sampler else np.arange(d)
        rows = _sorted_rows(order, member, n_node, features)
        split = split_fn(rows, features)
        if split is None:
            continue
        _, feature, threshold = split
        go_left = X[:, feature] <= threshold
        left_member = member & go_left
        right_member = member & ~go_left

        tree.feature[node] = feature
        tree.threshold[node] = threshold
        left_value, left_size = leaf_fn(left_member)
        right_value, right_size = leaf_fn(right_member)
        tree.left[node] = tree.add_node(left_value, left_size)
        tree.right[node] = tree.add_node(right_value, right_size)
        stack.append((tree.right[node], right_member, depth + 1))
        stack.append((tree.left[node], left_member, depth + 1))

    return tree.finalize()


@register_model
class DecisionTree(BaseLearner):
    """CART分类树，叶子保存类别分布"""

    model_kind = "cart"

    def __init__(self, max_depth=6, min_leaf=1, max_features=None, seed=0, classes=None):
        super().__init__(classes)
        self.max_depth = int(max_depth)
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.seed = seed
        self.tree = None

    def get_params(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "max_features": self.max_features, "seed": self.seed}

    def fit(self, X, y, sample_weight=None, rng=None):
        X, y, self.classes, y_index = check_training_data(X, y, self.classes or None)
        n, d = X.shape
        weights = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        counts = np.zeros((n, self.n_classes))
        counts[np.arange(n), y_index] = weights

        def leaf_fn(member):
            total = counts[member].sum(axis=0)
            size = total.sum()
            return (total / size if size > 0 else np.full(self.n_classes, 1.0 / self.n_classes)), size

        def split_fn(rows, features):
            return best_gini_split(X, counts, rows, features, self.min_leaf)

        sampler = None
        if self.max_features is not None and self.max_features < d:
            rng = rng if rng is not None else np.random.default_rng(self.seed)
            m = max(1, int(self.max_features))
            sampler = lambda: np.sort(rng.choice(d, size=m, replace=False))

        self.tree = grow_tree(X, weights, self.max_depth, leaf_fn, split_fn, sampler)
        logger.debug(f"CART fitted: {self.tree.n_nodes} nodes, depth {self.tree.depth()}")
        return self

    def predict_proba(self, X):
        X = as_2d(X)
        return self.tree.value[self.tree.apply(X)]

    def get_structure(self):
        return self.tree.to_dict()

    def set_structure(self, structure):
        self.tree = TreeStructure.from_dict(structure)


class RegressionTree:
    """梯度回归树，叶子值 = -G/(H+λ)"""

    def __init__(self, max_depth=4, reg_lambda=1.0, gamma=0.0, min_child_weight=0.1, min_leaf=1):
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.min_leaf = min_leaf
        self.tree = None

    def fit(self, X, grad, hess):
        def leaf_fn(member):
            g = grad[member].sum()
            h = hess[member].sum()
            return -g / (h + self.reg_lambda), member.sum()

        def split_fn(rows, features):
            return best_gradient_split(X, grad, hess, rows, features, self.reg_lambda,
                                       self.gamma, self.min_child_weight, self.min_leaf)

        self.tree = grow_tree(X, np.ones(len(X)), self.max_depth, leaf_fn, split_fn)
        return self

    def predict(self, X):
        return self.tree.value[self.tree.apply(X)]

    def to_dict(self):
        return self.tree.to_dict()

    @classmethod
    def from_dict(cls, data):
        model = cls()
        model.tree = TreeStructure.from_dict(data)
        return model


def train_cart(X, y, classes=None, max_depth=6, min_leaf=1, seed=0):
    """训练CART分类树"""
    return DecisionTree(max_depth=max_depth, min_leaf=min_leaf, seed=seed, classes=classes).fit(X, y)
