#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
随机森林 - Bagged CART with per-split feature subsampling
"""

import numpy as np

from core.learners.base import BaseLearner, as_2d, check_training_data, logger, register_model
from core.learners.tree import DecisionTree, TreeStructure


@register_model
class RandomForest(BaseLearner):
    """预测 = 各棵树类别分布的平均"""

    model_kind = "forest"

    def __init__(self, n_trees=100, max_depth=8, min_leaf=1, feature_subsample="sqrt",
                 bootstrap=True, seed=0, classes=None):
        super().__init__(classes)
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_leaf = min_leaf
        self.feature_subsample = feature_subsample
        self.bootstrap = bool(bootstrap)
        self.seed = seed
        self.trees = []

    def get_params(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "feature_subsample": self.feature_subsample, "bootstrap": self.bootstrap,
                "seed": self.seed}

    def _max_features(self, d):
        if self.feature_subsample in (None, "all", 1.0):
            return None
        if self.feature_subsample == "sqrt":
            return max(1, int(np.sqrt(d)))
        if isinstance(self.feature_subsample, float):
            return max(1, int(round(self.feature_subsample * d)))
        return int(self.feature_subsample)

    def fit(self, X, y):
        X, y, self.classes, _ = check_training_data(X, y, self.classes or None)
        n, d = X.shape
        max_features = self._max_features(d)
        self.trees = []
        # 每棵树独立的随机数流，树的顺序固定
        for t in range(self.n_trees):
            rng = np.random.default_rng([int(self.seed), t])
            if self.bootstrap:
                weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
            else:
                weights = None
            tree = DecisionTree(max_depth=self.max_depth, min_leaf=self.min_leaf,
                                max_features=max_features, seed=self.seed, classes=self.classes)
            self.trees.append(tree.fit(X, y, sample_weight=weights, rng=rng))
        logger.info(f"Random forest fitted: {self.n_trees} trees")
        return self

    def predict_proba(self, X):
        X = as_2d(X)
        return np.mean([tree.predict_proba(X) for tree in self.trees], axis=0)

    def get_structure(self):
        return {"trees": [tree.tree.to_dict() for tree in self.trees]}

    def set_structure(self, structure):
        self.trees = []
        for data in structure["trees"]:
            tree = DecisionTree(max_depth=self.max_depth, min_leaf=self.min_leaf, classes=self.classes)
            tree.tree = TreeStructure.from_dict(data)
            self.trees.append(tree)


def train_forest(X, y, classes=None, n_trees=100, max_depth=8, feature_subsample="sqrt",
                 bootstrap=True, min_leaf=1, seed=0):
    return RandomForest(n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf,
                        feature_subsample=feature_subsample, bootstrap=bootstrap,
                        seed=seed, classes=classes).fit(X, y)
