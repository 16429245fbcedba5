#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
梯度提升树 - Multiclass softmax gradient boosting
second_order=True 时使用二阶梯度并带 λ/γ 正则（多分类层的主力模型）；
second_order=False 时Hessian取1，即一阶GBDT
"""

import numpy as np

from core.errors import NonFiniteGradient
from core.learners.base import (BaseLearner, as_2d, check_training_data, logger,
                                register_model, softmax)
from core.learners.tree import RegressionTree

PRIOR_CLIP = 1e-6


def log_loss(P, y_index):
    return float(-np.mean(np.log(np.clip(P[np.arange(len(y_index)), y_index], 1e-15, 1.0))))


@register_model
class BoostedModel(BaseLearner):
    """每轮每个类别一棵回归树，预测为累计分数的softmax"""

    model_kind = "gbt"

    def __init__(self, n_rounds=200, learning_rate=0.1, max_depth=4, reg_lambda=1.0, gamma=0.0,
                 min_child_weight=0.1, second_order=True, prior=None, seed=0, classes=None):
        super().__init__(classes)
        self.n_rounds = int(n_rounds)
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.reg_lambda = float(reg_lambda)
        self.gamma = float(gamma)
        self.min_child_weight = float(min_child_weight)
        self.second_order = bool(second_order)
        self.prior = None if prior is None else [float(p) for p in prior]
        self.seed = seed
        self.base_score = None
        self.rounds = []
        self.loss_history = []

    @property
    def model_kind_label(self):
        return "gbt" if self.second_order else "gbdt"

    def get_params(self):
        return {"n_rounds": self.n_rounds, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "reg_lambda": self.reg_lambda, "gamma": self.gamma,
                "min_child_weight": self.min_child_weight, "second_order": self.second_order,
                "prior": self.prior, "seed": self.seed}

    def fit(self, X, y):
        X, y, self.classes, y_index = check_training_data(X, y, self.classes or None, min_classes=2)
        n = len(X)
        K = self.n_classes
        Y = np.zeros((n, K))
        Y[np.arange(n), y_index] = 1.0

        prior = np.asarray(self.prior, dtype=float) if self.prior is not None else Y.mean(axis=0)
        self.base_score = np.log(np.clip(prior, PRIOR_CLIP, None))
        F = np.tile(self.base_score, (n, 1))
        P = softmax(F)
        self.loss_history = [log_loss(P, y_index)]
        self.rounds = []

        for m in range(self.n_rounds):
            grad = P - Y
            hess = P * (1.0 - P) if self.second_order else np.ones_like(P)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                raise NonFiniteGradient(f"non-finite gradient at round {m}", round=m,
                                        loss=self.loss_history[-1])
            trees = []
            for k in range(K):
                tree = RegressionTree(self.max_depth, self.reg_lambda, self.gamma,
                                      self.min_child_weight).fit(X, grad[:, k], hess[:, k])
                F[:, k] += self.learning_rate * tree.predict(X)
                trees.append(tree)
            self.rounds.append(trees)
            P = softmax(F)
            self.loss_history.append(log_loss(P, y_index))
            logger.debug(f"{self.model_kind_label} round {m + 1}: loss {self.loss_history[-1]:.6f}")

        logger.info(f"{self.model_kind_label} fitted: {self.n_rounds} rounds, "
                    f"final loss {self.loss_history[-1]:.4f}")
        return self

    def decision_function(self, X):
        X = as_2d(X)
        F = np.tile(self.base_score, (len(X), 1))
        for trees in self.rounds:
            for k, tree in enumerate(trees):
                F[:, k] += self.learning_rate * tree.predict(X)
        return F

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def get_structure(self):
        return {"base_score": self.base_score.tolist(),
                "rounds": [[tree.to_dict() for tree in trees] for trees in self.rounds],
                "loss_history": self.loss_history}

    def set_structure(self, structure):
        self.base_score = np.asarray(structure["base_score"], dtype=float)
        self.rounds = [[RegressionTree.from_dict(tree) for tree in trees]
                       for trees in structure["rounds"]]
        self.loss_history = list(structure.get("loss_history", []))


def train_gbt(X, y, classes=None, n_rounds=200, learning_rate=0.1, max_depth=4, reg_lambda=1.0,
              gamma=0.0, min_child_weight=0.1, prior=None, seed=0):
    """二阶提升树"""
    return BoostedModel(n_rounds, learning_rate, max_depth, reg_lambda, gamma, min_child_weight,
                        second_order=True, prior=prior, seed=seed, classes=classes).fit(X, y)


def train_gbdt(X, y, classes=None, n_rounds=200, learning_rate=0.1, max_depth=4, reg_lambda=1.0,
               min_child_weight=0.0, prior=None, seed=0):
    """一阶GBDT（单位Hessian）"""
    return BoostedModel(n_rounds, learning_rate, max_depth, reg_lambda, 0.0, min_child_weight,
                        second_order=False, prior=prior, seed=seed, classes=classes).fit(X, y)
