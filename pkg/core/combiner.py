#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
多分类组合模块 - Binary classifier combination
一对一投票、一对多、决策DAG（经典消元与满意/不满意分组两种形式）
二分类器只需满足概率契约：有 classes 属性和 predict_proba 方法
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.errors import InsufficientPairData
from core.evaluator import binary_scores
from core.learners import LEARNER_TRAINERS, model_from_dict
from core.learners.base import as_2d
from core.preprocessor import rebalance

logger = logging.getLogger("Combiner")


def proba_of(model, X, label):
    """二分类器对某个类别的概率"""
    classes = [int(c) for c in model.classes]
    return model.predict_proba(X)[:, classes.index(int(label))]


@dataclass
class PairwiseEntry:
    i: int
    j: int
    model: object
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    accuracy: float = 0.0

    def to_dict(self):
        return {"pair": [self.i, self.j], "model": self.model.to_dict(),
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "accuracy": self.accuracy}


class PairwiseBank:
    """(i, j), i < j -> 只用标签 i/j 的样本训练的二分类器"""

    def __init__(self, classes, entries=None):
        self.classes = [int(c) for c in classes]
        self.entries: Dict[Tuple[int, int], PairwiseEntry] = dict(entries or {})

    @classmethod
    def from_models(cls, classes, models):
        return cls(classes, {(i, j): PairwiseEntry(i, j, model) for (i, j), model in models.items()})

    @property
    def n_classes(self):
        return len(self.classes)

    def pairs(self):
        return sorted(self.entries)

    def __len__(self):
        return len(self.entries)

    def prob_matrix(self, X):
        """
        Q[n, a, b] = 分类器{a,b}给出的类别a的概率（a != b，按类别下标）
        对角线为0
        """
        X = as_2d(X)
        N = self.n_classes
        Q = np.zeros((len(X), N, N))
        for (i, j), entry in sorted(self.entries.items()):
            a, b = self.classes.index(i), self.classes.index(j)
            p = proba_of(entry.model, X, i)
            Q[:, a, b] = p
            Q[:, b, a] = 1.0 - p
        return Q

    def best_pair(self):
        """验证集F1最高的类别对，平局取字典序最小"""
        return max(self.pairs(), key=lambda pair: (self.entries[pair].f1, tuple(-v for v in pair)))

    def to_dict(self):
        return {"classes": self.classes,
                "entries": [self.entries[pair].to_dict() for pair in self.pairs()]}

    @classmethod
    def from_dict(cls, data):
        entries = {}
        for item in data["entries"]:
            i, j = item["pair"]
            entries[(i, j)] = PairwiseEntry(i, j, model_from_dict(item["model"]), item["precision"],
                                            item["recall"], item["f1"], item["accuracy"])
        return cls(data["classes"], entries)


def _train_binary(learner, X, y, classes, params):
    return LEARNER_TRAINERS[learner](X, y, classes=classes, **params)


def train_pairwise_bank(X, y, classes=None, learner="linsvm", learner_params=None,
                        validation=None, min_pair_rows=5):
    """
    训练全部 C(N,2) 个两两分类器
    validation: (X_valid, y_valid)，用于记录每个分类器的精确率/召回率（类别i为正类）；
    缺省时在训练数据上计算
    """
    y = np.asarray(y, dtype=int)
    classes = sorted(int(c) for c in np.unique(y)) if classes is None else [int(c) for c in classes]
    params = dict(learner_params or {})
    entries = {}

    for i, j in combinations(classes, 2):
        counts = {i: int(np.sum(y == i)), j: int(np.sum(y == j))}
        if min(counts.values()) < min_pair_rows:
            raise InsufficientPairData(i, j, counts)
        rows = (y == i) | (y == j)
        model = _train_binary(learner, X[rows], y[rows], [i, j], params)

        X_eval, y_eval = (X[rows], y[rows])
        if validation is not None:
            X_valid, y_valid = validation
            y_valid = np.asarray(y_valid, dtype=int)
            eval_rows = (y_valid == i) | (y_valid == j)
            if eval_rows.any():
                X_eval, y_eval = X_valid[eval_rows], y_valid[eval_rows]

        pred = np.where(proba_of(model, X_eval, i) >= 0.5, i, j)
        precision, recall, f1 = binary_scores(y_eval, pred, i)
        entries[(i, j)] = PairwiseEntry(i, j, model, precision, recall, f1,
                                        float(np.mean(pred == y_eval)))
        logger.info(f"Pair {i} vs {j}: precision {precision:.3f}, recall {recall:.3f}, f1 {f1:.3f}")

    return PairwiseBank(classes, entries)


def predict_ovo(bank, X):
    """
    一对一投票
    每个分类器给预测的一方一票（概率相等时投给较小标签）；
    票数平局时比较累计概率，再平局取最小标签
    返回：(标签, 票数 (n, N))
    """
    Q = bank.prob_matrix(X)
    n, N = Q.shape[0], bank.n_classes
    votes = np.zeros((n, N))
    mass = np.zeros((n, N))
    for a, b in combinations(range(N), 2):
        p = Q[:, a, b]
        first = p >= 0.5
        votes[:, a] += first
        votes[:, b] += ~first
        mass[:, a] += p
        mass[:, b] += 1.0 - p
    top = votes == votes.max(axis=1, keepdims=True)
    winner = np.argmax(np.where(top, mass, -np.inf), axis=1)
    return np.asarray(bank.classes)[winner], votes


class OneVsRest:
    """每个类别一个 "该类 vs 其余" 的二分类器（正类标签为1）"""

    def __init__(self, classes, models):
        self.classes = [int(c) for c in classes]
        self.models = list(models)

    def positive_proba(self, X):
        X = as_2d(X)
        return np.column_stack([proba_of(model, X, 1) for model in self.models])

    def predict(self, X):
        """正类概率最大的类别，平局取下标最小"""
        return np.asarray(self.classes)[np.argmax(self.positive_proba(X), axis=1)]

    def predict_proba(self, X):
        P = self.positive_proba(X)
        total = P.sum(axis=1, keepdims=True)
        return P / np.where(total > 0, total, 1.0)

    def to_dict(self):
        return {"classes": self.classes, "models": [model.to_dict() for model in self.models]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["classes"], [model_from_dict(m) for m in data["models"]])


def train_ovr_models(X, y, classes=None, learner="linsvm", learner_params=None, seed=0):
    """一对多训练，每个类别先过采样到 1:1"""
    y = np.asarray(y, dtype=int)
    classes = sorted(int(c) for c in np.unique(y)) if classes is None else [int(c) for c in classes]
    params = dict(learner_params or {})
    models = []
    for index, label in enumerate(classes):
        X_bal, y_bal = rebalance(X, y, label, seed=seed + index)
        models.append(_train_binary(learner, X_bal, y_bal, [0, 1], params))
    return OneVsRest(classes, models)


def predict_ovr(models, X):
    """正类概率最大的类别"""
    return models.predict(X)


@dataclass
class DagSpec:
    """
    决策DAG
    classic: 标签序列首尾两两比较，每步淘汰一个标签，根节点为验证F1最高的类别对
    sat_dissat: 根节点判断 {低一半标签} vs {高一半标签}，再在组内做经典消元
    """
    variant: str
    classes: List[int]
    order: List[int] = field(default_factory=list)
    group_model: Optional[object] = None

    def to_dict(self):
        return {"variant": self.variant, "classes": self.classes, "order": self.order,
                "group_model": self.group_model.to_dict() if self.group_model is not None else None}

    @classmethod
    def from_dict(cls, data):
        group = data.get("group_model")
        return cls(data["variant"], list(data["classes"]), list(data.get("order", [])),
                   model_from_dict(group) if group else None)

    @property
    def low_group(self):
        return self.classes[:len(self.classes) // 2]

    @property
    def high_group(self):
        return self.classes[len(self.classes) // 2:]


def classic_order(classes, root_pair):
    a, b = root_pair
    middle = [c for c in classes if c not in (a, b)]
    return [a] + middle + [b]


def train_dag(X, y, bank, variant="classic", learner="linsvm", learner_params=None):
    """
    构建DAG
    sat_dissat 变体需要额外训练分组分类器（标签1 = 高一半标签）
    """
    classes = list(bank.classes)
    if variant == "classic":
        return DagSpec("classic", classes, classic_order(classes, bank.best_pair()))
    if variant == "sat_dissat":
        spec = DagSpec("sat_dissat", classes)
        y = np.asarray(y, dtype=int)
        y_group = np.isin(y, spec.high_group).astype(int)
        spec.group_model = _train_binary(learner, X, y_group, [0, 1], dict(learner_params or {}))
        return spec
    raise ValueError(f"Unknown DAG variant: {variant}")


def _eliminate(Q_row, labels, classes, trace):
    """在 labels 上做首尾消元"""
    labels = list(labels)
    while len(labels) > 1:
        first, last = labels[0], labels[-1]
        p = float(Q_row[classes.index(first), classes.index(last)])
        eliminated = last if p >= 0.5 else first
        trace.append({"node": [first, last], "p_first": p, "eliminated": eliminated})
        labels.remove(eliminated)
    return labels[0]


def predict_dag(spec, bank, X):
    """
    沿DAG从根走到叶子
    返回：(标签数组, 每行的路径记录)
    """
    X = as_2d(X)
    Q = bank.prob_matrix(X)
    classes = list(spec.classes)
    labels = np.zeros(len(X), dtype=int)
    traces = []

    if spec.variant == "sat_dissat":
        p_high = proba_of(spec.group_model, X, 1)
    for row in range(len(X)):
        trace = []
        if spec.variant == "sat_dissat":
            high = p_high[row] > 0.5
            trace.append({"node": ["low", "high"], "p_high": float(p_high[row]),
                          "eliminated": "low" if high else "high"})
            group = spec.high_group if high else spec.low_group
            labels[row] = _eliminate(Q[row], group, classes, trace)
        else:
            order = spec.order or classes
            labels[row] = _eliminate(Q[row], order, classes, trace)
        traces.append(trace)
    return labels, traces
