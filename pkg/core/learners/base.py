#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
学习器基类 - Shared probabilistic-prediction contract
所有学习器都输出每个类别的概率分布，并可序列化为JSON结构
"""

import logging

import numpy as np

from core.errors import EmptyData, InsufficientClasses

logger = logging.getLogger("Learners")

# model_kind -> 学习器类，供模型文件反序列化
MODEL_REGISTRY = {}


def register_model(cls):
    MODEL_REGISTRY[cls.model_kind] = cls
    return cls


def model_from_dict(data):
    kind = data["model_kind"]
    if kind not in MODEL_REGISTRY:
        raise ValueError(f"Unknown model kind: {kind}")
    return MODEL_REGISTRY[kind].from_dict(data)


def check_training_data(X, y, classes=None, min_classes=1):
    """
    校验训练数据并确定类别列表
    返回：(X, y, classes, y对应的类别下标)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0 or len(y) != len(X):
        raise EmptyData("training data is empty or misaligned",
                        shape=list(X.shape), n_labels=int(len(y)))
    if classes is None:
        classes = sorted(int(c) for c in np.unique(y))
    classes = [int(c) for c in classes]
    if len(classes) < min_classes:
        raise InsufficientClasses(f"need at least {min_classes} classes, got {len(classes)}",
                                  classes=classes)
    lookup = {c: i for i, c in enumerate(classes)}
    unknown = set(int(v) for v in np.unique(y)) - set(lookup)
    if unknown:
        raise InsufficientClasses(f"labels {sorted(unknown)} not in class list", classes=classes)
    y_index = np.array([lookup[int(v)] for v in y], dtype=int)
    return X, y, classes, y_index


def softmax(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class BaseLearner:
    """概率学习器基类"""

    model_kind = "base"

    def __init__(self, classes=None):
        self.classes = list(classes or [])

    @property
    def n_classes(self):
        return len(self.classes)

    def predict_proba(self, X):
        raise NotImplementedError

    def predict(self, X):
        """argmax，平局取下标最小的类别"""
        proba = self.predict_proba(X)
        return np.asarray(self.classes)[np.argmax(proba, axis=1)]

    def proba_of(self, X, label):
        """某个类别的概率"""
        return self.predict_proba(X)[:, self.classes.index(int(label))]

    def to_dict(self):
        return {"model_kind": self.model_kind, "classes": self.classes,
                "params": self.get_params(), "structure": self.get_structure()}

    @classmethod
    def from_dict(cls, data):
        model = cls(**data.get("params", {}))
        model.classes = [int(c) for c in data["classes"]]
        model.set_structure(data["structure"])
        return model

    def get_params(self):
        return {}

    def get_structure(self):
        raise NotImplementedError

    def set_structure(self, structure):
        raise NotImplementedError


def as_2d(X):
    X = np.asarray(X, dtype=float)
    return X.reshape(1, -1) if X.ndim == 1 else X
