#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
混合模型模块 - Two-layer hybrid model and final dispatcher

score_i(x) = w_i * sum_j P_j(x) * cond(i | j, x)
  P_j      : 多分类层（提升树）的类别概率
  cond     : 由两两分类器给出；i != j 时取分类器{i,j}对i的概率，
             i == j 时取 j 与其余未剪枝类别的分类器对 j 的概率均值
  被剪枝的类别对退化为单位条件概率（i == j 为1，否则为0）
分数不做归一化，只用于取argmax
"""

import logging
from dataclasses import asdict, dataclass
from itertools import combinations, product

import numpy as np
import pandas as pd

from core.combiner import DagSpec, OneVsRest, PairwiseBank
from core.errors import AllWeightsZero, MissingValidationLabel
from core.evaluator import class_metrics
from core.feature_extractor import (FEATURE_NAMES, DwellThresholdConfig, build_feature_frames)
from core.learners import model_from_dict
from core.learners.artifact import build_artifact
from core.learners.base import as_2d
from core.preprocessor import apply_standardization, impute_missing
from core.single_query import SingleQueryModel

logger = logging.getLogger("HybridModel")

GRID_CHUNK = 2048


class HybridModel:
    """多分类层 + 条件两两分类层"""

    def __init__(self, multiclass, bank, weights=None, pruned=()):
        self.multiclass = multiclass
        self.bank = bank
        self.classes = list(bank.classes)
        n = len(self.classes)
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        self.pruned = {tuple(sorted(pair)) for pair in pruned}

    @property
    def n_classes(self):
        return len(self.classes)

    def with_changes(self, weights=None, pruned=None):
        return HybridModel(self.multiclass, self.bank,
                           self.weights if weights is None else weights,
                           self.pruned if pruned is None else pruned)

    def conditional_tensor(self, X):
        """C[n, i, j] = cond(i | j, x)"""
        Q = self.bank.prob_matrix(X)
        N = self.n_classes
        C = np.zeros_like(Q)
        kept = np.ones((N, N), dtype=bool)
        np.fill_diagonal(kept, False)
        for i, j in self.pruned:
            a, b = self.classes.index(i), self.classes.index(j)
            kept[a, b] = kept[b, a] = False

        C[:, kept] = Q[:, kept]
        for j in range(N):
            partners = np.flatnonzero(kept[j])
            C[:, j, j] = Q[:, j, partners].mean(axis=1) if partners.size else 1.0
        return C

    def base_scores(self, X):
        """未乘权重的分数 sum_j P_j * cond(i | j)，形状 (n, N)"""
        X = as_2d(X)
        P = self.multiclass.predict_proba(X)
        C = self.conditional_tensor(X)
        return np.einsum("nj,nij->ni", P, C)

    def score(self, X):
        if not np.any(self.weights > 0):
            raise AllWeightsZero("all hybrid weights are zero", weights=self.weights.tolist())
        return self.base_scores(X) * self.weights

    def predict(self, X):
        """argmax，平局取较小标签"""
        return np.asarray(self.classes)[np.argmax(self.score(X), axis=1)]

    def predict_proba(self, X):
        """归一化后的分数，仅用于局部解释"""
        S = self.score(X)
        total = S.sum(axis=1, keepdims=True)
        return np.where(total > 0, S / np.where(total > 0, total, 1.0), 1.0 / self.n_classes)

    def to_dict(self):
        return {"multiclass": self.multiclass.to_dict(), "bank": self.bank.to_dict(),
                "weights": self.weights.tolist(), "pruned": sorted(list(p) for p in self.pruned)}

    @classmethod
    def from_dict(cls, data):
        return cls(model_from_dict(data["multiclass"]), PairwiseBank.from_dict(data["bank"]),
                   data["weights"], [tuple(p) for p in data["pruned"]])


def score_hybrid(model, X):
    return model.score(X)


def predict_hybrid(model, X):
    return model.predict(X)


def macro_f1_batch(truth_index, pred_index, n_classes):
    """一批预测 (G, n) 的宏F1；F1 = 2TP / (预测数 + 真实数)"""
    scores = np.zeros(pred_index.shape[0])
    for label in range(n_classes):
        is_true = truth_index == label
        is_pred = pred_index == label
        tp = np.sum(is_pred & is_true[None, :], axis=1)
        denominator = is_pred.sum(axis=1) + is_true.sum()
        scores += np.where(denominator > 0, 2.0 * tp / np.maximum(denominator, 1), 0.0)
    return scores / n_classes


def weight_grid(n_classes, grid_step):
    """{0, step, ..., 1}^N 去掉全零点，按字典序排列"""
    steps = int(round(1.0 / grid_step))
    points = np.array([p for p in product(range(steps + 1), repeat=n_classes) if any(p)],
                      dtype=float)
    return np.round(points * grid_step, 10)


@dataclass
class WeightFitResult:
    weights: np.ndarray
    score: float
    n_evaluated: int


def _validation_index(model, y_valid):
    y_valid = np.asarray(y_valid, dtype=int)
    missing = sorted(set(model.classes) - set(y_valid.tolist()))
    if missing:
        raise MissingValidationLabel(f"validation set lacks labels {missing}", missing=missing)
    lookup = {c: i for i, c in enumerate(model.classes)}
    return np.array([lookup[int(v)] for v in y_valid])


def fit_weights(model, X_valid, y_valid, grid_step=0.1):
    """
    网格搜索权重，使验证集宏F1最大
    严格更优才替换，因此平局时保留字典序最小的权重
    """
    truth = _validation_index(model, y_valid)
    base = model.base_scores(X_valid)
    grid = weight_grid(model.n_classes, grid_step)

    best_score = -1.0
    best_weights = None
    for start in range(0, len(grid), GRID_CHUNK):
        chunk = grid[start:start + GRID_CHUNK]
        preds = np.argmax(base[None, :, :] * chunk[:, None, :], axis=2)
        scores = macro_f1_batch(truth, preds, model.n_classes)
        top = int(np.argmax(scores))
        if scores[top] > best_score:
            best_score = float(scores[top])
            best_weights = chunk[top].copy()

    logger.info(f"Weight search: {len(grid)} points, best macro-F1 {best_score:.4f}, "
                f"weights {best_weights.tolist()}")
    return WeightFitResult(best_weights, best_score, len(grid))


def rank_confused_pairs(confusion):
    """按 C[i,j] + C[j,i] 从大到小排列类别下标对"""
    confusion = np.asarray(confusion, dtype=float)
    N = confusion.shape[0]
    pairs = [((a, b), confusion[a, b] + confusion[b, a]) for a, b in combinations(range(N), 2)]
    return sorted(pairs, key=lambda item: -item[1])


def prune_paths(model, confusion, keep_fraction=0.8, validation=None, grid_step=0.1):
    """
    只保留最容易混淆的类别对：
    取覆盖至少 keep_fraction 的非对角混淆量的最短前缀，其余类别对退化为单位条件概率
    validation=(X, y) 时随后重新搜索权重
    """
    ranked = rank_confused_pairs(confusion)
    total = sum(mass for _, mass in ranked)
    all_pairs = [(model.classes[a], model.classes[b]) for (a, b), _ in ranked]

    if keep_fraction >= 1.0:
        kept = set(all_pairs)
    elif total <= 0:
        kept = set()
    else:
        kept, covered = set(), 0.0
        for pair, (_, mass) in zip(all_pairs, ranked):
            if covered >= keep_fraction * total:
                break
            kept.add(pair)
            covered += mass

    pruned = {pair for pair in all_pairs if pair not in kept}
    logger.info(f"Pruning kept pairs {sorted(kept)}, pruned {len(pruned)}")
    pruned_model = model.with_changes(pruned=pruned)
    if validation is not None:
        result = fit_weights(pruned_model, validation[0], validation[1], grid_step)
        pruned_model = pruned_model.with_changes(weights=result.weights)
    return pruned_model


def select_structure(model, X_valid, y_valid, grid_step=0.1):
    """
    与完全剪枝（只剩多分类层）的版本比较验证集宏F1，保留更好的结构
    返回：(模型, 选择说明)
    """
    all_pairs = list(combinations(model.classes, 2))
    reduced = model.with_changes(pruned=all_pairs)
    reduced = reduced.with_changes(weights=fit_weights(reduced, X_valid, y_valid, grid_step).weights)
    labels = model.classes
    current_f1 = class_metrics(y_valid, model.predict(X_valid), labels).macro_f1
    reduced_f1 = class_metrics(y_valid, reduced.predict(X_valid), labels).macro_f1
    if reduced_f1 > current_f1:
        logger.info(f"Full pruning wins on validation ({reduced_f1:.4f} > {current_f1:.4f})")
        return reduced, {"structure": "multiclass_only", "macro_f1": reduced_f1,
                         "alternative_macro_f1": current_f1}
    return model, {"structure": "pruned_hybrid", "macro_f1": current_f1,
                   "alternative_macro_f1": reduced_f1}


class FinalModel:
    """
    最终模型：单查询会话走规则+决策树，多查询会话走混合模型
    同时保存特征处理所需的统计量
    """

    def __init__(self, hybrid, single, feature_schema=None, imputation_stats=None,
                 standardization_stats=None, thresholds=None, combiners=None, parameters=None):
        self.hybrid = hybrid
        self.single = single
        self.feature_schema = list(feature_schema or FEATURE_NAMES)
        self.imputation_stats = dict(imputation_stats or {})
        self.standardization_stats = dict(standardization_stats or {})
        self.thresholds = thresholds or DwellThresholdConfig()
        self.combiners = dict(combiners or {})
        self.parameters = dict(parameters or {})
        self.query_stats = None

    @property
    def classes(self):
        return self.hybrid.classes

    def prepare_multi(self, frame):
        """原始多查询特征 -> 填补并标准化后的矩阵"""
        frame = frame[self.feature_schema]
        filled, _ = impute_missing(frame, self.imputation_stats)
        return apply_standardization(filled, self.standardization_stats).to_numpy(dtype=float)

    def predict_frames(self, multi, single):
        """
        对已提取的特征预测
        返回：{goal_id: (标签, 模型标签, 分数列表)}
        """
        results = {}
        if len(multi):
            X = self.prepare_multi(multi)
            scores = self.hybrid.score(X)
            labels = np.asarray(self.classes)[np.argmax(scores, axis=1)]
            for goal_id, label, row in zip(multi.index, labels, scores):
                results[goal_id] = (int(label), "hybrid", [float(v) for v in row])
        if len(single):
            labels, _ = self.single.predict(single)
            proba = self.single.predict_proba(single)
            for goal_id, label, row in zip(single.index, labels, proba):
                results[goal_id] = (int(label), "single", [float(v) for v in row])
        return results

    def predict_sessions(self, sessions, stats=None):
        """返回：(标签数组, 模型标签列表, 分数列表)，顺序与输入一致"""
        stats = stats if stats is not None else self.query_stats
        multi, single = build_feature_frames(sessions, self.thresholds, stats)
        results = self.predict_frames(multi, single)
        ordered = [results[session.goal_id] for session in sessions]
        return (np.array([r[0] for r in ordered], dtype=int), [r[1] for r in ordered],
                [r[2] for r in ordered])

    def to_artifact(self):
        structure = {"hybrid": self.hybrid.to_dict(), "single": self.single.to_dict()}
        for name, combiner in sorted(self.combiners.items()):
            structure.setdefault("combiners", {})[name] = combiner.to_dict()
        parameters = dict(self.parameters)
        parameters["dwell_thresholds"] = asdict(self.thresholds)
        return build_artifact("final", self.classes, self.feature_schema,
                              self.standardization_stats, self.imputation_stats,
                              parameters, structure)

    @classmethod
    def from_artifact(cls, data):
        structure = data["structure"]
        combiners = {}
        for name, item in structure.get("combiners", {}).items():
            combiners[name] = DagSpec.from_dict(item) if "variant" in item else OneVsRest.from_dict(item)
        parameters = dict(data.get("parameters", {}))
        thresholds = DwellThresholdConfig(**parameters.pop("dwell_thresholds", {}))
        return cls(HybridModel.from_dict(structure["hybrid"]),
                   SingleQueryModel.from_dict(structure["single"]),
                   data["feature_schema"], data["imputation_stats"],
                   data["standardization_stats"], thresholds, combiners, parameters)


def predict_final(model, session, stats=None):
    """单个会话的最终预测：(标签, 'single' 或 'hybrid', 分数)"""
    labels, tags, scores = model.predict_sessions([session], stats)
    return int(labels[0]), tags[0], scores[0]


def prediction_frame(sessions, labels, tags, scores, classes):
    rows = []
    for session, label, tag, row in zip(sessions, labels, tags, scores):
        item = {"goal_id": session.goal_id, "label": int(label), "model_tag": tag}
        item.update({f"score_{c}": float(v) for c, v in zip(classes, row)})
        rows.append(item)
    return pd.DataFrame(rows, columns=["goal_id", "label", "model_tag"]
                        + [f"score_{c}" for c in classes])
