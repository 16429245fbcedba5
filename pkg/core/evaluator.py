#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评估模块 - Metrics, page-level baselines, A/B comparison and GSB judging
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from core.correlation import pearson
from core.errors import InvalidConfig, ZeroVariance

logger = logging.getLogger("Evaluator")

PAGE_METRIC_NAMES = ("has_click_ratio", "click_ratio", "long_click_ratio")
DEFAULT_LONG_CLICK_S = 60.0


@dataclass
class ClassMetrics:
    """每个标签的精确率/召回率/F1，宏平均及混淆矩阵（行=真实，列=预测）"""
    labels: List[int]
    precision: Dict[int, float]
    recall: Dict[int, float]
    f1: Dict[int, float]
    support: Dict[int, int]
    confusion: np.ndarray
    accuracy: float

    @property
    def macro_precision(self):
        return float(np.mean([self.precision[l] for l in self.labels]))

    @property
    def macro_recall(self):
        return float(np.mean([self.recall[l] for l in self.labels]))

    @property
    def macro_f1(self):
        return float(np.mean([self.f1[l] for l in self.labels]))

    def to_dict(self):
        return {
            "labels": self.labels,
            "per_label": {str(l): {"precision": self.precision[l], "recall": self.recall[l],
                                   "f1": self.f1[l], "support": self.support[l]}
                          for l in self.labels},
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
        }


def _f1(precision, recall):
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def class_metrics(truth, pred, labels=None):
    """标准分类指标；某标签从未被预测时其精确率记为0"""
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if len(truth) == 0 or len(truth) != len(pred):
        raise ValueError("class_metrics needs two equal-length non-empty label vectors")
    if labels is None:
        labels = sorted(set(truth.tolist()) | set(pred.tolist()))
    labels = [int(l) for l in labels]
    index = {l: i for i, l in enumerate(labels)}

    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(truth, pred):
        confusion[index[int(t)], index[int(p)]] += 1

    precision, recall, f1, support = {}, {}, {}, {}
    for l, i in index.items():
        tp = confusion[i, i]
        predicted = confusion[:, i].sum()
        actual = confusion[i, :].sum()
        precision[l] = float(tp / predicted) if predicted else 0.0
        recall[l] = float(tp / actual) if actual else 0.0
        f1[l] = _f1(precision[l], recall[l])
        support[l] = int(actual)

    accuracy = float(np.trace(confusion) / confusion.sum())
    return ClassMetrics(labels, precision, recall, f1, support, confusion, accuracy)


ENSEMBLE_LEARNERS = ("gbt", "forest")
LINEAR_LEARNERS = ("logreg", "linsvm_ovr")


def learner_ordering(validation, multiclass="gbt", hybrid="hybrid"):
    """
    按验证集宏F1给各模型排序，并检查两组对比：
    - 混合模型 vs 单独的多分类模型
    - 最弱的树集成 vs 最强的线性模型
    validation: {模型名: class_metrics(...).to_dict()}
    """
    scores = {name: float(item["macro"]["f1"]) for name, item in validation.items()}
    ranking = sorted(scores, key=lambda name: (-scores[name], name))
    summary = {"ranking": ranking, "macro_f1": {name: scores[name] for name in ranking}}
    if hybrid in scores and multiclass in scores:
        summary["hybrid_vs_multiclass"] = {
            "hybrid": scores[hybrid], "multiclass": scores[multiclass],
            # 容忍浮点误差
            "holds": scores[hybrid] >= scores[multiclass] - 1e-12}
    ensembles = [scores[name] for name in ENSEMBLE_LEARNERS if name in scores]
    linear = [scores[name] for name in LINEAR_LEARNERS if name in scores]
    if ensembles and linear:
        summary["ensembles_vs_linear"] = {
            "ensemble_min": min(ensembles), "linear_max": max(linear),
            "holds": min(ensembles) >= max(linear)}
    return summary


def binary_scores(truth, pred, positive):
    """二分类的 (precision, recall, f1)，positive 为正类"""
    truth = np.asarray(truth) == positive
    pred = np.asarray(pred) == positive
    tp = float(np.sum(truth & pred))
    precision = tp / pred.sum() if pred.sum() else 0.0
    recall = tp / truth.sum() if truth.sum() else 0.0
    return float(precision), float(recall), _f1(precision, recall)


@dataclass
class PageMetrics:
    has_click_ratio: float
    click_ratio: float
    long_click_ratio: float

    def as_tuple(self):
        return (self.has_click_ratio, self.click_ratio, self.long_click_ratio)

    def get(self, name):
        return getattr(self, name)


def page_metrics(session, long_click_s=DEFAULT_LONG_CLICK_S):
    """
    页面级指标在会话上的平均：
    has_click_ratio = 有点击的查询比例；click_ratio = 点击数/查询数；
    long_click_ratio = 长点击数 / max(1, 点击数)
    """
    n_queries = len(session.queries)
    clicks = session.clicks
    has_click = sum(1 for query in session.queries if query.clicks)
    long_clicks = sum(1 for click in clicks if click.dwell_ms >= long_click_s * 1000.0)
    return PageMetrics(has_click / n_queries, len(clicks) / n_queries,
                       long_clicks / max(1, len(clicks)))


def page_metric_frame(sessions, long_click_s=DEFAULT_LONG_CLICK_S):
    rows = [page_metrics(session, long_click_s).as_tuple() for session in sessions]
    return pd.DataFrame(rows, index=[session.goal_id for session in sessions],
                        columns=list(PAGE_METRIC_NAMES), dtype=float)


def bootstrap_mean_diff(control, treatment, n_resamples, rng):
    """两组各自有放回重采样后的均值差，返回95%分位区间"""
    control = np.asarray(control, dtype=float)
    treatment = np.asarray(treatment, dtype=float)
    c_idx = rng.integers(0, len(control), size=(n_resamples, len(control)))
    t_idx = rng.integers(0, len(treatment), size=(n_resamples, len(treatment)))
    diffs = treatment[t_idx].mean(axis=1) - control[c_idx].mean(axis=1)
    low, high = np.percentile(diffs, [2.5, 97.5])
    return float(low), float(high)


def ab_compare(control, treatment, model, bootstrap_n=1000, seed=0,
               long_click_s=DEFAULT_LONG_CLICK_S):
    """
    实验组与对照组比较
    指标：模型预测标签的均值（session_score）与三个页面级指标
    delta = treatment - control，正值表示实验组更好
    """
    if not control or not treatment:
        raise InvalidConfig("both A/B groups need at least one session",
                            control=len(control), treatment=len(treatment))
    if bootstrap_n < 1:
        raise InvalidConfig("bootstrap_n must be >= 1", bootstrap_n=bootstrap_n)

    groups = {"control": control, "treatment": treatment}
    values = {}
    for name, sessions in groups.items():
        frame = page_metric_frame(sessions, long_click_s)
        frame.insert(0, "session_score", np.asarray(model.predict_sessions(sessions)[0], dtype=float))
        values[name] = frame

    rng = np.random.default_rng(seed)
    report = {"group_sizes": {name: len(sessions) for name, sessions in groups.items()},
              "means": {}, "deltas": {}, "ci95": {}, "correlation_with_session_score": {}}
    for metric in values["control"].columns:
        c = values["control"][metric].to_numpy()
        t = values["treatment"][metric].to_numpy()
        report["means"][metric] = {"control": float(c.mean()), "treatment": float(t.mean())}
        report["deltas"][metric] = float(t.mean() - c.mean())
        report["ci95"][metric] = list(bootstrap_mean_diff(c, t, bootstrap_n, rng))

    # 页面级指标与会话分数的相关性
    pooled = pd.concat([values["control"], values["treatment"]])
    for metric in PAGE_METRIC_NAMES:
        try:
            r = pearson(pooled[metric].to_numpy(), pooled["session_score"].to_numpy())
        except (ZeroVariance, ValueError):
            r = None
        report["correlation_with_session_score"][metric] = r

    logger.info(f"A/B compare: session_score delta {report['deltas']['session_score']:+.4f}")
    return report


@dataclass
class GsbVerdict:
    metric: str
    good: int = 0
    same: int = 0
    bad: int = 0
    verdicts: List[str] = field(default_factory=list)
    goal_ids: List[str] = field(default_factory=list)

    @property
    def total(self):
        return self.good + self.same + self.bad

    def to_row(self):
        return {"metric": self.metric, "good": self.good, "same": self.same, "bad": self.bad}


def quantile_cut_points(reference_values, reference_labels, n_labels=4):
    """按参考集标签的累计比例取页面指标的分位点"""
    labels = np.asarray(reference_labels, dtype=int)
    proportions = np.bincount(labels, minlength=n_labels)[:n_labels] / len(labels)
    cumulative = np.cumsum(proportions)[:-1]
    return np.quantile(np.asarray(reference_values, dtype=float), np.clip(cumulative, 0.0, 1.0))


def metric_to_label(values, cut_points):
    """值 <= 第一个分位点 -> 0，依此类推"""
    return np.searchsorted(cut_points, np.asarray(values, dtype=float), side="left")


def gsb_tally(truth, model_labels, page_labels, metric="page_metric"):
    truth = np.asarray(truth, dtype=int)
    model_err = np.abs(np.asarray(model_labels, dtype=int) - truth)
    page_err = np.abs(np.asarray(page_labels, dtype=int) - truth)
    verdict = GsbVerdict(metric)
    for m, p in zip(model_err, page_err):
        if m < p:
            verdict.verdicts.append("good")
        elif m > p:
            verdict.verdicts.append("bad")
        else:
            verdict.verdicts.append("same")
    verdict.good = verdict.verdicts.count("good")
    verdict.same = verdict.verdicts.count("same")
    verdict.bad = verdict.verdicts.count("bad")
    return verdict


def gsb_judge(sessions, truth, model, page_metric="long_click_ratio", reference=None,
              sample_size=500, seed=0, long_click_s=DEFAULT_LONG_CLICK_S, cut_points=None):
    """
    会话模型 vs 页面级指标，以真实标签为裁判
    reference: (页面指标值, 标签) 用于分位映射，缺省用待评估会话本身
    cut_points: 训练时保存的分位点，给出时优先使用
    sample_size 个会话被等概率无放回抽样
    """
    if page_metric not in PAGE_METRIC_NAMES:
        raise InvalidConfig(f"unknown page metric '{page_metric}'", metric=page_metric)
    truth = np.asarray(truth, dtype=int)
    if len(truth) != len(sessions) or not len(sessions):
        raise InvalidConfig("sessions and truth labels must align and be non-empty")

    rng = np.random.default_rng(seed)
    n = len(sessions)
    if sample_size and sample_size < n:
        chosen = np.sort(rng.choice(n, size=sample_size, replace=False))
    else:
        chosen = np.arange(n)
    sample = [sessions[i] for i in chosen]

    values = page_metric_frame(sample, long_click_s)[page_metric].to_numpy()
    if cut_points is not None:
        cuts = np.asarray(cut_points, dtype=float)
    else:
        if reference is None:
            reference = (page_metric_frame(sessions, long_click_s)[page_metric].to_numpy(), truth)
        cuts = quantile_cut_points(reference[0], reference[1])
    page_labels = metric_to_label(values, cuts)
    model_labels = np.asarray(model.predict_sessions(sample)[0], dtype=int)

    verdict = gsb_tally(truth[chosen], model_labels, page_labels, page_metric)
    verdict.goal_ids = [session.goal_id for session in sample]
    logger.info(f"GSB {page_metric}: good {verdict.good}, same {verdict.same}, bad {verdict.bad}")
    return verdict
