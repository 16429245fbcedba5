#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
多分类组合测试：一对一投票、一对多、决策DAG
"""

import os
import sys

import numpy as np
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.combiner import (DagSpec, PairwiseBank, predict_dag, predict_ovo, predict_ovr,
                           train_dag, train_ovr_models, train_pairwise_bank)
from core.errors import InsufficientPairData
from core.hybrid_model import HybridModel

CLASSES = [0, 1, 2, 3]


class StubPairModel:
    """按行号查表的二分类器，p 为 classes[0] 的概率"""

    def __init__(self, classes, p):
        self.classes = list(classes)
        self.p = np.asarray(p, dtype=float)

    def predict_proba(self, X):
        rows = np.asarray(X)[:, 0].astype(int)
        p = self.p[rows]
        return np.column_stack([p, 1.0 - p])


def stub_bank(table, permutation=None):
    """table[(i, j)] = 类别i的概率数组"""
    perm = permutation or {c: c for c in CLASSES}
    models = {}
    for (i, j), p in table.items():
        a, b = perm[i], perm[j]
        models[(min(a, b), max(a, b))] = StubPairModel([a, b], p)
    return PairwiseBank.from_models(CLASSES, models)


def random_table(n, rng):
    return {(i, j): rng.uniform(0.01, 0.99, size=n)
            for i in CLASSES for j in CLASSES if i < j}


def blobs(n=400, seed=0, spread=0.7):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [4, 0], [0, 4], [4, 4]], dtype=float)
    y = rng.integers(0, 4, size=n)
    return centers[y] + rng.normal(0, spread, size=(n, 2)), y


def test_ovo_votes_sum_to_number_of_pairs():
    X = np.arange(50).reshape(-1, 1)
    bank = stub_bank(random_table(50, np.random.default_rng(0)))
    labels, votes = predict_ovo(bank, X)
    np.testing.assert_array_equal(votes.sum(axis=1), 6)
    assert set(labels) <= set(CLASSES)
    # 获胜者票数最多
    winner_votes = votes[np.arange(50), labels]
    np.testing.assert_array_equal(winner_votes, votes.max(axis=1))


def test_ovo_tie_breaks_to_smallest_label():
    X = np.zeros((1, 1))
    table = {(i, j): np.array([0.5]) for i in CLASSES for j in CLASSES if i < j}
    labels, votes = predict_ovo(stub_bank(table), X)
    assert labels[0] == 0
    assert votes[0].tolist() == [3, 2, 1, 0]


@pytest.mark.parametrize("case", range(50))
def test_ovo_is_permutation_equivariant(case):
    rng = np.random.default_rng(100 + case)
    X = np.arange(20).reshape(-1, 1)
    table = random_table(20, rng)
    order = rng.permutation(CLASSES)
    perm = {c: int(order[c]) for c in CLASSES}

    _, votes = predict_ovo(stub_bank(table), X)
    _, permuted_votes = predict_ovo(stub_bank(table, perm), X)
    for c in CLASSES:
        np.testing.assert_array_equal(permuted_votes[:, perm[c]], votes[:, c])


class StubMulticlass:
    """按行号查表的多分类桩模型"""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def predict_proba(self, X):
        return self.table[np.asarray(X)[:, 0].astype(int)]


@pytest.mark.parametrize("case", range(50))
def test_dag_and_hybrid_are_permutation_equivariant(case):
    rng = np.random.default_rng(300 + case)
    X = np.arange(20).reshape(-1, 1)
    table = random_table(20, rng)
    order = rng.permutation(CLASSES)
    perm = {c: int(order[c]) for c in CLASSES}
    inverse = {perm[c]: c for c in CLASSES}

    # 经典DAG：标签序列同样重新编号
    dag_order = [int(c) for c in rng.permutation(CLASSES)]
    labels, _ = predict_dag(DagSpec("classic", CLASSES, dag_order), stub_bank(table), X)
    permuted_labels, _ = predict_dag(DagSpec("classic", CLASSES, [perm[c] for c in dag_order]),
                                     stub_bank(table, perm), X)
    np.testing.assert_array_equal(permuted_labels, [perm[int(label)] for label in labels])

    # 混合模型：多分类概率列、权重、剪枝对都按同一映射重排
    P = rng.dirichlet(np.ones(4), size=20)
    weights = rng.uniform(0.1, 1.0, size=4)
    pruned = [tuple(int(c) for c in rng.choice(CLASSES, size=2, replace=False))]
    hybrid = HybridModel(StubMulticlass(P), stub_bank(table), weights, pruned)
    permuted = HybridModel(StubMulticlass(P[:, [inverse[c] for c in CLASSES]]),
                           stub_bank(table, perm), weights[[inverse[c] for c in CLASSES]],
                           [(perm[i], perm[j]) for i, j in pruned])
    scores, permuted_scores = hybrid.score(X), permuted.score(X)
    for c in CLASSES:
        np.testing.assert_allclose(permuted_scores[:, perm[c]], scores[:, c], atol=1e-12)


def test_classic_dag_path_length():
    X = np.arange(30).reshape(-1, 1)
    bank = stub_bank(random_table(30, np.random.default_rng(1)))
    labels, traces = predict_dag(DagSpec("classic", CLASSES, [0, 1, 2, 3]), bank, X)
    assert all(len(trace) == 3 for trace in traces)
    for label, trace in zip(labels, traces):
        eliminated = {step["eliminated"] for step in trace}
        assert eliminated | {int(label)} == set(CLASSES)


def test_sat_dissat_dag_path_length():
    X = np.arange(30).reshape(-1, 1)
    bank = stub_bank(random_table(30, np.random.default_rng(2)))
    group = StubPairModel([0, 1], np.random.default_rng(3).uniform(0.01, 0.99, size=30))
    spec = DagSpec("sat_dissat", CLASSES, group_model=group)
    labels, traces = predict_dag(spec, bank, X)
    assert all(len(trace) == 2 for trace in traces)
    high = group.predict_proba(X)[:, 1] > 0.5
    assert np.all(np.isin(labels[high], [2, 3]))
    assert np.all(np.isin(labels[~high], [0, 1]))


def test_dag_follows_elimination():
    X = np.zeros((1, 1))
    # 类别2赢下所有比较
    table = {(i, j): np.array([0.9 if i == 2 else (0.1 if j == 2 else 0.6)])
             for i in CLASSES for j in CLASSES if i < j}
    labels, traces = predict_dag(DagSpec("classic", CLASSES, [0, 1, 2, 3]), stub_bank(table), X)
    assert labels[0] == 2
    assert traces[0][0]["node"] == [0, 3]


def test_insufficient_pair_data():
    X = np.random.default_rng(0).normal(size=(23, 2))
    y = np.array([0] * 10 + [1] * 10 + [2] * 3)
    with pytest.raises(InsufficientPairData) as info:
        train_pairwise_bank(X, y, min_pair_rows=5)
    assert info.value.details["pair"] == [0, 2]


def test_trained_bank_and_dags_on_blobs():
    X, y = blobs(seed=4)
    X_valid, y_valid = blobs(n=200, seed=5)
    bank = train_pairwise_bank(X, y, validation=(X_valid, y_valid))
    assert bank.pairs() == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert all(bank.entries[pair].f1 > 0.9 for pair in bank.pairs())

    labels, _ = predict_ovo(bank, X_valid)
    assert np.mean(labels == y_valid) > 0.9

    classic = train_dag(X, y, bank, "classic")
    assert sorted(classic.order) == CLASSES
    assert (classic.order[0], classic.order[-1]) == bank.best_pair()
    dag_labels, _ = predict_dag(classic, bank, X_valid)
    assert np.mean(dag_labels == y_valid) > 0.9

    grouped = train_dag(X, y, bank, "sat_dissat")
    restored = DagSpec.from_dict(grouped.to_dict())
    np.testing.assert_array_equal(predict_dag(restored, bank, X_valid)[0],
                                  predict_dag(grouped, bank, X_valid)[0])

    again = PairwiseBank.from_dict(bank.to_dict())
    np.testing.assert_allclose(again.prob_matrix(X_valid), bank.prob_matrix(X_valid))


def test_one_vs_rest_on_blobs():
    X, y = blobs(seed=6)
    ovr = train_ovr_models(X, y)
    assert len(ovr.models) == 4
    assert np.mean(predict_ovr(ovr, X) == y) > 0.9
    np.testing.assert_array_equal(predict_ovr(ovr, X), ovr.predict(X))
    np.testing.assert_allclose(ovr.predict_proba(X).sum(axis=1), 1.0, atol=1e-9)
