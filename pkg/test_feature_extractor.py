#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
特征提取测试：字符串度量、手算样例，以及与暴力实现的逐项对比
"""

import math
import os
import sys

import numpy as np
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.errors import MultiQuerySession, SingleQuerySession
from core.feature_extractor import (FEATURE_NAMES, REDUCED_FEATURE_NAMES, QueryStatsTable,
                                    build_feature_frames, edit_distance, extract_features,
                                    extract_single_query_features, jaccard_sim,
                                    read_feature_csv, write_feature_csv)
from core.session_model import ClickRecord, QueryRecord, Session, build_sessions, parse_log
from core.synth_generator import SynthConfig, synth_generate


def make_session(queries, duration_ms=None, goal_id="g"):
    """queries: [(text, input_type, issue_ts, [(dwell_s, rank)], page_turns, interval_s)]"""
    records = []
    for text, input_type, issue, clicks, turns, interval in queries:
        records.append(QueryRecord(text, input_type, issue,
                                   tuple(ClickRecord(f"u{rank}", rank, 1, issue + 1, int(dwell * 1000))
                                         for dwell, rank in clicks),
                                   turns, int(interval * 1000)))
    if duration_ms is None:
        duration_ms = sum(r.interval_ms for r in records)
    return Session(goal_id, "u", tuple(records), duration_ms)


def dp_edit_distance(a, b):
    """独立的动态规划实现"""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def brute_force_features(session):
    nan = float("nan")
    qs = session.queries
    per_dwell = [[c.dwell_ms / 1000.0 for c in q.clicks] for q in qs]
    per_rank = [[c.rank_pos for c in q.clicks] for q in qs]
    all_dwell = [d for ds in per_dwell for d in ds]
    all_rank = [r for rs in per_rank for r in rs]
    nq = len(qs)

    def avg(values):
        return sum(values) / len(values) if values else nan

    def count(ds, pred):
        return sum(1 for d in ds if pred(d))

    clicked = [i for i in range(nq) if per_rank[i]]
    edits = [dp_edit_distance(qs[i].text, qs[i + 1].text) for i in range(nq - 1)]
    jacs = []
    for i in range(nq - 1):
        a, b = set(qs[i].text), set(qs[i + 1].text)
        jacs.append(len(a & b) / len(a | b) if a | b else 1.0)

    f = {
        "Q_SumClickDwell": avg([sum(ds) for ds in per_dwell]),
        "S_SumClickDwell": sum(all_dwell),
        "S_ClickDwell": sum(all_dwell) / len(all_dwell) if all_dwell else nan,
        "QueryInterval": avg([q.interval_ms / 1000.0 for q in qs]),
        "S_SumQueryInterval": sum(q.interval_ms / 1000.0 for q in qs),
        "SessionDuration": session.duration_ms / 1000.0,
        "Q_num_click_ge40": avg([count(ds, lambda d: d >= 40) for ds in per_dwell]),
        "Q_num_click_ge60": avg([count(ds, lambda d: d >= 60) for ds in per_dwell]),
        "Q_num_click_lt20": avg([count(ds, lambda d: d < 20) for ds in per_dwell]),
        "Q_num_click_lt5": avg([count(ds, lambda d: d < 5) for ds in per_dwell]),
        "S_num_click": len(all_dwell),
        "S_num_click_ge185": count(all_dwell, lambda d: d >= 185),
        "S_num_click_lt10": count(all_dwell, lambda d: d < 10),
        "S_Qlength": avg([len(q.text) for q in qs]),
        "S_num_query": nq,
        "S_num_inp_query": sum(q.input_type == "manual" for q in qs),
        "S_num_his_query": sum(q.input_type == "history" for q in qs),
        "S_num_sug_query": sum(q.input_type == "suggestion" for q in qs),
        "S_num_rs_query": sum(q.input_type == "related_search" for q in qs),
        "S_AvgClickPos": avg(all_rank),
        "S_MinClickPos": min(all_rank) if all_rank else nan,
        "Q_MinClickPos": avg([min(per_rank[i]) for i in clicked]),
        "Q_AvgClickPos": avg([sum(per_rank[i]) / len(per_rank[i]) for i in clicked]),
        "S_num_query_noclick": nq - len(clicked),
        "S_MaxClickPos": max(all_rank) if all_rank else nan,
        "Q_MaxClickPos": avg([max(per_rank[i]) for i in clicked]),
        "S_num_forw_query": sum(q.page_turns for q in qs),
        "S_MaxQlength": max(len(q.text) for q in qs),
        "QEditDistance": avg(edits),
        "QJaccardSim": avg(jacs),
        "Q_num_click": avg([len(ds) for ds in per_dwell]),
        "DeltaQ_SumClickDwell": sum(per_dwell[-1]) - sum(per_dwell[0]),
        "DeltaQ_num_click_ge60": count(per_dwell[-1], lambda d: d >= 60)
        - count(per_dwell[0], lambda d: d >= 60),
        "DeltaQ_num_click_lt50": count(per_dwell[-1], lambda d: d < 50)
        - count(per_dwell[0], lambda d: d < 50),
        "DeltaQEditDistance": edits[-1] - edits[0] if len(edits) >= 2 else nan,
        "DeltaQJaccardSim": jacs[-1] - jacs[0] if len(jacs) >= 2 else nan,
        "DeltaQlength": len(qs[-1].text) - len(qs[0].text),
        "DeltaQMaxClickPos": (max(per_rank[-1]) if per_rank[-1] else nan)
        - (max(per_rank[0]) if per_rank[0] else nan),
    }
    return {k: float(v) for k, v in f.items()}


def test_edit_distance_examples():
    assert edit_distance("apple", "apple") == 0
    assert edit_distance("abc", "") == 3
    a, b = "apple id", "apple id registration tutorial"
    assert edit_distance(a, b) == dp_edit_distance(a, b) == 22
    assert edit_distance("苹果手机", "苹果电脑") == 2


def test_jaccard_examples():
    assert jaccard_sim("apple", "apple") == 1.0
    assert jaccard_sim("ab", "cd") == 0.0
    assert jaccard_sim("ab", "bc") == pytest.approx(1 / 3)
    assert jaccard_sim("", "") == 1.0
    assert jaccard_sim("apple id", "apple pie", token_mode="whitespace") == pytest.approx(1 / 3)


def test_two_query_hand_example():
    session = make_session([("a", "manual", 0, [(70, 1)], 0, 80),
                            ("b", "manual", 80000, [(10, 3)], 0, 10)])
    f = extract_features(session)
    assert f["S_num_click"] == 2
    assert f["Q_num_click_ge60"] == 0.5
    assert f["S_MaxClickPos"] == 3
    assert f["DeltaQ_num_click_ge60"] == -1
    assert f["S_ClickDwell"] * f["S_num_click"] == pytest.approx(f["S_SumClickDwell"])


def test_zero_click_session():
    session = make_session([("a", "manual", 0, [], 0, 5), ("b", "history", 5000, [], 1, 5)])
    f = extract_features(session)
    assert f["S_num_click"] == 0
    assert f["S_num_query_noclick"] == 2
    for name in ("S_AvgClickPos", "S_MinClickPos", "S_MaxClickPos", "Q_MinClickPos",
                 "Q_AvgClickPos", "Q_MaxClickPos", "DeltaQMaxClickPos", "S_ClickDwell"):
        assert math.isnan(f[name])
    assert f["S_num_forw_query"] == 1


def test_identical_queries():
    session = make_session([("apple", "manual", t, [], 0, 5) for t in (0, 5000, 10000)])
    f = extract_features(session)
    assert f["QEditDistance"] == 0
    assert f["QJaccardSim"] == 1.0
    assert f["DeltaQEditDistance"] == 0


def test_two_queries_have_missing_pair_deltas():
    session = make_session([("a", "manual", 0, [], 0, 5), ("ab", "manual", 5000, [], 0, 5)])
    f = extract_features(session)
    assert math.isnan(f["DeltaQEditDistance"]) and math.isnan(f["DeltaQJaccardSim"])


def test_wrong_session_shape_errors():
    single = make_session([("a", "manual", 0, [], 0, 5)])
    with pytest.raises(SingleQuerySession):
        extract_features(single)
    double = make_session([("a", "manual", 0, [], 0, 5), ("b", "manual", 5000, [], 0, 5)])
    with pytest.raises(MultiQuerySession):
        extract_single_query_features(double)


def test_single_query_features():
    session = make_session([("hot", "manual", 0, [(120, 2)], 0, 130)])
    f = extract_single_query_features(session)
    assert list(f) == REDUCED_FEATURE_NAMES
    assert f["Q_num_click_ge60"] == 1 and f["no_click"] == 0

    empty = make_session([("unknown", "manual", 0, [], 0, 4)])
    f = extract_single_query_features(empty, QueryStatsTable())
    assert (f["query_frequency"], f["query_click_ratio"], f["no_click"]) == (0, 0, 1)

    stats = QueryStatsTable({"unknown": 1e6}, {"unknown": 0.2})
    f = extract_single_query_features(empty, stats)
    assert (f["query_frequency"], f["query_click_ratio"]) == (1e6, 0.2)


def test_feature_oracle_on_synthetic_sessions():
    result = synth_generate(SynthConfig(n_sessions=1000, single_query_fraction=0.0, seed=11))
    sessions, _ = build_sessions(parse_log(result.event_lines())[0])
    assert len(sessions) == 1000
    for session in sessions:
        fast = extract_features(session)
        slow = brute_force_features(session)
        for name in FEATURE_NAMES:
            if math.isnan(slow[name]):
                assert math.isnan(fast[name]), (session.goal_id, name)
            else:
                assert fast[name] == pytest.approx(slow[name], abs=1e-9), (session.goal_id, name)


def test_threshold_monotonicity_and_input_types():
    result = synth_generate(SynthConfig(n_sessions=300, single_query_fraction=0.0, seed=3))
    sessions, _ = build_sessions(parse_log(result.event_lines())[0])
    for session in sessions:
        f = extract_features(session)
        assert f["Q_num_click_ge60"] <= f["Q_num_click_ge40"]
        assert (f["S_num_inp_query"] + f["S_num_his_query"] + f["S_num_sug_query"]
                + f["S_num_rs_query"]) == f["S_num_query"]
        if f["S_num_click"] > 0:
            assert f["S_MinClickPos"] <= f["S_AvgClickPos"] <= f["S_MaxClickPos"]


def test_feature_csv_round_trip(tmp_path):
    result = synth_generate(SynthConfig(n_sessions=60, seed=5))
    sessions, _ = build_sessions(parse_log(result.event_lines())[0])
    multi, single = build_feature_frames(sessions)
    assert len(multi) + len(single) == 60
    path = tmp_path / "features.csv"
    write_feature_csv(multi, str(path))
    header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header == ["goal_id"] + FEATURE_NAMES
    back = read_feature_csv(str(path))
    np.testing.assert_allclose(back.to_numpy(), multi.to_numpy(), rtol=1e-9, equal_nan=True)
