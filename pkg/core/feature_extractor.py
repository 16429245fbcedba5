#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
特征提取模块 - Session feature extraction
按四类（搜索结果、搜索成本、用户付出、变化量）计算会话特征，
以及单查询会话使用的精简特征集
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from rapidfuzz.distance import Levenshtein

from core.errors import MultiQuerySession, SingleQuerySession

logger = logging.getLogger("FeatureExtractor")

# 特征分类（顺序即特征矩阵的列顺序）
FEATURE_CATEGORIES = {
    "outcome": [
        "Q_SumClickDwell", "S_SumClickDwell", "S_ClickDwell", "QueryInterval",
        "S_SumQueryInterval", "SessionDuration", "Q_num_click_ge40", "Q_num_click_ge60",
        "Q_num_click_lt20", "Q_num_click_lt5", "S_num_click", "S_num_click_ge185",
        "S_num_click_lt10",
    ],
    "cost": [
        "S_Qlength", "S_num_query", "S_num_inp_query", "S_num_his_query", "S_num_sug_query",
        "S_num_rs_query", "S_AvgClickPos", "S_MinClickPos", "Q_MinClickPos", "Q_AvgClickPos",
    ],
    "effort": [
        "S_num_query_noclick", "S_MaxClickPos", "Q_MaxClickPos", "S_num_forw_query",
        "S_MaxQlength", "QEditDistance", "QJaccardSim", "Q_num_click",
    ],
    "change": [
        "DeltaQ_SumClickDwell", "DeltaQ_num_click_ge60", "DeltaQ_num_click_lt50",
        "DeltaQEditDistance", "DeltaQJaccardSim", "DeltaQlength", "DeltaQMaxClickPos",
    ],
}

FEATURE_NAMES = [name for names in FEATURE_CATEGORIES.values() for name in names]

FEATURE_TO_CATEGORY = {name: category for category, names in FEATURE_CATEGORIES.items()
                       for name in names}

REDUCED_FEATURE_NAMES = [
    "S_SumClickDwell", "S_ClickDwell", "Q_num_click_ge40", "Q_num_click_ge60",
    "Q_num_click_lt20", "Q_num_click_lt5", "S_num_click_ge185", "S_num_click_lt10",
    "S_num_click", "S_AvgClickPos", "S_MinClickPos", "S_MaxClickPos", "no_click",
    "S_Qlength", "SessionDuration", "S_num_forw_query", "query_frequency", "query_click_ratio",
]

# 精简特征中非会话特征的部分归入的类别
FEATURE_TO_CATEGORY.update({"no_click": "effort", "query_frequency": "cost",
                            "query_click_ratio": "outcome"})

INPUT_TYPE_SLOTS = {
    "manual": "S_num_inp_query",
    "history": "S_num_his_query",
    "suggestion": "S_num_sug_query",
    "related_search": "S_num_rs_query",
}


@dataclass(frozen=True)
class DwellThresholdConfig:
    """
    停留时间阈值（单位：秒）
    修改阈值不会改变特征名称
    """
    q_long: float = 40.0
    q_very_long: float = 60.0
    q_short: float = 20.0
    q_very_short: float = 5.0
    s_long: float = 185.0
    s_short: float = 10.0
    delta_long: float = 60.0
    delta_short: float = 50.0
    token_mode: str = "char"

    @classmethod
    def from_config(cls, config):
        """从扁平配置字典构建"""
        return cls(
            q_long=float(config.get("dwell_q_long_s", cls.q_long)),
            q_very_long=float(config.get("dwell_q_very_long_s", cls.q_very_long)),
            q_short=float(config.get("dwell_q_short_s", cls.q_short)),
            q_very_short=float(config.get("dwell_q_very_short_s", cls.q_very_short)),
            s_long=float(config.get("dwell_s_long_s", cls.s_long)),
            s_short=float(config.get("dwell_s_short_s", cls.s_short)),
            delta_long=float(config.get("dwell_delta_long_s", cls.delta_long)),
            delta_short=float(config.get("dwell_delta_short_s", cls.delta_short)),
            token_mode=config.get("jaccard_tokens", cls.token_mode),
        )


def edit_distance(a, b):
    """Unicode字符级Levenshtein距离"""
    return int(Levenshtein.distance(a, b))


def tokenize(text, token_mode="char"):
    if token_mode == "whitespace":
        return set(text.split())
    return set(text)


def jaccard_sim(a, b, token_mode="char"):
    """Jaccard相似度，两个空集合约定为1.0"""
    tokens_a = tokenize(a, token_mode)
    tokens_b = tokenize(b, token_mode)
    union = tokens_a | tokens_b
    if not union:
        return 1.0
    return len(tokens_a & tokens_b) / len(union)


def _mean(values):
    return float(np.mean(values)) if len(values) else np.nan


def _query_stats(query, thresholds):
    """单个查询的中间统计量"""
    dwells = np.array([click.dwell_ms / 1000.0 for click in query.clicks], dtype=float)
    ranks = np.array([click.rank_pos for click in query.clicks], dtype=float)
    return {
        "n_click": len(query.clicks),
        "sum_dwell": float(dwells.sum()) if dwells.size else 0.0,
        "ge40": int(np.sum(dwells >= thresholds.q_long)),
        "ge60": int(np.sum(dwells >= thresholds.q_very_long)),
        "lt20": int(np.sum(dwells < thresholds.q_short)),
        "lt5": int(np.sum(dwells < thresholds.q_very_short)),
        "delta_ge": int(np.sum(dwells >= thresholds.delta_long)),
        "delta_lt": int(np.sum(dwells < thresholds.delta_short)),
        "min_pos": float(ranks.min()) if ranks.size else np.nan,
        "avg_pos": float(ranks.mean()) if ranks.size else np.nan,
        "max_pos": float(ranks.max()) if ranks.size else np.nan,
        "length": len(query.text),
        "interval": query.interval_ms / 1000.0,
    }


def _session_slots(session, thresholds):
    """多查询与单查询共享的会话级特征"""
    per_query = [_query_stats(query, thresholds) for query in session.queries]
    dwells = np.array([click.dwell_ms / 1000.0 for click in session.clicks], dtype=float)
    ranks = np.array([click.rank_pos for click in session.clicks], dtype=float)
    n_click = int(dwells.size)
    sum_dwell = float(dwells.sum()) if n_click else 0.0

    slots = {
        "Q_SumClickDwell": _mean([q["sum_dwell"] for q in per_query]),
        "S_SumClickDwell": sum_dwell,
        "S_ClickDwell": sum_dwell / n_click if n_click else np.nan,
        "QueryInterval": _mean([q["interval"] for q in per_query]),
        "S_SumQueryInterval": float(sum(q["interval"] for q in per_query)),
        "SessionDuration": session.duration_ms / 1000.0,
        "Q_num_click_ge40": _mean([q["ge40"] for q in per_query]),
        "Q_num_click_ge60": _mean([q["ge60"] for q in per_query]),
        "Q_num_click_lt20": _mean([q["lt20"] for q in per_query]),
        "Q_num_click_lt5": _mean([q["lt5"] for q in per_query]),
        "S_num_click": float(n_click),
        "S_num_click_ge185": float(np.sum(dwells >= thresholds.s_long)),
        "S_num_click_lt10": float(np.sum(dwells < thresholds.s_short)),
        "S_Qlength": _mean([q["length"] for q in per_query]),
        "S_AvgClickPos": float(ranks.mean()) if n_click else np.nan,
        "S_MinClickPos": float(ranks.min()) if n_click else np.nan,
        "S_MaxClickPos": float(ranks.max()) if n_click else np.nan,
        "S_num_forw_query": float(sum(query.page_turns for query in session.queries)),
    }
    return slots, per_query


def extract_features(session, thresholds=None):
    """
    计算多查询会话的完整特征
    返回：{特征名: 值}，缺失值为NaN
    """
    if session.num_queries < 2:
        raise SingleQuerySession(f"session {session.goal_id} has a single query",
                                 goal_id=session.goal_id)
    thresholds = thresholds or DwellThresholdConfig()
    slots, per_query = _session_slots(session, thresholds)
    queries = session.queries

    # 输入方式计数
    for slot in INPUT_TYPE_SLOTS.values():
        slots[slot] = 0.0
    for query in queries:
        slots[INPUT_TYPE_SLOTS[query.input_type]] += 1.0
    slots["S_num_query"] = float(len(queries))

    # 按查询平均的位置特征只在有点击的查询上平均
    clicked = [q for q in per_query if q["n_click"] > 0]
    slots["Q_MinClickPos"] = _mean([q["min_pos"] for q in clicked])
    slots["Q_AvgClickPos"] = _mean([q["avg_pos"] for q in clicked])
    slots["Q_MaxClickPos"] = _mean([q["max_pos"] for q in clicked])

    slots["S_num_query_noclick"] = float(sum(1 for q in per_query if q["n_click"] == 0))
    slots["S_MaxQlength"] = float(max(q["length"] for q in per_query))
    slots["Q_num_click"] = _mean([q["n_click"] for q in per_query])

    # 相邻查询对
    edit_pairs = [edit_distance(a.text, b.text) for a, b in zip(queries[:-1], queries[1:])]
    jaccard_pairs = [jaccard_sim(a.text, b.text, thresholds.token_mode)
                     for a, b in zip(queries[:-1], queries[1:])]
    slots["QEditDistance"] = _mean(edit_pairs)
    slots["QJaccardSim"] = _mean(jaccard_pairs)

    first, last = per_query[0], per_query[-1]
    slots["DeltaQ_SumClickDwell"] = last["sum_dwell"] - first["sum_dwell"]
    slots["DeltaQ_num_click_ge60"] = float(last["delta_ge"] - first["delta_ge"])
    slots["DeltaQ_num_click_lt50"] = float(last["delta_lt"] - first["delta_lt"])
    if len(edit_pairs) >= 2:
        slots["DeltaQEditDistance"] = float(edit_pairs[-1] - edit_pairs[0])
        slots["DeltaQJaccardSim"] = jaccard_pairs[-1] - jaccard_pairs[0]
    else:
        slots["DeltaQEditDistance"] = np.nan
        slots["DeltaQJaccardSim"] = np.nan
    slots["DeltaQlength"] = float(last["length"] - first["length"])
    slots["DeltaQMaxClickPos"] = last["max_pos"] - first["max_pos"]

    return {name: float(slots[name]) for name in FEATURE_NAMES}


class QueryStatsTable:
    """查询统计表（query -> 频次, 点击率），缺失查询返回0"""

    def __init__(self, frequency=None, click_ratio=None):
        self.frequency = dict(frequency or {})
        self.click_ratio = dict(click_ratio or {})

    @classmethod
    def from_tsv(cls, file_path):
        frame = pd.read_csv(file_path, sep="\t", header=None,
                            names=["query", "frequency", "click_ratio"],
                            dtype={"query": str}, keep_default_na=False, quoting=3)
        logger.info(f"Loaded {len(frame)} query stats rows from {file_path}")
        return cls(dict(zip(frame["query"], frame["frequency"].astype(float))),
                   dict(zip(frame["query"], frame["click_ratio"].astype(float))))

    def lookup(self, query_text):
        return (float(self.frequency.get(query_text, 0.0)),
                float(self.click_ratio.get(query_text, 0.0)))

    def frequencies(self):
        return np.array(list(self.frequency.values()), dtype=float)

    def __len__(self):
        return len(self.frequency)


def extract_single_query_features(session, stats=None, thresholds=None):
    """计算单查询会话的精简特征"""
    if session.num_queries != 1:
        raise MultiQuerySession(f"session {session.goal_id} has {session.num_queries} queries",
                                goal_id=session.goal_id)
    thresholds = thresholds or DwellThresholdConfig()
    stats = stats or QueryStatsTable()
    slots, _ = _session_slots(session, thresholds)
    slots["no_click"] = 1.0 if slots["S_num_click"] == 0 else 0.0
    slots["query_frequency"], slots["query_click_ratio"] = stats.lookup(session.queries[0].text)
    return {name: float(slots[name]) for name in REDUCED_FEATURE_NAMES}


def build_feature_frames(sessions, thresholds=None, stats=None):
    """
    对一组会话提取特征
    返回：(多查询特征DataFrame, 单查询特征DataFrame)，均以goal_id为索引
    """
    multi_rows, multi_ids = [], []
    single_rows, single_ids = [], []
    for session in sessions:
        if session.num_queries == 1:
            single_rows.append(extract_single_query_features(session, stats, thresholds))
            single_ids.append(session.goal_id)
        else:
            multi_rows.append(extract_features(session, thresholds))
            multi_ids.append(session.goal_id)

    multi = pd.DataFrame(multi_rows, index=pd.Index(multi_ids, name="goal_id"),
                         columns=FEATURE_NAMES, dtype=float)
    single = pd.DataFrame(single_rows, index=pd.Index(single_ids, name="goal_id"),
                          columns=REDUCED_FEATURE_NAMES, dtype=float)
    logger.info(f"Extracted features: {len(multi)} multi-query, {len(single)} single-query sessions")
    return multi, single


def write_feature_csv(frame, file_path):
    """导出特征矩阵，goal_id为第一列，缺失值为空单元格"""
    frame.to_csv(file_path, index=True, index_label="goal_id", na_rep="",
                 float_format="%.10g", lineterminator="\n")


def read_feature_csv(file_path):
    frame = pd.read_csv(file_path, dtype={"goal_id": str}, keep_default_na=True)
    return frame.set_index("goal_id").astype(float)
