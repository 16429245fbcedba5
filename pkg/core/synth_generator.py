#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成数据生成模块 - Seeded synthetic session generator
按标签先验采样满意度，再按标签对应的行为参数生成事件日志：
- 搜索结果类特征（长点击、停留时间）随满意度单调增加
- 成本/付出类特征（查询数、点击数、翻页）两头低中间高
输出事件日志、标注文件、真实标签和查询统计表
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from core.errors import InvalidConfig
from core.preprocessor import DEFAULT_LABEL_PRIOR

logger = logging.getLogger("SynthGenerator")

BASE_TS_MS = 1_600_000_000_000
SESSION_SPACING_MS = 3_600_000
INPUT_TYPES = ("manual", "suggestion", "related_search", "history")

# 每个标签的三位标注者整数分数之和的取值范围，平均分离散化后正好回到该标签
SCORE_SUM_RANGES = {0: (0, 2), 1: (3, 5), 2: (6, 8), 3: (9, 9)}


@dataclass(frozen=True)
class BehaviorBlock:
    """一个满意度等级的行为参数"""
    query_range: Tuple[int, int]
    clicks_per_query: float
    dwell_median_s: float
    dwell_sigma: float
    rank_range: Tuple[int, int]
    page_turns_per_query: float
    similar_reformulation: float
    examine_range_s: Tuple[float, float]
    input_type_probs: Tuple[float, float, float, float]


DEFAULT_BLOCKS = {
    0: BehaviorBlock((2, 3), 0.3, 6.0, 0.5, (3, 10), 0.2, 0.8, (3.0, 8.0), (0.7, 0.1, 0.1, 0.1)),
    1: BehaviorBlock((5, 7), 1.2, 20.0, 0.5, (4, 10), 0.8, 0.5, (5.0, 20.0), (0.5, 0.2, 0.25, 0.05)),
    2: BehaviorBlock((3, 5), 1.5, 70.0, 0.5, (2, 6), 0.3, 0.4, (5.0, 15.0), (0.6, 0.2, 0.1, 0.1)),
    3: BehaviorBlock((2, 3), 1.0, 250.0, 0.5, (1, 2), 0.05, 0.3, (3.0, 10.0), (0.6, 0.2, 0.05, 0.15)),
}


@dataclass(frozen=True)
class SynthConfig:
    n_sessions: int = 1000
    label_prior: Tuple[float, ...] = DEFAULT_LABEL_PRIOR
    single_query_fraction: float = 0.325
    behavior_noise: float = 0.05
    n_annotators: int = 3
    pool_size: int = 1000
    n_hot: int = 10
    seed: int = 7
    blocks: Dict[int, BehaviorBlock] = field(default_factory=lambda: dict(DEFAULT_BLOCKS))

    def validate(self):
        prior = np.asarray(self.label_prior, dtype=float)
        if prior.shape != (4,) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-6:
            raise InvalidConfig(f"label prior {list(self.label_prior)} must be 4 values summing to 1",
                                label_prior=list(self.label_prior))
        if not 0.0 <= self.single_query_fraction <= 1.0:
            raise InvalidConfig("single_query_fraction must be in [0, 1]",
                                single_query_fraction=self.single_query_fraction)
        if not 0.0 <= self.behavior_noise <= 1.0:
            raise InvalidConfig("behavior_noise must be in [0, 1]", behavior_noise=self.behavior_noise)
        if self.n_sessions < 1:
            raise InvalidConfig("n_sessions must be >= 1", n_sessions=self.n_sessions)
        if self.n_annotators != 3:
            raise InvalidConfig("the generator emits exactly three annotators",
                                n_annotators=self.n_annotators)
        if self.pool_size < 2 * self.n_hot + 2:
            raise InvalidConfig("query pool too small", pool_size=self.pool_size)
        return self

    @classmethod
    def from_config(cls, config):
        prior = config.get("synth_label_prior", DEFAULT_LABEL_PRIOR)
        return cls(n_sessions=int(config.get("synth_n", 1000)),
                   label_prior=tuple(float(p) for p in prior),
                   single_query_fraction=float(config.get("synth_single_query_fraction", 0.325)),
                   behavior_noise=float(config.get("synth_behavior_noise", 0.05)),
                   seed=int(config.get("seed", 7)))


@dataclass
class QueryPool:
    hot: List[str]
    warm: List[str]
    cold: List[str]
    frequency: Dict[str, int]
    click_ratio: Dict[str, float]

    def to_frame(self):
        queries = self.hot + self.warm + self.cold
        return pd.DataFrame({"query": queries,
                             "frequency": [self.frequency[q] for q in queries],
                             "click_ratio": [self.click_ratio[q] for q in queries]})


def _random_text(rng, low=2, high=8):
    # 常用汉字区间
    codes = rng.integers(0x4E00, 0x4E00 + 600, size=int(rng.integers(low, high + 1)))
    return "".join(chr(int(c)) for c in codes)


def build_query_pool(config):
    """热门/普通/冷门三档查询，频次分别在 1e6-5e6、1e3-1e5、1-50"""
    rng = np.random.default_rng([config.seed, 1_000_003])
    texts = []
    seen = set()
    while len(texts) < config.pool_size:
        text = _random_text(rng)
        if text not in seen:
            seen.add(text)
            texts.append(text)
    n_cold = (config.pool_size - config.n_hot) // 2
    hot = texts[:config.n_hot]
    warm = texts[config.n_hot:config.pool_size - n_cold]
    cold = texts[config.pool_size - n_cold:]

    frequency, click_ratio = {}, {}
    for group, (lo, hi), (r_lo, r_hi) in ((hot, (1e6, 5e6), (0.1, 0.3)),
                                          (warm, (1e3, 1e5), (0.4, 0.8)),
                                          (cold, (1, 50), (0.1, 0.5))):
        for text in group:
            frequency[text] = int(rng.integers(int(lo), int(hi) + 1))
            click_ratio[text] = round(float(rng.uniform(r_lo, r_hi)), 4)
    return QueryPool(hot, warm, cold, frequency, click_ratio)


def _reformulate(rng, text):
    """在上一个查询上做一处小改动"""
    chars = list(text)
    op = int(rng.integers(3))
    new_char = chr(int(rng.integers(0x4E00, 0x4E00 + 600)))
    if op == 0 or len(chars) < 2:
        chars.append(new_char)
    elif op == 1:
        chars[int(rng.integers(len(chars)))] = new_char
    else:
        del chars[int(rng.integers(len(chars)))]
    return "".join(chars)


def _event(goal_id, user_id, ts_ms, kind, **fields):
    record = {"goal_id": goal_id, "user_id": user_id, "ts_ms": int(ts_ms), "kind": kind}
    record.update(fields)
    return record


def _score_triple(rng, label):
    lo, hi = SCORE_SUM_RANGES[label]
    total = int(rng.integers(lo, hi + 1))
    triples = [t for t in product(range(4), repeat=3) if sum(t) == total]
    return triples[int(rng.integers(len(triples)))]


class SessionSimulator:
    """按标签生成单个会话的事件"""

    def __init__(self, config, pool):
        self.config = config
        self.pool = pool

    def _click_dwell_ms(self, rng, block):
        return int(max(1000, rng.lognormal(np.log(block.dwell_median_s), block.dwell_sigma) * 1000))

    def _query_events(self, rng, block, goal_id, user_id, ts, text, input_type, n_clicks, n_turns):
        events = [_event(goal_id, user_id, ts, "query", query_text=text, input_type=input_type)]
        ts += int(rng.uniform(2.0, 15.0) * 1000)
        page = 1
        for _ in range(n_turns):
            page += 1
            events.append(_event(goal_id, user_id, ts, "page_turn", page_num=page))
            ts += int(rng.uniform(3.0, 10.0) * 1000)
        for _ in range(n_clicks):
            rank = int(rng.integers(block.rank_range[0], block.rank_range[1] + 1))
            events.append(_event(goal_id, user_id, ts, "click", url=f"http://r{rank}.example/{goal_id}",
                                 rank_pos=rank, page_num=page))
            ts += self._click_dwell_ms(rng, block)
        if n_clicks == 0:
            ts += int(rng.uniform(*block.examine_range_s) * 1000)
        return events, ts

    def multi_query(self, rng, label, goal_id, user_id, ts):
        block = self.config.blocks[label]
        n_queries = int(rng.integers(block.query_range[0], block.query_range[1] + 1))
        events = []
        text = self.pool.warm[int(rng.integers(len(self.pool.warm)))]
        for q in range(n_queries):
            if q > 0:
                if rng.random() < block.similar_reformulation:
                    text = _reformulate(rng, text)
                else:
                    text = self.pool.warm[int(rng.integers(len(self.pool.warm)))]
            input_type = INPUT_TYPES[int(rng.choice(4, p=block.input_type_probs))]
            n_clicks = int(rng.poisson(block.clicks_per_query))
            n_turns = int(rng.poisson(block.page_turns_per_query))
            query_events, ts = self._query_events(rng, block, goal_id, user_id, ts, text,
                                                  input_type, n_clicks, n_turns)
            events.extend(query_events)
        events.append(_event(goal_id, user_id, ts, "session_end"))
        return events

    def single_query(self, rng, label, goal_id, user_id, ts):
        block = self.config.blocks[label]
        if label == 3 and rng.random() < 0.5:
            # 结果页直接满足：热门查询，不点击，很快离开
            text = self.pool.hot[int(rng.integers(len(self.pool.hot)))]
            return [_event(goal_id, user_id, ts, "query", query_text=text, input_type="manual"),
                    _event(goal_id, user_id, ts + int(rng.uniform(2.0, 8.0) * 1000), "session_end")]
        if label == 0 and rng.random() < 0.5:
            # 冷门查询，没有可用结果，很快放弃
            text = self.pool.cold[int(rng.integers(len(self.pool.cold)))]
            return [_event(goal_id, user_id, ts, "query", query_text=text, input_type="manual"),
                    _event(goal_id, user_id, ts + int(rng.uniform(2.0, 8.0) * 1000), "session_end")]

        text = self.pool.warm[int(rng.integers(len(self.pool.warm)))]
        n_clicks = max(1, int(rng.poisson(block.clicks_per_query))) if label > 0 else \
            int(rng.poisson(block.clicks_per_query))
        input_type = INPUT_TYPES[int(rng.choice(4, p=block.input_type_probs))]
        events, ts = self._query_events(rng, block, goal_id, user_id, ts, text, input_type,
                                        n_clicks, int(rng.poisson(block.page_turns_per_query)))
        if n_clicks == 0:
            ts = max(ts, events[0]["ts_ms"] + 12_000)
        events.append(_event(goal_id, user_id, ts, "session_end"))
        return events


@dataclass
class SynthResult:
    events: List[dict]
    labels: Dict[str, int]
    annotations: pd.DataFrame
    query_stats: pd.DataFrame

    def event_lines(self):
        return [json.dumps(event, ensure_ascii=False, separators=(",", ":")) for event in self.events]

    def truth_frame(self):
        return pd.DataFrame({"goal_id": list(self.labels), "label": list(self.labels.values())})


def assign_labels(config):
    """按先验的最大余数法确定各标签数量，再用种子打乱顺序"""
    prior = np.asarray(config.label_prior, dtype=float)
    raw = prior * config.n_sessions
    counts = np.floor(raw).astype(int)
    remainder = config.n_sessions - counts.sum()
    for index in np.argsort(-(raw - counts), kind="stable")[:remainder]:
        counts[index] += 1
    labels = np.repeat(np.arange(4), counts)
    return np.random.default_rng(config.seed).permutation(labels)


def synth_generate(config=None):
    """生成合成数据，同一配置（含种子）总是得到同样的结果"""
    config = (config or SynthConfig()).validate()
    pool = build_query_pool(config)
    simulator = SessionSimulator(config, pool)
    labels = assign_labels(config)

    events, truth, annotation_rows = [], {}, []
    for i, label in enumerate(labels):
        label = int(label)
        # 每个会话独立的随机数流
        rng = np.random.default_rng([config.seed, i])
        goal_id = f"g{i:06d}"
        user_id = f"u{int(rng.integers(0, max(1, config.n_sessions // 3))):05d}"
        ts = BASE_TS_MS + i * SESSION_SPACING_MS

        behavior = label
        if rng.random() < config.behavior_noise:
            behavior = int(rng.integers(4))
        if rng.random() < config.single_query_fraction:
            session_events = simulator.single_query(rng, behavior, goal_id, user_id, ts)
        else:
            session_events = simulator.multi_query(rng, behavior, goal_id, user_id, ts)
        events.extend(session_events)
        truth[goal_id] = label

        n_queries = sum(1 for e in session_events if e["kind"] == "query")
        for annotator, score in enumerate(_score_triple(rng, label)):
            row = {"goal_id": goal_id, "annotator_id": f"a{annotator + 1}", "session_score": score}
            for q in range(n_queries):
                row[f"q{q + 1}"] = int(np.clip(round(label * 2 / 3 + rng.normal(0, 0.5)), 0, 2))
            annotation_rows.append(row)

    max_q = max((len(row) - 3 for row in annotation_rows), default=0)
    columns = ["goal_id", "annotator_id", "session_score"] + [f"q{q + 1}" for q in range(max_q)]
    annotations = pd.DataFrame(annotation_rows, columns=columns)
    for column in columns[3:]:
        annotations[column] = annotations[column].astype("Int64")

    logger.info(f"Generated {len(truth)} sessions, {len(events)} events "
                f"(label counts {np.bincount(labels, minlength=4).tolist()})")
    return SynthResult(events, truth, annotations, pool.to_frame())


def write_synth_outputs(result, out_dir):
    """写出 events.jsonl, annotations.csv, truth.csv, query_stats.tsv"""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "events": os.path.join(out_dir, "events.jsonl"),
        "annotations": os.path.join(out_dir, "annotations.csv"),
        "truth": os.path.join(out_dir, "truth.csv"),
        "query_stats": os.path.join(out_dir, "query_stats.tsv"),
    }
    with open(paths["events"], "w", encoding="utf-8", newline="\n") as f:
        for line in result.event_lines():
            f.write(line + "\n")
    result.annotations.to_csv(paths["annotations"], index=False, lineterminator="\n")
    result.truth_frame().to_csv(paths["truth"], index=False, lineterminator="\n")
    result.query_stats.to_csv(paths["query_stats"], sep="\t", index=False, header=False,
                              lineterminator="\n")
    return paths


def shifted_config(config, shift=0.3):
    """把先验向最高等级移动，用于A/B实验的实验组"""
    prior = np.asarray(config.label_prior, dtype=float) * (1.0 - shift)
    prior[3] += shift
    return replace(config, label_prior=tuple(float(p) for p in prior))
