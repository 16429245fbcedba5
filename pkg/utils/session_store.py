#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
会话存储 - HDF5 columnar session store
会话、查询、点击、时间线分别存为列式数据集，用偏移量数组连接
不记录对象时间戳，相同输入得到相同字节
"""

import logging

import h5py
import numpy as np

from core.session_model import ClickRecord, QueryRecord, Session

logger = logging.getLogger("SessionStore")

STORE_VERSION = 1
STRING_DTYPE = h5py.string_dtype(encoding="utf-8")


def _write(h5file, name, values, dtype):
    if dtype is STRING_DTYPE:
        data = np.array(list(values), dtype=object)
    else:
        data = np.asarray(list(values), dtype=dtype)
    h5file.create_dataset(name, data=data, shape=(len(data),), dtype=dtype, track_times=False)


def _read(h5file, name):
    dataset = h5file[name]
    if dataset.dtype.kind == "O":
        return list(dataset.asstr()[()])
    return dataset[()]


def save_sessions(sessions, file_path):
    """写出会话列表，返回写出的会话数"""
    sessions = list(sessions)
    queries = [query for session in sessions for query in session.queries]
    clicks = [click for query in queries for click in query.clicks]

    query_offsets = np.cumsum([0] + [session.num_queries for session in sessions])
    click_offsets = np.cumsum([0] + [len(query.clicks) for query in queries])
    timeline_offsets = np.cumsum([0] + [len(session.timeline) for session in sessions])

    with h5py.File(file_path, "w", track_order=False) as h5file:
        h5file.attrs["store_version"] = STORE_VERSION
        _write(h5file, "session_goal_id", (s.goal_id for s in sessions), STRING_DTYPE)
        _write(h5file, "session_user_id", (s.user_id for s in sessions), STRING_DTYPE)
        _write(h5file, "session_duration_ms", (s.duration_ms for s in sessions), np.int64)
        # 没有session_end时记为-1
        _write(h5file, "session_end_ts_ms",
               (-1 if s.end_ts_ms is None else s.end_ts_ms for s in sessions), np.int64)
        _write(h5file, "session_query_offset", query_offsets, np.int64)
        _write(h5file, "session_timeline_offset", timeline_offsets, np.int64)
        _write(h5file, "timeline_ts_ms", (ts for s in sessions for ts in s.timeline), np.int64)

        _write(h5file, "query_text", (q.text for q in queries), STRING_DTYPE)
        _write(h5file, "query_input_type", (q.input_type for q in queries), STRING_DTYPE)
        _write(h5file, "query_issue_ts_ms", (q.issue_ts_ms for q in queries), np.int64)
        _write(h5file, "query_page_turns", (q.page_turns for q in queries), np.int64)
        _write(h5file, "query_interval_ms", (q.interval_ms for q in queries), np.int64)
        _write(h5file, "query_click_offset", click_offsets, np.int64)

        _write(h5file, "click_url", (c.url for c in clicks), STRING_DTYPE)
        _write(h5file, "click_rank_pos", (c.rank_pos for c in clicks), np.int64)
        _write(h5file, "click_page_num", (c.page_num for c in clicks), np.int64)
        _write(h5file, "click_ts_ms", (c.ts_ms for c in clicks), np.int64)
        _write(h5file, "click_dwell_ms", (c.dwell_ms for c in clicks), np.int64)
        _write(h5file, "click_seq", (c.seq for c in clicks), np.int64)

    logger.info(f"Saved {len(sessions)} sessions ({len(queries)} queries, {len(clicks)} clicks) "
                f"to {file_path}")
    return len(sessions)


def load_sessions(file_path):
    """读回会话列表，顺序与写出时一致"""
    with h5py.File(file_path, "r") as h5file:
        columns = {name: _read(h5file, name) for name in h5file.keys()}

    clicks = [ClickRecord(url, int(rank), int(page), int(ts), int(dwell), int(seq))
              for url, rank, page, ts, dwell, seq in zip(
                  columns["click_url"], columns["click_rank_pos"], columns["click_page_num"],
                  columns["click_ts_ms"], columns["click_dwell_ms"], columns["click_seq"])]

    click_offsets = columns["query_click_offset"]
    queries = []
    for index, (text, input_type, issue, turns, interval) in enumerate(zip(
            columns["query_text"], columns["query_input_type"], columns["query_issue_ts_ms"],
            columns["query_page_turns"], columns["query_interval_ms"])):
        own = tuple(clicks[click_offsets[index]:click_offsets[index + 1]])
        queries.append(QueryRecord(text, input_type, int(issue), own, int(turns), int(interval)))

    query_offsets = columns["session_query_offset"]
    timeline_offsets = columns["session_timeline_offset"]
    timeline = columns["timeline_ts_ms"]
    sessions = []
    for index, (goal_id, user_id, duration, end_ts) in enumerate(zip(
            columns["session_goal_id"], columns["session_user_id"],
            columns["session_duration_ms"], columns["session_end_ts_ms"])):
        sessions.append(Session(
            goal_id=goal_id, user_id=user_id,
            queries=tuple(queries[query_offsets[index]:query_offsets[index + 1]]),
            duration_ms=int(duration),
            timeline=tuple(int(ts) for ts in timeline[timeline_offsets[index]:timeline_offsets[index + 1]]),
            end_ts_ms=None if end_ts < 0 else int(end_ts)))
    logger.info(f"Loaded {len(sessions)} sessions from {file_path}")
    return sessions
