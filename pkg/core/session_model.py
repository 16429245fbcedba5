#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
会话模型模块 - Session domain model
解析行为日志(JSON Lines)，按goal_id分组成会话，并推导点击停留时间和查询间隔
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Tuple

from core.errors import MalformedRecord, OrphanEvent

EVENT_KINDS = ("query", "click", "page_turn", "session_end")
INPUT_TYPES = ("manual", "suggestion", "related_search", "history")

DEFAULT_DWELL_CAP_MS = 600_000

logger = logging.getLogger("SessionModel")


@dataclass(frozen=True)
class BehaviorEvent:
    """一条原始行为事件"""
    goal_id: str
    user_id: str
    ts_ms: int
    kind: str
    query_text: Optional[str] = None
    input_type: Optional[str] = None
    url: Optional[str] = None
    rank_pos: Optional[int] = None
    page_num: Optional[int] = None

    @classmethod
    def from_record(cls, record, line_no=0):
        """从JSON对象构建事件，字段不合法时抛出MalformedRecord"""
        if not isinstance(record, dict):
            raise MalformedRecord(line_no, "record is not a JSON object")

        for key in ("goal_id", "user_id", "ts_ms", "kind"):
            if key not in record:
                raise MalformedRecord(line_no, f"missing field '{key}'")

        kind = record["kind"]
        if kind not in EVENT_KINDS:
            raise MalformedRecord(line_no, f"unknown kind '{kind}'")

        ts_ms = _as_int(record["ts_ms"], "ts_ms", line_no)
        if ts_ms < 0:
            raise MalformedRecord(line_no, "ts_ms must be >= 0")

        fields = {
            "goal_id": str(record["goal_id"]),
            "user_id": str(record["user_id"]),
            "ts_ms": ts_ms,
            "kind": kind,
        }

        if kind == "query":
            text = record.get("query_text")
            if not isinstance(text, str) or not text:
                raise MalformedRecord(line_no, "query event needs non-empty query_text")
            input_type = record.get("input_type")
            if input_type not in INPUT_TYPES:
                raise MalformedRecord(line_no, f"invalid input_type '{input_type}'")
            fields["query_text"] = text
            fields["input_type"] = input_type

        elif kind == "click":
            url = record.get("url")
            if not isinstance(url, str) or not url:
                raise MalformedRecord(line_no, "click event needs url")
            rank_pos = _as_int(record.get("rank_pos"), "rank_pos", line_no)
            if rank_pos < 1:
                raise MalformedRecord(line_no, "rank_pos must be >= 1")
            page_num = _as_int(record.get("page_num", 1), "page_num", line_no)
            if page_num < 1:
                raise MalformedRecord(line_no, "page_num must be >= 1")
            fields.update(url=url, rank_pos=rank_pos, page_num=page_num)

        elif kind == "page_turn":
            page_num = _as_int(record.get("page_num", 2), "page_num", line_no)
            if page_num < 1:
                raise MalformedRecord(line_no, "page_num must be >= 1")
            fields["page_num"] = page_num

        return cls(**fields)

    def to_record(self):
        """转换回JSON对象（省略空字段）"""
        record = {"goal_id": self.goal_id, "user_id": self.user_id,
                  "ts_ms": self.ts_ms, "kind": self.kind}
        for key in ("query_text", "input_type", "url", "rank_pos", "page_num"):
            value = getattr(self, key)
            if value is not None:
                record[key] = value
        return record


def _as_int(value, name, line_no):
    # bool是int的子类，需要排除
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecord(line_no, f"field '{name}' must be an integer")
    return value


@dataclass(frozen=True)
class ClickRecord:
    url: str
    rank_pos: int
    page_num: int
    ts_ms: int
    dwell_ms: int = 0
    # 在会话时间线中的位置，用于找到"下一个事件"
    seq: int = 0


@dataclass(frozen=True)
class QueryRecord:
    text: str
    input_type: str
    issue_ts_ms: int
    clicks: Tuple[ClickRecord, ...] = ()
    page_turns: int = 0
    interval_ms: int = 0


@dataclass(frozen=True)
class Session:
    """一个goal对应的会话，derive_dwells之后不可变"""
    goal_id: str
    user_id: str
    queries: Tuple[QueryRecord, ...]
    duration_ms: int
    # 会话内所有非session_end事件的时间戳（已排序）
    timeline: Tuple[int, ...] = ()
    end_ts_ms: Optional[int] = None

    @property
    def num_queries(self):
        return len(self.queries)

    @property
    def clicks(self):
        return [click for query in self.queries for click in query.clicks]

    @property
    def start_ts_ms(self):
        return self.queries[0].issue_ts_ms

    def tied_query_ts(self):
        """与前一个查询同一时刻发出的查询时间戳（按输入顺序保留）"""
        return [b.issue_ts_ms for a, b in zip(self.queries, self.queries[1:])
                if b.issue_ts_ms == a.issue_ts_ms]

    @property
    def last_ts_ms(self):
        """会话最后一个事件的时间戳（含session_end）"""
        last = self.timeline[-1] if self.timeline else self.start_ts_ms
        if self.end_ts_ms is not None:
            last = max(last, self.end_ts_ms)
        return last


def parse_log(event_stream: Iterable[str], strict=False) -> Tuple[List[BehaviorEvent], List[MalformedRecord]]:
    """
    解析JSON Lines事件流
    返回：事件列表（保持输入顺序）, 格式错误报告列表
    strict=True时遇到第一个错误即抛出
    """
    events = []
    errors = []

    for line_no, line in enumerate(event_stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        text = line.strip()
        if not text:
            continue

        try:
            try:
                record = json.loads(text)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_no, f"invalid JSON: {e.msg}")
            events.append(BehaviorEvent.from_record(record, line_no))
        except MalformedRecord as e:
            if strict:
                raise
            errors.append(e)

    if errors:
        logger.warning(f"{len(errors)} malformed lines skipped, first at line {errors[0].line_no}")
    logger.info(f"Parsed {len(events)} events")
    return events, errors


def read_log(file_path, strict=False):
    """读取事件日志文件"""
    with open(file_path, "r", encoding="utf-8") as f:
        return parse_log(f, strict=strict)


def sessionize(events: List[BehaviorEvent]) -> Tuple[List[Session], List[OrphanEvent]]:
    """
    按goal_id分组事件
    点击和翻页归属到同一goal中最近的前一个查询；没有查询的goal被丢弃
    返回：会话列表（按goal首次出现顺序）, 孤立事件报告
    """
    grouped = {}
    for index, event in enumerate(events):
        grouped.setdefault(event.goal_id, []).append((event.ts_ms, index, event))

    sessions = []
    orphans = []

    for goal_id, items in grouped.items():
        # 稳定排序：同一时间戳保持输入顺序
        items.sort(key=lambda item: (item[0], item[1]))
        ordered = [item[2] for item in items]

        queries = []
        timeline = []
        end_ts = None

        for event in ordered:
            if event.kind == "session_end":
                end_ts = event.ts_ms if end_ts is None else max(end_ts, event.ts_ms)
                continue

            if event.kind == "query":
                timeline.append(event.ts_ms)
                queries.append({"text": event.query_text, "input_type": event.input_type,
                                "issue_ts_ms": event.ts_ms, "clicks": [], "page_turns": 0})
                continue

            if not queries:
                orphans.append(OrphanEvent(goal_id, event.kind, event.ts_ms))
                continue

            timeline.append(event.ts_ms)
            if event.kind == "click":
                queries[-1]["clicks"].append(ClickRecord(
                    url=event.url, rank_pos=event.rank_pos, page_num=event.page_num,
                    ts_ms=event.ts_ms, seq=len(timeline) - 1))
            else:
                queries[-1]["page_turns"] += 1

        if not queries:
            logger.info(f"Goal {goal_id} has no query event, dropped")
            continue

        query_records = tuple(
            QueryRecord(text=q["text"], input_type=q["input_type"], issue_ts_ms=q["issue_ts_ms"],
                        clicks=tuple(q["clicks"]), page_turns=q["page_turns"])
            for q in queries
        )
        session = Session(goal_id=goal_id, user_id=ordered[0].user_id, queries=query_records,
                          duration_ms=0, timeline=tuple(timeline), end_ts_ms=end_ts)
        sessions.append(replace(session, duration_ms=session.last_ts_ms - session.start_ts_ms))
        if sessions[-1].tied_query_ts():
            logger.warning(f"Goal {goal_id} has queries sharing a timestamp, kept in input order")

    if orphans:
        logger.warning(f"{len(orphans)} orphan events dropped")
    logger.info(f"Built {len(sessions)} sessions from {len(grouped)} goals")
    return sessions, orphans


def derive_dwells(session: Session, cap_ms=DEFAULT_DWELL_CAP_MS) -> Session:
    """
    推导点击停留时间和查询间隔
    dwell = 下一个事件时间 - 点击时间，限制在[0, cap_ms]
    最后一个事件：有session_end时取 min(cap, end - ts)，否则取cap
    """
    timeline = session.timeline
    last_ts = session.last_ts_ms
    queries = []

    for index, query in enumerate(session.queries):
        clicks = []
        for click in query.clicks:
            if click.seq + 1 < len(timeline):
                dwell = timeline[click.seq + 1] - click.ts_ms
            elif session.end_ts_ms is not None:
                dwell = session.end_ts_ms - click.ts_ms
            else:
                dwell = cap_ms
            clicks.append(replace(click, dwell_ms=int(min(max(dwell, 0), cap_ms))))

        if index + 1 < len(session.queries):
            interval = session.queries[index + 1].issue_ts_ms - query.issue_ts_ms
        else:
            interval = last_ts - query.issue_ts_ms
        queries.append(replace(query, clicks=tuple(clicks), interval_ms=max(int(interval), 0)))

    return replace(session, queries=tuple(queries))


def build_sessions(events, cap_ms=DEFAULT_DWELL_CAP_MS):
    """sessionize + derive_dwells 的便捷组合"""
    sessions, orphans = sessionize(events)
    return [derive_dwells(session, cap_ms) for session in sessions], orphans


@dataclass
class IngestReport:
    """ingest阶段的汇总报告"""
    n_events: int = 0
    n_sessions: int = 0
    malformed: List[dict] = field(default_factory=list)
    orphans: List[dict] = field(default_factory=list)
    dropped_goals: List[str] = field(default_factory=list)
    tied_queries: List[dict] = field(default_factory=list)

    @classmethod
    def collect(cls, events, sessions, errors, orphans):
        goals = []
        seen = set()
        for event in events:
            if event.goal_id not in seen:
                seen.add(event.goal_id)
                goals.append(event.goal_id)
        kept = {session.goal_id for session in sessions}
        return cls(
            n_events=len(events),
            n_sessions=len(sessions),
            malformed=[{"line_no": e.line_no, "reason": e.reason} for e in errors],
            orphans=[{"goal_id": o.goal_id, "kind": o.kind, "ts_ms": o.ts_ms} for o in orphans],
            dropped_goals=[goal for goal in goals if goal not in kept],
            tied_queries=[{"goal_id": session.goal_id, "ts_ms": ts}
                          for session in sessions for ts in session.tied_query_ts()],
        )

    def to_dict(self):
        return {"n_events": self.n_events, "n_sessions": self.n_sessions,
                "malformed": self.malformed, "orphans": self.orphans,
                "dropped_goals": self.dropped_goals, "tied_queries": self.tied_queries}
