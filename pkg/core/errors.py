#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
错误定义模块 - Session evaluation error hierarchy
所有错误都带有模块前缀的错误码，便于命令行输出机器可读的错误信息
"""


class SessionEvalError(Exception):
    """所有业务错误的基类"""

    code = "core.Error"

    def __init__(self, message="", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_dict(self):
        """转换为机器可读的字典"""
        return {"code": self.code, "message": self.message, "details": self.details}


# ---- session-model ----
class MalformedRecord(SessionEvalError):
    code = "session.MalformedRecord"

    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}", line_no=line_no, reason=reason)
        self.line_no = line_no
        self.reason = reason


class OrphanEvent(SessionEvalError):
    code = "session.OrphanEvent"

    def __init__(self, goal_id, kind, ts_ms):
        super().__init__(f"{kind} event before any query in goal {goal_id}",
                         goal_id=goal_id, kind=kind, ts_ms=ts_ms)
        self.goal_id = goal_id
        self.kind = kind
        self.ts_ms = ts_ms


# ---- features ----
class SingleQuerySession(SessionEvalError):
    code = "features.SingleQuerySession"


class MultiQuerySession(SessionEvalError):
    code = "features.MultiQuerySession"


# ---- preprocess ----
class OutOfRange(SessionEvalError):
    code = "preprocess.OutOfRange"


class AllMissingSlot(SessionEvalError):
    code = "preprocess.AllMissingSlot"

    def __init__(self, name):
        super().__init__(f"slot '{name}' has no observed value", slot=name)
        self.name = name


class SingleClass(SessionEvalError):
    code = "preprocess.SingleClass"


class InvalidRatios(SessionEvalError):
    code = "preprocess.InvalidRatios"


class DegenerateMatrix(SessionEvalError):
    code = "preprocess.DegenerateMatrix"


# ---- stats ----
class ZeroVariance(SessionEvalError):
    code = "stats.ZeroVariance"


# ---- learners ----
class EmptyData(SessionEvalError):
    code = "learners.EmptyData"


class InsufficientClasses(SessionEvalError):
    code = "learners.InsufficientClasses"


class NonFiniteGradient(SessionEvalError):
    code = "learners.NonFiniteGradient"


class UnsupportedArtifactVersion(SessionEvalError):
    code = "learners.UnsupportedArtifactVersion"


# ---- combine ----
class InsufficientPairData(SessionEvalError):
    code = "combine.InsufficientPairData"

    def __init__(self, i, j, counts):
        super().__init__(f"pair ({i}, {j}) has too few rows: {counts}", pair=[i, j], counts=counts)
        self.pair = (i, j)


# ---- hybrid ----
class AllWeightsZero(SessionEvalError):
    code = "hybrid.AllWeightsZero"


class MissingValidationLabel(SessionEvalError):
    code = "hybrid.MissingValidationLabel"


# ---- explain ----
class DegenerateSample(SessionEvalError):
    code = "explain.DegenerateSample"


# ---- eval ----
class InvalidConfig(SessionEvalError):
    code = "eval.InvalidConfig"


# ---- model / cli ----
class ModelNotFound(SessionEvalError):
    code = "model.NotFound"


class MissingInput(SessionEvalError):
    code = "cli.MissingInput"


class UnknownConfigKey(SessionEvalError):
    code = "cli.UnknownConfigKey"
