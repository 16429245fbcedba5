#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error Handler - 错误处理模块
提供集中化的错误处理功能：记录日志并转换为机器可读的错误信息
"""

import json
import logging
import traceback

from core.errors import SessionEvalError

# 退出码
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_DOMAIN_ERROR = 2


class ErrorHandler:
    """集中化错误处理类"""

    @staticmethod
    def handle_error(error, title="Error", show_traceback=True, log_error=True):
        """集中处理错误

        Args:
            error: 错误对象或错误消息字符串
            title: 日志中的标题（通常是子命令名）
            show_traceback: 是否在debug级别记录堆栈跟踪
            log_error: 是否记录错误到日志

        Returns:
            dict: {"code", "message", "details"}
        """
        if isinstance(error, SessionEvalError):
            payload = error.to_dict()
        elif isinstance(error, Exception):
            payload = {"code": "core.Unexpected", "message": str(error) or type(error).__name__,
                       "details": {"type": type(error).__name__}}
        else:
            payload = {"code": "core.Unexpected", "message": str(error), "details": {}}

        if log_error:
            logging.error(f"{title}: [{payload['code']}] {payload['message']}")
            if show_traceback and isinstance(error, Exception):
                logging.debug("".join(traceback.format_exception(type(error), error,
                                                                 error.__traceback__)))
        return payload

    @staticmethod
    def exit_code(error):
        """业务错误返回2，其余异常返回1"""
        if error is None:
            return EXIT_OK
        return EXIT_DOMAIN_ERROR if isinstance(error, SessionEvalError) else EXIT_UNEXPECTED

    @staticmethod
    def format_payload(payload):
        return json.dumps({"error": payload}, ensure_ascii=False, sort_keys=True, default=str)
