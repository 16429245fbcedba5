#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
SessionEval - 会话级搜索满意度评估工具
"""

__version__ = "1.0.0"
