#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
pytest 配置：注册 slow 标记（默认合成基准上的完整训练），可用 -m "not slow" 跳过
"""


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full training on the default synthetic benchmark")
