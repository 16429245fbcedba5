#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置管理模块 - 加载、合并和保存运行配置
优先级：命令行参数 > 配置文件 > 内置默认值
"""

import os
import json
import logging

from core.errors import InvalidConfig, UnknownConfigKey

RUN_CONFIG_NAME = "run_config.json"

# 扁平的键值配置，所有参数都有默认值
DEFAULT_CONFIG = {
    # 路径
    "input": None,
    "annotations": None,
    "query_stats": None,
    "model": None,
    "out": "out",
    "control": None,
    "treatment": None,
    "truth": None,
    "category_map": None,
    # 全局
    "seed": 7,
    "strict": False,
    # 会话与特征
    "dwell_cap_ms": 600000,
    "dwell_q_long_s": 40.0,
    "dwell_q_very_long_s": 60.0,
    "dwell_q_short_s": 20.0,
    "dwell_q_very_short_s": 5.0,
    "dwell_s_long_s": 185.0,
    "dwell_s_short_s": 10.0,
    "dwell_delta_long_s": 60.0,
    "dwell_delta_short_s": 50.0,
    "jaccard_tokens": "char",
    # 预处理与统计
    "remove_outliers": True,
    "outlier_n_trees": 100,
    "outlier_subsample": 256,
    "outlier_contamination": 0.02,
    "split_ratios": [0.6, 0.2, 0.2],
    "alpha": 0.05,
    "feature_selection": False,
    "feature_selection_min_groups": 1,
    "plot_features": ["Q_num_click_ge60", "S_num_click", "S_num_query", "S_MinClickPos"],
    # 学习器
    "gbt_n_rounds": 200,
    "gbt_learning_rate": 0.1,
    "gbt_max_depth": 4,
    "gbt_reg_lambda": 1.0,
    "gbt_gamma": 0.0,
    "cart_max_depth": 6,
    "cart_min_leaf": 1,
    "forest_n_trees": 100,
    "forest_max_depth": 8,
    "logreg_epochs": 300,
    "logreg_step": 0.5,
    "logreg_l2": 1e-4,
    "svm_epochs": 300,
    "svm_step": 0.1,
    "svm_C": 1.0,
    "comparison_learners": ["cart", "forest", "gbdt", "logreg", "linsvm_ovr"],
    # 组合与混合模型
    "bank_learner": "linsvm",
    "min_pair_rows": 5,
    "grid_step": 0.1,
    "keep_fraction": 0.8,
    "hot_quantile": 0.99,
    "cold_quantile": 0.5,
    "short_duration_ms": 10000,
    "single_max_depth": 4,
    "single_min_leaf": 5,
    # 解释
    "lime_n": 1000,
    "lime_k": 6,
    "lime_kernel_width": None,
    "lime_ridge": 1.0,
    "coverage_target": 0.98,
    "explain_reference_rows": 500,
    # 评估
    "bootstrap_n": 1000,
    "long_click_s": 60.0,
    "gsb_sample_size": 500,
    "gsb_metrics": ["has_click_ratio", "click_ratio", "long_click_ratio"],
    # 合成数据
    "synth_n": 1000,
    "synth_label_prior": [0.182, 0.182, 0.413, 0.223],
    "synth_single_query_fraction": 0.325,
    "synth_behavior_noise": 0.05,
    "synth_shift": 0.0,
}


class ConfigManager:
    """运行配置管理类"""
    def __init__(self, config_file=None):
        self.config_file = config_file
        self.file_config = self.load_config() if config_file else {}
        self.config = dict(DEFAULT_CONFIG)
        self.config.update(self.file_config)

    def load_config(self):
        """加载配置文件（扁平JSON对象）"""
        if not os.path.exists(self.config_file):
            raise InvalidConfig(f"config file not found: {self.config_file}", path=self.config_file)
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"config file is not valid JSON: {e.msg}", path=self.config_file)

        if not isinstance(data, dict):
            raise InvalidConfig("config file must hold a flat JSON object", path=self.config_file)
        self._check_keys(data)
        logging.info(f"Loaded {len(data)} config keys from {self.config_file}")
        return data

    @staticmethod
    def _check_keys(data):
        unknown = sorted(key for key in data if key not in DEFAULT_CONFIG)
        if unknown:
            raise UnknownConfigKey(f"unknown config keys: {', '.join(unknown)}", keys=unknown)

    def apply_overrides(self, overrides):
        """合并命令行参数，值为None的参数视为未设置"""
        given = {key: value for key, value in overrides.items() if value is not None}
        self._check_keys(given)
        self.config.update(given)
        return self.config

    def update_config(self, key, value):
        """更新单个配置项"""
        self._check_keys({key: value})
        self.config[key] = value
        return self.config

    def get(self, key, default=None):
        return self.config.get(key, default)

    def save_config(self, out_dir=None):
        """把最终生效的配置写到输出目录"""
        out_dir = out_dir or self.config["out"]
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, RUN_CONFIG_NAME)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        return path
