#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模型文件 - Versioned JSON model artifact
{format_version, model_kind, class_list, feature_schema, standardization_stats,
 imputation_stats, parameters, structure}
"""

import json
import logging
import os

import numpy as np

from core.errors import ModelNotFound, UnsupportedArtifactVersion

FORMAT_VERSION = 1

logger = logging.getLogger("ModelArtifact")


def _to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def build_artifact(model_kind, class_list, feature_schema, standardization_stats,
                   imputation_stats, parameters, structure):
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "class_list": list(class_list),
        "feature_schema": feature_schema,
        "standardization_stats": standardization_stats,
        "imputation_stats": imputation_stats,
        "parameters": parameters,
        "structure": structure,
    }


def check_artifact(data):
    version = data.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise UnsupportedArtifactVersion(
            f"artifact format_version {version} is not supported (max {FORMAT_VERSION})",
            format_version=version, supported=FORMAT_VERSION)
    return data


def save_artifact(data, file_path):
    """按键排序写出，同样的模型得到同样的字节"""
    directory = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(directory, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(_to_jsonable(data), f, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        f.write("\n")
    logger.info(f"Model artifact saved to {file_path}")


def load_artifact(file_path):
    if not file_path or not os.path.exists(file_path):
        raise ModelNotFound(f"model artifact not found: {file_path}", path=str(file_path))
    with open(file_path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return check_artifact(data)
