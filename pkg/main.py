#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
主程序入口 - 会话满意度评估工具的命令行
子命令：synth, ingest, extract, analyze, train, predict, explain, abtest, gsb, evaluate
"""

import argparse
import logging
import sys

from core.pipeline import Pipeline
from utils.config_manager import ConfigManager
from utils.error_handler import ErrorHandler

COMMANDS = ("synth", "ingest", "extract", "analyze", "train", "predict", "explain", "abtest",
            "gsb", "evaluate")

# 命令行参数名 -> 配置键
FLAG_TO_KEY = {
    "seed": "seed", "input": "input", "annotations": "annotations",
    "query_stats": "query_stats", "model": "model", "out": "out", "truth": "truth",
    "control": "control", "treatment": "treatment", "category_map": "category_map",
    "n": "synth_n", "shift": "synth_shift", "single_query_fraction": "synth_single_query_fraction",
    "behavior_noise": "synth_behavior_noise", "dwell_cap_ms": "dwell_cap_ms",
    "jaccard_tokens": "jaccard_tokens", "alpha": "alpha", "contamination": "outlier_contamination",
    "gbt_rounds": "gbt_n_rounds", "bank_learner": "bank_learner", "grid_step": "grid_step",
    "keep_fraction": "keep_fraction", "lime_n": "lime_n", "lime_k": "lime_k",
    "coverage_target": "coverage_target", "bootstrap_n": "bootstrap_n",
    "gsb_sample_size": "gsb_sample_size",
}


def build_parser():
    """创建命令行解析器，所有子命令共享同一组参数"""
    common = argparse.ArgumentParser(add_help=False)
    paths = common.add_argument_group("inputs and outputs")
    paths.add_argument("--config", help="flat JSON config file")
    paths.add_argument("--input", help="event log (.jsonl) or session store (.h5)")
    paths.add_argument("--annotations", help="annotation CSV")
    paths.add_argument("--truth", help="truth CSV goal_id,label (evaluate, gsb)")
    paths.add_argument("--query-stats", dest="query_stats", help="query stats TSV")
    paths.add_argument("--model", help="model artifact (model.json)")
    paths.add_argument("--out", help="output directory")
    paths.add_argument("--control", help="control group event log (abtest)")
    paths.add_argument("--treatment", help="treatment group event log (abtest)")
    paths.add_argument("--category-map", dest="category_map", help="feature category JSON (explain)")

    general = common.add_argument_group("general")
    general.add_argument("--seed", type=int, help="master seed for every stochastic stage")
    general.add_argument("--strict", action="store_true", default=None,
                         help="fail on the first malformed log line")
    general.add_argument("--log-level", dest="log_level", default="INFO",
                         choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    stages = common.add_argument_group("per-stage overrides")
    stages.add_argument("--n", type=int, help="synth: number of sessions")
    stages.add_argument("--shift", type=float, help="synth: move prior mass toward Very high")
    stages.add_argument("--single-query-fraction", dest="single_query_fraction", type=float)
    stages.add_argument("--behavior-noise", dest="behavior_noise", type=float)
    stages.add_argument("--dwell-cap-ms", dest="dwell_cap_ms", type=int)
    stages.add_argument("--jaccard-tokens", dest="jaccard_tokens", choices=["char", "whitespace"])
    stages.add_argument("--alpha", type=float, help="analyze: significance level")
    stages.add_argument("--contamination", type=float, help="outlier fraction")
    stages.add_argument("--gbt-rounds", dest="gbt_rounds", type=int)
    stages.add_argument("--bank-learner", dest="bank_learner",
                        choices=["linsvm", "logreg", "cart", "forest", "gbt", "gbdt"])
    stages.add_argument("--grid-step", dest="grid_step", type=float)
    stages.add_argument("--keep-fraction", dest="keep_fraction", type=float)
    stages.add_argument("--lime-n", dest="lime_n", type=int)
    stages.add_argument("--lime-k", dest="lime_k", type=int)
    stages.add_argument("--coverage-target", dest="coverage_target", type=float)
    stages.add_argument("--bootstrap-n", dest="bootstrap_n", type=int)
    stages.add_argument("--gsb-sample-size", dest="gsb_sample_size", type=int)

    parser = argparse.ArgumentParser(prog="session-eval",
                                     description="Session-level search satisfaction evaluation")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config_manager = ConfigManager(args.config)
        overrides = {key: getattr(args, flag) for flag, key in FLAG_TO_KEY.items()}
        overrides["strict"] = args.strict
        config_manager.apply_overrides(overrides)
        config_manager.save_config()
    except Exception as e:
        print(ErrorHandler.format_payload(ErrorHandler.handle_error(e, "config")), file=sys.stderr)
        return ErrorHandler.exit_code(e)

    pipeline = Pipeline(config_manager.config)
    success, result, message = pipeline.run(args.command)
    if not success:
        print(ErrorHandler.format_payload(result), file=sys.stderr)
        return ErrorHandler.exit_code(pipeline.last_error) if pipeline.last_error else 1
    logging.info(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
