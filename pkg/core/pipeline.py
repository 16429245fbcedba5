#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
流水线模块 - Subcommand dispatcher
每个子命令读取输入、调用各模块、把结果以固定文件名写到输出目录
Pipeline.run 返回 (success, result, message)，模块内部的错误在这里统一处理
"""

import json
import logging
import os

import numpy as np
import pandas as pd

from core.combiner import (predict_dag, predict_ovo, predict_ovr, train_dag, train_ovr_models,
                           train_pairwise_bank)
from core.correlation import correlation_report, plot_feature_levels, select_features
from core.errors import EmptyData, MissingInput
from core.evaluator import (PAGE_METRIC_NAMES, ab_compare, class_metrics, gsb_judge,
                            learner_ordering, page_metric_frame, quantile_cut_points)
from core.explainer import (abstract_rules, discretize_explanation, fit_local_surrogate,
                            load_category_map, training_quantiles)
from core.feature_extractor import (REDUCED_FEATURE_NAMES, DwellThresholdConfig, QueryStatsTable,
                                    build_feature_frames, write_feature_csv)
from core.hybrid_model import (FinalModel, HybridModel, fit_weights, prediction_frame,
                               prune_paths, select_structure)
from core.learners import LEARNER_TRAINERS, train_gbt
from core.learners.artifact import load_artifact, save_artifact
from core.preprocessor import (build_labeled_dataset, impute_missing, labels_from_annotations,
                               load_annotations, stratified_split)
from core.session_model import IngestReport, build_sessions, read_log
from core.single_query import SingleQueryThresholds, train_single_query
from core.synth_generator import SynthConfig, shifted_config, synth_generate, write_synth_outputs
from utils.error_handler import ErrorHandler
from utils.session_store import load_sessions, save_sessions

logger = logging.getLogger("Pipeline")

CLASSES = [0, 1, 2, 3]

OUTPUT_NAMES = {
    "sessions": "sessions.h5",
    "ingest_report": "ingest_report.json",
    "features": "features.csv",
    "single_features": "single_query_features.csv",
    "correlation_csv": "correlation.csv",
    "correlation_txt": "correlation.txt",
    "feature_levels": "feature_levels.png",
    "outliers": "outliers.csv",
    "model": "model.json",
    "validation_metrics": "validation_metrics.json",
    "predictions": "predictions.csv",
    "explanations": "explanations.jsonl",
    "rules": "rules.csv",
    "ab_report": "ab_report.json",
    "gsb_report": "gsb_report.csv",
    "metrics": "metrics.json",
}


def write_json(data, file_path):
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False, default=float)
        f.write("\n")


def require_file(path, what):
    if not path or not os.path.exists(path):
        raise MissingInput(f"{what} not found: {path}", what=what, path=str(path))
    return path


def load_any_sessions(path, config):
    """事件日志(JSONL)或会话存储(.h5)"""
    require_file(path, "sessions input")
    if path.endswith(".h5"):
        return load_sessions(path)
    events, _ = read_log(path, strict=bool(config.get("strict", False)))
    sessions, _ = build_sessions(events, int(config.get("dwell_cap_ms", 600000)))
    return sessions


def load_truth(path):
    """truth.csv (goal_id,label) 或标注文件"""
    require_file(path, "truth labels")
    header = pd.read_csv(path, nrows=0).columns
    if "annotator_id" in header:
        return labels_from_annotations(load_annotations(path))
    frame = pd.read_csv(path, dtype={"goal_id": str})
    return pd.Series(frame["label"].astype(int).to_numpy(), index=frame["goal_id"], name="label")


def learner_params(name, config):
    """配置键 -> 各学习器的参数"""
    seed = int(config["seed"])
    if name in ("gbt", "gbdt"):
        params = {"n_rounds": config["gbt_n_rounds"], "learning_rate": config["gbt_learning_rate"],
                  "max_depth": config["gbt_max_depth"], "reg_lambda": config["gbt_reg_lambda"],
                  "seed": seed}
        if name == "gbt":
            params["gamma"] = config["gbt_gamma"]
        return params
    if name == "cart":
        return {"max_depth": config["cart_max_depth"], "min_leaf": config["cart_min_leaf"],
                "seed": seed}
    if name == "forest":
        return {"n_trees": config["forest_n_trees"], "max_depth": config["forest_max_depth"],
                "seed": seed}
    if name == "logreg":
        return {"epochs": config["logreg_epochs"], "step": config["logreg_step"],
                "l2": config["logreg_l2"], "seed": seed}
    if name in ("linsvm", "linsvm_ovr"):
        return {"epochs": config["svm_epochs"], "step": config["svm_step"], "C": config["svm_C"],
                "seed": seed}
    return {"seed": seed}


def _reference_rows(frame, limit, seed):
    """解释用的参考样本（训练集的一个有序子集）"""
    if len(frame) <= limit:
        return frame
    rows = np.sort(np.random.default_rng(seed).choice(len(frame), size=limit, replace=False))
    return frame.iloc[rows]


class Pipeline:
    """子命令调度器"""

    def __init__(self, config):
        self.config = config
        self.last_error = None
        self.operations = {
            "synth": self.run_synth,
            "ingest": self.run_ingest,
            "extract": self.run_extract,
            "analyze": self.run_analyze,
            "train": self.run_train,
            "predict": self.run_predict,
            "explain": self.run_explain,
            "abtest": self.run_abtest,
            "gsb": self.run_gsb,
            "evaluate": self.run_evaluate,
        }

    @property
    def out_dir(self):
        return self.config["out"]

    def output_path(self, key):
        return os.path.join(self.out_dir, OUTPUT_NAMES[key])

    def run(self, command, params=None):
        """
        执行子命令
        返回：(是否成功, 结果字典或错误信息, 说明)
        """
        self.last_error = None
        if params:
            self.config.update({k: v for k, v in params.items() if v is not None})
        operation = self.operations.get(command)
        if operation is None:
            return False, None, f"Unknown command: {command}"
        try:
            os.makedirs(self.out_dir, exist_ok=True)
            result = operation()
            return True, result, f"{command} finished, outputs in {self.out_dir}"
        except Exception as e:
            self.last_error = e
            payload = ErrorHandler.handle_error(e, title=command)
            return False, payload, f"{command} failed: {payload['message']}"

    # ---- 公共输入 ----
    def thresholds(self):
        return DwellThresholdConfig.from_config(self.config)

    def query_stats(self, required=False):
        path = self.config.get("query_stats")
        if not path:
            if required:
                raise MissingInput("query stats table is required", what="query_stats")
            logger.warning("No query stats table given, frequency features default to 0")
            return QueryStatsTable()
        return QueryStatsTable.from_tsv(require_file(path, "query stats table"))

    def sessions(self, key="input"):
        return load_any_sessions(self.config.get(key), self.config)

    def model(self):
        model = FinalModel.from_artifact(load_artifact(self.config.get("model")))
        return model

    # ---- 子命令 ----
    def run_synth(self):
        config = SynthConfig.from_config(self.config)
        if self.config.get("synth_shift"):
            config = shifted_config(config, float(self.config["synth_shift"]))
        result = synth_generate(config)
        return write_synth_outputs(result, self.out_dir)

    def run_ingest(self):
        events, errors = read_log(require_file(self.config.get("input"), "event log"),
                                  strict=bool(self.config.get("strict")))
        sessions, orphans = build_sessions(events, int(self.config["dwell_cap_ms"]))
        save_sessions(sessions, self.output_path("sessions"))
        report = IngestReport.collect(events, sessions, errors, orphans)
        write_json(report.to_dict(), self.output_path("ingest_report"))
        return {"sessions": self.output_path("sessions"), "n_sessions": len(sessions),
                "n_malformed": len(errors), "n_orphans": len(orphans)}

    def run_extract(self):
        multi, single = build_feature_frames(self.sessions(), self.thresholds(), self.query_stats())
        write_feature_csv(multi, self.output_path("features"))
        write_feature_csv(single, self.output_path("single_features"))
        return {"features": self.output_path("features"), "n_multi": len(multi),
                "n_single": len(single)}

    def run_analyze(self):
        multi, _ = build_feature_frames(self.sessions(), self.thresholds(), QueryStatsTable())
        labels = load_truth(self.config.get("annotations") or self.config.get("truth"))
        dataset = build_labeled_dataset(multi, labels, self._outlier_params(),
                                        bool(self.config["remove_outliers"]))
        pd.DataFrame(dataset.outlier_report, columns=["goal_id", "score"]).to_csv(
            self.output_path("outliers"), index=False, lineterminator="\n")

        report = correlation_report(dataset.features, dataset.label_array(),
                                    float(self.config["alpha"]))
        report.to_csv(self.output_path("correlation_csv"))
        with open(self.output_path("correlation_txt"), "w", encoding="utf-8") as f:
            f.write(report.to_text())
        names = [name for name in self.config["plot_features"] if name in dataset.features.columns]
        plot_feature_levels(dataset.features, dataset.label_array(), names,
                            self.output_path("feature_levels"))
        return {"correlation": self.output_path("correlation_csv"), "n_sessions": len(dataset),
                "n_outliers": len(dataset.outlier_report)}

    def _outlier_params(self):
        return {"n_trees": int(self.config["outlier_n_trees"]),
                "subsample": int(self.config["outlier_subsample"]),
                "contamination": float(self.config["outlier_contamination"]),
                "seed": int(self.config["seed"])}

    def run_train(self):
        config = self.config
        seed = int(config["seed"])
        stats = self.query_stats()
        thresholds = self.thresholds()
        sessions = self.sessions()
        labels = load_truth(config.get("annotations") or config.get("truth"))
        multi, single = build_feature_frames(sessions, thresholds, stats)
        multi = multi[multi.index.isin(labels.index)]
        single = single[single.index.isin(labels.index)]
        if len(multi) == 0:
            raise EmptyData("no annotated multi-query session to train on")

        # 多查询会话：划分 -> 预处理 -> 学习器
        y_multi = labels.loc[multi.index].to_numpy(dtype=int)
        ratios = tuple(config["split_ratios"])
        train_idx, valid_idx, test_idx = stratified_split(y_multi, ratios, seed)
        train_raw = multi.iloc[train_idx]
        if config["feature_selection"]:
            filled, _ = impute_missing(train_raw)
            report = correlation_report(filled, y_multi[train_idx], float(config["alpha"]))
            selected = select_features(report, int(config["feature_selection_min_groups"]))
            if selected:
                train_raw = train_raw[selected]
            else:
                logger.warning("Feature selection kept nothing, using the full schema")
        dataset = build_labeled_dataset(train_raw, labels, self._outlier_params(),
                                        bool(config["remove_outliers"]))
        schema = dataset.feature_names
        X_train, y_train = dataset.matrix(), dataset.label_array()
        X_valid = dataset.transform(multi.iloc[valid_idx])
        y_valid = y_multi[valid_idx]
        X_test = dataset.transform(multi.iloc[test_idx])
        y_test = y_multi[test_idx]

        validation = {}
        gbt = train_gbt(X_train, y_train, classes=CLASSES, **learner_params("gbt", config))
        validation["gbt"] = class_metrics(y_valid, gbt.predict(X_valid), CLASSES).to_dict()
        for name in config["comparison_learners"]:
            model = LEARNER_TRAINERS[name](X_train, y_train, classes=CLASSES,
                                           **learner_params(name, config))
            validation[name] = class_metrics(y_valid, model.predict(X_valid), CLASSES).to_dict()

        # 二分类器组合
        bank_learner = config["bank_learner"]
        bank_params = learner_params(bank_learner, config)
        bank = train_pairwise_bank(X_train, y_train, CLASSES, bank_learner, bank_params,
                                   validation=(X_valid, y_valid),
                                   min_pair_rows=int(config["min_pair_rows"]))
        ovr = train_ovr_models(X_train, y_train, CLASSES, bank_learner, bank_params, seed)
        dag_classic = train_dag(X_train, y_train, bank, "classic", bank_learner, bank_params)
        dag_sat = train_dag(X_train, y_train, bank, "sat_dissat", bank_learner, bank_params)
        validation["ovo"] = class_metrics(y_valid, predict_ovo(bank, X_valid)[0], CLASSES).to_dict()
        validation["ovr"] = class_metrics(y_valid, predict_ovr(ovr, X_valid), CLASSES).to_dict()
        validation["dag_classic"] = class_metrics(
            y_valid, predict_dag(dag_classic, bank, X_valid)[0], CLASSES).to_dict()
        validation["dag_sat_dissat"] = class_metrics(
            y_valid, predict_dag(dag_sat, bank, X_valid)[0], CLASSES).to_dict()

        # 混合模型：权重搜索 -> 剪枝 -> 结构选择
        grid_step = float(config["grid_step"])
        hybrid = HybridModel(gbt, bank)
        weight_fit = fit_weights(hybrid, X_valid, y_valid, grid_step)
        hybrid = hybrid.with_changes(weights=weight_fit.weights)
        confusion = class_metrics(y_valid, hybrid.predict(X_valid), CLASSES).confusion
        hybrid = prune_paths(hybrid, confusion, float(config["keep_fraction"]),
                             (X_valid, y_valid), grid_step)
        hybrid, structure_info = select_structure(hybrid, X_valid, y_valid, grid_step)
        validation["hybrid"] = class_metrics(y_valid, hybrid.predict(X_valid), CLASSES).to_dict()

        # 单查询会话
        sq_thresholds = SingleQueryThresholds.from_stats(
            stats, float(config["hot_quantile"]), float(config["cold_quantile"]),
            float(config["short_duration_ms"]))
        y_single = labels.loc[single.index].to_numpy(dtype=int)
        s_train, s_valid, s_test = stratified_split(y_single, ratios, seed)
        s_fit = np.sort(np.concatenate([s_train, s_valid]))
        single_model = train_single_query(single.iloc[s_fit], y_single[s_fit], sq_thresholds,
                                          CLASSES, int(config["single_max_depth"]),
                                          int(config["single_min_leaf"]), seed)

        test = {"hybrid": class_metrics(y_test, hybrid.predict(X_test), CLASSES).to_dict()}
        total_truth, total_pred = [y_test], [hybrid.predict(X_test)]
        if len(s_test):
            single_pred, _ = single_model.predict(single.iloc[s_test])
            test["single"] = class_metrics(y_single[s_test], single_pred, CLASSES).to_dict()
            total_truth.append(y_single[s_test])
            total_pred.append(single_pred)
        test["total"] = class_metrics(np.concatenate(total_truth), np.concatenate(total_pred),
                                      CLASSES).to_dict()

        # 解释与GSB需要的训练集统计量
        single_filled = single.iloc[s_fit][REDUCED_FEATURE_NAMES].fillna(
            value=single_model.imputation_stats)
        limit = int(config["explain_reference_rows"])
        train_goals = set(dataset.goal_ids) | set(single.index[s_fit])
        train_sessions = [s for s in sessions if s.goal_id in train_goals]
        page_frame = page_metric_frame(train_sessions, float(config["long_click_s"]))
        page_labels = labels.loc[page_frame.index].to_numpy(dtype=int)
        parameters = {
            "seed": seed,
            "learners": {name: learner_params(name, config) for name in ["gbt", bank_learner]},
            "weight_search": {"grid_step": grid_step, "n_evaluated": weight_fit.n_evaluated,
                              "best_macro_f1": weight_fit.score},
            "structure_selection": structure_info,
            "single_thresholds": sq_thresholds.to_dict(),
            "explain_reference": {
                "multi": _reference_rows(dataset.features, limit, seed).to_numpy().tolist(),
                "single": _reference_rows(single_filled, limit, seed).to_numpy().tolist(),
            },
            "feature_quantiles": {"multi": training_quantiles(dataset.features),
                                  "single": training_quantiles(single_filled)},
            "page_metric_cuts": {metric: quantile_cut_points(page_frame[metric], page_labels).tolist()
                                 for metric in PAGE_METRIC_NAMES},
        }
        final = FinalModel(hybrid, single_model, schema, dataset.imputation_stats,
                           dataset.standardization_stats, thresholds,
                           {"ovr": ovr, "dag_classic": dag_classic, "dag_sat_dissat": dag_sat},
                           parameters)
        save_artifact(final.to_artifact(), self.output_path("model"))
        ordering = learner_ordering(validation)
        if not ordering.get("ensembles_vs_linear", {}).get("holds", True):
            logger.warning("A linear model beats the weakest tree ensemble on validation")
        metrics = {"validation": validation, "ordering": ordering, "test": test,
                   "split_sizes": {"train": len(train_idx), "valid": len(valid_idx),
                                   "test": len(test_idx), "outliers_removed": len(dataset.outlier_report),
                                   "single_train": len(s_fit), "single_test": len(s_test)}}
        write_json(metrics, self.output_path("validation_metrics"))
        logger.info(f"Validation macro-F1: gbt {validation['gbt']['macro']['f1']:.4f}, "
                    f"hybrid {validation['hybrid']['macro']['f1']:.4f}")
        return {"model": self.output_path("model"),
                "hybrid_macro_f1": validation["hybrid"]["macro"]["f1"]}

    def run_predict(self):
        model = self.model()
        sessions = self.sessions()
        labels, tags, scores = model.predict_sessions(sessions, self.query_stats())
        frame = prediction_frame(sessions, labels, tags, scores, model.classes)
        frame.to_csv(self.output_path("predictions"), index=False, float_format="%.10g",
                     lineterminator="\n")
        return {"predictions": self.output_path("predictions"), "n_sessions": len(frame)}

    def run_explain(self):
        config = self.config
        seed = int(config["seed"])
        model = self.model()
        sessions = self.sessions()
        multi, single = build_feature_frames(sessions, model.thresholds, self.query_stats())
        reference = model.parameters["explain_reference"]
        quantiles = model.parameters["feature_quantiles"]

        multi_filled, _ = impute_missing(multi[model.feature_schema], model.imputation_stats)
        single_filled = single[REDUCED_FEATURE_NAMES].fillna(value=model.single.imputation_stats)
        means = np.array([model.standardization_stats[n]["mean"] for n in model.feature_schema])
        stds = np.array([model.standardization_stats[n]["std"] for n in model.feature_schema])

        def multi_proba(Z):
            return model.hybrid.predict_proba((Z - means) / stds)

        def single_proba(Z):
            return model.single.predict_proba(pd.DataFrame(Z, columns=REDUCED_FEATURE_NAMES))

        position = {session.goal_id: index for index, session in enumerate(sessions)}
        jobs = [(goal_id, row, multi_proba, reference["multi"], model.feature_schema, quantiles["multi"])
                for goal_id, row in zip(multi_filled.index, multi_filled.to_numpy(dtype=float))]
        jobs += [(goal_id, row, single_proba, reference["single"], REDUCED_FEATURE_NAMES,
                  quantiles["single"])
                 for goal_id, row in zip(single_filled.index, single_filled.to_numpy(dtype=float))]
        jobs.sort(key=lambda job: position[job[0]])

        explanations = []
        kernel_width = config.get("lime_kernel_width")
        for goal_id, row, proba, ref, names, bounds in jobs:
            explanation = fit_local_surrogate(
                proba, row, np.asarray(ref, dtype=float), names, n=int(config["lime_n"]),
                top_k=int(config["lime_k"]),
                kernel_width=float(kernel_width) if kernel_width else None,
                ridge=float(config["lime_ridge"]), seed=[seed, position[goal_id]], goal_id=goal_id)
            explanations.append(discretize_explanation(explanation, bounds))

        with open(self.output_path("explanations"), "w", encoding="utf-8", newline="\n") as f:
            for explanation in explanations:
                f.write(json.dumps(explanation.to_dict(), ensure_ascii=False) + "\n")
        rules = abstract_rules(explanations, float(config["coverage_target"]),
                               load_category_map(config.get("category_map")))
        rules.to_frame().to_csv(self.output_path("rules"), index=False, lineterminator="\n")
        return {"explanations": len(explanations), "rules": len(rules.rules),
                "coverage": rules.coverage}

    def run_abtest(self):
        model = self.model()
        model.query_stats = self.query_stats()
        control = self.sessions("control")
        treatment = self.sessions("treatment")
        report = ab_compare(control, treatment, model, int(self.config["bootstrap_n"]),
                            int(self.config["seed"]), float(self.config["long_click_s"]))
        write_json(report, self.output_path("ab_report"))
        return report

    def run_gsb(self):
        model = self.model()
        model.query_stats = self.query_stats()
        sessions, truth = self._sessions_with_truth()
        cuts = model.parameters.get("page_metric_cuts", {})
        rows = []
        for metric in self.config["gsb_metrics"]:
            verdict = gsb_judge(sessions, truth, model, metric,
                                sample_size=int(self.config["gsb_sample_size"]),
                                seed=int(self.config["seed"]),
                                long_click_s=float(self.config["long_click_s"]),
                                cut_points=cuts.get(metric))
            rows.append(verdict.to_row())
        frame = pd.DataFrame(rows, columns=["metric", "good", "same", "bad"])
        frame.to_csv(self.output_path("gsb_report"), index=False, lineterminator="\n")
        return {"gsb_report": self.output_path("gsb_report"), "rows": rows}

    def _sessions_with_truth(self):
        sessions = self.sessions()
        labels = load_truth(self.config.get("truth") or self.config.get("annotations"))
        sessions = [session for session in sessions if session.goal_id in labels.index]
        if not sessions:
            raise EmptyData("no session has a truth label")
        return sessions, labels.loc[[s.goal_id for s in sessions]].to_numpy(dtype=int)

    def run_evaluate(self):
        model = self.model()
        sessions, truth = self._sessions_with_truth()
        pred, tags, _ = model.predict_sessions(sessions, self.query_stats())
        tags = np.asarray(tags)
        metrics = {"total": class_metrics(truth, pred, model.classes).to_dict(),
                   "n_sessions": len(sessions)}
        for tag in ("hybrid", "single"):
            rows = tags == tag
            if rows.any():
                metrics[tag] = class_metrics(truth[rows], pred[rows], model.classes).to_dict()
        write_json(metrics, self.output_path("metrics"))
        logger.info(f"Evaluation macro-F1 {metrics['total']['macro']['f1']:.4f} "
                    f"over {len(sessions)} sessions")
        return {"metrics": self.output_path("metrics"),
                "macro_f1": metrics["total"]["macro"]["f1"]}
