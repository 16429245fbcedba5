#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成数据生成器测试
"""

import os
import sys

import numpy as np
import pytest

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.errors import InvalidConfig
from core.feature_extractor import QueryStatsTable
from core.preprocessor import DEFAULT_LABEL_PRIOR, labels_from_annotations, load_annotations
from core.session_model import build_sessions, parse_log
from core.synth_generator import (SynthConfig, assign_labels, shifted_config, synth_generate,
                                  write_synth_outputs)


def test_label_histogram_matches_prior():
    config = SynthConfig(n_sessions=1000, seed=7)
    result = synth_generate(config)
    counts = np.bincount(list(result.labels.values()), minlength=4)
    share = counts / counts.sum()
    assert np.all(np.abs(share - np.array(DEFAULT_LABEL_PRIOR)) <= 0.03)
    assert counts.sum() == 1000


def test_assign_labels_is_exact():
    labels = assign_labels(SynthConfig(n_sessions=7, label_prior=(0.25, 0.25, 0.25, 0.25)))
    assert sorted(np.bincount(labels, minlength=4).tolist()) == [1, 2, 2, 2]


def test_same_seed_same_bytes(tmp_path):
    config = SynthConfig(n_sessions=150, seed=21)
    first = write_synth_outputs(synth_generate(config), str(tmp_path / "one"))
    second = write_synth_outputs(synth_generate(config), str(tmp_path / "two"))
    for name in first:
        with open(first[name], "rb") as a, open(second[name], "rb") as b:
            assert a.read() == b.read(), name


def test_different_seed_differs():
    a = synth_generate(SynthConfig(n_sessions=50, seed=1)).event_lines()
    b = synth_generate(SynthConfig(n_sessions=50, seed=2)).event_lines()
    assert a != b


def test_events_form_well_formed_sessions():
    result = synth_generate(SynthConfig(n_sessions=300, seed=4))
    events, errors = parse_log(result.event_lines(), strict=True)
    assert errors == []
    sessions, orphans = build_sessions(events)
    assert orphans == []
    assert [s.goal_id for s in sessions] == sorted(result.labels)
    for session in sessions:
        assert session.end_ts_ms is not None
        assert all(click.dwell_ms > 0 for click in session.clicks)
    single_share = np.mean([s.num_queries == 1 for s in sessions])
    assert 0.2 < single_share < 0.45


def test_annotations_reproduce_labels(tmp_path):
    result = synth_generate(SynthConfig(n_sessions=200, seed=9))
    paths = write_synth_outputs(result, str(tmp_path))
    annotations = load_annotations(paths["annotations"])
    assert all(len(item.annotator_scores) == 3 for item in annotations.values())
    assert labels_from_annotations(annotations).to_dict() == result.labels


def test_query_stats_tiers(tmp_path):
    result = synth_generate(SynthConfig(n_sessions=20, seed=3))
    paths = write_synth_outputs(result, str(tmp_path))
    stats = QueryStatsTable.from_tsv(paths["query_stats"])
    assert len(stats) == 1000
    frequencies = np.sort(stats.frequencies())
    assert frequencies[-10:].min() >= 1e6
    assert frequencies[:495].max() <= 50


def test_shifted_config_moves_mass_up():
    shifted = shifted_config(SynthConfig(), 0.3)
    assert sum(shifted.label_prior) == pytest.approx(1.0)
    assert shifted.label_prior[3] > DEFAULT_LABEL_PRIOR[3]


@pytest.mark.parametrize("overrides", [
    {"label_prior": (0.5, 0.5, 0.5, 0.5)},
    {"label_prior": (0.5, 0.5)},
    {"single_query_fraction": 1.5},
    {"n_sessions": 0},
    {"n_annotators": 5},
])
def test_invalid_config(overrides):
    with pytest.raises(InvalidConfig):
        synth_generate(SynthConfig(**overrides))
