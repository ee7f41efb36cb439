#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import math
from unittest import mock

import numpy as np
import pytest
import torch

from augan.config import TrainConfig
from augan.core import AttributedGraph, NodeRef, split_roles
from augan.detector import (
    Checkpoint,
    DetectorParams,
    ModelParams,
    bce_loss,
    deviation_loss,
    init_model,
    make_loss,
    sample_balanced,
    sample_reference,
    score,
    train_deepall,
    train_smote,
    validation_auc,
)
from augan.encoder import init_encoder
from augan.exceptions import ConfigurationError, NumericalError, ShapeError
from augan.utils.decorators import ExperimentalWarning
from augan.utils.misc import JsonLinesLog


def test_score_is_linear():
    head = DetectorParams(weight=[1.0, 1.0], bias=0.5)

    np.testing.assert_allclose(score([[1.0, 2.0], [0.0, 0.0]], head), [3.5, 0.5])


def test_score_shape_mismatch():
    head = DetectorParams(weight=[1.0, 1.0], bias=0.0)

    with pytest.raises(ShapeError):
        score([[1.0, 2.0, 3.0]], head)


def test_non_finite_head():
    with pytest.raises(NumericalError):
        DetectorParams(weight=[1.0, np.inf], bias=0.0)


def test_model_dimensions_must_agree():
    with pytest.raises(ShapeError):
        ModelParams(init_encoder(3, hidden_dim=4), DetectorParams([1.0, 2.0], 0.0))


@pytest.mark.parametrize(
    "scores, labels, expected",
    [([2.0], [0], 2.0), ([-2.0], [0], 2.0), ([2.0], [1], 3.0), ([6.0], [1], 0.0)],
)
def test_deviation_loss_terms(scores, labels, expected):
    loss = deviation_loss(scores, labels, ref_mean=0.0, ref_std=1.0, margin=5.0)
    assert float(loss) == pytest.approx(expected)


def test_deviation_loss_is_batch_mean():
    loss = deviation_loss([2.0, 2.0], [0, 1], ref_mean=0.0, ref_std=1.0)
    assert float(loss) == pytest.approx(2.5)


def test_deviation_loss_standardizes():
    loss = deviation_loss([5.0], [0], ref_mean=1.0, ref_std=2.0)
    assert float(loss) == pytest.approx(2.0)


def test_deviation_loss_rejects_zero_deviation():
    with pytest.raises(ConfigurationError) as e:
        deviation_loss([1.0], [1], ref_mean=0.0, ref_std=0.0)
    assert e.value.key == "ref_std"


def test_bce_loss():
    assert float(bce_loss([0.0], [1])) == pytest.approx(math.log(2))
    assert float(bce_loss([0.0, 0.0], [0, 1])) == pytest.approx(math.log(2))


def test_sample_reference():
    mean, std = sample_reference(np.random.default_rng(0), 5000)

    assert abs(mean) < 0.1
    assert abs(std - 1) < 0.1

    with pytest.raises(ConfigurationError):
        sample_reference(np.random.default_rng(0), 1)


def test_make_loss_selects_loss():
    assert make_loss(TrainConfig(loss="bce")) is bce_loss

    loss_fn = make_loss(TrainConfig(), reference=(0.0, 1.0))
    assert float(loss_fn(torch.tensor([2.0]), torch.tensor([1.0]))) == pytest.approx(3.0)


def test_sample_balanced_halves():
    anomalies = [NodeRef(0, 1)]
    normals = [NodeRef(0, v) for v in range(2, 12)]

    batch = sample_balanced(anomalies, normals, 6, np.random.default_rng(0))

    assert len(batch) == 6
    assert batch.labels.tolist() == [1, 1, 1, 0, 0, 0]
    assert batch.refs[:3] == (NodeRef(0, 1),) * 3
    assert len(set(batch.refs[3:])) == 3


def test_sample_balanced_empty_side():
    with pytest.raises(ConfigurationError):
        sample_balanced([], [NodeRef(0, 0)], 4, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        sample_balanced([NodeRef(0, 0)], [], 4, np.random.default_rng(0))


def test_model_save_and_load(tmp_path, small_family):
    graph, _ = small_family[0]
    model = init_model(graph.d, TrainConfig(hidden_dim=3))

    path = model.save(tmp_path / "model.json", fingerprint="abc")
    loaded = ModelParams.load(path)

    np.testing.assert_array_equal(loaded.score_graph(graph), model.score_graph(graph))
    assert '"config_fingerprint": "abc"' in path.read_text()


def test_score_graph_rejects_other_dimension(small_family, two_nodes):
    graph, _ = small_family[0]
    model = init_model(graph.d, TrainConfig(hidden_dim=3))

    with pytest.raises(ShapeError):
        model.score_graph(two_nodes)


def test_validation_auc_in_unit_range(training_set, tiny_config):
    graphs, roles = training_set
    model = init_model(graphs[0].d, tiny_config)

    value = validation_auc(model, graphs, roles)

    assert 0.0 <= value <= 1.0


def test_checkpoint_keeps_best():
    models = [mock.sentinel.first, mock.sentinel.second, mock.sentinel.third]
    checkpoint = Checkpoint([], [])

    with mock.patch("augan.detector.validation_auc", side_effect=[0.5, 0.7, 0.6]):
        for epoch, model in enumerate(models):
            checkpoint.update(model, epoch)

    assert checkpoint.best is mock.sentinel.second
    assert checkpoint.best_auc == 0.7
    assert checkpoint.best_epoch == 1
    assert checkpoint.result(mock.sentinel.third) is mock.sentinel.second


def test_checkpoint_without_validation_returns_last():
    checkpoint = Checkpoint([], [])

    with mock.patch("augan.detector.validation_auc", return_value=None):
        checkpoint.update(mock.sentinel.first, 0)

    assert checkpoint.result(mock.sentinel.last) is mock.sentinel.last


def test_train_deepall(training_set, tiny_config):
    graphs, roles = training_set
    log = JsonLinesLog()

    model = train_deepall(graphs, roles, tiny_config, log=log)

    assert isinstance(model, ModelParams)
    assert [r["epoch"] for r in log] == [1, 2]
    assert all(np.isfinite(r["loss"]) for r in log)
    assert np.isfinite(model.score_graph(graphs[0])).all()


def test_train_deepall_is_deterministic(training_set, tiny_config):
    graphs, roles = training_set

    first = train_deepall(graphs, roles, tiny_config)
    second = train_deepall(graphs, roles, tiny_config)

    for a, b in zip(first.tensors(), second.tensors()):
        assert torch.equal(a, b)


def test_train_deepall_needs_labeled_anomalies(training_set, tiny_config, roles_factory):
    graphs, roles = training_set
    empty = roles_factory(graphs[0].n, anomalies=[])

    with pytest.raises(ConfigurationError):
        train_deepall(graphs[:1], [empty], tiny_config)


def test_train_smote_is_experimental(training_set, tiny_config):
    graphs, roles = training_set

    with pytest.warns(ExperimentalWarning):
        model = train_smote(graphs, roles, tiny_config)

    assert isinstance(model, ModelParams)


def _separable_graph(rng, graph_id, n=40, num_anomalies=10):
    """Isolated anomalies far from a ring of normal nodes."""
    ring = [(v, v + 1) for v in range(num_anomalies, n - 1)] + [(n - 1, num_anomalies)]
    features = rng.normal(0.0, 0.2, size=(n, 2))
    features[:num_anomalies] += 3.0
    labels = np.zeros(n, dtype=np.int64)
    labels[:num_anomalies] = 1
    return AttributedGraph(graph_id, n, ring, features), labels


def test_train_deepall_separates_a_linearly_separable_toy():
    rng = np.random.default_rng(0)
    config = TrainConfig(
        epochs=200,
        warmup_epochs=0,
        num_tasks=4,
        batch_size=8,
        hidden_dim=8,
        meta_rate=0.01,
        ref_samples=1000,
        eval_every=10,
    )
    graphs, roles = [], []
    for name in ("left", "right"):
        graph, labels = _separable_graph(rng, name)
        graphs.append(graph)
        roles.append(split_roles(graph, labels, 10, seed=0))

    model = train_deepall(graphs, roles, config)

    assert validation_auc(model, graphs, roles) > 0.95
