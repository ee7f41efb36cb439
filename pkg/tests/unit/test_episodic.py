#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest
import torch

from augan.augmentation import Scene, make_scene
from augan.config import TrainConfig
from augan.core import AttributedGraph, NodeRef
from augan.detector import (
    ModelParams,
    fit_pooled,
    init_model,
    make_loss,
    model_objective,
)
from augan.encoder import Batch
from augan.episodic import (
    Task,
    build_tasks,
    inner_adapt,
    meta_gradient,
    meta_step,
    predict_scores,
    sample_balanced_batch,
    train_augan,
)
from augan.exceptions import ConfigurationError, NumericalError
from augan.utils.misc import JsonLinesLog, read_json

EMPTY = Batch(refs=[], labels=[])


def quadratic(tensors, batch):
    return sum((t**2).sum() for t in tensors)


def _task(support=EMPTY, query=EMPTY):
    return Task(support=support, query=query, support_scene=0, query_scene=1)


def _scene(num_anomalies=3, num_normals=10, seed=0):
    return Scene(
        anomaly_refs=[NodeRef(0, v) for v in range(num_anomalies)],
        normal_refs=[NodeRef(1, v) for v in range(num_normals)],
        mask_seed=seed,
    )


def test_inner_adapt_quadratic():
    theta = [torch.tensor(1.0, dtype=torch.float64)]

    one = inner_adapt(theta, EMPTY, r1=0.1, steps=1, loss_fn=quadratic)
    two = inner_adapt(theta, EMPTY, r1=0.1, steps=2, loss_fn=quadratic)

    assert float(one[0]) == pytest.approx(0.8, abs=1e-12)
    assert float(two[0]) == pytest.approx(0.64, abs=1e-12)
    assert float(theta[0]) == 1.0


def test_inner_adapt_needs_a_step():
    with pytest.raises(ConfigurationError):
        inner_adapt([torch.tensor(1.0)], EMPTY, 0.1, 0, quadratic)


def test_meta_step_first_order():
    theta = [torch.tensor(1.0, dtype=torch.float64)]

    updated = meta_step(theta, [_task()], r2=0.1, r1=0.1, steps=1, second_order=False, loss_fn=quadratic)

    assert float(updated[0]) == pytest.approx(0.84, abs=1e-12)


def test_meta_step_second_order():
    theta = [torch.tensor(1.0, dtype=torch.float64)]

    updated = meta_step(theta, [_task()], r2=0.1, r1=0.1, steps=1, second_order=True, loss_fn=quadratic)

    assert float(updated[0]) == pytest.approx(0.872, abs=1e-12)


@pytest.mark.parametrize("second_order", [False, True])
def test_repeated_meta_steps_decrease_the_objective(second_order):
    theta = [torch.tensor(1.0, dtype=torch.float64)]
    tasks = [_task(), _task()]

    losses = []
    for _ in range(50):
        loss, _ = meta_gradient(theta, tasks, 0.1, 1, second_order, quadratic)
        losses.append(loss)
        theta = meta_step(theta, tasks, 0.1, 0.1, 1, second_order, quadratic)

    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))
    assert losses[-1] < 1e-3 * losses[0]


def test_meta_gradient_averages_tasks():
    theta = [torch.tensor(1.0, dtype=torch.float64)]

    loss, grads = meta_gradient(theta, [_task(), _task()], 0.1, 1, False, quadratic)

    assert loss == pytest.approx(0.64)
    assert float(grads[0]) == pytest.approx(1.6)


def test_first_and_second_order_agree_for_small_inner_rate(training_set):
    graphs, roles = training_set
    config = TrainConfig(hidden_dim=4)
    model = init_model(graphs[0].d, config)
    objective = model_objective(graphs, model.num_layers, make_loss(config, reference=(0.0, 1.0)))

    rng = np.random.default_rng(0)
    scenes = [_training_scene(roles, rng) for _ in range(3)]
    tasks = build_tasks(scenes, 2, 8, rng)

    _, first = meta_gradient(model, tasks, 1e-4, 1, False, objective)
    _, second = meta_gradient(model, tasks, 1e-4, 1, True, objective)

    first = torch.cat([g.reshape(-1) for g in first])
    second = torch.cat([g.reshape(-1) for g in second])
    assert float((first - second).norm() / second.norm()) < 1e-2


def _training_scene(roles, rng):
    anomalies = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.anomaly_train)]
    normals = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.normal_train)]
    return make_scene(anomalies, normals, 0.5, rng)


def test_inner_adapt_returns_model_params(training_set):
    graphs, roles = training_set
    config = TrainConfig(hidden_dim=4)
    model = init_model(graphs[0].d, config)
    objective = model_objective(graphs, model.num_layers, make_loss(config, reference=(0.0, 1.0)))
    rng = np.random.default_rng(1)
    support = sample_balanced_batch(_training_scene(roles, rng), 8, rng)
    before = [t.clone() for t in model.tensors()]

    adapted = inner_adapt(model, support, 0.01, 2, objective)

    assert isinstance(adapted, ModelParams)
    assert any(not torch.equal(a, b) for a, b in zip(adapted.tensors(), before))
    for a, b in zip(model.tensors(), before):
        assert torch.equal(a, b)


def test_non_finite_query_names_the_task():
    theta = [torch.tensor(1.0, dtype=torch.float64)]
    bad = Batch(refs=[NodeRef(0, 0)], labels=[1])

    def loss_fn(tensors, batch):
        value = quadratic(tensors, batch)
        return value * float("inf") if len(batch) else value

    with pytest.raises(NumericalError) as e:
        meta_gradient(theta, [_task(), _task(query=bad)], 0.1, 1, False, loss_fn)

    assert e.value.task == 1
    assert e.value.batch is bad


def test_task_scenes_must_differ():
    with pytest.raises(ConfigurationError):
        Task(support=EMPTY, query=EMPTY, support_scene=2, query_scene=2)

    assert Task(EMPTY, EMPTY, 0, 0, shared_scene=True).shared_scene


def test_balanced_batch_from_scene():
    batch = sample_balanced_batch(_scene(), 8, np.random.default_rng(0))

    assert int(batch.labels.sum()) == 4
    assert all(r.graph == 0 for r in batch.refs[:4])
    assert all(r.graph == 1 for r in batch.refs[4:])


def test_build_tasks_crosses_scenes():
    rng = np.random.default_rng(3)
    for _ in range(500):
        num_tasks = int(rng.integers(1, 6))
        scenes = [_scene(seed=i) for i in range(num_tasks + 1)]
        t = 2 * int(rng.integers(1, 8))

        tasks = build_tasks(scenes, num_tasks, t, rng)

        assert len(tasks) == num_tasks
        for i, task in enumerate(tasks):
            assert task.support_scene == i
            assert task.query_scene != i
            assert 0 <= task.query_scene <= num_tasks
            assert len(task.support) == len(task.query) == t
            assert int(task.support.labels.sum()) == t // 2


def test_build_tasks_single_scene():
    tasks = build_tasks([_scene()], 3, 4, np.random.default_rng(0))

    assert len(tasks) == 3
    assert all(task.shared_scene for task in tasks)


def test_build_tasks_needs_enough_scenes():
    with pytest.raises(ConfigurationError):
        build_tasks([_scene(), _scene()], 3, 4, np.random.default_rng(0))


def test_train_augan(tmp_path, training_set, tiny_config):
    graphs, roles = training_set
    log = JsonLinesLog(tmp_path / "train_log.jsonl")

    model = train_augan(
        graphs, roles, tiny_config, log=log, pseudo_labels_path=tmp_path / "pseudo.json"
    )

    assert isinstance(model, ModelParams)
    assert [r["epoch"] for r in log] == [1, 2]
    assert set(log.records[0]) == {
        "epoch",
        "meta_loss",
        "val_auc",
        "num_pseudo_labels",
        "num_scenes",
    }
    assert log.records[0]["num_scenes"] == tiny_config.num_tasks + 1
    assert len(read_json(tmp_path / "pseudo.json")) == log.records[0]["num_pseudo_labels"]
    assert len((tmp_path / "train_log.jsonl").read_text().splitlines()) == 2
    assert np.isfinite(predict_scores(model, graphs[0])).all()


def test_train_augan_is_deterministic(training_set, tiny_config):
    graphs, roles = training_set

    first = train_augan(graphs, roles, tiny_config)
    second = train_augan(graphs, roles, tiny_config)

    for a, b in zip(first.tensors(), second.tensors()):
        assert torch.equal(a, b)


def test_train_augan_without_normal_augmentation(training_set, tiny_config):
    graphs, roles = training_set
    log = JsonLinesLog()

    train_augan(graphs, roles, tiny_config.replace(enable_normal_aug=False), log=log)

    assert all(r["num_scenes"] == 1 for r in log)


def test_train_augan_without_anomaly_augmentation(training_set, tiny_config):
    graphs, roles = training_set
    log = JsonLinesLog()

    train_augan(graphs[:1], roles[:1], tiny_config.replace(enable_anomaly_aug=False), log=log)

    assert all(r["num_pseudo_labels"] == 0 for r in log)


def test_train_augan_needs_two_graphs(training_set, tiny_config):
    graphs, roles = training_set

    with pytest.raises(ConfigurationError) as e:
        train_augan(graphs[:1], roles[:1], tiny_config)

    assert "2 training graphs" in str(e.value)


def test_train_augan_without_epochs_returns_warm_up(training_set, tiny_config):
    graphs, roles = training_set
    config = tiny_config.replace(epochs=0)
    warm = fit_pooled(
        graphs,
        roles,
        config,
        config.warmup_epochs,
        params=init_model(graphs[0].d, config),
        stream="warmup",
    )

    model = train_augan(graphs, roles, config)

    for a, b in zip(model.tensors(), warm.tensors()):
        assert torch.equal(a, b)


def test_predict_scores_follow_node_permutation(small_family, tiny_config):
    graph, _ = small_family[0]
    model = init_model(graph.d, tiny_config)
    perm = np.random.default_rng(5).permutation(graph.n)
    inverse = np.argsort(perm)
    shuffled = AttributedGraph(
        graph_id="shuffled",
        n=graph.n,
        edges=inverse[graph.edges],
        features=graph.features[perm],
    )

    scores = predict_scores(model, graph)

    np.testing.assert_allclose(
        predict_scores(model, shuffled), scores[perm], rtol=0, atol=1e-12
    )
