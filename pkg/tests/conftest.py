#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from augan.config import SynthConfig, TrainConfig
from augan.core import AttributedGraph, NodeRoles, save_dataset, split_roles
from augan.synthgen import generate_family


def make_roles(n, anomalies, normal_val=(), test=()):
    """Roles where every anomaly is a labeled train anomaly and the rest are normal."""
    anomalies = frozenset(anomalies)
    test = frozenset(test)
    normal_val = frozenset(normal_val)
    pool = frozenset(range(n)) - anomalies - test
    labels = np.zeros(n, dtype=np.int64)
    labels[sorted(anomalies)] = 1
    return NodeRoles(
        labeled_anomalies=anomalies,
        normal_pool=pool,
        test_nodes=test,
        anomaly_train=anomalies,
        anomaly_val=frozenset(),
        normal_train=pool - normal_val,
        normal_val=normal_val,
        ground_truth=labels,
    )


def path_graph(n, d=2, graph_id="path"):
    """Path 0 - 1 - ... - (n-1) with node ids as features."""
    edges = [(i, i + 1) for i in range(n - 1)]
    features = np.repeat(np.arange(n, dtype=np.float64)[:, None], d, axis=1)
    return AttributedGraph(graph_id=graph_id, n=n, edges=edges, features=features)


@pytest.fixture
def two_nodes():
    return AttributedGraph(
        graph_id="pair", n=2, edges=[(0, 1)], features=[[1.0, 0.0], [0.0, 1.0]]
    )


@pytest.fixture
def path3():
    return path_graph(3)


@pytest.fixture(scope="session")
def synth_config():
    """Three graphs of 60 nodes with 6 anomalies each."""
    return SynthConfig(num_graphs=3, num_nodes=60, feature_dim=4, anomaly_ratio=0.1)


@pytest.fixture(scope="session")
def small_family(synth_config):
    return generate_family(synth_config)


@pytest.fixture
def tiny_config():
    """Settings small enough for a training run in a fraction of a second."""
    return TrainConfig(
        epochs=2,
        warmup_epochs=1,
        num_tasks=2,
        batch_size=4,
        inner_steps=1,
        hidden_dim=4,
        ref_samples=100,
        eval_every=1,
        num_labeled_anomalies=4,
    )


@pytest.fixture
def training_set(small_family, tiny_config):
    """Graphs and node roles of the small family."""
    graphs = [g for g, _ in small_family]
    roles = [
        split_roles(g, labels, tiny_config.num_labeled_anomalies, seed=0)
        for g, labels in small_family
    ]
    return graphs, roles


@pytest.fixture
def dataset_dirs(tmp_path, small_family):
    """The small family written as dataset directories."""
    return [
        str(save_dataset(tmp_path / "data" / g.graph_id, g, labels))
        for g, labels in small_family
    ]


@pytest.fixture
def roles_factory():
    return make_roles


@pytest.fixture
def path_factory():
    return path_graph
