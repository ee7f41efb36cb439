#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from augan.config import SynthConfig
from augan.core import load_dataset, split_roles
from augan.synthgen import (
    contamination,
    family_means,
    family_stats,
    generate_family,
    num_anomalies,
    write_family,
)
from augan.utils.misc import read_json


@pytest.mark.parametrize(
    "n, ratio, expected", [(300, 0.05, 15), (100, 0.07, 7), (60, 0.1, 6), (10, 0.15, 2)]
)
def test_num_anomalies(n, ratio, expected):
    assert num_anomalies(SynthConfig(num_nodes=n, anomaly_ratio=ratio)) == expected


def test_family_shape(small_family, synth_config):
    assert len(small_family) == synth_config.num_graphs
    for i, (graph, labels) in enumerate(small_family):
        assert graph.graph_id == "synth-%d" % i
        assert graph.features.shape == (60, 4)
        assert int(labels.sum()) == 6


def test_family_means_distances():
    config = SynthConfig(background_shift=3.0, anomaly_separation=6.0)
    anomaly_mean, normal_means = family_means(config)

    assert np.linalg.norm(anomaly_mean) == pytest.approx(6.0)
    assert len(normal_means) == config.num_graphs
    for mean in normal_means:
        assert np.linalg.norm(mean) == pytest.approx(3.0)


def test_no_shift_shares_the_background():
    _, normal_means = family_means(SynthConfig(background_shift=0.0))

    for mean in normal_means:
        np.testing.assert_array_equal(mean, np.zeros(16))


def test_anomalies_share_one_pattern():
    config = SynthConfig()
    anomaly_mean, normal_means = family_means(config)

    for (graph, labels), normal_mean in zip(generate_family(config), normal_means):
        anomalies = graph.features[labels == 1].mean(axis=0)
        normals = graph.features[labels == 0].mean(axis=0)

        assert np.linalg.norm(anomalies - anomaly_mean) < np.linalg.norm(anomalies - normal_mean)
        assert np.linalg.norm(normals - normal_mean) < np.linalg.norm(normals - anomaly_mean)


def test_family_is_seeded(synth_config):
    first = generate_family(synth_config)
    second = generate_family(synth_config)
    other = generate_family(SynthConfig(**dict(synth_config.to_dict(), seed=1)))

    for (a, la), (b, lb) in zip(first, second):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.edges, b.edges)
        np.testing.assert_array_equal(la, lb)
    assert not np.array_equal(first[0][0].features, other[0][0].features)


def test_blocks_are_denser_inside():
    graph, labels = generate_family(SynthConfig(num_graphs=1, p_in=0.2, p_out=0.01))[0]
    same = labels[graph.edges[:, 0]] == labels[graph.edges[:, 1]]

    assert same.mean() > 0.5


def test_family_stats(small_family):
    roles = [split_roles(g, labels, 4, seed=0) for g, labels in small_family]

    stats = family_stats(small_family, roles)

    assert list(stats.columns) == [
        "graph_id",
        "nodes",
        "edges",
        "anomalies",
        "anomaly_ratio",
        "beta",
    ]
    assert stats["anomaly_ratio"].tolist() == [0.1] * 3
    # The two unlabeled anomalies land in the pool or the test set
    assert ((stats["beta"] >= 0) & (stats["beta"] <= 2 / 34)).all()


def test_contamination(roles_factory):
    roles = roles_factory(4, anomalies=[0])
    assert contamination(roles) == 0.0


def test_write_family(tmp_path, small_family, synth_config):
    paths = write_family(tmp_path, small_family, synth_config)

    assert [p.name for p in paths] == ["synth-0", "synth-1", "synth-2"]
    manifest = read_json(tmp_path / "family.json")
    assert manifest["config"] == synth_config.to_dict()
    assert manifest["graphs"] == ["synth-0", "synth-1", "synth-2"]

    graph, labels = load_dataset(paths[1])
    np.testing.assert_array_equal(graph.features, small_family[1][0].features)
