#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Synthetic families of attributed graphs with a shared anomaly pattern.

Every graph has its own normal background, offset from a common base mean,
while the anomalies of all graphs are drawn around one shared mean.  Edges
follow a two-block stochastic block model (anomalies and normal nodes).

"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import SynthConfig
from .core import AttributedGraph, NodeRoles, save_dataset
from .utils.misc import substream, write_json

logger = logging.getLogger(__name__)

ANOMALY_VARIANCE = 0.5

Family = List[Tuple[AttributedGraph, np.ndarray]]


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def num_anomalies(config: SynthConfig) -> int:
    """``ceil(r * n)``, robust to floating point noise in the product."""
    return int(math.ceil(round(config.anomaly_ratio * config.num_nodes, 9)))


def family_means(config: SynthConfig) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Shared anomaly mean and the normal mean of every graph.

    Returns
    -------
    numpy.ndarray, list of numpy.ndarray
        ``mu_A`` at distance ``anomaly_separation`` from the base (the
        origin) and one ``mu_g`` per graph at distance ``background_shift``.

    """
    rng = substream(config.seed, "synth.means")
    base = np.zeros(config.feature_dim)
    anomaly_mean = base + config.anomaly_separation * _unit(rng, config.feature_dim)
    normal_means = [
        base + config.background_shift * _unit(rng, config.feature_dim)
        for _ in range(config.num_graphs)
    ]
    return anomaly_mean, normal_means


def _block_edges(labels: np.ndarray, p_in: float, p_out: float, rng) -> np.ndarray:
    rows, cols = np.triu_indices(len(labels), k=1)
    prob = np.where(labels[rows] == labels[cols], p_in, p_out)
    keep = rng.random(len(rows)) < prob
    return np.column_stack([rows[keep], cols[keep]])


def generate_graph(
    config: SynthConfig, index: int, anomaly_mean: np.ndarray, normal_mean: np.ndarray
) -> Tuple[AttributedGraph, np.ndarray]:
    rng = substream(config.seed, "synth.graph%d" % index)
    n, d = config.num_nodes, config.feature_dim
    a = num_anomalies(config)

    labels = rng.permutation(np.r_[np.ones(a, dtype=np.int64), np.zeros(n - a, dtype=np.int64)])
    features = np.empty((n, d))
    is_anomaly = labels == 1
    features[~is_anomaly] = rng.normal(normal_mean, 1.0, size=(n - a, d))
    features[is_anomaly] = rng.normal(
        anomaly_mean, np.sqrt(ANOMALY_VARIANCE), size=(a, d)
    )

    edges = _block_edges(labels, config.p_in, config.p_out, rng)
    graph = AttributedGraph(
        graph_id="synth-%d" % index, n=n, edges=edges, features=features
    )
    return graph, labels


def generate_family(config: SynthConfig) -> Family:
    """Generate `config.num_graphs` graphs sharing one anomaly pattern.

    Parameters
    ----------
    config : SynthConfig

    Returns
    -------
    list of (AttributedGraph, numpy.ndarray)
        Each graph with its 0/1 ground-truth labels.

    """
    anomaly_mean, normal_means = family_means(config)
    family = [
        generate_graph(config, g, anomaly_mean, normal_means[g])
        for g in range(config.num_graphs)
    ]
    logger.info(
        "Generated %d graphs of %d nodes with %d anomalies each.",
        config.num_graphs,
        config.num_nodes,
        num_anomalies(config),
    )
    return family


def contamination(roles: NodeRoles) -> float:
    """Fraction of the normal pool that is actually anomalous (beta)."""
    if not roles.normal_pool:
        return 0.0
    pool = sorted(roles.normal_pool)
    return float(roles.ground_truth[pool].sum()) / len(pool)


def family_stats(
    family: Sequence[Tuple[AttributedGraph, np.ndarray]],
    roles: Optional[Sequence[NodeRoles]] = None,
) -> pd.DataFrame:
    """Per-graph counts, anomaly ratio and, given role splits, contamination.

    Parameters
    ----------
    family : list of (AttributedGraph, numpy.ndarray)
    roles : list of NodeRoles, optional

    Returns
    -------
    pandas.DataFrame
        Columns ``graph_id``, ``nodes``, ``edges``, ``anomalies``,
        ``anomaly_ratio`` and, when `roles` is given, ``beta``.

    """
    rows = []
    for i, (graph, labels) in enumerate(family):
        anomalies = int(np.sum(labels))
        row = {
            "graph_id": graph.graph_id,
            "nodes": graph.n,
            "edges": graph.num_edges,
            "anomalies": anomalies,
            "anomaly_ratio": anomalies / graph.n,
        }
        if roles is not None:
            row["beta"] = contamination(roles[i])
        rows.append(row)
    return pd.DataFrame(rows)


def write_family(
    out_dir: Union[str, Path], family: Family, config: SynthConfig
) -> List[Path]:
    """Write one dataset directory per graph plus ``family.json``."""
    out_dir = Path(out_dir)
    paths = [
        save_dataset(out_dir / graph.graph_id, graph, labels)
        for graph, labels in family
    ]
    write_json(
        out_dir / "family.json",
        {"config": config.to_dict(), "graphs": [p.name for p in paths]},
    )
    return paths
