#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Split one large labeled graph into distribution-shifted subgraphs.

Anchors are chosen by greedy farthest-point sampling over BFS hop
distances and every subgraph spans the k-hop neighborhood of its anchor.
When the raw spans overlap too much, nodes shared by several spans are
handed to the nearest anchor.  Each span is then reduced to its largest
connected component and the attempt is accepted if the overlap bounds and
the size-similarity bound hold.  Otherwise a new attempt starts from fresh
anchors.

"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.sparse import csgraph

from .config import PartitionConfig
from .core import AttributedGraph, bfs_hops, save_dataset
from .exceptions import ConfigurationError, PartitionError
from .utils.misc import substream, write_json

logger = logging.getLogger(__name__)

REPORT = "partition_report.json"


@dataclass
class OverlapReport:
    """Result of :func:`validate_overlap`.

    Attributes
    ----------
    passed : bool
    shared_anomalies : list of int
        Anomalies present in more than one subgraph.
    violations : list of dict
        One entry per ordered pair of subgraphs whose normal overlap reaches
        the bound, with the shared normal node ids.
    max_pairwise_normal_overlap : float

    """

    passed: bool
    shared_anomalies: List[int] = field(default_factory=list)
    violations: List[dict] = field(default_factory=list)
    max_pairwise_normal_overlap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "shared_anomalies": list(self.shared_anomalies),
            "violations": list(self.violations),
            "max_pairwise_normal_overlap": self.max_pairwise_normal_overlap,
        }


@dataclass(frozen=True)
class Subgraph:
    """A materialized subgraph with its labels and id remap table.

    Entry ``i`` of `remap` is the original id of subgraph node ``i``.
    """

    graph: AttributedGraph
    labels: np.ndarray
    remap: np.ndarray


@dataclass(frozen=True)
class PartitionResult:
    subgraphs: List[Subgraph]
    report: dict


def farthest_point_anchors(
    graph: AttributedGraph,
    m: int,
    rng: np.random.Generator,
    first: Optional[int] = None,
) -> List[int]:
    """Greedy max-min farthest-point sampling on hop distances.

    The first anchor is uniform at random unless `first` is given.  Every
    further anchor maximizes the minimum hop distance to the anchors chosen
    so far among nodes reachable from all of them; ties go to the smallest
    node id.

    Parameters
    ----------
    graph : AttributedGraph
    m : int
    rng : numpy.random.Generator
    first : int, optional

    Returns
    -------
    list of int

    Raises
    ------
    PartitionError
        If fewer than `m` mutually reachable nodes exist.

    """
    if first is None:
        first = int(rng.integers(graph.n))

    anchors = [int(first)]
    distances = bfs_hops(graph, anchors[0])
    nearest = distances.copy()
    reachable = np.isfinite(distances)

    while len(anchors) < m:
        candidates = np.where(reachable, nearest, -1.0)
        candidates[anchors] = -1.0
        best = candidates.max()
        if best <= 0:
            raise PartitionError(
                "Graph '%s' has fewer than %d mutually reachable nodes around node %d."
                % (graph.graph_id, m, anchors[0]),
                report={"anchors": anchors},
            )
        anchor = int(np.flatnonzero(candidates == best)[0])
        anchors.append(anchor)

        distances = bfs_hops(graph, anchor)
        nearest = np.minimum(nearest, distances)
        reachable &= np.isfinite(distances)

    return anchors


def span_subgraph(graph: AttributedGraph, anchor: int, k: int) -> FrozenSet[int]:
    """All nodes within `k` hops of `anchor`."""
    return frozenset(int(v) for v in np.flatnonzero(bfs_hops(graph, anchor) <= k))


def validate_overlap(
    node_sets: Sequence[Iterable[int]], ground_truth, max_normal_overlap: float
) -> OverlapReport:
    """Check that subgraphs share no anomaly and few normal nodes.

    A subgraph fails against another when the fraction of its normal nodes
    that also belong to the other is at least `max_normal_overlap`.

    Parameters
    ----------
    node_sets : list of iterable of int
    ground_truth : array-like of int
    max_normal_overlap : float

    Returns
    -------
    OverlapReport

    """
    if len(node_sets) < 2:
        raise ConfigurationError("node_sets", "At least 2 node sets are required.")

    labels = np.asarray(ground_truth)
    sets = [frozenset(int(v) for v in s) for s in node_sets]
    anomalies = [frozenset(v for v in s if labels[v] == 1) for s in sets]
    normals = [s - a for s, a in zip(sets, anomalies)]

    counts = {}
    for a in anomalies:
        for v in a:
            counts[v] = counts.get(v, 0) + 1
    shared_anomalies = sorted(v for v, c in counts.items() if c > 1)

    violations = []
    worst = 0.0
    for i, own in enumerate(normals):
        if not own:
            continue
        for j, other in enumerate(normals):
            if i == j:
                continue
            shared = own & other
            fraction = len(shared) / len(own)
            worst = max(worst, fraction)
            if shared and fraction >= max_normal_overlap:
                violations.append(
                    {
                        "subgraph": i,
                        "other": j,
                        "fraction": fraction,
                        "shared_normals": sorted(shared),
                    }
                )

    return OverlapReport(
        passed=not shared_anomalies and not violations,
        shared_anomalies=shared_anomalies,
        violations=violations,
        max_pairwise_normal_overlap=worst,
    )


def largest_connected_component(
    graph: AttributedGraph, nodes: Iterable[int]
) -> FrozenSet[int]:
    """Largest connected component of the subgraph induced by `nodes`.

    Ties go to the component containing the smallest node id.
    """
    nodes = list(nodes)
    if not nodes:
        raise ConfigurationError("nodes", "Cannot take the component of an empty set.")

    induced, remap = graph.induced_subgraph(nodes)
    _, labels = csgraph.connected_components(induced.adjacency, directed=False)
    sizes = np.bincount(labels)
    largest = np.flatnonzero(sizes == sizes.max())
    # remap is sorted, so the first member of a component is its smallest id
    firsts = [np.flatnonzero(labels == c)[0] for c in largest]
    component = largest[int(np.argmin(firsts))]
    return frozenset(int(v) for v in remap[labels == component])


def _assign_nearest(distances: np.ndarray, k: int) -> List[FrozenSet[int]]:
    """Spans with every shared node kept only by its nearest anchor."""
    members = distances <= k
    shared = np.flatnonzero(members.sum(axis=0) > 1)
    if len(shared):
        masked = np.where(members[:, shared], distances[:, shared], np.inf)
        owners = np.argmin(masked, axis=0)
        members[:, shared] = False
        members[owners, shared] = True
    return [frozenset(int(v) for v in np.flatnonzero(row)) for row in members]


def partition(
    graph: AttributedGraph, ground_truth, config: PartitionConfig
) -> PartitionResult:
    """Partition a graph into `config.m` well-separated connected subgraphs.

    Parameters
    ----------
    graph : AttributedGraph
    ground_truth : array-like of int
    config : PartitionConfig

    Returns
    -------
    PartitionResult
        The subgraphs, in anchor order, and the ``partition_report.json``
        contents.

    Raises
    ------
    PartitionError
        If no attempt succeeds within `config.max_retries`.  The error carries
        the report of the last attempt.

    """
    labels = np.asarray(ground_truth, dtype=np.int64)
    if len(labels) != graph.n:
        raise ConfigurationError(
            "ground_truth", "Expected %d labels, got %d." % (graph.n, len(labels))
        )

    rng = substream(config.seed, "partition")
    last = None
    for attempt in range(config.max_retries):
        try:
            anchors = farthest_point_anchors(graph, config.m, rng)
        except PartitionError as e:
            last = dict(e.report or {}, attempt=attempt, reason=str(e))
            logger.debug("Attempt %d: %s", attempt, e)
            continue

        distances = np.vstack([bfs_hops(graph, a) for a in anchors])
        spans = [frozenset(int(v) for v in np.flatnonzero(row <= config.k)) for row in distances]
        raw = validate_overlap(spans, labels, config.max_normal_overlap)
        if not raw.passed:
            spans = _assign_nearest(distances, config.k)

        components = [largest_connected_component(graph, s) for s in spans]
        final = validate_overlap(components, labels, config.max_normal_overlap)
        sizes = [len(c) for c in components]
        ratio = max(sizes) / min(sizes)

        if final.passed and ratio <= config.max_size_ratio:
            logger.info(
                "Partitioned '%s' into %d subgraphs of sizes %s after %d retries.",
                graph.graph_id,
                config.m,
                sizes,
                attempt,
            )
            return _materialize(graph, labels, components, anchors, final, attempt, config)

        reason = "overlap bound violated" if not final.passed else (
            "size ratio %.2f exceeds %.2f" % (ratio, config.max_size_ratio)
        )
        last = {
            "attempt": attempt,
            "anchors": anchors,
            "sizes": sizes,
            "raw_overlap": raw.to_dict(),
            "overlap": final.to_dict(),
            "reason": reason,
        }
        logger.debug("Attempt %d failed: %s", attempt, reason)

    raise PartitionError(
        "Could not partition '%s' into %d subgraphs after %d attempts: %s"
        % (graph.graph_id, config.m, config.max_retries, last["reason"]),
        report=last,
    )


def _materialize(graph, labels, components, anchors, overlap, attempt, config):
    subgraphs = []
    for i, nodes in enumerate(components):
        sub, remap = graph.induced_subgraph(nodes, graph_id="%s-part%d" % (graph.graph_id, i))
        subgraphs.append(Subgraph(graph=sub, labels=labels[remap], remap=remap))

    report = {
        "m": config.m,
        "k": config.k,
        "seed": config.seed,
        "retries_used": attempt,
        "anchors": anchors,
        "sizes": [s.graph.n for s in subgraphs],
        "anomaly_overlap": len(overlap.shared_anomalies),
        "max_pairwise_normal_overlap": overlap.max_pairwise_normal_overlap,
        "remap": {str(i): s.remap.tolist() for i, s in enumerate(subgraphs)},
    }
    return PartitionResult(subgraphs=subgraphs, report=report)


def write_partition(out_dir: Union[str, Path], result: PartitionResult) -> List[Path]:
    """Write one dataset directory per subgraph and the partition report."""
    out_dir = Path(out_dir)
    paths = [
        save_dataset(out_dir / ("part%d" % i), sub.graph, sub.labels)
        for i, sub in enumerate(result.subgraphs)
    ]
    write_json(out_dir / REPORT, result.report)
    return paths
