#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Graph data structures, dataset I/O, node-role splitting and BFS utilities."""

import csv
import logging
from collections import namedtuple
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse import csgraph

from .exceptions import ConfigurationError, DatasetError, ValidationError
from .utils.misc import read_json, round_half_away, substream, write_json

logger = logging.getLogger(__name__)

META = "meta.json"
NODES = "nodes.csv"
EDGES = "edges.csv"
FEATURES = "features.csv"
SPLITS = "splits.json"

# Fraction of the non-labeled nodes assigned to the train+validation pool; the
# remainder is held out for testing (the 4:2:4 protocol).
POOL_FRACTION = 0.6
TRAIN_FRACTION = 4 / 6

NodeRef = namedtuple("NodeRef", ["graph", "node"])
NodeRef.__doc__ = """Reference to node `node` of training graph number `graph`."""


def _canonical_edges(edges, n):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = int(np.flatnonzero(((edges < 0) | (edges >= n)).any(axis=1))[0])
        raise ValidationError(
            "edges", bad + 1, "Endpoint out of range [0, %d): %s" % (n, edges[bad])
        )

    edges = edges[edges[:, 0] != edges[:, 1]]
    edges = np.sort(edges, axis=1)
    if len(edges):
        edges = np.unique(edges, axis=0)
    return edges.reshape(-1, 2)


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """An undirected, unweighted graph with a dense node-attribute matrix.

    Edges are canonicalized on construction: self-loops are dropped, every
    pair is stored once as ``(src, dst)`` with ``src < dst`` and the list is
    sorted.  Instances are immutable and hash by identity.

    Attributes
    ----------
    graph_id : str
    n : int
        Number of nodes.
    edges : numpy.ndarray
        Integer array of shape (num_edges, 2).
    features : numpy.ndarray
        Float64 array of shape (n, d).

    """

    graph_id: str
    n: int
    edges: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        features = np.array(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(n, -1)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValidationError(
                "graph '%s'" % self.graph_id,
                None,
                "Expected %d feature rows, got shape %s." % (n, features.shape),
            )

        object.__setattr__(self, "n", n)
        object.__setattr__(self, "features", _readonly(features))
        object.__setattr__(self, "edges", _readonly(_canonical_edges(self.edges, n)))

    def __repr__(self):
        return "AttributedGraph(graph_id=%r, n=%d, num_edges=%d, d=%d)" % (
            self.graph_id,
            self.n,
            self.num_edges,
            self.d,
        )

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix (no self-loops)."""
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def normalized_adjacency(self) -> "NormalizedAdjacency":
        return normalize_adjacency(self)

    def neighbors(self, node: int) -> np.ndarray:
        adj = self.adjacency
        return adj.indices[adj.indptr[node] : adj.indptr[node + 1]]

    def induced_subgraph(
        self, nodes: Iterable[int], graph_id: Optional[str] = None
    ) -> Tuple["AttributedGraph", np.ndarray]:
        """Materialize the subgraph induced by `nodes` with dense new ids.

        Parameters
        ----------
        nodes : iterable of int
        graph_id : str, optional

        Returns
        -------
        AttributedGraph, numpy.ndarray
            The subgraph and the remap table: entry ``i`` is the original id of
            subgraph node ``i``.

        """
        remap = np.array(sorted(set(int(v) for v in nodes)), dtype=np.int64)
        lookup = np.full(self.n, -1, dtype=np.int64)
        lookup[remap] = np.arange(len(remap))

        kept = (lookup[self.edges[:, 0]] >= 0) & (lookup[self.edges[:, 1]] >= 0)
        edges = lookup[self.edges[kept]]

        subgraph = AttributedGraph(
            graph_id=graph_id or "%s-sub" % self.graph_id,
            n=len(remap),
            edges=edges,
            features=self.features[remap],
        )
        return subgraph, _readonly(remap)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """The operator D^{-1/2} (A + I) D^{-1/2} of a graph, stored sparse.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Symmetric n x n matrix with a strictly positive diagonal.

    """

    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class NodeRoles:
    """Partition of one graph's nodes into labeled anomalies, normal pool and test.

    Attributes
    ----------
    labeled_anomalies : frozenset of int
        The labeled anomaly set S^L.
    normal_pool : frozenset of int
        The presumed-normal pool V_norm (may hide unlabeled anomalies).
    test_nodes : frozenset of int
    anomaly_train, anomaly_val : frozenset of int
        4:2 split of `labeled_anomalies`.
    normal_train, normal_val : frozenset of int
        4:2 split of `normal_pool`.
    ground_truth : numpy.ndarray
        Binary label per node, for evaluation only.
    seed : int or None

    """

    labeled_anomalies: frozenset
    normal_pool: frozenset
    test_nodes: frozenset
    anomaly_train: frozenset
    anomaly_val: frozenset
    normal_train: frozenset
    normal_val: frozenset
    ground_truth: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for name in (
            "labeled_anomalies",
            "normal_pool",
            "test_nodes",
            "anomaly_train",
            "anomaly_val",
            "normal_train",
            "normal_val",
        ):
            object.__setattr__(
                self, name, frozenset(int(v) for v in getattr(self, name))
            )
        object.__setattr__(
            self, "ground_truth", _readonly(np.array(self.ground_truth, dtype=np.int64))
        )
        self.validate()

    def validate(self):
        """Check the partition invariants.

        Raises
        ------
        ConfigurationError
            If role sets overlap, miss nodes or contradict the ground truth.

        """
        n = len(self.ground_truth)
        sets = (self.labeled_anomalies, self.normal_pool, self.test_nodes)
        if sum(len(s) for s in sets) != n or frozenset().union(*sets) != frozenset(
            range(n)
        ):
            raise ConfigurationError(
                "roles", "Role sets must partition the %d nodes of the graph." % n
            )
        if (
            self.anomaly_train | self.anomaly_val != self.labeled_anomalies
            or self.anomaly_train & self.anomaly_val
        ):
            raise ConfigurationError(
                "anomaly_train", "Train/validation anomalies must split S^L."
            )
        if (
            self.normal_train | self.normal_val != self.normal_pool
            or self.normal_train & self.normal_val
        ):
            raise ConfigurationError(
                "normal_train", "Train/validation normals must split the normal pool."
            )
        if any(self.ground_truth[v] != 1 for v in self.labeled_anomalies):
            raise ConfigurationError(
                "labeled_anomalies", "Every labeled anomaly must be a true anomaly."
            )

    @property
    def n(self) -> int:
        return len(self.ground_truth)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "labeled_anomalies": sorted(self.labeled_anomalies),
            "anomaly_train": sorted(self.anomaly_train),
            "anomaly_val": sorted(self.anomaly_val),
            "normal_train": sorted(self.normal_train),
            "normal_val": sorted(self.normal_val),
            "test": sorted(self.test_nodes),
        }

    @classmethod
    def from_dict(cls, data: dict, ground_truth) -> "NodeRoles":
        normal_train = frozenset(data["normal_train"])
        normal_val = frozenset(data["normal_val"])
        return cls(
            labeled_anomalies=data["labeled_anomalies"],
            normal_pool=normal_train | normal_val,
            test_nodes=data["test"],
            anomaly_train=data["anomaly_train"],
            anomaly_val=data["anomaly_val"],
            normal_train=normal_train,
            normal_val=normal_val,
            ground_truth=ground_truth,
            seed=data.get("seed"),
        )


def _read_rows(path: Path, width: Optional[int], dtype) -> np.ndarray:
    """Read a header-less comma separated file into a 2-D array.

    Every row must have `width` fields (or the width of the first row when
    `width` is None).  Errors name the 1-based row number.

    """
    try:
        raw = pd.read_csv(
            path,
            header=None,
            sep="\x01",
            names=["line"],
            dtype=str,
            quoting=csv.QUOTE_NONE,
            skip_blank_lines=True,
        )["line"]
    except pd.errors.EmptyDataError:
        return np.empty((0, width or 0), dtype=dtype)

    fields = raw.str.split(",", expand=False)
    counts = fields.str.len().to_numpy()
    if width is None:
        width = int(counts[0]) if len(counts) else 0

    ragged = np.flatnonzero(counts != width)
    if len(ragged):
        row = int(ragged[0])
        raise ValidationError(
            path.name, row + 1, "Expected %d values, found %d." % (width, counts[row])
        )

    integral = np.issubdtype(dtype, np.integer)
    rows = np.empty((len(fields), width), dtype=dtype)
    for i, values in enumerate(fields):
        try:
            parsed = np.array([v.strip() for v in values], dtype=np.float64)
        except ValueError:
            raise ValidationError(path.name, i + 1, "Non-numeric value in %s." % values)
        if integral and not (
            np.isfinite(parsed).all() and np.array_equal(parsed, np.floor(parsed))
        ):
            raise ValidationError(
                path.name, i + 1, "Expected integers, found %s." % ",".join(values)
            )
        rows[i] = parsed
    return rows


def load_dataset(directory: Union[str, Path]) -> Tuple[AttributedGraph, np.ndarray]:
    """Load a graph and its labels from a dataset directory.

    The directory holds ``meta.json``, ``nodes.csv`` (``node_id,label``),
    ``edges.csv`` (``src,dst``) and ``features.csv`` (one row per node), all
    without headers.  Directed edges are symmetrized and duplicates removed.

    Parameters
    ----------
    directory : str or pathlib.Path

    Returns
    -------
    AttributedGraph, numpy.ndarray
        The validated graph and the 0/1 label of every node.

    Raises
    ------
    DatasetError
        If a file is missing.
    ValidationError
        If a row is malformed, an id is out of range or a label is not 0/1.

    """
    directory = Path(directory)
    for name in (META, NODES, EDGES, FEATURES):
        if not (directory / name).is_file():
            raise DatasetError(directory / name)

    meta = read_json(directory / META)
    for key in ("name", "num_nodes", "feature_dim"):
        if key not in meta:
            raise ValidationError(META, None, "Missing key '%s'." % key)
    n = int(meta["num_nodes"])
    d = int(meta["feature_dim"])

    nodes = _read_rows(directory / NODES, 2, np.int64)
    if len(nodes) != n:
        raise ValidationError(
            NODES, None, "Expected %d nodes, found %d." % (n, len(nodes))
        )
    out_of_order = np.flatnonzero(nodes[:, 0] != np.arange(n))
    if len(out_of_order):
        row = int(out_of_order[0])
        raise ValidationError(
            NODES, row + 1, "Node ids must be dense and ascending from 0."
        )
    bad_labels = np.flatnonzero(~np.isin(nodes[:, 1], (0, 1)))
    if len(bad_labels):
        row = int(bad_labels[0])
        raise ValidationError(
            NODES, row + 1, "Label must be 0 or 1, got %d." % nodes[row, 1]
        )

    edges = _read_rows(directory / EDGES, 2, np.int64)
    out_of_range = np.flatnonzero(((edges < 0) | (edges >= n)).any(axis=1))
    if len(out_of_range):
        row = int(out_of_range[0])
        raise ValidationError(
            EDGES,
            row + 1,
            "Node id out of range [0, %d): %s." % (n, edges[row].tolist()),
        )

    features = _read_rows(directory / FEATURES, d, np.float64)
    if len(features) != n:
        raise ValidationError(
            FEATURES, None, "Expected %d rows, found %d." % (n, len(features))
        )

    graph = AttributedGraph(
        graph_id=str(meta["name"]), n=n, edges=edges, features=features
    )
    labels = _readonly(nodes[:, 1].copy())

    logger.info(
        "Loaded '%s': %d nodes, %d edges, %d anomalies.",
        graph.graph_id,
        graph.n,
        graph.num_edges,
        int(labels.sum()),
    )
    return graph, labels


def save_dataset(
    directory: Union[str, Path],
    graph: AttributedGraph,
    labels: Sequence[int],
    name: Optional[str] = None,
) -> Path:
    """Write a graph and its labels in the format read by :func:`load_dataset`.

    Floats are written with 17 significant digits so a save/load round trip
    reproduces the features exactly.

    Parameters
    ----------
    directory : str or pathlib.Path
        Created if necessary.
    graph : AttributedGraph
    labels : array-like of int
    name : str, optional
        Dataset name recorded in meta.json.  Defaults to the graph id.

    Returns
    -------
    pathlib.Path

    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = np.asarray(labels, dtype=np.int64)

    write_json(
        directory / META,
        {
            "name": name or graph.graph_id,
            "num_nodes": graph.n,
            "num_edges": graph.num_edges,
            "feature_dim": graph.d,
        },
    )
    pd.DataFrame({"node_id": np.arange(graph.n), "label": labels}).to_csv(
        directory / NODES, header=False, index=False
    )
    pd.DataFrame(graph.edges).to_csv(directory / EDGES, header=False, index=False)
    pd.DataFrame(graph.features).to_csv(
        directory / FEATURES, header=False, index=False, float_format="%.17g"
    )
    return directory


def save_roles(directory: Union[str, Path], roles: NodeRoles) -> Path:
    """Write ``splits.json`` for a dataset directory."""
    return write_json(Path(directory) / SPLITS, roles.to_dict())


def load_roles(directory: Union[str, Path], labels) -> Optional[NodeRoles]:
    """Read ``splits.json`` if the dataset directory has one."""
    path = Path(directory) / SPLITS
    if not path.is_file():
        return None
    return NodeRoles.from_dict(read_json(path), labels)


def normalize_adjacency(graph: AttributedGraph) -> NormalizedAdjacency:
    """Symmetric normalization of the adjacency with self-loops.

    Parameters
    ----------
    graph : AttributedGraph

    Returns
    -------
    NormalizedAdjacency
        D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of A + I.

    """
    a_hat = graph.adjacency + sp.identity(graph.n, dtype=np.float64, format="csr")
    degrees = np.asarray(a_hat.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degrees))
    matrix = sp.csr_matrix(d_inv_sqrt @ a_hat @ d_inv_sqrt)
    matrix.sort_indices()
    return NormalizedAdjacency(matrix=matrix)


def _split_train_val(nodes: np.ndarray, rng: np.random.Generator):
    shuffled = rng.permutation(np.asarray(nodes, dtype=np.int64))
    n_train = round_half_away(len(shuffled) * TRAIN_FRACTION)
    return shuffled[:n_train], shuffled[n_train:]


def split_roles(
    graph: AttributedGraph, ground_truth, num_labeled_anomalies: int, seed: int
) -> NodeRoles:
    """Assign node roles following the 4:2:4 protocol.

    S^L is sampled uniformly from the true anomalies.  The remaining nodes are
    shuffled and split 60/40 into the normal pool and the test set.  S^L and
    the normal pool are each split 4:2 into train and validation parts.  Each
    draw uses its own sub-stream of `seed`, named after the graph id so graphs
    of equal size get independent splits.

    Parameters
    ----------
    graph : AttributedGraph
    ground_truth : array-like of int
    num_labeled_anomalies : int
    seed : int

    Returns
    -------
    NodeRoles

    Raises
    ------
    ConfigurationError
        If the graph has fewer anomalies than requested.

    """
    labels = np.asarray(ground_truth, dtype=np.int64)
    if len(labels) != graph.n:
        raise ConfigurationError(
            "ground_truth", "Expected %d labels, got %d." % (graph.n, len(labels))
        )

    anomalies = np.flatnonzero(labels == 1)
    if num_labeled_anomalies < 0 or num_labeled_anomalies > len(anomalies):
        raise ConfigurationError(
            "num_labeled_anomalies",
            "Requested %d labeled anomalies but graph '%s' has %d anomalies."
            % (num_labeled_anomalies, graph.graph_id, len(anomalies)),
        )

    labeled = substream(seed, "split.labeled." + graph.graph_id).choice(
        anomalies, size=num_labeled_anomalies, replace=False
    )
    rest = np.setdiff1d(np.arange(graph.n), labeled)
    shuffled = substream(seed, "split.nodes." + graph.graph_id).permutation(rest)
    n_pool = round_half_away(len(rest) * POOL_FRACTION)
    pool, test = shuffled[:n_pool], shuffled[n_pool:]

    anomaly_train, anomaly_val = _split_train_val(
        np.sort(labeled), substream(seed, "split.anomalies." + graph.graph_id)
    )
    normal_train, normal_val = _split_train_val(
        np.sort(pool), substream(seed, "split.normals." + graph.graph_id)
    )

    roles = NodeRoles(
        labeled_anomalies=labeled,
        normal_pool=pool,
        test_nodes=test,
        anomaly_train=anomaly_train,
        anomaly_val=anomaly_val,
        normal_train=normal_train,
        normal_val=normal_val,
        ground_truth=labels,
        seed=seed,
    )
    logger.debug(
        "Split '%s': |S^L|=%d |V_norm|=%d |V_test|=%d",
        graph.graph_id,
        len(roles.labeled_anomalies),
        len(roles.normal_pool),
        len(roles.test_nodes),
    )
    return roles


def bfs_hops(graph: AttributedGraph, source: int) -> np.ndarray:
    """Unweighted hop distance from `source` to every node.

    Parameters
    ----------
    graph : AttributedGraph
    source : int

    Returns
    -------
    numpy.ndarray
        Float array of length n; unreachable nodes are ``inf``.

    """
    if not 0 <= source < graph.n:
        raise ConfigurationError(
            "source", "Node %d is not in graph '%s'." % (source, graph.graph_id)
        )
    return csgraph.shortest_path(
        graph.adjacency, method="D", directed=False, unweighted=True, indices=source
    )
