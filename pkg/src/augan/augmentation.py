#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Cross-graph anomaly augmentation and normal-distribution augmentation.

Anomaly augmentation pairs every labeled train anomaly (the anchor) with
nodes of *other* training graphs that lie unusually close to it in the
latent space, and emits pseudo-labels interpolated between the two.  Only the
(anchor, partner, lambda) triple is stored; the synthetic representation is
recomputed from current embeddings whenever a loss is evaluated.

Normal-distribution augmentation builds "scenes": the merged anomaly set
together with a random subset of the merged normal pool.

"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Sequence, Tuple, Union

import numpy as np

from .core import AttributedGraph, NodeRef, NodeRoles
from .exceptions import ConfigurationError, DegenerateInputError, ShapeError
from .utils.misc import round_half_away, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoLabelPair:
    """A synthetic anomaly between an anchor and a node of another graph.

    Attributes
    ----------
    anchor : NodeRef
        A labeled train anomaly.
    partner : NodeRef
        A member of the anchor's high-confidence set, in a different graph.
    lam : float
        Interpolation weight in the open interval (0, 1).
    eta : float
        Threshold in effect when the partner was selected.
    distance : float
        Squared distance between anchor and partner at selection time.

    """

    anchor: NodeRef
    partner: NodeRef
    lam: float
    eta: float = float("nan")
    distance: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "anchor", NodeRef(*map(int, self.anchor)))
        object.__setattr__(self, "partner", NodeRef(*map(int, self.partner)))
        if self.anchor.graph == self.partner.graph:
            raise ConfigurationError(
                "partner", "Anchor and partner must belong to different graphs."
            )
        if not 0 < self.lam < 1:
            raise ConfigurationError(
                "lambda", "Must lie in the open interval (0, 1), got %r." % self.lam
            )

    def to_dict(self) -> dict:
        return {
            "anchor": list(self.anchor),
            "partner": list(self.partner),
            "lambda": float(self.lam),
            "eta": float(self.eta),
            "distance": float(self.distance),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PseudoLabelPair":
        return cls(
            anchor=NodeRef(*data["anchor"]),
            partner=NodeRef(*data["partner"]),
            lam=data["lambda"],
            eta=data.get("eta", float("nan")),
            distance=data.get("distance", float("nan")),
        )


@dataclass(frozen=True)
class Scene:
    """One normal-distribution scene.

    Attributes
    ----------
    anomaly_refs : tuple
        Every member of S_merge: labeled anomaly references and pseudo-labels.
    normal_refs : tuple of NodeRef
        The normal references that survived masking.
    mask_seed : int
        Seed of the mask; the same seed reproduces the same scene.

    """

    anomaly_refs: tuple
    normal_refs: tuple
    mask_seed: int

    def __post_init__(self):
        object.__setattr__(self, "anomaly_refs", tuple(self.anomaly_refs))
        object.__setattr__(self, "normal_refs", tuple(self.normal_refs))


def squared_distance(h_a, h_b) -> float:
    """Squared Euclidean distance between two embeddings."""
    h_a = np.asarray(h_a, dtype=np.float64)
    h_b = np.asarray(h_b, dtype=np.float64)
    if h_a.shape != h_b.shape:
        raise ShapeError(
            "Cannot compare embeddings of shape %s and %s." % (h_a.shape, h_b.shape)
        )
    diff = h_a - h_b
    return float(diff @ diff)


def _row_distances(h, matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(h):
        raise ShapeError(
            "Embeddings of width %d cannot be compared with a matrix of shape %s."
            % (len(h), matrix.shape)
        )
    diff = matrix - h
    return np.einsum("ij,ij->i", diff, diff)


def _node(anchor) -> int:
    return anchor.node if isinstance(anchor, tuple) else int(anchor)


def threshold_eta(anchor, own_graph_embeddings, sigma: float) -> float:
    """Selection threshold of an anchor.

    ``eta = sigma * min R(anchor, v)`` over every other node v of the
    anchor's own graph.  The anchor itself is excluded; other labeled
    anomalies are not.

    Parameters
    ----------
    anchor : NodeRef or int
    own_graph_embeddings : numpy.ndarray
        Embeddings of the anchor's graph, shape (n, h).
    sigma : float

    Returns
    -------
    float

    Raises
    ------
    DegenerateInputError
        If the anchor's graph has a single node.

    """
    embeddings = np.asarray(own_graph_embeddings, dtype=np.float64)
    node = _node(anchor)
    if len(embeddings) < 2:
        raise DegenerateInputError(
            "Threshold is undefined for a graph with %d node(s)." % len(embeddings)
        )
    distances = _row_distances(embeddings[node], embeddings)
    distances[node] = np.inf
    return float(sigma * distances.min())


def _candidates(anchor: NodeRef, embeddings, eta: float):
    h = np.asarray(embeddings[anchor.graph], dtype=np.float64)[anchor.node]
    refs, distances = [], []
    for j, matrix in enumerate(embeddings):
        if j == anchor.graph:
            continue
        dist = _row_distances(h, matrix)
        for v in np.flatnonzero(dist < eta):
            refs.append(NodeRef(j, int(v)))
            distances.append(float(dist[v]))
    return refs, distances


def high_confidence_set(anchor: NodeRef, embeddings, eta: float) -> FrozenSet[NodeRef]:
    """Nodes of other graphs strictly closer to the anchor than `eta`.

    Parameters
    ----------
    anchor : NodeRef
    embeddings : list of numpy.ndarray
        Embeddings of every training graph, indexed by graph.  The anchor's
        own graph is skipped.
    eta : float

    Returns
    -------
    frozenset of NodeRef

    """
    refs, _ = _candidates(NodeRef(*anchor), embeddings, eta)
    return frozenset(refs)


def interpolate(h_a, h_b, lam: float) -> np.ndarray:
    """``(1 - lam) * h_a + lam * h_b``."""
    if not 0 <= lam <= 1:
        raise ConfigurationError("lambda", "Must lie in [0, 1], got %r." % lam)
    h_a = np.asarray(h_a, dtype=np.float64)
    h_b = np.asarray(h_b, dtype=np.float64)
    if h_a.shape != h_b.shape:
        raise ShapeError(
            "Cannot interpolate embeddings of shape %s and %s."
            % (h_a.shape, h_b.shape)
        )
    return (1 - lam) * h_a + lam * h_b


def generate_pseudo_labels(
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    embeddings: Sequence[np.ndarray],
    sigma: float,
    alpha: int,
    rng: np.random.Generator,
) -> List[PseudoLabelPair]:
    """Select pseudo-labels for every labeled train anomaly.

    Anchors are visited graph by graph in ascending node order.  An anchor
    whose high-confidence set is non-empty emits `alpha` pairs, each with a
    partner drawn uniformly from the set and a weight drawn uniformly from
    (0, 1).  Anchors with an empty set emit nothing.

    Parameters
    ----------
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    embeddings : list of numpy.ndarray
        Current embeddings of every graph.
    sigma : float
    alpha : int
    rng : numpy.random.Generator

    Returns
    -------
    list of PseudoLabelPair

    Raises
    ------
    ConfigurationError
        If fewer than two graphs are given.

    """
    if len(graphs) < 2:
        raise ConfigurationError(
            "graphs",
            "Anomaly augmentation requires ≥ 2 training graphs, got %d." % len(graphs),
        )
    if not len(graphs) == len(roles) == len(embeddings):
        raise ShapeError("Expected one roles object and embedding matrix per graph.")

    pairs = []
    num_anchors = 0
    for g, r in enumerate(roles):
        for v in sorted(r.anomaly_train):
            num_anchors += 1
            anchor = NodeRef(g, v)
            eta = threshold_eta(anchor, embeddings[g], sigma)
            refs, distances = _candidates(anchor, embeddings, eta)
            if not refs:
                continue
            for _ in range(alpha):
                i = int(rng.integers(len(refs)))
                lam = rng.uniform()
                while lam == 0.0:
                    lam = rng.uniform()
                pairs.append(
                    PseudoLabelPair(anchor, refs[i], lam, eta=eta, distance=distances[i])
                )

    logger.info(
        "Generated %d pseudo-labels from %d anchors (sigma=%g, alpha=%d).",
        len(pairs),
        num_anchors,
        sigma,
        alpha,
    )
    return pairs


def merge_training_data(
    roles: Sequence[NodeRoles], pseudo: Sequence[PseudoLabelPair]
) -> Tuple[List, List[NodeRef]]:
    """Merge all graphs' train anomalies with the pseudo-labels.

    Returns
    -------
    list, list of NodeRef
        S_merge (labeled anomaly references followed by pseudo-labels) and
        N_merge (train normal references).  No reference appears twice.

    """
    s_merge = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.anomaly_train)]
    s_merge = list(dict.fromkeys(s_merge + list(pseudo)))
    n_merge = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.normal_train)]
    return s_merge, n_merge


def make_scene(s_merge, n_merge, rho: float, rng: np.random.Generator) -> Scene:
    """Mask a random fraction `rho` of the normal pool.

    Exactly ``round(rho * |N_merge|)`` normal references are removed
    (halves rounded away from zero); the anomaly references are kept.

    Raises
    ------
    ConfigurationError
        If masking would leave no normal reference.

    """
    if not 0 <= rho < 1:
        raise ConfigurationError("rho", "Must lie in [0, 1), got %r." % rho)
    n_merge = list(n_merge)
    num_masked = round_half_away(rho * len(n_merge))
    if num_masked >= len(n_merge):
        raise ConfigurationError(
            "rho",
            "Masking %d of %d normal nodes would empty the normal pool."
            % (num_masked, len(n_merge)),
        )

    mask_seed = int(rng.integers(2**63 - 1))
    kept = np.random.default_rng(mask_seed).choice(
        len(n_merge), size=len(n_merge) - num_masked, replace=False
    )
    return Scene(
        anomaly_refs=s_merge,
        normal_refs=[n_merge[i] for i in np.sort(kept)],
        mask_seed=mask_seed,
    )


def write_pseudo_labels(path: Union[str, Path], pairs: Sequence[PseudoLabelPair]) -> Path:
    """Write the audit file ``pseudo_labels.json``."""
    return write_json(path, [p.to_dict() for p in pairs])
