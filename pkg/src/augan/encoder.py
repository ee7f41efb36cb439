#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Shared graph encoder and the gradient engine used by every trainer.

The encoder is a stack of symmetric-normalized graph convolutions::

    H(0) = X
    H(k) = ReLU(A_hat H(k-1) W(k))    for k < K
    H(K) = A_hat H(K-1) W(K)

Parameters are handled functionally: every differentiable routine takes the
flat list of parameter tensors ``[W(1), ..., W(K), w, b]`` so that the
episodic trainer can evaluate losses at adapted parameters without touching
the originals.

"""

import logging
import weakref
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .core import AttributedGraph, NodeRef, NormalizedAdjacency
from .exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

_GRAPH_CACHE = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class Batch:
    """Node references with binary labels.

    Attributes
    ----------
    refs : tuple
        Each entry is a :class:`~augan.core.NodeRef` or a
        :class:`~augan.augmentation.PseudoLabelPair`.
    labels : numpy.ndarray
        1 for anomalies, 0 for normal nodes.

    """

    refs: tuple
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(self.refs))
        labels = np.array(self.labels, dtype=np.float64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if len(self.refs) != len(labels):
            raise ShapeError(
                "Batch has %d references but %d labels." % (len(self.refs), len(labels))
            )

    def __len__(self):
        return len(self.refs)

    def __repr__(self):
        return "Batch(size=%d, anomalies=%d)" % (len(self), int(self.labels.sum()))


def _tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value.detach().to(DTYPE).clone()
    return torch.from_numpy(np.array(value, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Weights of the K graph convolution layers.

    Attributes
    ----------
    weights : tuple of torch.Tensor
        Layer k has shape (d, h) for k = 1 and (h, h) afterwards.

    """

    weights: Tuple[torch.Tensor, ...]

    def __post_init__(self):
        weights = tuple(_tensor(w) for w in self.weights)
        if not weights:
            raise ShapeError("An encoder needs at least one layer.")
        for k, w in enumerate(weights, start=1):
            if w.dim() != 2:
                raise ShapeError("Layer %d weight must be a matrix." % k)
            if not torch.isfinite(w).all():
                raise NumericalError("Layer %d weight has non-finite entries." % k)
        for k in range(1, len(weights)):
            if weights[k - 1].shape[1] != weights[k].shape[0]:
                raise ShapeError(
                    "Layer %d expects %d inputs but layer %d produces %d."
                    % (k + 1, weights[k].shape[0], k, weights[k - 1].shape[1])
                )
        object.__setattr__(self, "weights", weights)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> List[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "dims": self.dims,
            "weights": [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderParams":
        params = cls(weights=tuple(np.array(w, dtype=np.float64) for w in data["weights"]))
        if params.dims != list(data.get("dims", params.dims)):
            raise ShapeError("Encoder dims %s do not match the weights." % data["dims"])
        return params


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(
    input_dim: int,
    hidden_dim: int = 64,
    num_layers: int = 2,
    rng: Optional[np.random.Generator] = None,
) -> EncoderParams:
    """Glorot-uniform initialization of a bias-free K-layer encoder."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [input_dim] + [hidden_dim] * num_layers
    return EncoderParams(
        weights=tuple(
            glorot_uniform(rng, dims[k], dims[k + 1]) for k in range(num_layers)
        )
    )


class GraphTensors:
    """Torch views of a graph's features and sparse normalized adjacency."""

    def __init__(self, graph: AttributedGraph, adjacency: NormalizedAdjacency = None):
        adjacency = adjacency or graph.normalized_adjacency
        coo = adjacency.matrix.tocoo()
        indices = np.vstack([coo.row, coo.col]).astype(np.int64)
        self.features = torch.tensor(graph.features, dtype=DTYPE)
        self.adjacency = torch.sparse_coo_tensor(
            torch.from_numpy(indices),
            torch.tensor(coo.data, dtype=DTYPE),
            size=coo.shape,
        ).coalesce()


def graph_tensors(graph: AttributedGraph) -> GraphTensors:
    """Cached :class:`GraphTensors` of a graph."""
    try:
        return _GRAPH_CACHE[graph]
    except KeyError:
        tensors = _GRAPH_CACHE[graph] = GraphTensors(graph)
        return tensors


def propagate(
    adjacency: torch.Tensor, features: torch.Tensor, weights: Sequence[torch.Tensor]
) -> torch.Tensor:
    """Differentiable forward pass of the encoder."""
    h = features
    last = len(weights) - 1
    for k, w in enumerate(weights):
        if h.shape[1] != w.shape[0]:
            raise ShapeError(
                "Layer %d expects %d input features, got %d."
                % (k + 1, w.shape[0], h.shape[1])
            )
        h = torch.sparse.mm(adjacency, h @ w)
        if k < last:
            h = torch.relu(h)
    return h


def encode(
    graph: AttributedGraph, adj: NormalizedAdjacency, params: EncoderParams
) -> np.ndarray:
    """Embed every node of a graph.

    Parameters
    ----------
    graph : AttributedGraph
    adj : NormalizedAdjacency
        Normalized adjacency of `graph`.
    params : EncoderParams

    Returns
    -------
    numpy.ndarray
        Embedding matrix of shape (n, h).

    Raises
    ------
    ShapeError
        If the feature dimension does not match the first layer.

    """
    if adj.n != graph.n:
        raise ShapeError(
            "Adjacency has %d rows but graph '%s' has %d nodes."
            % (adj.n, graph.graph_id, graph.n)
        )
    if adj is graph.normalized_adjacency:
        tensors = graph_tensors(graph)
    else:
        tensors = GraphTensors(graph, adj)
    with torch.no_grad():
        h = propagate(tensors.adjacency, tensors.features, params.weights)
    return h.numpy()


def embed_all(
    graphs: Sequence[AttributedGraph], weights: Sequence[torch.Tensor]
) -> List[torch.Tensor]:
    """Differentiable embeddings of every graph."""
    return [
        propagate(graph_tensors(g).adjacency, graph_tensors(g).features, weights)
        for g in graphs
    ]


def _endpoints(ref):
    """(anchor, partner, lambda) of a batch reference."""
    if hasattr(ref, "partner"):
        return ref.anchor, ref.partner, float(ref.lam)
    ref = NodeRef(*ref)
    return ref, ref, 0.0


def batch_embeddings(
    graphs: Sequence[AttributedGraph],
    weights: Sequence[torch.Tensor],
    refs: Sequence,
) -> torch.Tensor:
    """Differentiable embeddings of the batch references.

    Only the graphs touched by the batch are encoded.  Pseudo-label pairs are
    interpolated on the fly from the current embeddings of both endpoints.

    """
    endpoints = [_endpoints(r) for r in refs]
    touched = sorted(
        {a.graph for a, _, _ in endpoints} | {p.graph for _, p, _ in endpoints}
    )

    offsets = {}
    blocks = []
    total = 0
    for g in touched:
        if not 0 <= g < len(graphs):
            raise ShapeError("Batch references unknown graph %d." % g)
        tensors = graph_tensors(graphs[g])
        blocks.append(propagate(tensors.adjacency, tensors.features, weights))
        offsets[g] = total
        total += graphs[g].n
    stacked = torch.cat(blocks, dim=0)

    anchors = torch.tensor([offsets[a.graph] + a.node for a, _, _ in endpoints])
    partners = torch.tensor([offsets[p.graph] + p.node for _, p, _ in endpoints])
    lam = torch.tensor([l for _, _, l in endpoints], dtype=DTYPE).unsqueeze(1)

    h_a = stacked.index_select(0, anchors)
    h_b = stacked.index_select(0, partners)
    return (1 - lam) * h_a + lam * h_b


def check_finite(value: torch.Tensor, what: str, batch: Optional[Batch] = None):
    if not torch.isfinite(value).all():
        raise NumericalError("Non-finite %s." % what, batch=batch)


def encode_with_gradients(
    graphs: Sequence[AttributedGraph],
    params,
    batch: Batch,
    loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
):
    """Loss of a batch and its exact gradient with respect to all parameters.

    Parameters
    ----------
    graphs : list of AttributedGraph
        The training graphs referenced by the batch.
    params : ModelParams
    batch : Batch
    loss_fn : callable
        ``loss_fn(scores, labels)`` returning a scalar tensor.

    Returns
    -------
    float, ModelParams
        The loss value and a ModelParams holding d(loss)/d(param).

    Raises
    ------
    NumericalError
        If the loss is not finite.  The error carries the batch.

    """
    from .detector import ModelParams, batch_loss

    tensors = [t.clone().requires_grad_(True) for t in params.tensors()]
    loss = batch_loss(graphs, tensors, params.num_layers, batch, loss_fn)
    check_finite(loss, "loss", batch)

    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]
    return float(loss), ModelParams.from_tensors(grads, params.num_layers)
