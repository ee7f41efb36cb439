#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Anomaly-scoring head, training losses and pooled (DeepAll) training."""

import logging
from collections import namedtuple
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .config import TrainConfig
from .core import AttributedGraph, NodeRef, NodeRoles
from .encoder import (
    DTYPE,
    Batch,
    EncoderParams,
    _tensor,
    batch_embeddings,
    check_finite,
    encode,
    glorot_uniform,
    init_encoder,
)
from .exceptions import (
    ConfigurationError,
    DatasetError,
    MetricUndefinedError,
    NumericalError,
    ShapeError,
)
from .utils.decorators import experimental
from .utils.misc import JsonLinesLog, read_json, substream, write_json

logger = logging.getLogger(__name__)

LossFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

# Within-graph interpolation used by the latent oversampling baseline.  Shares
# the (anchor, partner, lam) layout of PseudoLabelPair.
SyntheticAnomaly = namedtuple("SyntheticAnomaly", ["anchor", "partner", "lam"])


@dataclass(frozen=True, eq=False)
class DetectorParams:
    """Linear score head ``s = w . h + b``.

    Attributes
    ----------
    weight : torch.Tensor
        Vector of length h.
    bias : torch.Tensor
        Scalar.

    """

    weight: torch.Tensor
    bias: torch.Tensor

    def __post_init__(self):
        weight = _tensor(self.weight).reshape(-1)
        bias = _tensor(self.bias).reshape(())
        if not (torch.isfinite(weight).all() and torch.isfinite(bias)):
            raise NumericalError("Score head has non-finite entries.")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Encoder and score head: the parameters theta of a detector.

    Attributes
    ----------
    encoder : EncoderParams
    detector : DetectorParams

    """

    encoder: EncoderParams
    detector: DetectorParams

    def __post_init__(self):
        if self.encoder.hidden_dim != self.detector.input_dim:
            raise ShapeError(
                "Encoder produces %d features but the score head expects %d."
                % (self.encoder.hidden_dim, self.detector.input_dim)
            )

    @property
    def num_layers(self) -> int:
        return self.encoder.num_layers

    def tensors(self) -> List[torch.Tensor]:
        """Flat parameter list ``[W(1), ..., W(K), w, b]``."""
        return list(self.encoder.weights) + [self.detector.weight, self.detector.bias]

    @classmethod
    def from_tensors(cls, tensors: Sequence[torch.Tensor], num_layers: int):
        tensors = list(tensors)
        return cls(
            encoder=EncoderParams(weights=tuple(tensors[:num_layers])),
            detector=DetectorParams(weight=tensors[num_layers], bias=tensors[num_layers + 1]),
        )

    def score_graph(self, graph: AttributedGraph) -> np.ndarray:
        """Anomaly score of every node of `graph`."""
        if graph.d != self.encoder.input_dim:
            raise ShapeError(
                "Graph '%s' has %d features but the model expects %d."
                % (graph.graph_id, graph.d, self.encoder.input_dim)
            )
        embeddings = encode(graph, graph.normalized_adjacency, self.encoder)
        return score(embeddings, self.detector)

    def to_dict(self, fingerprint: Optional[str] = None) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "detector": {
                "weights": self.detector.weight.tolist(),
                "bias": float(self.detector.bias),
            },
            "config_fingerprint": fingerprint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return cls(
            encoder=EncoderParams.from_dict(data["encoder"]),
            detector=DetectorParams(
                weight=np.array(data["detector"]["weights"], dtype=np.float64),
                bias=np.float64(data["detector"]["bias"]),
            ),
        )

    def save(self, path: Union[str, Path], fingerprint: Optional[str] = None) -> Path:
        """Write ``model.json``."""
        return write_json(path, self.to_dict(fingerprint))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelParams":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(path, "Model file '%s' could not be found." % path)
        return cls.from_dict(read_json(path))


def init_model(
    input_dim: int, config: TrainConfig, rng: Optional[np.random.Generator] = None
) -> ModelParams:
    """Seeded Glorot initialization of encoder and score head."""
    rng = rng if rng is not None else substream(config.seed, "model.init")
    encoder = init_encoder(input_dim, config.hidden_dim, config.num_layers, rng)
    weight = glorot_uniform(rng, config.hidden_dim, 1).ravel()
    return ModelParams(encoder, DetectorParams(weight=weight, bias=0.0))


def apply_head(embeddings: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor):
    return embeddings @ weight + bias


def score(embeddings, params: DetectorParams) -> np.ndarray:
    """Score embeddings with the linear head.

    Parameters
    ----------
    embeddings : array-like
        Matrix of shape (n, h).
    params : DetectorParams

    Returns
    -------
    numpy.ndarray
        ``s_i = w . h_i + b`` for every row.

    """
    h = _tensor(embeddings)
    if h.dim() != 2 or h.shape[1] != params.input_dim:
        raise ShapeError(
            "Embeddings of shape %s do not match a score head of width %d."
            % (tuple(h.shape), params.input_dim)
        )
    with torch.no_grad():
        return apply_head(h, params.weight, params.bias).numpy()


def _as_tensor(values) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def deviation_loss(scores, labels, ref_mean: float, ref_std: float, margin: float = 5.0):
    """Deviation loss with a Gaussian reference.

    ``dev = (s - ref_mean) / ref_std``; normal nodes pay ``|dev|`` and
    anomalies pay ``max(0, margin - dev)``.  The loss is the batch mean.

    Parameters
    ----------
    scores : array-like or torch.Tensor
    labels : array-like or torch.Tensor
        0/1 labels.
    ref_mean : float
    ref_std : float
        Must be positive.
    margin : float

    Returns
    -------
    torch.Tensor
        Scalar loss.

    Raises
    ------
    ConfigurationError
        If `ref_std` is not positive.

    """
    if not ref_std > 0:
        raise ConfigurationError("ref_std", "Reference deviation must be positive.")
    s = _as_tensor(scores)
    y = _as_tensor(labels)
    dev = (s - ref_mean) / ref_std
    per_item = (1 - y) * dev.abs() + y * torch.clamp(margin - dev, min=0)
    return per_item.mean()


def bce_loss(scores, labels):
    """Mean binary cross-entropy of ``sigmoid(scores)`` computed from logits."""
    return torch.nn.functional.binary_cross_entropy_with_logits(
        _as_tensor(scores), _as_tensor(labels)
    )


def sample_reference(rng: np.random.Generator, k: int = 5000) -> Tuple[float, float]:
    """Mean and standard deviation of `k` standard-normal reference scores."""
    if k < 2:
        raise ConfigurationError("ref_samples", "At least 2 samples are required.")
    samples = rng.standard_normal(k)
    return float(samples.mean()), float(samples.std())


def make_loss(
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    reference: Optional[Tuple[float, float]] = None,
) -> LossFn:
    """Loss selected by ``config.loss``.

    For the deviation loss the reference is drawn from `rng` unless an
    explicit `reference` (mean, std) is given.

    """
    if config.loss == "bce":
        return bce_loss
    if reference is None:
        rng = rng if rng is not None else substream(config.seed, "loss.reference")
        reference = sample_reference(rng, config.ref_samples)
    ref_mean, ref_std = reference
    return partial(
        deviation_loss, ref_mean=ref_mean, ref_std=ref_std, margin=config.margin
    )


def batch_loss(
    graphs: Sequence[AttributedGraph],
    tensors: Sequence[torch.Tensor],
    num_layers: int,
    batch: Batch,
    loss_fn: LossFn,
) -> torch.Tensor:
    """Differentiable loss of a batch at the flat parameters `tensors`."""
    h = batch_embeddings(graphs, tensors[:num_layers], batch.refs)
    scores = apply_head(h, tensors[num_layers], tensors[num_layers + 1])
    return loss_fn(scores, torch.as_tensor(np.array(batch.labels)))


def model_objective(
    graphs: Sequence[AttributedGraph], num_layers: int, loss_fn: LossFn
) -> Callable[[Sequence[torch.Tensor], Batch], torch.Tensor]:
    """Objective ``f(tensors, batch)`` over the flat parameter list."""

    def objective(tensors, batch):
        return batch_loss(graphs, tensors, num_layers, batch, loss_fn)

    return objective


def sample_balanced(
    anomaly_refs: Sequence, normal_refs: Sequence, t: int, rng: np.random.Generator
) -> Batch:
    """Draw ``t/2`` anomaly and ``t/2`` normal references.

    A side is sampled without replacement when it has at least ``t/2``
    members and with replacement otherwise.

    """
    if not anomaly_refs:
        raise ConfigurationError("anomalies", "Cannot sample from an empty anomaly set.")
    if not normal_refs:
        raise ConfigurationError("normals", "Cannot sample from an empty normal set.")

    half = t // 2
    picked = []
    for refs in (anomaly_refs, normal_refs):
        idx = rng.choice(len(refs), size=half, replace=len(refs) < half)
        picked.extend(refs[i] for i in idx)
    return Batch(refs=picked, labels=[1] * half + [0] * half)


def train_refs(roles: Sequence[NodeRoles]) -> Tuple[List[NodeRef], List[NodeRef]]:
    """Pooled train anomalies and train normals of all graphs, in canonical order."""
    anomalies = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.anomaly_train)]
    normals = [NodeRef(g, v) for g, r in enumerate(roles) for v in sorted(r.normal_train)]
    return anomalies, normals


def validation_auc(
    model: ModelParams, graphs: Sequence[AttributedGraph], roles: Sequence[NodeRoles]
) -> Optional[float]:
    """AUC of un-adapted parameters on the pooled validation nodes.

    Validation anomalies count as positives and validation normal-pool nodes
    as negatives.  Returns None when either side is empty.

    """
    from .evaluation import auc

    scores, labels = [], []
    for graph, r in zip(graphs, roles):
        if not (r.anomaly_val or r.normal_val):
            continue
        s = model.score_graph(graph)
        nodes = sorted(r.anomaly_val) + sorted(r.normal_val)
        scores.append(s[nodes])
        labels.append([1] * len(r.anomaly_val) + [0] * len(r.normal_val))

    if not scores:
        return None
    try:
        return auc(np.concatenate(scores), np.concatenate(labels))
    except MetricUndefinedError:
        return None


class Checkpoint:
    """Keeps the parameters with the best validation AUC seen so far."""

    def __init__(self, graphs, roles):
        self.graphs = graphs
        self.roles = roles
        self.best = None
        self.best_auc = None
        self.best_epoch = None

    def update(self, model: ModelParams, epoch: int) -> Optional[float]:
        value = validation_auc(model, self.graphs, self.roles)
        if self.best is None or (
            value is not None and (self.best_auc is None or value > self.best_auc)
        ):
            if self.best is not None:
                logger.info("Epoch %d: validation AUC improved to %.4f", epoch, value)
            self.best, self.best_auc, self.best_epoch = model, value, epoch
        return value

    def result(self, last: ModelParams) -> ModelParams:
        if self.best_auc is None:
            logger.warning(
                "Validation AUC is undefined; returning the final parameters."
            )
            return last
        return self.best


def make_optimizer(tensors: Sequence[torch.Tensor], config: TrainConfig):
    if config.optimizer == "adam":
        return torch.optim.Adam(tensors, lr=config.meta_rate)
    return torch.optim.SGD(tensors, lr=config.meta_rate)


def _check_roles(graphs, roles):
    if not graphs:
        raise ConfigurationError("graphs", "At least one training graph is required.")
    if len(graphs) != len(roles):
        raise ConfigurationError(
            "roles", "Expected node roles for each of the %d graphs." % len(graphs)
        )
    dims = {g.d for g in graphs}
    if len(dims) != 1:
        raise ShapeError("Training graphs have different feature dimensions %s." % dims)
    for g, r in zip(graphs, roles):
        if not r.anomaly_train:
            raise ConfigurationError(
                "anomaly_train", "Graph '%s' has no labeled train anomalies." % g.graph_id
            )
        if not r.normal_train:
            raise ConfigurationError(
                "normal_train", "Graph '%s' has no train normal nodes." % g.graph_id
            )


def fit_pooled(
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    config: TrainConfig,
    epochs: int,
    params: Optional[ModelParams] = None,
    log: Optional[JsonLinesLog] = None,
    stream: str = "deepall",
    augment: Optional[Callable] = None,
) -> ModelParams:
    """Balanced mini-batch training on the pooled train nodes of all graphs.

    Every epoch runs ``config.num_tasks`` steps; the deviation-loss
    reference is redrawn once per epoch.  The returned parameters are the
    best validation checkpoint (the initial parameters included).

    Parameters
    ----------
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    config : TrainConfig
    epochs : int
    params : ModelParams, optional
        Starting point.  Defaults to a fresh initialization.
    log : JsonLinesLog, optional
    stream : str
        Name of the random sub-stream; distinct callers use distinct names.
    augment : callable, optional
        ``augment(tensors, rng)`` returning extra anomaly references for the
        epoch.

    Returns
    -------
    ModelParams

    """
    _check_roles(graphs, roles)
    params = params if params is not None else init_model(graphs[0].d, config)
    num_layers = params.num_layers
    anomalies, normals = train_refs(roles)

    rng = substream(config.seed, stream + ".batches")
    ref_rng = substream(config.seed, stream + ".reference")
    checkpoint = Checkpoint(graphs, roles)
    checkpoint.update(params, 0)

    tensors = [t.clone().requires_grad_(True) for t in params.tensors()]
    optimizer = make_optimizer(tensors, config)
    current = params

    for epoch in range(1, epochs + 1):
        loss_fn = make_loss(config, ref_rng)
        objective = model_objective(graphs, num_layers, loss_fn)
        pool = anomalies + (augment(tensors, rng) if augment else [])

        losses = []
        for _ in range(config.num_tasks):
            batch = sample_balanced(pool, normals, config.batch_size, rng)
            optimizer.zero_grad()
            loss = objective(tensors, batch)
            check_finite(loss, "loss", batch)
            loss.backward()
            optimizer.step()
            losses.append(float(loss))

        current = ModelParams.from_tensors([t.detach() for t in tensors], num_layers)
        val_auc = None
        if epoch % config.eval_every == 0 or epoch == epochs:
            val_auc = checkpoint.update(current, epoch)

        if log is not None:
            log.record(epoch=epoch, loss=float(np.mean(losses)), val_auc=val_auc)

    return checkpoint.result(current)


def train_deepall(
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    config: TrainConfig,
    log: Optional[JsonLinesLog] = None,
) -> ModelParams:
    """Train on all graphs' data combined, with no augmentation.

    Parameters
    ----------
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    config : TrainConfig
    log : JsonLinesLog, optional
        Receives one ``{"epoch", "loss", "val_auc"}`` record per epoch.

    Returns
    -------
    ModelParams
        Parameters with the best pooled validation AUC.

    """
    logger.info("Training DeepAll on %d graphs for %d epochs.", len(graphs), config.epochs)
    return fit_pooled(graphs, roles, config, config.epochs, log=log, stream="deepall")


def _nearest_labeled(embeddings: np.ndarray, nodes: Sequence[int], k: int):
    """For every node, its `k` nearest other nodes of `nodes` (squared distance)."""
    x = embeddings[nodes]
    dist = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, : min(k, len(nodes) - 1)]
    return [[nodes[j] for j in row] for row in order]


@experimental
def train_smote(
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    config: TrainConfig,
    log: Optional[JsonLinesLog] = None,
) -> ModelParams:
    """DeepAll with latent-space minority oversampling.

    Every epoch each labeled train anomaly is interpolated toward one of its
    ``config.smote_neighbors`` nearest labeled train anomalies of the same
    graph, with a uniform interpolation weight.

    Parameters
    ----------
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    config : TrainConfig
    log : JsonLinesLog, optional

    Returns
    -------
    ModelParams

    """

    def augment(tensors, rng):
        weights = [t.detach() for t in tensors[: config.num_layers]]
        synthetic = []
        for g, (graph, r) in enumerate(zip(graphs, roles)):
            nodes = sorted(r.anomaly_train)
            if len(nodes) < 2:
                continue
            embeddings = encode(
                graph, graph.normalized_adjacency, EncoderParams(weights=tuple(weights))
            )
            for node, neighbors in zip(
                nodes, _nearest_labeled(embeddings, nodes, config.smote_neighbors)
            ):
                partner = neighbors[rng.integers(len(neighbors))]
                synthetic.append(
                    SyntheticAnomaly(NodeRef(g, node), NodeRef(g, partner), rng.uniform())
                )
        return synthetic

    logger.info("Training SMOTE baseline on %d graphs.", len(graphs))
    return fit_pooled(
        graphs, roles, config, config.epochs, log=log, stream="smote", augment=augment
    )
