#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Scene-crossed episodic training.

Each epoch merges the training data, builds P + 1 masked scenes and P tasks.
Task i draws its support batch from scene i and its query batch from a
different, uniformly chosen scene.  Parameters are adapted on the support
batch with plain gradient descent and the meta-objective is the mean query
loss at the adapted parameters.

Adaptation is functional: parameters are flat tensor lists and the
un-adapted parameters are never modified outside the meta update.

"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .augmentation import (
    Scene,
    generate_pseudo_labels,
    make_scene,
    merge_training_data,
    write_pseudo_labels,
)
from .config import TrainConfig
from .core import AttributedGraph, NodeRoles
from .detector import (
    Checkpoint,
    ModelParams,
    _check_roles,
    fit_pooled,
    init_model,
    make_loss,
    make_optimizer,
    model_objective,
    sample_balanced,
)
from .encoder import Batch, check_finite, encode
from .exceptions import ConfigurationError, NumericalError
from .utils.misc import JsonLinesLog, substream

__all__ = [
    "Task",
    "TrainConfig",
    "sample_balanced_batch",
    "inner_adapt",
    "meta_gradient",
    "meta_step",
    "build_tasks",
    "train_augan",
    "predict_scores",
]

logger = logging.getLogger(__name__)

Objective = Callable[[Sequence[torch.Tensor], Batch], torch.Tensor]


@dataclass(frozen=True)
class Task:
    """Support and query batches drawn from two scenes.

    Attributes
    ----------
    support : Batch
    query : Batch
    support_scene : int
    query_scene : int
    shared_scene : bool
        True when normal augmentation is disabled and both batches come from
        the single unmasked scene.

    """

    support: Batch
    query: Batch
    support_scene: int
    query_scene: int
    shared_scene: bool = False

    def __post_init__(self):
        if self.support_scene == self.query_scene and not self.shared_scene:
            raise ConfigurationError(
                "query_scene", "Support and query must come from different scenes."
            )


def sample_balanced_batch(scene: Scene, t: int, rng: np.random.Generator) -> Batch:
    """Draw ``t/2`` anomalies and ``t/2`` normal nodes from a scene.

    Each side is sampled without replacement when it has at least ``t/2``
    members and with replacement otherwise.

    Raises
    ------
    ConfigurationError
        If either side of the scene is empty.

    """
    return sample_balanced(scene.anomaly_refs, scene.normal_refs, t, rng)


def _tensors(theta) -> List[torch.Tensor]:
    if isinstance(theta, ModelParams):
        return theta.tensors()
    return [torch.as_tensor(t, dtype=torch.float64) for t in theta]


def _like(theta, tensors):
    tensors = [t.detach() for t in tensors]
    if isinstance(theta, ModelParams):
        return ModelParams.from_tensors(tensors, theta.num_layers)
    return tensors


def _gradients(loss, tensors, batch, what, create_graph=False):
    check_finite(loss, what + " loss", batch)
    grads = torch.autograd.grad(
        loss, tensors, create_graph=create_graph, allow_unused=True
    )
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]
    for g in grads:
        check_finite(g, what + " gradient", batch)
    return grads


def _adapt(tensors, support: Batch, r1: float, steps: int, loss_fn, create_graph):
    fast = list(tensors)
    for _ in range(steps):
        if not create_graph:
            fast = [p.detach().requires_grad_(True) for p in fast]
        loss = loss_fn(fast, support)
        grads = _gradients(loss, fast, support, "inner", create_graph=create_graph)
        fast = [p - r1 * g for p, g in zip(fast, grads)]
    return fast


def inner_adapt(theta, support: Batch, r1: float, steps: int, loss_fn: Objective):
    """Adapt parameters to a support batch.

    Runs `steps` full-batch gradient descent steps of rate `r1`.  `theta` is
    left untouched.

    Parameters
    ----------
    theta : ModelParams or list of torch.Tensor
    support : Batch
    r1 : float
    steps : int
    loss_fn : callable
        ``loss_fn(tensors, batch)`` returning a scalar tensor.

    Returns
    -------
    ModelParams or list of torch.Tensor
        The adapted parameters, of the same type as `theta`.

    Raises
    ------
    NumericalError
        If a loss or gradient is not finite.

    """
    if steps < 1:
        raise ConfigurationError("inner_steps", "At least one step is required.")
    fast = _adapt(_tensors(theta), support, r1, steps, loss_fn, create_graph=False)
    return _like(theta, fast)


def meta_gradient(
    theta,
    tasks: Sequence[Task],
    r1: float,
    steps: int,
    second_order: bool,
    loss_fn: Objective,
) -> Tuple[float, List[torch.Tensor]]:
    """Mean query loss over `tasks` and its gradient with respect to `theta`.

    With `second_order` the gradient is differentiated through the inner
    adaptation.  Otherwise the query gradient at the adapted parameters is
    used in its place.

    Returns
    -------
    float, list of torch.Tensor

    """
    if not tasks:
        raise ConfigurationError("num_tasks", "At least one task is required.")

    tensors = [t.detach() for t in _tensors(theta)]
    total = [torch.zeros_like(t) for t in tensors]
    losses = []
    for i, task in enumerate(tasks):
        try:
            if second_order:
                leaves = [t.clone().requires_grad_(True) for t in tensors]
                fast = _adapt(leaves, task.support, r1, steps, loss_fn, create_graph=True)
                loss = loss_fn(fast, task.query)
                grads = _gradients(loss, leaves, task.query, "query")
            else:
                fast = _adapt(tensors, task.support, r1, steps, loss_fn, create_graph=False)
                fast = [p.detach().requires_grad_(True) for p in fast]
                loss = loss_fn(fast, task.query)
                grads = _gradients(loss, fast, task.query, "query")
        except NumericalError as e:
            raise e.locate(epoch=e.epoch, task=i) from e

        losses.append(float(loss))
        total = [acc + g.detach() for acc, g in zip(total, grads)]

    grads = [g / len(tasks) for g in total]
    for g in grads:
        check_finite(g, "meta-gradient")
    return float(np.mean(losses)), grads


def meta_step(
    theta,
    tasks: Sequence[Task],
    r2: float,
    r1: float,
    steps: int,
    second_order: bool,
    loss_fn: Objective,
):
    """One meta update ``theta - r2 * grad`` of the mean query loss.

    Parameters
    ----------
    theta : ModelParams or list of torch.Tensor
    tasks : list of Task
    r2 : float
        Meta learning rate.
    r1 : float
        Inner learning rate.
    steps : int
        Inner adaptation steps.
    second_order : bool
    loss_fn : callable

    Returns
    -------
    ModelParams or list of torch.Tensor
        Updated parameters of the same type as `theta`.

    """
    _, grads = meta_gradient(theta, tasks, r1, steps, second_order, loss_fn)
    updated = [t.detach() - r2 * g for t, g in zip(_tensors(theta), grads)]
    return _like(theta, updated)


def build_tasks(
    scenes: Sequence[Scene], num_tasks: int, t: int, rng: np.random.Generator
) -> List[Task]:
    """Cross scenes into tasks.

    With ``num_tasks + 1`` scenes task i draws support from scene i and query
    from a uniformly chosen other scene.  With a single scene both batches
    come from it.

    """
    if len(scenes) == 1:
        return [
            Task(
                support=sample_balanced_batch(scenes[0], t, rng),
                query=sample_balanced_batch(scenes[0], t, rng),
                support_scene=0,
                query_scene=0,
                shared_scene=True,
            )
            for _ in range(num_tasks)
        ]

    if len(scenes) < num_tasks + 1:
        raise ConfigurationError(
            "scenes", "Expected %d scenes, got %d." % (num_tasks + 1, len(scenes))
        )

    tasks = []
    for i in range(num_tasks):
        support = sample_balanced_batch(scenes[i], t, rng)
        j = int(rng.integers(len(scenes) - 1))
        if j >= i:
            j += 1
        query = sample_balanced_batch(scenes[j], t, rng)
        tasks.append(Task(support, query, support_scene=i, query_scene=j))
    return tasks


def train_augan(
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    config: TrainConfig,
    log: Optional[JsonLinesLog] = None,
    pseudo_labels_path: Union[str, Path, None] = None,
) -> ModelParams:
    """Train a detector with anomaly augmentation and episodic training.

    The parameters are first warmed up with pooled training.  Pseudo-labels
    are then selected once from the warmed-up embeddings and frozen.  Every
    epoch merges the data, builds the scenes and tasks and applies one meta
    update with the configured optimizer.

    Parameters
    ----------
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    config : TrainConfig
        ``enable_anomaly_aug`` and ``enable_normal_aug`` switch the two
        augmentations off for ablations.
    log : JsonLinesLog, optional
        Receives one record per epoch with the keys ``epoch``, ``meta_loss``,
        ``val_auc``, ``num_pseudo_labels`` and ``num_scenes``.
    pseudo_labels_path : str or pathlib.Path, optional
        Where to write the selected pseudo-labels for auditing.

    Returns
    -------
    ModelParams
        Parameters with the best pooled validation AUC.

    Raises
    ------
    ConfigurationError
        If anomaly augmentation is enabled with fewer than two graphs.
    NumericalError
        If a loss or gradient becomes non-finite.  The error names the epoch
        and task.

    """
    if config.enable_anomaly_aug and len(graphs) < 2:
        raise ConfigurationError(
            "graphs",
            "Anomaly augmentation requires ≥ 2 training graphs, got %d." % len(graphs),
        )
    _check_roles(graphs, roles)

    params = init_model(graphs[0].d, config)
    num_layers = params.num_layers
    if config.warmup_epochs:
        logger.info("Warming up for %d epochs.", config.warmup_epochs)
        params = fit_pooled(
            graphs, roles, config, config.warmup_epochs, params=params, stream="warmup"
        )

    pseudo = []
    if config.enable_anomaly_aug:
        embeddings = [encode(g, g.normalized_adjacency, params.encoder) for g in graphs]
        pseudo = generate_pseudo_labels(
            graphs,
            roles,
            embeddings,
            config.sigma,
            config.alpha,
            substream(config.seed, "augment.pseudo"),
        )
        if pseudo_labels_path is not None:
            write_pseudo_labels(pseudo_labels_path, pseudo)

    scene_rng = substream(config.seed, "episodic.scenes")
    task_rng = substream(config.seed, "episodic.tasks")
    ref_rng = substream(config.seed, "episodic.reference")
    num_scenes = config.num_tasks + 1 if config.enable_normal_aug else 1

    checkpoint = Checkpoint(graphs, roles)
    checkpoint.update(params, 0)
    tensors = [t.clone().requires_grad_(True) for t in params.tensors()]
    optimizer = make_optimizer(tensors, config)
    current = params

    for epoch in range(1, config.epochs + 1):
        loss_fn = make_loss(config, ref_rng)
        objective = model_objective(graphs, num_layers, loss_fn)

        try:
            s_merge, n_merge = merge_training_data(roles, pseudo)
            if config.enable_normal_aug:
                scenes = [
                    make_scene(s_merge, n_merge, config.rho, scene_rng)
                    for _ in range(num_scenes)
                ]
            else:
                scenes = [Scene(s_merge, n_merge, mask_seed=0)]
            tasks = build_tasks(scenes, config.num_tasks, config.batch_size, task_rng)

            meta_loss, grads = meta_gradient(
                tensors,
                tasks,
                config.inner_rate,
                config.inner_steps,
                config.second_order,
                objective,
            )
        except NumericalError as e:
            raise e.locate(epoch=epoch, task=e.task) from e
        except ConfigurationError as e:
            raise ConfigurationError(e.key, "%s (epoch %d)" % (e, epoch)) from e

        optimizer.zero_grad()
        for p, g in zip(tensors, grads):
            p.grad = g.clone()
        optimizer.step()

        current = ModelParams.from_tensors([t.detach() for t in tensors], num_layers)
        val_auc = None
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            val_auc = checkpoint.update(current, epoch)

        if log is not None:
            log.record(
                epoch=epoch,
                meta_loss=meta_loss,
                val_auc=val_auc,
                num_pseudo_labels=len(pseudo),
                num_scenes=len(scenes),
            )

    return checkpoint.result(current)


def predict_scores(model: ModelParams, graph: AttributedGraph) -> np.ndarray:
    """Anomaly score of every node of a (possibly unseen) graph."""
    return model.score_graph(graph)
