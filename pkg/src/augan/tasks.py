#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Commonly used tasks: training a named method and generalization studies."""

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .config import TrainConfig, replace
from .core import AttributedGraph, NodeRoles, load_dataset, split_roles
from .detector import ModelParams, train_deepall, train_smote
from .episodic import predict_scores, train_augan
from .evaluation import (
    DEFAULT_TOPK,
    EvalReport,
    aggregate,
    evaluate_scores,
    write_metrics,
    write_scores,
)
from .exceptions import ConfigurationError, MetricUndefinedError
from .utils.decorators import experimental
from .utils.misc import JsonLinesLog

logger = logging.getLogger(__name__)

# Ablation variants switch off one of the two augmentations.
METHODS = {
    "augan": {},
    "augan-anomaly-only": {"enable_normal_aug": False},
    "augan-normal-only": {"enable_anomaly_aug": False},
    "deepall": None,
    "smote": None,
}

SWEEP_PARAMS = {
    "sigma": float,
    "alpha": int,
    "rho": float,
    "num_tasks": int,
    "num_labeled_anomalies": int,
}


def _check_method(method: str):
    if method not in METHODS:
        raise ConfigurationError(
            "method",
            "Unknown method '%s'.  Choose from %s." % (method, ", ".join(METHODS)),
        )


def train_model(
    method: str,
    graphs: Sequence[AttributedGraph],
    roles: Sequence[NodeRoles],
    config: TrainConfig,
    log: Optional[JsonLinesLog] = None,
    out_dir: Union[str, Path, None] = None,
) -> ModelParams:
    """Train a detector with the named method.

    Parameters
    ----------
    method : str
        One of :data:`METHODS`.
    graphs : list of AttributedGraph
    roles : list of NodeRoles
    config : TrainConfig
    log : JsonLinesLog, optional
    out_dir : str or pathlib.Path, optional
        When given, AugAN variants write ``pseudo_labels.json`` here.

    Returns
    -------
    ModelParams

    """
    _check_method(method)
    if method == "deepall":
        return train_deepall(graphs, roles, config, log=log)
    if method == "smote":
        return train_smote(graphs, roles, config, log=log)

    config = replace(config, **METHODS[method])
    pseudo_path = None
    if out_dir is not None and config.enable_anomaly_aug:
        pseudo_path = Path(out_dir) / "pseudo_labels.json"
    return train_augan(graphs, roles, config, log=log, pseudo_labels_path=pseudo_path)


def _metrics_or_empty(scores, labels, topk=()):
    try:
        return evaluate_scores(scores, labels, topk)
    except MetricUndefinedError as e:
        logger.warning("Metrics undefined: %s", e)
        return {}


def _run_cell(
    dataset_dirs: Sequence[str],
    heldout: int,
    seed: int,
    methods: Sequence[str],
    config: TrainConfig,
    topk: Sequence[int],
    out_dir: Optional[str],
) -> List[EvalReport]:
    datasets = [load_dataset(d) for d in dataset_dirs]
    test_graph, test_labels = datasets[heldout]
    train_sets = [ds for i, ds in enumerate(datasets) if i != heldout]

    config = replace(config, seed=seed)
    graphs = [g for g, _ in train_sets]
    roles = [
        split_roles(g, labels, config.num_labeled_anomalies, seed)
        for g, labels in train_sets
    ]

    reports = []
    for method in methods:
        logger.info(
            "Held out '%s', seed %d: training %s.", test_graph.graph_id, seed, method
        )
        cell_dir = None
        if out_dir is not None:
            cell_dir = Path(out_dir) / test_graph.graph_id / method / ("seed%d" % seed)

        log = JsonLinesLog(cell_dir / "train_log.jsonl" if cell_dir else None)
        model = train_model(method, graphs, roles, config, log=log, out_dir=cell_dir)

        # Training-domain metrics pool the test splits of every training graph.
        pooled_scores, pooled_labels = [], []
        for graph, r in zip(graphs, roles):
            nodes = sorted(r.test_nodes)
            pooled_scores.append(predict_scores(model, graph)[nodes])
            pooled_labels.append(r.ground_truth[nodes])

        unseen_scores = predict_scores(model, test_graph)
        report = EvalReport(
            method=method,
            heldout=test_graph.graph_id,
            seed=seed,
            train_domain=_metrics_or_empty(
                np.concatenate(pooled_scores), np.concatenate(pooled_labels)
            ),
            unseen=_metrics_or_empty(unseen_scores, test_labels, topk),
        )
        if cell_dir is not None:
            write_metrics(cell_dir / "metrics.json", report)
            write_scores(cell_dir / "scores.csv", unseen_scores)
        reports.append(report)
    return reports


def leave_one_out(
    dataset_dirs: Sequence[Union[str, Path]],
    methods: Sequence[str],
    config: TrainConfig,
    seeds: Iterable[int],
    out_dir: Union[str, Path, None] = None,
    jobs: int = 1,
    topk: Sequence[int] = DEFAULT_TOPK,
) -> List[EvalReport]:
    """Hold out every graph in turn and evaluate each method on it.

    For each held-out graph and seed, the remaining graphs are split 4:2:4,
    every method is trained on them and scored on (a) the pooled test splits
    of the training graphs and (b) all nodes of the held-out graph.

    Parameters
    ----------
    dataset_dirs : list of str or pathlib.Path
        At least three dataset directories.
    methods : list of str
    config : TrainConfig
    seeds : iterable of int
    out_dir : str or pathlib.Path, optional
        When given, each cell writes ``metrics.json``, ``scores.csv`` and
        ``train_log.jsonl`` under ``<heldout>/<method>/seed<seed>/``.
    jobs : int
        Number of worker processes.  Cells are independent; results are
        returned in (held-out graph, seed, method) order regardless.
    topk : list of int

    Returns
    -------
    list of EvalReport

    """
    dataset_dirs = [str(d) for d in dataset_dirs]
    if len(dataset_dirs) < 3:
        raise ConfigurationError(
            "data",
            "Leave-one-out needs at least 3 datasets, got %d." % len(dataset_dirs),
        )
    for method in methods:
        _check_method(method)

    seeds = [int(s) for s in seeds]
    out_dir = str(out_dir) if out_dir is not None else None
    cells = [(h, s) for h in range(len(dataset_dirs)) for s in seeds]
    args = [
        (dataset_dirs, h, s, list(methods), config, list(topk), out_dir)
        for h, s in cells
    ]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*args)))
    else:
        results = [_run_cell(*a) for a in args]

    return [report for cell in results for report in cell]


@experimental
def sweep(
    dataset_dirs: Sequence[Union[str, Path]],
    param: str,
    values: Iterable,
    config: TrainConfig,
    seeds: Iterable[int],
    method: str = "augan",
    out_dir: Union[str, Path, None] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Leave-one-out study of one hyper-parameter.

    Parameters
    ----------
    dataset_dirs : list of str or pathlib.Path
    param : str
        One of :data:`SWEEP_PARAMS`.
    values : iterable
    config : TrainConfig
    seeds : iterable of int
    method : str
    out_dir : str or pathlib.Path, optional
    jobs : int

    Returns
    -------
    pandas.DataFrame
        The aggregate report of every value, with a column named `param`.

    """
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(
            "param", "Cannot sweep '%s'.  Choose from %s." % (param, ", ".join(SWEEP_PARAMS))
        )

    seeds = list(seeds)
    frames = []
    for value in values:
        value = SWEEP_PARAMS[param](value)
        cell_dir = Path(out_dir) / ("%s=%s" % (param, value)) if out_dir else None
        reports = leave_one_out(
            dataset_dirs,
            [method],
            replace(config, **{param: value}),
            seeds,
            out_dir=cell_dir,
            jobs=jobs,
        )
        summary = aggregate(reports)
        summary.insert(0, param, value)
        frames.append(summary)
    return pd.concat(frames, ignore_index=True)
