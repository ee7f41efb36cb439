#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Subcommands of the ``augan`` command line utility.

Every command reads its settings from an optional JSON or YAML file and
applies ``--seed`` on top of it.  All randomness flows from that seed.

"""

import logging
from pathlib import Path

from .config import RunConfig
from .core import load_dataset, load_roles, save_roles, split_roles
from .detector import ModelParams
from .episodic import predict_scores
from .evaluation import (
    DEFAULT_TOPK,
    aggregate,
    evaluate_scores,
    read_scores,
    write_report,
    write_scores,
)
from .exceptions import ConfigurationError
from .partition import partition, write_partition
from .synthgen import family_stats, generate_family, write_family
from .tasks import leave_one_out, sweep, train_model
from .utils.cli import augan_command
from .utils.misc import JsonLinesLog, fingerprint, write_json

logger = logging.getLogger(__name__)


def _csv(value, cast, key):
    if value is None or value == "":
        return []
    try:
        return [cast(v.strip()) for v in str(value).split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(key, "Expected a comma separated list: %s" % e)


def _run_config(config, seed):
    return RunConfig.load(config).with_seed(seed)


@augan_command("synth")
def synth_command(out, config=None, seed=None):
    """Generate a synthetic family of graphs.

    Parameters
    ----------
    out : str
        Directory receiving one dataset directory per graph and family.json.
    config : str
        JSON or YAML configuration file.
    seed : int
        Root seed; overrides the configuration file.

    """
    run = _run_config(config, seed)
    family = generate_family(run.synth)
    write_family(out, family, run.synth)
    return family_stats(family)


@augan_command("partition")
def partition_command(data, out, config=None, seed=None):
    """Split one labeled graph into well-separated subgraphs.

    Parameters
    ----------
    data : str
        Dataset directory of the graph to split.
    out : str
        Directory receiving the subgraph datasets and partition_report.json.
    config : str
        JSON or YAML configuration file.
    seed : int
        Root seed; overrides the configuration file.

    """
    run = _run_config(config, seed)
    graph, labels = load_dataset(data)
    result = partition(graph, labels, run.partition)
    write_partition(out, result)
    keys = ("sizes", "retries_used", "max_pairwise_normal_overlap")
    return {k: result.report[k] for k in keys}


@augan_command("train")
def train_command(data, out, method="augan", config=None, seed=None):
    """Train a detector on one or more graphs.

    Parameters
    ----------
    data : list of str
        Dataset directory of a training graph; repeat for every graph.
    out : str
        Directory receiving model.json, train_log.jsonl and the splits.
    method : str
        augan, deepall, augan-anomaly-only, augan-normal-only or smote.
    config : str
        JSON or YAML configuration file.
    seed : int
        Root seed; overrides the configuration file.

    """
    run = _run_config(config, seed)
    out = Path(out)

    graphs, roles = [], []
    for i, directory in enumerate(data):
        graph, labels = load_dataset(directory)
        r = load_roles(directory, labels)
        if r is None:
            r = split_roles(
                graph, labels, run.train.num_labeled_anomalies, run.train.seed
            )
        save_roles(out / "splits" / ("%d-%s" % (i, graph.graph_id)), r)
        graphs.append(graph)
        roles.append(r)

    log = JsonLinesLog(out / "train_log.jsonl")
    model = train_model(method, graphs, roles, run.train, log=log, out_dir=out)

    settings = dict(run.to_dict(), method=method)
    model.save(out / "model.json", fingerprint(settings))
    write_json(out / "config.json", settings)
    logger.info("Model written to %s", out / "model.json")


@augan_command("score")
def score_command(model, data, out):
    """Score every node of a graph with a trained model.

    Parameters
    ----------
    model : str
        Path to model.json.
    data : str
        Dataset directory of the graph to score.
    out : str
        Destination scores.csv file, or a directory to write it into.

    """
    params = ModelParams.load(model)
    graph, _ = load_dataset(data)
    out = Path(out)
    if out.suffix.lower() != ".csv":
        out = out / "scores.csv"
    write_scores(out, predict_scores(params, graph))


@augan_command("eval")
def eval_command(scores, data, topk=None, out=None):
    """Compute AUC, AUPR and top-K counts of a scores file.

    Parameters
    ----------
    scores : str
        scores.csv written by the score command.
    data : str
        Dataset directory holding the ground truth.
    topk : str
        Comma separated K values.  Defaults to 100.
    out : str
        Optional metrics.json destination.

    """
    _, labels = load_dataset(data)
    values = read_scores(scores, n=len(labels))
    ks = _csv(topk, int, "topk") or list(DEFAULT_TOPK)
    metrics = evaluate_scores(values, labels, ks)
    if out is not None:
        write_json(out, metrics)
    return metrics


@augan_command("loocv")
def loocv_command(
    data,
    out,
    method="augan,deepall",
    config=None,
    seeds=None,
    seed=None,
    jobs=1,
    topk=None,
):
    """Leave-one-out generalization study.

    Parameters
    ----------
    data : list of str
        Dataset directory; repeat for every graph (at least three).
    out : str
        Directory receiving per-cell metrics.json files and report.csv.
    method : str
        Comma separated method names.
    config : str
        JSON or YAML configuration file.
    seeds : str
        Comma separated seeds.  Defaults to the configured seed.
    seed : int
        Root seed; overrides the configuration file.
    jobs : int
        Number of worker processes.
    topk : str
        Comma separated K values.  Defaults to 100.

    """
    run = _run_config(config, seed)
    reports = leave_one_out(
        data,
        _csv(method, str, "method"),
        run.train,
        _csv(seeds, int, "seeds") or [run.train.seed],
        out_dir=out,
        jobs=jobs,
        topk=_csv(topk, int, "topk") or list(DEFAULT_TOPK),
    )
    summary = aggregate(reports)
    write_report(Path(out) / "report.csv", summary)
    return summary


@augan_command("sweep")
def sweep_command(
    data, out, param, values, method="augan", config=None, seeds=None, seed=None, jobs=1
):
    """Leave-one-out study of one hyper-parameter (experimental).

    Parameters
    ----------
    data : list of str
        Dataset directory; repeat for every graph (at least three).
    out : str
        Directory receiving the per-value results and sweep.csv.
    param : str
        sigma, alpha, rho, num_tasks or num_labeled_anomalies.
    values : str
        Comma separated values of the parameter.
    method : str
        Method to train.
    config : str
        JSON or YAML configuration file.
    seeds : str
        Comma separated seeds.  Defaults to the configured seed.
    seed : int
        Root seed; overrides the configuration file.
    jobs : int
        Number of worker processes.

    """
    run = _run_config(config, seed)
    summary = sweep(
        data,
        param,
        _csv(values, str, "values"),
        run.train,
        _csv(seeds, int, "seeds") or [run.train.seed],
        method=method,
        out_dir=out,
        jobs=jobs,
    )
    write_report(Path(out) / "sweep.csv", summary)
    return summary
