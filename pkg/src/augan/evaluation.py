#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Ranking metrics, evaluation reports and their file formats."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .exceptions import (
    ConfigurationError,
    DatasetError,
    MetricUndefinedError,
    ShapeError,
    ValidationError,
)
from .utils.misc import write_json

logger = logging.getLogger(__name__)

DEFAULT_TOPK = (100,)

TRAIN_DOMAIN = "train_domain"
UNSEEN = "unseen"


def _inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ShapeError(
            "Got %d scores but %d labels." % (len(scores), len(labels))
        )
    return scores, labels


def auc(scores, labels) -> float:
    """Area under the ROC curve.

    The probability that a random positive outranks a random negative, ties
    counted as one half.  Computed from average ranks.

    Parameters
    ----------
    scores : array-like of float
    labels : array-like of {0, 1}

    Returns
    -------
    float

    Raises
    ------
    MetricUndefinedError
        If only one class is present.

    """
    scores, labels = _inputs(scores, labels)
    num_pos = int(labels.sum())
    num_neg = len(labels) - num_pos
    if num_pos == 0 or num_neg == 0:
        raise MetricUndefinedError(
            "AUC needs positives and negatives, got %d and %d." % (num_pos, num_neg)
        )
    ranks = rankdata(scores, method="average")
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - num_pos * (num_pos + 1) / 2) / (num_pos * num_neg))


def aupr(scores, labels) -> float:
    """Average precision.

    The mean, over positives in descending score order, of the precision at
    the positive's rank.  Tied scores keep their input order.

    Raises
    ------
    MetricUndefinedError
        If there is no positive.

    """
    scores, labels = _inputs(scores, labels)
    num_pos = int(labels.sum())
    if num_pos == 0:
        raise MetricUndefinedError("Average precision needs at least one positive.")
    ordered = labels[np.argsort(-scores, kind="stable")]
    precision = np.cumsum(ordered) / np.arange(1, len(ordered) + 1)
    return float(precision[ordered == 1].sum() / num_pos)


def topk_count(scores, labels, k: int) -> int:
    """Number of true anomalies among the `k` highest scores (stable ties).

    Raises
    ------
    ConfigurationError
        If `k` is negative or exceeds the number of nodes.

    """
    scores, labels = _inputs(scores, labels)
    if not 0 <= k <= len(scores):
        raise ConfigurationError(
            "topk", "K=%d is outside the range [0, %d]." % (k, len(scores))
        )
    return int(labels[np.argsort(-scores, kind="stable")[:k]].sum())


def evaluate_scores(scores, labels, topk: Iterable[int] = ()) -> Dict:
    """AUC, AUPR and top-K counts of one scored node set.

    K values larger than the node set are skipped with a warning.
    """
    scores, labels = _inputs(scores, labels)
    metrics = {"auc": auc(scores, labels), "aupr": aupr(scores, labels)}
    if topk:
        counts = {}
        for k in topk:
            if k > len(scores):
                logger.warning("Skipping top-%d count on %d nodes.", k, len(scores))
                continue
            counts[str(k)] = topk_count(scores, labels, k)
        metrics["topk"] = counts
    return metrics


@dataclass
class EvalReport:
    """Metrics of one (method, held-out graph, seed) cell.

    Attributes
    ----------
    method : str
    heldout : str
        Id of the held-out graph.
    seed : int
    train_domain : dict
        ``{"auc", "aupr"}`` on the pooled test splits of the training graphs.
    unseen : dict
        ``{"auc", "aupr", "topk"}`` on every node of the held-out graph.

    """

    method: str
    heldout: str
    seed: int
    train_domain: Dict = field(default_factory=dict)
    unseen: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "heldout": self.heldout,
            "seed": self.seed,
            TRAIN_DOMAIN: dict(self.train_domain),
            UNSEEN: dict(self.unseen),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            method=data["method"],
            heldout=data["heldout"],
            seed=data["seed"],
            train_domain=data.get(TRAIN_DOMAIN, {}),
            unseen=data.get(UNSEEN, {}),
        )

    def rows(self):
        """Flat records, one per split tag."""
        for split in (TRAIN_DOMAIN, UNSEEN):
            metrics = getattr(self, split)
            if not metrics:
                continue
            row = {
                "method": self.method,
                "heldout": self.heldout,
                "seed": self.seed,
                "split": split,
                "auc": metrics.get("auc"),
                "aupr": metrics.get("aupr"),
            }
            for k, count in metrics.get("topk", {}).items():
                row["top%s" % k] = count
            yield row


def aggregate(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Mean and standard deviation over seeds.

    Returns
    -------
    pandas.DataFrame
        One row per (method, heldout, split) with ``<metric>_mean`` and
        ``<metric>_std`` columns and the number of runs.

    """
    frame = pd.DataFrame([row for r in reports for row in r.rows()])
    if frame.empty:
        return frame

    keys = ["method", "heldout", "split"]
    metrics = [c for c in frame.columns if c not in keys + ["seed"]]
    grouped = frame.groupby(keys, sort=True)
    summary = grouped[metrics].agg(["mean", "std"])
    summary.columns = ["%s_%s" % (metric, stat) for metric, stat in summary.columns]
    summary["runs"] = grouped.size()
    return summary.reset_index()


def write_metrics(path: Union[str, Path], report: EvalReport) -> Path:
    return write_json(path, report.to_dict())


def write_report(path: Union[str, Path], summary: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary.to_csv(path, index=False, float_format="%.6f")
    return path


def write_scores(path: Union[str, Path], scores) -> Path:
    """Write ``scores.csv`` with the header ``node_id,score``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scores = np.asarray(scores, dtype=np.float64)
    pd.DataFrame({"node_id": np.arange(len(scores)), "score": scores}).to_csv(
        path, index=False, float_format="%.17g"
    )
    return path


def read_scores(path: Union[str, Path], n: Optional[int] = None) -> np.ndarray:
    """Read a ``scores.csv`` file back into a score vector indexed by node id.

    Raises
    ------
    DatasetError
        If the file does not exist.
    ValidationError
        If the header is wrong or node ids are not dense.

    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(path, "Scores file '%s' could not be found." % path)

    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != ["node_id", "score"]:
        raise ValidationError(
            path.name, 1, "Expected header 'node_id,score', got %s." % list(frame.columns)
        )
    frame = frame.sort_values("node_id", kind="stable")
    ids = frame["node_id"].to_numpy()
    expected = np.arange(len(frame) if n is None else n)
    if len(ids) != len(expected) or (ids != expected).any():
        raise ValidationError(
            path.name, None, "Node ids must cover 0..%d exactly once." % (len(expected) - 1)
        )
    return frame["score"].to_numpy(dtype=np.float64)
