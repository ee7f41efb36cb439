#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

"""Configuration objects for training, partitioning, generation and runs.

Every field has a default.  Values are validated on construction and errors
name the offending key.  Configuration files may be JSON or YAML and use
exactly the field names of the dataclasses below::

    seed: 7
    train:
      epochs: 300
      num_tasks: 8
      sigma: 0.1
    synth:
      num_graphs: 4

"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .exceptions import ConfigurationError
from .utils.misc import read_json

logger = logging.getLogger(__name__)

LOSSES = ("deviation", "bce")
OPTIMIZERS = ("adam", "sgd")


def _check(condition, key, msg):
    if not condition:
        raise ConfigurationError(key, msg)


def _from_mapping(cls, data: Mapping[str, Any], section: Optional[str] = None):
    """Build a config dataclass from a mapping, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigurationError(section, "Expected a mapping of settings.")

    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        prefix = section + "." if section else ""
        raise ConfigurationError(
            prefix + unknown[0],
            "Unknown configuration key '%s%s'." % (prefix, unknown[0]),
        )
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError(section, "Invalid settings: %s" % e) from e


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of DeepAll and AugAN training.

    The defaults are the desk-scale settings.  See :meth:`full_scale` for the
    long GPU-scale settings.

    Attributes
    ----------
    epochs : int
        Number of training epochs E.
    num_tasks : int
        Number of episodic tasks P per epoch.
    batch_size : int
        Balanced batch size t (half anomalies, half normal nodes).
    inner_steps : int
        Gradient steps of the inner adaptation.
    inner_rate : float
        Inner (task) learning rate r1.
    meta_rate : float
        Outer (meta) learning rate r2; also the rate of pooled training.
    sigma : float
        Weight of the high-confidence threshold.
    alpha : int
        Pseudo-labels generated per anchor with a non-empty high-confidence set.
    rho : float
        Fraction of the merged normal pool masked in every scene.
    loss : {"deviation", "bce"}
    second_order : bool
        Differentiate the meta-objective through the inner adaptation.
    warmup_epochs : int
        Epochs of pooled training before pseudo-labels are selected.
    seed : int
    enable_anomaly_aug : bool
    enable_normal_aug : bool
    hidden_dim : int
    num_layers : int
    margin : float
        Deviation loss margin.
    ref_samples : int
        Number of reference scores drawn for the deviation loss.
    eval_every : int
        Validation cadence in epochs.
    num_labeled_anomalies : int
        Size of the labeled anomaly set per training graph.
    optimizer : {"adam", "sgd"}
        Optimizer applying pooled and meta gradients.
    smote_neighbors : int
        Neighbors considered by the latent oversampling baseline.

    """

    epochs: int = 300
    num_tasks: int = 8
    batch_size: int = 32
    inner_steps: int = 5
    inner_rate: float = 0.01
    meta_rate: float = 0.005
    sigma: float = 0.1
    alpha: int = 3
    rho: float = 0.5
    loss: str = "deviation"
    second_order: bool = False
    warmup_epochs: int = 100
    seed: int = 0
    enable_anomaly_aug: bool = True
    enable_normal_aug: bool = True
    hidden_dim: int = 64
    num_layers: int = 2
    margin: float = 5.0
    ref_samples: int = 5000
    eval_every: int = 10
    num_labeled_anomalies: int = 20
    optimizer: str = "adam"
    smote_neighbors: int = 5

    def __post_init__(self):
        _check(self.epochs >= 0, "epochs", "Must be non-negative.")
        _check(self.warmup_epochs >= 0, "warmup_epochs", "Must be non-negative.")
        _check(self.num_tasks >= 1, "num_tasks", "At least one task is required.")
        _check(
            self.batch_size >= 2 and self.batch_size % 2 == 0,
            "batch_size",
            "Must be an even number of at least 2.",
        )
        _check(self.inner_steps >= 1, "inner_steps", "At least one step is required.")
        _check(self.inner_rate > 0, "inner_rate", "Must be positive.")
        _check(self.meta_rate > 0, "meta_rate", "Must be positive.")
        _check(0 < self.sigma < 1, "sigma", "Must lie in the open interval (0, 1).")
        _check(self.alpha >= 1, "alpha", "Must be at least 1.")
        _check(0 <= self.rho < 1, "rho", "Must lie in [0, 1).")
        _check(self.loss in LOSSES, "loss", "Must be one of %s." % (LOSSES,))
        _check(
            self.optimizer in OPTIMIZERS,
            "optimizer",
            "Must be one of %s." % (OPTIMIZERS,),
        )
        _check(self.hidden_dim >= 1, "hidden_dim", "Must be positive.")
        _check(self.num_layers >= 1, "num_layers", "Must be positive.")
        _check(self.margin > 0, "margin", "Must be positive.")
        _check(self.ref_samples >= 2, "ref_samples", "At least 2 samples required.")
        _check(self.eval_every >= 1, "eval_every", "Must be positive.")
        _check(
            self.num_labeled_anomalies >= 0,
            "num_labeled_anomalies",
            "Must be non-negative.",
        )
        _check(self.smote_neighbors >= 1, "smote_neighbors", "Must be positive.")

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        settings = dict(epochs=2000, num_tasks=30, batch_size=128, inner_steps=5)
        settings.update(overrides)
        return cls(**settings)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        return _from_mapping(cls, data, "train")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PartitionConfig:
    """Settings of the graph partitioner.

    Attributes
    ----------
    m : int
        Number of subgraphs.
    k : int
        Hop radius spanned around every anchor.
    max_normal_overlap : float
        Upper bound (exclusive) on the fraction of a subgraph's normal nodes
        shared with any other subgraph.
    max_retries : int
    max_size_ratio : float
        Largest allowed ratio between the biggest and smallest subgraph.
    seed : int

    """

    m: int = 3
    k: int = 2
    max_normal_overlap: float = 0.10
    max_retries: int = 20
    max_size_ratio: float = 2.0
    seed: int = 0

    def __post_init__(self):
        _check(self.m >= 2, "m", "At least 2 subgraphs are required.")
        _check(self.k >= 1, "k", "Hop radius must be at least 1.")
        _check(
            0 <= self.max_normal_overlap < 1,
            "max_normal_overlap",
            "Must lie in [0, 1).",
        )
        _check(self.max_retries >= 1, "max_retries", "Must be at least 1.")
        _check(self.max_size_ratio >= 1, "max_size_ratio", "Must be at least 1.")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PartitionConfig":
        return _from_mapping(cls, data, "partition")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SynthConfig:
    """Settings of the synthetic graph-family generator.

    Attributes
    ----------
    num_graphs : int
        Number of graphs m in the family.
    num_nodes : int
        Nodes per graph n.
    feature_dim : int
        Attribute dimension d.
    anomaly_ratio : float
        Fraction r of anomalies per graph.
    background_shift : float
        Norm of every graph's normal-mean offset.
    anomaly_separation : float
        Distance of the shared anomaly mean from the base mean.
    p_in : float
        Edge probability inside a block.
    p_out : float
        Edge probability across blocks.
    seed : int

    """

    num_graphs: int = 4
    num_nodes: int = 300
    feature_dim: int = 16
    anomaly_ratio: float = 0.05
    background_shift: float = 3.0
    anomaly_separation: float = 6.0
    p_in: float = 0.05
    p_out: float = 0.005
    seed: int = 0

    def __post_init__(self):
        _check(self.num_graphs >= 1, "num_graphs", "At least one graph is required.")
        _check(self.num_nodes >= 2, "num_nodes", "At least 2 nodes are required.")
        _check(self.feature_dim >= 1, "feature_dim", "Must be positive.")
        _check(
            0 < self.anomaly_ratio < 0.5,
            "anomaly_ratio",
            "Must lie in the open interval (0, 0.5).",
        )
        _check(self.background_shift >= 0, "background_shift", "Must be non-negative.")
        _check(
            self.anomaly_separation >= 0, "anomaly_separation", "Must be non-negative."
        )
        _check(0 < self.p_out, "p_out", "Must be positive.")
        _check(self.p_in <= 1, "p_in", "Must be a probability.")
        _check(self.p_in > self.p_out, "p_in", "Must be greater than p_out.")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SynthConfig":
        return _from_mapping(cls, data, "synth")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RunConfig:
    """Everything a command line run needs.

    Attributes
    ----------
    seed : int or None
        When set, overrides the seed of every section.
    train : TrainConfig
    partition : PartitionConfig
    synth : SynthConfig
    paths : dict
        Free-form named paths (e.g. ``{"data": [...], "out": "runs/a"}``).

    """

    seed: Optional[int] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.seed is not None:
            _check(isinstance(self.seed, int), "seed", "Must be an integer.")
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))
            object.__setattr__(
                self, "partition", replace(self.partition, seed=self.seed)
            )
            object.__setattr__(self, "synth", replace(self.synth, seed=self.seed))

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "RunConfig":
        data = dict(data or {})
        sections = {"seed", "train", "partition", "synth", "paths"}
        unknown = sorted(set(data) - sections)
        if unknown:
            raise ConfigurationError(
                unknown[0], "Unknown configuration key '%s'." % unknown[0]
            )

        paths = data.get("paths") or {}
        if not isinstance(paths, Mapping):
            raise ConfigurationError("paths", "Expected a mapping of paths.")

        return cls(
            seed=data.get("seed"),
            train=TrainConfig.from_dict(data.get("train")),
            partition=PartitionConfig.from_dict(data.get("partition")),
            synth=SynthConfig.from_dict(data.get("synth")),
            paths=dict(paths),
        )

    @classmethod
    def load(cls, path: Union[str, Path, None]) -> "RunConfig":
        """Read a JSON or YAML configuration file.

        Parameters
        ----------
        path : str or pathlib.Path or None
            Location of the file.  None returns the defaults.

        Returns
        -------
        RunConfig

        Raises
        ------
        ConfigurationError
            If the file is missing, unparsable or contains invalid settings.

        """
        if path is None:
            return cls()

        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(
                "config", "Configuration file '%s' does not exist." % path
            )

        try:
            if path.suffix.lower() in (".yaml", ".yml"):
                with open(path) as f:
                    data = yaml.safe_load(f)
            else:
                data = read_json(path)
        except (ValueError, yaml.YAMLError) as e:
            raise ConfigurationError(
                "config", "Unable to parse '%s': %s" % (path, e)
            ) from e

        logger.debug("Loaded configuration from %s", path)
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "train": self.train.to_dict(),
            "partition": self.partition.to_dict(),
            "synth": self.synth.to_dict(),
            "paths": dict(self.paths),
        }

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """Apply a command line seed, which takes precedence over the file."""
        if seed is None:
            return self
        return dataclasses.replace(self, seed=int(seed))


def replace(config, **changes):
    """`dataclasses.replace` that reports invalid keys as ConfigurationError."""
    try:
        return dataclasses.replace(config, **changes)
    except TypeError as e:
        raise ConfigurationError(next(iter(changes), None), str(e)) from e
