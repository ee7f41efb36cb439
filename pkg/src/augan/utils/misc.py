#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import hashlib
import json
import logging
import math
import zlib
from pathlib import Path
from typing import Any, List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)


class NpEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars, arrays and sets."""

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (set, frozenset)):
            return sorted(obj)
        if isinstance(obj, Path):
            return str(obj)
        return json.JSONEncoder.default(self, obj)


def substream(seed: int, name: str) -> np.random.Generator:
    """Random generator for the named sub-stream of a seed.

    Streams with different names are statistically independent and the same
    (seed, name) pair always yields the same sequence.

    Parameters
    ----------
    seed : int
        Root seed of the run.
    name : str
        Name of the consumer, e.g. "split.labeled".

    Returns
    -------
    numpy.random.Generator

    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def write_json(path: Union[str, Path], obj: Any, indent: Optional[int] = 2) -> Path:
    """Serialize `obj` to `path` with sorted keys so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps(obj, indent=indent, sort_keys=True, cls=NpEncoder))
        f.write("\n")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path) as f:
        return json.load(f)


def fingerprint(obj: Any) -> str:
    """Short, stable hash of a JSON-serializable object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), cls=NpEncoder)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class JsonLinesLog:
    """Append-only JSON lines log of training records.

    Records are always kept in memory.  When a path is given each record is
    also written (and flushed) as one line of the file, which is truncated
    when the log is created.

    Parameters
    ----------
    path : str or pathlib.Path, optional
        Destination file.

    """

    def __init__(self, path: Union[str, Path, None] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[dict] = []

        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def record(self, **fields) -> dict:
        self.records.append(fields)
        logger.debug("%s", fields)

        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(json.dumps(fields, sort_keys=True, cls=NpEncoder) + "\n")
        return fields

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)
