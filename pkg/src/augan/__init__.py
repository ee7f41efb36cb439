#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

__version__ = "0.1.0"
__author__ = "AugAN developers"
__license__ = "Apache 2.0"
__copyright__ = "Copyright © 2024, AugAN developers.  All Rights Reserved."

import logging

from .config import PartitionConfig, RunConfig, SynthConfig, TrainConfig
from .core import (
    AttributedGraph,
    NodeRef,
    NodeRoles,
    load_dataset,
    normalize_adjacency,
    save_dataset,
    split_roles,
)
from .detector import ModelParams, train_deepall
from .episodic import predict_scores, train_augan
from .exceptions import AugANError
from .tasks import leave_one_out, train_model

# Prevent package from emitting log records unless consuming
# application configures logging.
logging.getLogger(__name__).addHandler(logging.NullHandler())
