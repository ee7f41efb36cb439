#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

from .decorators import ExperimentalWarning, experimental
from .misc import JsonLinesLog, NpEncoder, fingerprint, substream
