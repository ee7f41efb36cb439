#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0


class AugANError(Exception):
    """Base class for all errors raised by augan.

    Attributes
    ----------
    exit_code : int
        Status returned by the command line utility when the error is not handled.

    """

    exit_code = 1


class ConfigurationError(AugANError, ValueError):
    """A configuration value or a precondition of an operation is invalid."""

    exit_code = 2

    def __init__(self, key=None, msg=None, *args):
        if msg is None:
            msg = "Invalid value for '%s'." % key
        elif key is not None and key not in msg:
            msg = "%s: %s" % (key, msg)

        self.key = key
        super(ConfigurationError, self).__init__(msg, *args)


class DatasetError(AugANError, OSError):
    """A dataset directory is missing one of its files."""

    exit_code = 2

    def __init__(self, path, msg=None, *args):
        if msg is None:
            msg = "Dataset file '%s' could not be found." % path
        self.path = path
        super(DatasetError, self).__init__(msg, *args)


class ValidationError(AugANError, ValueError):
    """A dataset file contains a malformed row."""

    exit_code = 2

    def __init__(self, path, row=None, msg=None, *args):
        location = str(path) if row is None else "%s, row %d" % (path, row)
        self.path = path
        self.row = row
        super(ValidationError, self).__init__("%s: %s" % (location, msg), *args)


class ShapeError(AugANError, ValueError):
    """Operands have incompatible dimensions."""

    exit_code = 2


class DegenerateInputError(AugANError, ValueError):
    """An input is too small for the operation to be defined."""

    exit_code = 2


class MetricUndefinedError(AugANError, ValueError):
    """A ranking metric is undefined for the given labels."""

    exit_code = 2


class PartitionError(AugANError, RuntimeError):
    """A graph could not be partitioned into well-separated subgraphs.

    Attributes
    ----------
    report : dict or None
        Diagnostics from the last failed attempt.

    """

    exit_code = 3

    def __init__(self, msg, report=None, *args):
        self.report = report
        super(PartitionError, self).__init__(msg, *args)


class NumericalError(AugANError, ArithmeticError):
    """A loss or gradient became non-finite.

    Attributes
    ----------
    batch : Batch or None
        The batch being evaluated when the failure occurred.
    epoch : int or None
    task : int or None

    """

    exit_code = 4

    def __init__(self, msg, batch=None, epoch=None, task=None, *args):
        self.batch = batch
        self.epoch = epoch
        self.task = task
        where = []
        if epoch is not None:
            where.append("epoch %d" % epoch)
        if task is not None:
            where.append("task %d" % task)
        if where:
            msg = "%s (%s)" % (msg, ", ".join(where))
        super(NumericalError, self).__init__(msg, *args)

    def locate(self, epoch=None, task=None):
        """Return a copy of the error annotated with the epoch and task index."""
        return NumericalError(
            str(self.args[0]), batch=self.batch, epoch=epoch, task=task
        )
