#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

from unittest import mock

import pytest

from augan.exceptions import (
    ConfigurationError,
    DatasetError,
    NumericalError,
    PartitionError,
)
from augan.utils.cli import (
    ArgInfo,
    _build_parser,
    _find_commands,
    _get_func_description,
    _parse_docstring,
    augan_command,
    main,
)


@augan_command("fake")
def fake_command(data, out, jobs=1, rate=0.5, dry_run=False, name=None):
    """A fake command.

    Parameters
    ----------
    data : list of str
        Dataset directory; repeat for every graph.
    out : str
        Output directory.
    jobs : int
        Number of workers.
    rate : float
    dry_run : bool
        Do nothing.
    name : str

    Returns
    -------
    None

    """
    return None


def test_parse_docstring():
    params = _parse_docstring(fake_command)

    assert params["data"] == ("list of str", "Dataset directory; repeat for every graph.")
    assert params["jobs"] == ("int", "Number of workers.")
    assert params["rate"] == ("float", "")
    assert "None" not in params


def test_get_func_description():
    """Verify that function descriptions are correctly extracted from docstrings."""
    assert "A fake command." == _get_func_description(fake_command)


def test_decorator():
    @augan_command
    def command1(x):
        return x

    assert "testing" == command1("testing")
    assert "command1" == command1._cli_command
    args = command1._cli_arguments()
    assert [ArgInfo(name="x", type="str", required=True, default=None, doc="")] == args

    assert "fake" == fake_command._cli_command
    args = {a.name: a for a in fake_command._cli_arguments()}
    assert args["jobs"] == ArgInfo("jobs", "int", False, 1, "Number of workers.")
    assert args["out"].required


def test_build_parser():
    """Verify arguments are correctly parsed."""
    parser = _build_parser({"fake": fake_command})

    args = parser.parse_args(
        "-vv fake --data a --data b --out o --jobs 2 --rate 0.1 --dry-run".split()
    )

    assert "fake" == args.command
    assert 2 == args.verbose
    assert ["a", "b"] == args.data
    assert 2 == args.jobs
    assert 0.1 == args.rate
    assert args.dry_run
    assert args.name is None


def test_missing_required_argument():
    parser = _build_parser({"fake": fake_command})

    with pytest.raises(SystemExit) as e:
        parser.parse_args("fake --data a".split())

    assert e.value.code == 2


def test_command_names():
    commands = _find_commands()

    for name in ["synth", "partition", "train", "score", "eval", "loocv", "sweep"]:
        assert name in commands


def test_main_dispatches():
    func = mock.MagicMock(return_value={"auc": 0.5})
    func._cli_arguments = fake_command._cli_arguments
    func.__doc__ = fake_command.__doc__

    with mock.patch("augan.utils.cli._find_commands", return_value={"fake": func}):
        assert 0 == main("fake --data a --out o".split())

    func.assert_called_once_with(
        data=["a"], out="o", jobs=1, rate=0.5, dry_run=False, name=None
    )


@pytest.mark.parametrize(
    "error, code",
    [
        (ConfigurationError("sigma", "Must lie in (0, 1)."), 2),
        (DatasetError("data/nodes.csv"), 2),
        (PartitionError("Could not partition."), 3),
        (NumericalError("Non-finite loss.", epoch=3, task=1), 4),
    ],
)
def test_main_exit_codes(error, code, capsys):
    func = mock.MagicMock(side_effect=error)
    func._cli_arguments = fake_command._cli_arguments
    func.__doc__ = fake_command.__doc__

    with mock.patch("augan.utils.cli._find_commands", return_value={"fake": func}):
        with pytest.raises(SystemExit) as e:
            main("fake --data a --out o".split())

    assert e.value.code == code
    assert "augan: error:" in capsys.readouterr().err
