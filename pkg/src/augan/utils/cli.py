#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import argparse
import inspect
import json
import logging
import pkgutil
import sys
from collections import namedtuple
from importlib import import_module
from pprint import pprint

import pandas as pd

from ..exceptions import AugANError
from .misc import NpEncoder

ArgInfo = namedtuple("ArgInfo", ["name", "type", "required", "default", "doc"])


def _parse_docstring(func):
    """Map each documented parameter to its (type, help) pair."""
    doc = inspect.getdoc(func) or ""
    start = doc.find("Parameters\n")
    if start < 0:
        return {}

    lines = doc[start:].splitlines()[1:]
    if lines and lines[0].startswith("---"):
        lines.pop(0)

    params = {}
    current = None
    for line in lines:
        if not line.strip():
            continue
        if not line.startswith(" "):
            if ":" not in line:
                # Reached the next section heading
                break
            name, _, type_ = line.partition(":")
            current = name.strip()
            params[current] = [type_.strip() or "str", []]
        elif current is not None:
            params[current][1].append(line.strip())

    return {k: (t, " ".join(h)) for k, (t, h) in params.items()}


def augan_command(name=None):
    """Decorator that tags the function as being usable from the command line.

    Parameters
    ----------
    name : str
        the name of the command that will be shown on the command line.
        Defaults to the function name.

    Returns
    -------
    function

    Examples
    --------
    Define a command called 'train'

    >>> @augan_command('train')
    >>> def train_command(data, out):
            ...

    Define a command and allow its name to be auto-assigned

    >>> @augan_command
    >>> def score(model, data, out):
            ...

    """

    def decorator(func):
        command_name = name if isinstance(name, str) else func.__name__

        def parse_args():
            """Retrieve argument metadata from function signature and docstring."""
            arg_spec = inspect.getfullargspec(func)
            defaults = list(arg_spec.defaults) if arg_spec.defaults is not None else []
            required = [True] * (len(arg_spec.args) - len(defaults)) + [False] * len(
                defaults
            )
            defaults = [None] * (len(arg_spec.args) - len(defaults)) + defaults
            documented = _parse_docstring(func)

            args = []
            for n, r, d in zip(arg_spec.args, required, defaults):
                type_, doc = documented.get(n, ("str", ""))
                args.append(ArgInfo(n, type_, r, d, doc))
            return args

        func._cli_command = command_name
        func._cli_arguments = parse_args

        return func

    if callable(name):
        # allow direct decoration without arguments
        return decorator(name)
    return decorator


def _find_commands(module="augan"):
    """Recursively find all functions in all modules that have been decorated as CLI commands."""
    m = import_module(module)

    def find_recurse(module, commands):
        for obj in dir(module):
            obj = getattr(module, obj)
            if callable(obj) and hasattr(obj, "_cli_command"):
                commands[obj._cli_command] = obj

        for submodule in pkgutil.iter_modules(getattr(module, "__path__", [])):
            submodule = import_module("." + submodule.name, package=module.__name__)
            commands = find_recurse(submodule, commands)

        return commands

    return find_recurse(m, {})


def _get_func_description(func):
    description = getattr(func, "__doc__", "") or ""
    lines = description.strip().split("\n")

    if lines:
        return lines[0]


def _add_argument(parser, arg):
    flag = "--" + arg.name.replace("_", "-")
    kwargs = dict(dest=arg.name, help=arg.doc, required=arg.required)

    if arg.type.startswith("bool"):
        kwargs.update(action="store_true")
        kwargs.pop("required")
    elif arg.type.startswith("list"):
        kwargs.update(action="append", default=arg.default)
    else:
        if arg.type.startswith("int"):
            kwargs["type"] = int
        elif arg.type.startswith("float"):
            kwargs["type"] = float
        kwargs["default"] = arg.default

    parser.add_argument(flag, **kwargs)


def _build_parser(commands):
    from augan import __version__

    parser = argparse.ArgumentParser(
        prog="augan",
        description="augan trains and evaluates graph anomaly detectors that "
        "generalize to unseen graphs.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", help="-v for INFO, -vv for DEBUG"
    )
    parser.add_argument(
        "--version", action="version", version="%(prog)s " + __version__
    )

    subparsers = parser.add_subparsers(title="command", dest="command")
    subparsers.required = True

    for command in sorted(commands):
        func = commands[command]
        cmd_parser = subparsers.add_parser(command, help=_get_func_description(func))
        for arg in func._cli_arguments():
            _add_argument(cmd_parser, arg)

    return parser


def _print_result(result):
    if result is None:
        return
    if isinstance(result, pd.DataFrame):
        print(result.to_string(index=False))
    elif isinstance(result, dict):
        print(json.dumps(result, indent=2, sort_keys=True, cls=NpEncoder))
    elif isinstance(result, list):
        pprint([str(x) for x in result])
    else:
        pprint(result)


def main(args=None):
    """Main entry point when executed as a command line utility.

    Exits with the ``exit_code`` of any :class:`~augan.exceptions.AugANError`
    raised by the command: 2 for configuration and validation errors, 3 when
    partitioning fails and 4 for numerical failures.

    """
    commands = _find_commands()

    parser = _build_parser(commands)
    args = parser.parse_args(args)

    if args.verbose is None or args.verbose == 0:
        lvl = logging.WARNING
    elif args.verbose == 1:
        lvl = logging.INFO
    else:
        lvl = logging.DEBUG

    handler = logging.StreamHandler()
    handler.setLevel(lvl)
    logging.getLogger("augan").addHandler(handler)
    logging.getLogger("augan").setLevel(lvl)

    func = commands[args.command]
    kwargs = vars(args).copy()

    # Remove args that shouldn't be passed to the underlying command
    for k in ["command", "verbose"]:
        kwargs.pop(k, None)

    try:
        _print_result(func(**kwargs))
    except AugANError as e:
        parser.exit(e.exit_code, "%s: error: %s\n" % (parser.prog, e))
    finally:
        logging.getLogger("augan").removeHandler(handler)

    return 0


if __name__ == "__main__":
    sys.exit(main())
