#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

import functools
import textwrap
import warnings


class ExperimentalWarning(UserWarning):
    """Warning raised by @experimental decorator."""


def _insert_docstring_text(func, text):
    docstring = func.__doc__ or ""

    # Multi-line docstrings are only indented after the first line, so split
    # before dedenting.
    if "\n" in docstring:
        first_line, remainder = docstring.split("\n", 1)
        docstring = first_line + "\n" + textwrap.dedent(remainder)
    else:
        docstring = textwrap.dedent(docstring)

    return docstring.strip() + "\n\n\n" + text + "\n"


def experimental(func):
    """Decorate a function to designate it as experimental.

    Calling the function emits an `ExperimentalWarning` and a Sphinx
    '.. warning::' directive is appended to its docstring.  Used for
    baselines and studies that are not part of the AugAN method itself.

    Parameters
    ----------
    func : callable

    Returns
    -------
    callable

    """

    @functools.wraps(func)
    def _wrapper(*args, **kwargs):
        warnings.warn(
            "%s is experimental and may change without warning." % func.__name__,
            category=ExperimentalWarning,
            stacklevel=2,
        )
        return func(*args, **kwargs)

    _wrapper.__doc__ = _insert_docstring_text(
        func,
        ".. warning:: This function is experimental and may change without warning.",
    )
    return _wrapper
