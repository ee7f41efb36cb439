#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

if __name__ == "__main__":
    from augan.utils.cli import main

    main()
