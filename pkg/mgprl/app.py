#!/usr/bin/env python3
"""mgprl.

This is the main entrypoint for the application. For full documentation on what
mgprl is, please check README.rst.

All processing in the mgprl package should start through the front_end submodule,
which will itself call the requisite modules. The command line in mgprl.cli
loads the configuration and hands it to the front end.

Usage::

    ./app.py run --config config/config.yml --override noise_level=1
    ./app.py selftest
"""
import sys

from mgprl import cli

if __name__ == "__main__":
    sys.exit(cli.main())
