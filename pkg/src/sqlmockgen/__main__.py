"""Run the command line interface with python -m sqlmockgen."""

import sys

from .cli import main

sys.exit(main())
