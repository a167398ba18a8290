"""
atomscan
========
Entry point: `python app.py <command> --config <file> [--seed N] [--workers N] [--out DIR]`.
"""

import sys

from utils.cli import main

if __name__ == "__main__":
    sys.exit(main())
