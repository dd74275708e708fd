#!/usr/bin/env python3
"""Reproduce the uniform-refinement error tables for both examples.

Writes one CSV per example and polynomial order under results/convergence.
The smooth unit-square case is run for both orders; the L-shaped case only
for the lowest order (its solution is too rough for the higher rate).
"""

import sys

from cbf2d.cli import main

RUNS = [
    ["convergence", "--example", "ex1", "--order", "0", "--levels", "7"],
    ["convergence", "--example", "ex1", "--order", "1", "--levels", "5"],
    ["convergence", "--example", "ex2", "--order", "0", "--levels", "5"],
]

if __name__ == "__main__":
    for args in RUNS:
        code = main(args + ["--out", "results/convergence"])
        if code != 0:
            sys.exit(code)
