#!/usr/bin/env python3
"""Numerically compare the exact distillation gradient against its
large-temperature approximations, including the deliberately shifted mode
that breaks the zero-mean assumption."""

import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from distillab import cli  # noqa: E402

RUNS = os.path.join(ROOT, "runs")


def main() -> int:
    code = cli.main(["check-derivation", "--taus", "4,20,100,500", "--out", RUNS])
    if code != 0:
        return code
    print("\nwith a shared +5 logit shift (zero-mean assumption broken):")
    return cli.main(
        ["check-derivation", "--taus", "4,20,100,500", "--shift-mean", "5", "--out",
         os.path.join(RUNS, "shifted")]
    )


if __name__ == "__main__":
    raise SystemExit(main())
