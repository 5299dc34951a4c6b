#!/usr/bin/env python3
"""Run the full benchmark: train the teacher, then compare vanilla training,
plain distillation, and region distillation over three seeds.

Artifacts land under runs/ at the repo root; the method table prints here.
"""

import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from distillab import cli  # noqa: E402

CONFIGS = os.path.join(ROOT, "configs")
RUNS = os.path.join(ROOT, "runs")


def main() -> int:
    code = cli.main(
        ["train-teacher", "--config", os.path.join(CONFIGS, "gm_teacher.cfg"), "--out", RUNS]
    )
    if code != 0:
        return code
    code = cli.main(
        ["sweep", "--preset", os.path.join(CONFIGS, "gm_preset.cfg"), "--axis", "method",
         "--out", RUNS]
    )
    if code != 0:
        return code
    table = os.path.join(RUNS, "sweep-method-gm-checkerboard", "sweep_method_median.tsv")
    print("\nmedian final test accuracy per method:")
    with open(table) as fh:
        next(fh)
        for line in fh:
            _, method, acc = line.split("\t")
            print(f"  {method:8s} {float(acc):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
