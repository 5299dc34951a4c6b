#!/usr/bin/env python3
"""Ablations on the benchmark preset: the region-sample ratio sweep, the
few-shot grid, and the Gaussian-noise distillation baseline.

Requires the teacher checkpoint (scripts/run_benchmark.py trains it).
"""

import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

import distillab as dl  # noqa: E402
from distillab import cli, mlp  # noqa: E402
from distillab.config import load_preset, load_run_spec, run_spec_to_train_config  # noqa: E402

CONFIGS = os.path.join(ROOT, "configs")
RUNS = os.path.join(ROOT, "runs")


def main() -> int:
    preset_path = os.path.join(CONFIGS, "gm_preset.cfg")
    for axis in ("r", "few_shot"):
        code = cli.main(["sweep", "--preset", preset_path, "--axis", axis, "--out", RUNS])
        if code != 0:
            return code

    # noise baseline: one run per (sigma, seed) against the same teacher
    preset = load_preset(preset_path)
    spec = load_run_spec(preset.resolve(preset.run_config))
    teacher = mlp.load_checkpoint(preset.resolve(preset.teacher_checkpoint))
    ds_train, ds_test, _ = cli.load_dataset(spec)
    print("\nnoise-distillation baseline (median over seeds):")
    for sigma in preset.noise_sigmas:
        accs = []
        for seed in preset.seeds:
            cfg = run_spec_to_train_config(spec, method="noisekd", seed=seed, noise_sigma=sigma)
            _, report = dl.train(teacher, mlp.MlpSpec(spec.model_widths), ds_train, ds_test, cfg)
            accs.append(report.final_test_accuracy)
        print(f"  sigma {sigma:<6g} median {float(np.median(accs)):.4f}  per-seed {[f'{a:.4f}' for a in accs]}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
