"""Command-line front end: teacher training, distillation runs, sweeps, and
the gradient-approximation check.

Every command is deterministic given its config and seeds: artifacts
(checkpoints, record files, summaries, tables) are byte-identical across
reruns. Wall-clock timing goes only to the ``run.log`` sidecar.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import data as datalib
from . import mlp
from .config import (
    ConfigError,
    PresetSpec,
    RunSpec,
    canonical_text,
    config_hash,
    load_preset,
    load_run_spec,
    run_spec_to_train_config,
)
from .losses import derivation_check
from .tensor import DomainError, ShapeError
from .train import NumericalAbort, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_THRESHOLD = 5

OUTPUT_ROOT_ENV = "DISTILLAB_OUT"


class ThresholdFailure(RuntimeError):
    """A gated numerical check did not meet its threshold."""


def _out_root(args) -> str:
    return args.out or os.environ.get(OUTPUT_ROOT_ENV) or "runs"


def load_dataset(spec: RunSpec):
    """Train/test datasets for a run spec, plus frozen normalization stats."""
    stats = None
    if spec.dataset_kind == "idx":
        train = datalib.load_idx(spec.idx_train_images, spec.idx_train_labels, name="idx-train")
        test = datalib.load_idx(spec.idx_test_images, spec.idx_test_labels, name="idx-test")
        if spec.standardize:
            mean, std = datalib.channel_stats(train)
            train = datalib.standardize(train, mean, std)
            test = datalib.standardize(test, mean, std)
            stats = {"mean": [float(v) for v in mean], "std": [float(v) for v in std]}
    else:
        full = datalib.gen_synthetic(
            spec.dataset_kind, spec.dataset_n, spec.dataset_d, spec.dataset_k, spec.dataset_seed
        )
        split = datalib.SplitSpec(
            train_fraction=spec.split_train_fraction,
            few_shot_fraction=spec.few_shot_fraction,
            seed=spec.split_seed,
        )
        train, test = datalib.split_train_test(full, split)
    if spec.few_shot_fraction < 1.0:
        train = datalib.few_shot_subsample(train, spec.few_shot_fraction, spec.split_seed)
    return train, test, stats


def _write_run_outputs(run_dir, spec, params, report, stats, elapsed):
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.resolved.cfg"), "w") as fh:
        fh.write(canonical_text(spec))
    mlp.save_checkpoint(params, os.path.join(run_dir, "checkpoint.bin"))
    report.save(
        os.path.join(run_dir, "records.jsonl"), os.path.join(run_dir, "summary.json")
    )
    if stats is not None:
        with open(os.path.join(run_dir, "normalization.json"), "w") as fh:
            json.dump(stats, fh, sort_keys=True)
            fh.write("\n")
    with open(os.path.join(run_dir, "run.log"), "w") as fh:
        fh.write(f"wall_seconds {elapsed:.3f}\n")


def _run_one(spec: RunSpec, teacher, method, seed, ds_train, ds_test, stats, out_root, tag):
    cfg = run_spec_to_train_config(spec, method=method, seed=seed)
    started = time.monotonic()
    run_spec = replace(spec, method=method, seed=seed)
    params, report = train(
        teacher,
        mlp.MlpSpec(spec.model_widths),
        ds_train,
        ds_test,
        cfg,
        config_hash=config_hash(run_spec),
    )
    run_dir = os.path.join(out_root, f"{tag}-{method}-seed{seed}-{config_hash(run_spec)}")
    _write_run_outputs(run_dir, run_spec, params, report, stats, time.monotonic() - started)
    return params, report, run_dir


def cmd_train_teacher(args) -> int:
    spec = load_run_spec(args.config)
    if spec.method != "vanilla":
        raise ConfigError(f"{args.config}: train-teacher requires method = vanilla, got {spec.method!r}")
    ds_train, ds_test, stats = load_dataset(spec)
    params, report, run_dir = _run_one(
        spec, None, "vanilla", spec.seed, ds_train, ds_test, stats, _out_root(args), "teacher"
    )
    print(
        f"teacher trained: final test accuracy {report.final_test_accuracy:.4f} "
        f"({len(report.records)} epochs) -> {run_dir}"
    )
    return EXIT_OK


def cmd_distill(args) -> int:
    spec = load_run_spec(args.config)
    method = args.method or spec.method
    if method not in ("kd", "l2rkd", "noisekd"):
        raise ConfigError(f"distill requires method kd, l2rkd, or noisekd, got {method!r}")
    if args.noise_sigma is not None:
        spec = replace(spec, noise_sigma=args.noise_sigma)
    teacher = mlp.load_checkpoint(args.teacher)
    ds_train, ds_test, stats = load_dataset(spec)
    # surface incompatible teachers before any training work
    if teacher.spec.input_dim != ds_train.d or teacher.spec.output_dim != ds_train.class_count:
        raise ShapeError(
            f"teacher checkpoint {args.teacher} expects "
            f"[{teacher.spec.input_dim} -> {teacher.spec.output_dim}], dataset has "
            f"[{ds_train.d} -> {ds_train.class_count}]"
        )
    params, report, run_dir = _run_one(
        spec, teacher, method, spec.seed, ds_train, ds_test, stats, _out_root(args), "distill"
    )
    print(
        f"{method} student: final test accuracy {report.final_test_accuracy:.4f} "
        f"st_dif {report.final_st_dif:.4f} -> {run_dir}"
    )
    return EXIT_OK


def _sweep_cells(preset: PresetSpec, axis: str):
    if axis == "r":
        values = preset.r_values
        methods = ("l2rkd",)
    elif axis == "few_shot":
        values = preset.few_shot_fractions
        methods = ("kd", "l2rkd")
    else:  # method
        values = (1.0,)
        methods = preset.methods
    if not values or not methods:
        raise ConfigError(f"preset has no values for sweep axis {axis!r}")
    return values, methods


def cmd_sweep(args) -> int:
    preset = load_preset(args.preset)
    spec = load_run_spec(preset.resolve(preset.run_config))
    values, methods = _sweep_cells(preset, args.axis)

    teacher = None
    if any(m != "vanilla" for m in methods):
        ckpt = preset.resolve(preset.teacher_checkpoint)
        if not ckpt or not os.path.exists(ckpt):
            raise ConfigError(
                f"{args.preset}: teacher_checkpoint {preset.teacher_checkpoint!r} does not exist "
                f"(run train-teacher first)"
            )
        teacher = mlp.load_checkpoint(ckpt)

    out_root = os.path.join(_out_root(args), f"sweep-{args.axis}-{preset.name}")
    os.makedirs(out_root, exist_ok=True)
    rows = []
    for value in values:
        for method in methods:
            for seed in preset.seeds:
                cell_spec = spec
                if args.axis == "r":
                    cell_spec = replace(spec, r=float(value))
                elif args.axis == "few_shot":
                    cell_spec = replace(spec, few_shot_fraction=float(value))
                ds_train, ds_test, stats = load_dataset(cell_spec)
                cell_teacher = None if method == "vanilla" else teacher
                _, report, _ = _run_one(
                    cell_spec, cell_teacher, method, seed, ds_train, ds_test, stats,
                    out_root, f"{args.axis}{value:g}",
                )
                rows.append(
                    {
                        "axis": args.axis,
                        "value": float(value),
                        "method": method,
                        "seed": int(seed),
                        "final_test_accuracy": report.final_test_accuracy,
                        "final_st_dif": report.final_st_dif,
                    }
                )

    table_path = os.path.join(out_root, f"sweep_{args.axis}.tsv")
    with open(table_path, "w") as fh:
        fh.write("axis\tvalue\tmethod\tseed\tfinal_test_accuracy\tfinal_st_dif\n")
        for row in rows:
            sd = "" if row["final_st_dif"] is None else repr(row["final_st_dif"])
            fh.write(
                f"{row['axis']}\t{row['value']!r}\t{row['method']}\t{row['seed']}\t"
                f"{row['final_test_accuracy']!r}\t{sd}\n"
            )
    series_path = os.path.join(out_root, f"sweep_{args.axis}_median.tsv")
    with open(series_path, "w") as fh:
        fh.write("value\tmethod\tmedian_final_test_accuracy\n")
        for value in values:
            for method in methods:
                accs = [
                    r["final_test_accuracy"]
                    for r in rows
                    if r["value"] == float(value) and r["method"] == method
                ]
                fh.write(f"{float(value)!r}\t{method}\t{float(np.median(accs))!r}\n")
    print(f"sweep over {args.axis}: {len(rows)} runs -> {table_path}")
    return EXIT_OK


def cmd_check_derivation(args) -> int:
    try:
        taus = tuple(float(t) for t in args.taus.split(","))
    except ValueError as exc:
        raise ConfigError(f"--taus must be a comma list of numbers: {exc}") from exc
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ConfigError(f"--taus must be strictly ascending, got {args.taus}")
    report = derivation_check(
        seed=args.seed,
        tau_list=taus,
        class_count=args.classes,
        pairs=args.pairs,
        mean_shift=args.shift_mean,
    )
    out_root = os.path.join(_out_root(args), "derivation-check")
    os.makedirs(out_root, exist_ok=True)
    report.save(
        os.path.join(out_root, "derivation_check.tsv"),
        os.path.join(out_root, "derivation_check.json"),
    )
    for tau, ratio_err, scaled_err in zip(
        report.taus, report.median_rel_err_ratio_form, report.median_rel_err_scaled_diff
    ):
        print(f"tau {tau:g}: ratio-form err {ratio_err:.3e}  scaled-diff err {scaled_err:.3e}")

    if report.zero_mean_violated:
        # informational mode: the zero-mean assumption is deliberately broken
        print("zero-mean assumption violated (mean shift applied); thresholds not enforced")
        return EXIT_OK
    if not report.strictly_decreasing_scaled_diff:
        errs = report.median_rel_err_scaled_diff
        bad = next(t for t, a, b in zip(report.taus[1:], errs, errs[1:]) if b >= a)
        raise ThresholdFailure(f"scaled-diff error is not strictly decreasing at tau {bad:g}")
    if not report.strictly_decreasing_ratio_form:
        errs = report.median_rel_err_ratio_form
        bad = next(t for t, a, b in zip(report.taus[1:], errs, errs[1:]) if b >= a)
        raise ThresholdFailure(f"ratio-form error is not strictly decreasing at tau {bad:g}")
    for tau, err in zip(report.taus, report.median_rel_err_scaled_diff):
        if tau >= 1e6 and err >= 1e-6:
            raise ThresholdFailure(
                f"scaled-diff error {err:.3e} at tau {tau:g} exceeds the asymptotic 1e-6 bound"
            )
    print("gradient approximation check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distillab",
        description="Desk-scale teacher/student distillation lab with linear-region sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a network from scratch and save a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help=f"output root (default ${OUTPUT_ROOT_ENV} or ./runs)")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="train a student against a teacher checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--method", choices=("kd", "l2rkd", "noisekd"), default=None)
    p.add_argument("--noise-sigma", type=float, default=None, dest="noise_sigma")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("sweep", help="run a preset's axis sweep and emit tables")
    p.add_argument("--preset", required=True)
    p.add_argument("--axis", choices=("r", "few_shot", "method"), required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-derivation", help="numerical check of the gradient approximation")
    p.add_argument("--taus", default="4,20,100,500", help="ascending comma list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--shift-mean", type=float, default=0.0, dest="shift_mean")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check_derivation)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (datalib.DataError, mlp.CheckpointError, ShapeError, DomainError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ThresholdFailure as exc:
        print(f"threshold failure: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD


if __name__ == "__main__":
    raise SystemExit(main())
