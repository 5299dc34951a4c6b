"""Flat, versioned, human-writable config files.

One ``key = value`` pair per line, ``#`` comments, no nesting. Unknown keys
are hard errors: silent config drift is the main reproducibility killer in
experiment tooling, so every field must be spelled exactly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields

from .losses import METHODS, DistillConfig
from .sampling import AUGMENT_KINDS, AugmentPolicy
from .train import TrainConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Config file cannot be parsed or fails validation."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip()) if s.strip() else ()


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip()) if s.strip() else ()


def _parse_str_list(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def parse_flat(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line_number)`` mapping."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


@dataclass
class RunSpec:
    """Everything one training run needs, as flat fields."""

    config_version: int = CONFIG_VERSION
    # dataset
    dataset_kind: str = "gaussian_mixture"  # synthetic kinds | idx
    dataset_n: int = 10000
    dataset_d: int = 2
    dataset_k: int = 2
    dataset_seed: int = 0
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    standardize: bool = True
    # split
    split_train_fraction: float = 0.5
    split_seed: int = 0
    few_shot_fraction: float = 1.0
    # model / optimization
    model_widths: tuple[int, ...] = (2, 8, 2)
    epochs: int = 40
    batch_size: int = 10
    lr: float = 0.0225
    momentum: float = 0.9
    lr_decay_epochs: tuple[int, ...] = (25, 33)
    lr_decay_factor: float = 10.0
    seed: int = 0
    # objective
    method: str = "vanilla"
    alpha: float = 0.1
    eta: float = 1.0
    tau: float = 4.0
    r: float = 1.0
    noise_sigma: float = 0.0
    per_sample_lambda: bool = False
    independent_region_pairs: bool = False
    # augmentation
    augment_kind: str = "identity"
    augment_pad: int = 0
    augment_flip_prob: float = 0.0
    augment_jitter_sigma: float = 0.0


_RUN_PARSERS = {
    "config_version": int,
    "dataset_kind": str,
    "dataset_n": int,
    "dataset_d": int,
    "dataset_k": int,
    "dataset_seed": int,
    "idx_train_images": str,
    "idx_train_labels": str,
    "idx_test_images": str,
    "idx_test_labels": str,
    "standardize": _parse_bool,
    "split_train_fraction": float,
    "split_seed": int,
    "few_shot_fraction": float,
    "model_widths": _parse_int_list,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "momentum": float,
    "lr_decay_epochs": _parse_int_list,
    "lr_decay_factor": float,
    "seed": int,
    "method": str,
    "alpha": float,
    "eta": float,
    "tau": float,
    "r": float,
    "noise_sigma": float,
    "per_sample_lambda": _parse_bool,
    "independent_region_pairs": _parse_bool,
    "augment_kind": str,
    "augment_pad": int,
    "augment_flip_prob": float,
    "augment_jitter_sigma": float,
}

_RUN_REQUIRED = ("config_version", "dataset_kind", "model_widths", "method")


def _build(spec_cls, parsers, required, raw, source):
    values = {}
    for key, (text, lineno) in raw.items():
        if key not in parsers:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        try:
            values[key] = parsers[key](text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    for key in required:
        if key not in values:
            raise ConfigError(f"{source}: missing required field {key!r}")
    if values["config_version"] != CONFIG_VERSION:
        raise ConfigError(
            f"{source}: unsupported config_version {values['config_version']} "
            f"(this build reads version {CONFIG_VERSION})"
        )
    return spec_cls(**values)


def load_run_spec(path) -> RunSpec:
    with open(path) as fh:
        text = fh.read()
    spec = _build(RunSpec, _RUN_PARSERS, _RUN_REQUIRED, parse_flat(text, str(path)), str(path))
    validate_run_spec(spec, str(path))
    return spec


def validate_run_spec(spec: RunSpec, source: str = "<config>") -> None:
    if spec.method not in METHODS:
        raise ConfigError(f"{source}: field 'method' must be one of {METHODS}, got {spec.method!r}")
    if spec.augment_kind not in AUGMENT_KINDS:
        raise ConfigError(
            f"{source}: field 'augment_kind' must be one of {AUGMENT_KINDS}, "
            f"got {spec.augment_kind!r}"
        )
    if spec.dataset_kind == "idx":
        for f_name in ("idx_train_images", "idx_train_labels", "idx_test_images", "idx_test_labels"):
            if not getattr(spec, f_name):
                raise ConfigError(f"{source}: dataset_kind 'idx' requires field {f_name!r}")
    elif spec.dataset_kind not in ("gaussian_mixture", "two_spirals", "teacher_labeled"):
        raise ConfigError(f"{source}: unknown dataset_kind {spec.dataset_kind!r}")
    if len(spec.model_widths) < 2:
        raise ConfigError(f"{source}: field 'model_widths' needs at least two widths")


def run_spec_to_train_config(spec: RunSpec, method: str | None = None, **overrides) -> TrainConfig:
    distill = DistillConfig(
        method=method or spec.method,
        alpha=spec.alpha,
        eta=spec.eta,
        tau=spec.tau,
        r=overrides.pop("r", spec.r),
        noise_sigma=overrides.pop("noise_sigma", spec.noise_sigma),
        per_sample_lambda=spec.per_sample_lambda,
        independent_region_pairs=spec.independent_region_pairs,
    )
    augment = AugmentPolicy(
        kind=spec.augment_kind,
        pad=spec.augment_pad,
        flip_prob=spec.augment_flip_prob,
        jitter_sigma=spec.augment_jitter_sigma,
    )
    return TrainConfig(
        epochs=spec.epochs,
        batch_size=spec.batch_size,
        lr=spec.lr,
        momentum=spec.momentum,
        lr_decay_epochs=spec.lr_decay_epochs,
        lr_decay_factor=spec.lr_decay_factor,
        seed=overrides.pop("seed", spec.seed),
        distill=distill,
        augment=augment,
    )


def canonical_text(spec) -> str:
    """Deterministic serialization: sorted ``key = value`` lines."""
    lines = []
    for f in sorted(fields(spec), key=lambda f: f.name):
        value = getattr(spec, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(spec) -> str:
    return hashlib.sha256(canonical_text(spec).encode()).hexdigest()[:16]


@dataclass
class PresetSpec:
    """A named experiment: base run config plus sweep axes."""

    config_version: int = CONFIG_VERSION
    name: str = "preset"
    run_config: str = ""
    teacher_config: str = ""
    teacher_checkpoint: str = ""
    methods: tuple[str, ...] = ("vanilla", "kd", "l2rkd")
    seeds: tuple[int, ...] = (0, 1, 2)
    r_values: tuple[float, ...] = (0.2, 0.5, 1.0, 2.0)
    few_shot_fractions: tuple[float, ...] = (0.6, 0.4, 0.2, 0.1)
    noise_sigmas: tuple[float, ...] = (0.1, 0.05, 0.01, 0.005)
    base_dir: str = field(default="", compare=False)

    def resolve(self, path: str) -> str:
        if not path:
            return path
        if os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)


_PRESET_PARSERS = {
    "config_version": int,
    "name": str,
    "run_config": str,
    "teacher_config": str,
    "teacher_checkpoint": str,
    "methods": _parse_str_list,
    "seeds": _parse_int_list,
    "r_values": _parse_float_list,
    "few_shot_fractions": _parse_float_list,
    "noise_sigmas": _parse_float_list,
}

_PRESET_REQUIRED = ("config_version", "name", "run_config")


def load_preset(path) -> PresetSpec:
    with open(path) as fh:
        text = fh.read()
    preset = _build(PresetSpec, _PRESET_PARSERS, _PRESET_REQUIRED, parse_flat(text, str(path)), str(path))
    preset.base_dir = os.path.dirname(os.path.abspath(str(path)))
    if not preset.seeds:
        raise ConfigError(f"{path}: field 'seeds' must list at least one seed")
    for m in preset.methods:
        if m not in METHODS:
            raise ConfigError(f"{path}: unknown method {m!r} in 'methods'")
    return preset
