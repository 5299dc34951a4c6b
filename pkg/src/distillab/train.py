"""SGD training loop for vanilla, distilled, region-distilled, and
noise-distilled students, with step-decay learning-rate scheduling.

Randomness is split into independent named streams (batch order, batch
augmentation, region pairing, region augmentation, interpolation
coefficients, noise), so ablations that disable one consumer leave every
other stream's draws untouched; with the same seed, a distillation run and a
vanilla run see identical batches and augmentations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as datalib
from . import metrics as metricslib
from . import mlp
from . import rng as rnglib
from .losses import DistillConfig, cross_entropy, kd_loss, kl_distill, l2rkd_loss
from .metrics import EpochRecord, RunReport
from .sampling import AugmentPolicy, augment, noise_batch, sample_region_batch
from .tensor import GradientTape, ShapeError, backward


class NumericalAbort(RuntimeError):
    """Training hit a non-finite loss; carries the offending step index."""

    def __init__(self, step: int, epoch: int, value: float):
        self.step = step
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value} at step {step} (epoch {epoch})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    momentum: float = 0.9
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 10.0
    seed: int = 0
    distill: DistillConfig = field(default_factory=lambda: DistillConfig(method="vanilla"))
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        decays = tuple(self.lr_decay_epochs)
        object.__setattr__(self, "lr_decay_epochs", decays)
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ValueError(f"lr_decay_epochs must be ascending, got {decays}")
        if self.lr_decay_factor <= 0:
            raise ValueError(f"lr_decay_factor must be positive, got {self.lr_decay_factor}")


@dataclass
class OptimizerState:
    velocities: list[np.ndarray]
    lr: float
    step_count: int = 0

    @classmethod
    def for_params(cls, params: mlp.Parameters, lr: float) -> "OptimizerState":
        return cls([np.zeros_like(t.values) for t in params.tensors()], lr)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Base rate divided by the decay factor once per passed decay epoch."""
    passed = sum(1 for e in cfg.lr_decay_epochs if epoch >= e)
    return cfg.lr / cfg.lr_decay_factor**passed


def sgd_step(params: mlp.Parameters, grads, state: OptimizerState, cfg: TrainConfig) -> None:
    """Classical momentum: v <- momentum*v + g; p <- p - lr*v. In place."""
    tensors = params.tensors()
    for t in tensors:
        if t not in grads:
            raise KeyError("sgd_step is missing a gradient for a parameter tensor")
    for t, v in zip(tensors, state.velocities):
        v *= cfg.momentum
        v += grads[t].values
        t.values -= state.lr * v
    state.step_count += 1


def _check_compat(teacher, student_spec: mlp.MlpSpec, ds: datalib.Dataset) -> None:
    if student_spec.input_dim != ds.d:
        raise ShapeError(
            f"student input width {student_spec.input_dim} does not match data dim {ds.d}"
        )
    if student_spec.output_dim != ds.class_count:
        raise ShapeError(
            f"student output width {student_spec.output_dim} does not match "
            f"class count {ds.class_count}"
        )
    if teacher is not None:
        if teacher.spec.input_dim != ds.d:
            raise ShapeError(
                f"teacher input width {teacher.spec.input_dim} does not match data dim {ds.d}"
            )
        if teacher.spec.output_dim != ds.class_count:
            raise ShapeError(
                f"teacher output width {teacher.spec.output_dim} does not match "
                f"class count {ds.class_count}"
            )


def train(
    teacher: mlp.Parameters | None,
    student_spec: mlp.MlpSpec,
    ds_train: datalib.Dataset,
    ds_test: datalib.Dataset,
    cfg: TrainConfig,
    config_hash: str = "",
) -> tuple[mlp.Parameters, RunReport]:
    """Train a student and report per-epoch metrics.

    Per step: ``vanilla`` takes cross-entropy on one augmented batch; ``kd``
    mixes in the softened-KL term on the same batch; ``l2rkd`` adds the
    region-batch KL with 1/r region batches per step via a fractional
    accumulator (region batches are concatenated so their KL mean weights
    every region point equally); ``noisekd`` is ``kd`` with the distillation
    batch replaced by a noise-perturbed copy.
    """
    method = cfg.distill.method
    if method == "vanilla":
        if teacher is not None:
            raise ValueError("vanilla training takes no teacher")
    elif teacher is None:
        raise ValueError(f"method {method!r} requires a teacher")
    _check_compat(teacher, student_spec, ds_train)

    params = mlp.init(student_spec, cfg.seed)
    state = OptimizerState.for_params(params, cfg.lr)
    aug_rng = rnglib.Rng(cfg.seed, rnglib.AUGMENT)
    pair_rng = rnglib.Rng(cfg.seed, rnglib.REGION_PAIR)
    region_aug_rng = rnglib.Rng(cfg.seed, rnglib.REGION_AUGMENT)
    lam_rng = rnglib.Rng(cfg.seed, rnglib.REGION_LAMBDA)
    noise_rng = rnglib.Rng(cfg.seed, rnglib.NOISE)

    teacher_test_logits = None
    if teacher is not None:
        teacher_test_logits = mlp.forward_values(teacher, ds_test.features)

    report = RunReport(
        method=method, seed=cfg.seed, dataset_name=ds_train.name, config_hash=config_hash
    )
    region_accumulator = 0.0
    step_index = 0

    for epoch in range(cfg.epochs):
        state.lr = lr_at(epoch, cfg)
        ce_vals: list[float] = []
        kl_vals: list[float] = []
        lambdas: list[float] = []

        for idx in datalib.batches(ds_train.n, cfg.batch_size, cfg.seed, epoch):
            x_aug = augment(ds_train.features[idx], cfg.augment, ds_train.layout, aug_rng)
            y = ds_train.labels[idx]

            region_points = None
            if method == "l2rkd":
                region_accumulator += 1.0 / cfg.distill.r
                n_region = int(math.floor(region_accumulator))
                region_accumulator -= n_region
                chunks = []
                for _ in range(n_region):
                    if cfg.distill.independent_region_pairs:
                        idx_i = pair_rng.integers(0, ds_train.n, size=len(idx))
                        first = augment(
                            ds_train.features[idx_i], cfg.augment, ds_train.layout, region_aug_rng
                        )
                    else:
                        first = x_aug
                    idx_j = pair_rng.integers(0, ds_train.n, size=len(idx))
                    second = augment(
                        ds_train.features[idx_j], cfg.augment, ds_train.layout, region_aug_rng
                    )
                    points, lam = sample_region_batch(
                        first, second, lam_rng, per_sample=cfg.distill.per_sample_lambda
                    )
                    chunks.append(points)
                    if cfg.distill.per_sample_lambda:
                        lambdas.extend(float(v) for v in lam)
                    else:
                        lambdas.append(lam)
                if chunks:
                    region_points = np.concatenate(chunks)

            with GradientTape() as tape:
                for t in params.tensors():
                    tape.watch(t)
                student_logits = mlp.forward(params, x_aug)

                if method == "vanilla":
                    loss = cross_entropy(student_logits, y)
                    ce_part, kl_part = loss.item(), 0.0
                elif method == "kd":
                    teacher_logits = mlp.forward_values(teacher, x_aug)
                    loss = kd_loss(student_logits, teacher_logits, y, cfg.distill)
                    ce_part = cross_entropy(student_logits, y).item()
                    kl_part = kl_distill(student_logits, teacher_logits, cfg.distill.tau).item()
                elif method == "noisekd":
                    x_noisy = noise_batch(x_aug, cfg.distill.noise_sigma, noise_rng)
                    noisy_logits = mlp.forward(params, x_noisy)
                    teacher_logits = mlp.forward_values(teacher, x_noisy)
                    ce = cross_entropy(student_logits, y)
                    kl = kl_distill(noisy_logits, teacher_logits, cfg.distill.tau)
                    loss = cfg.distill.alpha * ce + (1.0 - cfg.distill.alpha) * kl
                    ce_part, kl_part = ce.item(), kl.item()
                else:  # l2rkd
                    if region_points is not None and cfg.distill.eta != 0.0:
                        region_logits = mlp.forward(params, region_points)
                        teacher_region = mlp.forward_values(teacher, region_points)
                        loss = l2rkd_loss(
                            student_logits, y, region_logits, teacher_region, cfg.distill
                        )
                        kl_part = kl_distill(
                            region_logits, teacher_region, cfg.distill.tau
                        ).item()
                    else:
                        loss = cfg.distill.alpha * cross_entropy(student_logits, y)
                        kl_part = 0.0
                    ce_part = cross_entropy(student_logits, y).item()

            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise NumericalAbort(step_index, epoch, loss_value)
            grads = backward(loss)
            sgd_step(params, grads, state, cfg)
            ce_vals.append(ce_part)
            kl_vals.append(kl_part)
            step_index += 1

        test_logits = mlp.forward_values(params, ds_test.features)
        epoch_st_dif = None
        if teacher_test_logits is not None:
            epoch_st_dif = float(np.mean((test_logits - teacher_test_logits) ** 2))
        report.records.append(
            EpochRecord(
                epoch=epoch,
                lr=state.lr,
                ce_loss=float(np.mean(ce_vals)),
                distill_loss=float(np.mean(kl_vals)) if kl_vals else 0.0,
                test_accuracy=metricslib.accuracy(test_logits, ds_test.labels),
                st_dif=epoch_st_dif,
                lambdas=tuple(lambdas),
            )
        )

    report.validate()
    return params, report


def sweep_r(
    teacher: mlp.Parameters,
    student_spec: mlp.MlpSpec,
    ds_train: datalib.Dataset,
    ds_test: datalib.Dataset,
    base_cfg: TrainConfig,
    r_values,
    seeds,
) -> list[dict]:
    """One region-distillation run per (r, seed); returns accuracy rows."""
    rows = []
    for r in r_values:
        if r <= 0:
            raise ValueError(f"r values must be positive, got {r}")
        for seed in seeds:
            cfg = replace(
                base_cfg, seed=seed, distill=replace(base_cfg.distill, method="l2rkd", r=float(r))
            )
            _, report = train(teacher, student_spec, ds_train, ds_test, cfg)
            rows.append(
                {
                    "r": float(r),
                    "seed": int(seed),
                    "final_test_accuracy": report.final_test_accuracy,
                    "final_st_dif": report.final_st_dif,
                }
            )
    return rows
