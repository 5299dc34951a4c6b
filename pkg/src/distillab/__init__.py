"""Desk-scale teacher/student distillation lab with linear-region sampling."""

from .data import Dataset, FeatureLayout, SplitSpec, batches, few_shot_subsample, gen_synthetic, load_idx, split_train_test
from .losses import (
    DistillConfig,
    cross_entropy,
    derivation_check,
    kd_grad_approx,
    kd_grad_closed_form,
    kd_loss,
    kl_distill,
    l2rkd_loss,
)
from .metrics import RunReport, accuracy, st_dif
from .mlp import MlpSpec, Parameters, forward, forward_values, init, load_checkpoint, save_checkpoint
from .rng import Rng
from .sampling import AugmentPolicy, augment, interpolate, noise_batch, sample_region_batch
from .tensor import GradientTape, Tensor, backward, matmul, softmax_t
from .train import NumericalAbort, TrainConfig, lr_at, sgd_step, sweep_r, train

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "Dataset",
    "DistillConfig",
    "FeatureLayout",
    "GradientTape",
    "MlpSpec",
    "NumericalAbort",
    "Parameters",
    "Rng",
    "RunReport",
    "SplitSpec",
    "Tensor",
    "TrainConfig",
    "accuracy",
    "augment",
    "backward",
    "batches",
    "cross_entropy",
    "derivation_check",
    "few_shot_subsample",
    "forward",
    "forward_values",
    "gen_synthetic",
    "init",
    "interpolate",
    "kd_grad_approx",
    "kd_grad_closed_form",
    "kd_loss",
    "kl_distill",
    "l2rkd_loss",
    "load_checkpoint",
    "load_idx",
    "lr_at",
    "matmul",
    "noise_batch",
    "sample_region_batch",
    "save_checkpoint",
    "sgd_step",
    "softmax_t",
    "split_train_test",
    "st_dif",
    "sweep_r",
    "train",
]
