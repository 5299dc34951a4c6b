"""Evaluation metrics and the per-run report record."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .tensor import ShapeError, Tensor

SCHEMA_VERSION = 1


def accuracy(logits, labels) -> float:
    """Argmax match rate. Ties break toward the lowest class index (numpy
    argmax returns the first maximum)."""
    values = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.asarray(labels)
    if values.ndim != 2 or values.shape[0] != labels.shape[0]:
        raise ShapeError(f"accuracy got logits {values.shape} vs labels {labels.shape}")
    return float(np.mean(np.argmax(values, axis=1) == labels))


def st_dif(student: mlp.Parameters, teacher: mlp.Parameters, ds_test) -> float:
    """Mean squared student-teacher logit difference over a test set,
    averaged over both samples and classes. Zero iff the two networks agree
    on every test point; symmetric in its two networks."""
    if student.spec.input_dim != teacher.spec.input_dim:
        raise ShapeError(
            f"input widths differ: student {student.spec.input_dim}, "
            f"teacher {teacher.spec.input_dim}"
        )
    if student.spec.output_dim != teacher.spec.output_dim:
        raise ShapeError(
            f"output widths differ: student {student.spec.output_dim}, "
            f"teacher {teacher.spec.output_dim}"
        )
    s_logits = mlp.forward_values(student, ds_test.features)
    t_logits = mlp.forward_values(teacher, ds_test.features)
    return float(np.mean((s_logits - t_logits) ** 2))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    ce_loss: float
    distill_loss: float
    test_accuracy: float
    st_dif: float | None = None
    lambdas: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "ce_loss": self.ce_loss,
            "distill_loss": self.distill_loss,
            "test_accuracy": self.test_accuracy,
            "st_dif": self.st_dif,
            "lambdas": list(self.lambdas),
        }


@dataclass
class RunReport:
    """Per-epoch metrics plus run identity; serialized as line-delimited
    records and a final summary document (no timestamps: byte-identical
    reruns are part of the contract)."""

    method: str
    seed: int
    dataset_name: str
    config_hash: str
    records: list[EpochRecord] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        for i, rec in enumerate(self.records):
            if rec.epoch != i:
                raise ValueError(f"epochs must be contiguous from 0, record {i} has {rec.epoch}")
            numeric = [rec.lr, rec.ce_loss, rec.distill_loss, rec.test_accuracy]
            if rec.st_dif is not None:
                numeric.append(rec.st_dif)
            numeric.extend(rec.lambdas)
            if not all(math.isfinite(v) for v in numeric):
                raise ValueError(f"non-finite value in epoch record {i}")

    @property
    def final_test_accuracy(self) -> float:
        return self.records[-1].test_accuracy

    @property
    def final_st_dif(self) -> float | None:
        return self.records[-1].st_dif

    def region_batch_count(self) -> int:
        return sum(len(rec.lambdas) for rec in self.records)

    def summary_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "method": self.method,
            "seed": self.seed,
            "dataset": self.dataset_name,
            "config_hash": self.config_hash,
            "epochs": len(self.records),
            "final_test_accuracy": self.final_test_accuracy,
            "final_st_dif": self.final_st_dif,
            "region_batches": self.region_batch_count(),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(rec.to_dict(), sort_keys=True) for rec in self.records]
        return "\n".join(lines) + "\n"

    def save(self, records_path, summary_path) -> None:
        self.validate()
        with open(records_path, "w") as fh:
            fh.write(self.to_jsonl())
        with open(summary_path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
