"""ReLU multilayer perceptrons playing both the teacher and student roles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rnglib
from .tensor import ShapeError, Tensor, add, matmul, relu

_CHECKPOINT_MAGIC = b"distillab-mlp\n"
_CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or from an unknown version."""


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths from input dim through hidden sizes to the class count."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]


@dataclass
class Parameters:
    spec: MlpSpec
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    def tensors(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Parameters":
        return Parameters(
            self.spec,
            [Tensor(w.values.copy()) for w in self.weights],
            [Tensor(b.values.copy()) for b in self.biases],
        )

    def byte_digest(self) -> bytes:
        return b"".join(t.values.tobytes() for t in self.tensors())


def init(spec: MlpSpec, seed: int) -> Parameters:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, seeded draws."""
    stream = rnglib.Rng(seed, rnglib.INIT)
    params = Parameters(spec)
    widths = spec.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        params.weights.append(Tensor(stream.normal(size=(fan_in, fan_out)) * scale))
        params.biases.append(Tensor(np.zeros(fan_out)))
    return params


def forward(params: Parameters, x) -> Tensor:
    """Logits for a batch; gradient-capable when a tape is active."""
    h = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    expected = params.spec.input_dim
    if h.values.ndim != 2 or h.values.shape[1] != expected:
        raise ShapeError(
            f"forward expects input width {expected}, got shape {h.values.shape}"
        )
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = add(matmul(h, w), b)
        if i != last:
            h = relu(h)
    return h


def forward_values(params: Parameters, x) -> np.ndarray:
    """Plain evaluation outside any tape; never records gradient nodes."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    expected = params.spec.input_dim
    if h.shape[1] != expected:
        raise ShapeError(f"forward expects input width {expected}, got shape {h.shape}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.values + b.values
        if i != last:
            h = np.maximum(h, 0.0)
    return h


def save_checkpoint(params: Parameters, path) -> None:
    """Self-describing binary container; round trips bit-exactly."""
    header = {
        "version": _CHECKPOINT_VERSION,
        "layer_widths": list(params.spec.layer_widths),
        "activation": params.spec.activation,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        for t in params.tensors():
            fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())


def load_checkpoint(path) -> Parameters:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a distillab checkpoint (bad magic)")
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
        if header.get("version") != _CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('version')!r}"
            )
        spec = MlpSpec(tuple(header["layer_widths"]), header["activation"])
        params = Parameters(spec)
        widths = spec.layer_widths
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            for shape in ((fan_in, fan_out), (fan_out,)):
                count = int(np.prod(shape))
                raw = fh.read(count * 8)
                if len(raw) != count * 8:
                    raise CheckpointError(
                        f"{path}: truncated array data, wanted {count * 8} bytes, got {len(raw)}"
                    )
                arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
                if len(shape) == 2:
                    params.weights.append(Tensor(arr))
                else:
                    params.biases.append(Tensor(arr))
        extra = fh.read(1)
        if extra:
            raise CheckpointError(f"{path}: trailing bytes after parameter data")
    return params
