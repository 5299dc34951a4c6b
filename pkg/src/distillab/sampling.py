"""Vicinal augmentation, linear-region interpolation, and the Gaussian-noise
baseline sampler. Everything here works on plain float64 arrays: sampled
points are inputs to the networks, never gradient targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DomainError, ShapeError

AUGMENT_KINDS = ("identity", "image_pad_crop_flip", "vector_jitter")


class AugmentConfigError(ValueError):
    """Augmentation policy is inconsistent with the dataset's feature layout."""


@dataclass(frozen=True)
class AugmentPolicy:
    kind: str = "identity"
    pad: int = 0
    flip_prob: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ValueError(f"augment kind must be one of {AUGMENT_KINDS}, got {self.kind!r}")
        if self.pad < 0:
            raise ValueError(f"pad must be nonnegative, got {self.pad}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if self.jitter_sigma < 0.0:
            raise ValueError(f"jitter_sigma must be nonnegative, got {self.jitter_sigma}")


def augment(batch: np.ndarray, policy: AugmentPolicy, layout, rng) -> np.ndarray:
    """Per-sample independent transform of a [B x d] batch. Labels are the
    caller's business and never change.

    Draw order per call for the image policy: crop offsets ``integers(0,
    2*pad+1, size=(B, 2))`` first, then flip uniforms ``random(B)``.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if policy.kind == "identity":
        return batch.copy()

    if policy.kind == "vector_jitter":
        return batch + policy.jitter_sigma * rng.normal(size=batch.shape)

    # image_pad_crop_flip
    if layout is None or getattr(layout, "kind", None) != "square_image":
        raise AugmentConfigError(
            "image_pad_crop_flip needs a square_image feature layout, "
            f"got {layout!r}"
        )
    side, channels = layout.side, layout.channels
    n, d = batch.shape
    if d != channels * side * side:
        raise AugmentConfigError(
            f"feature width {d} does not match {channels}x{side}x{side} layout"
        )
    images = batch.reshape(n, channels, side, side)
    pad = policy.pad
    if pad > 0:
        padded = np.zeros((n, channels, side + 2 * pad, side + 2 * pad))
        padded[:, :, pad : pad + side, pad : pad + side] = images
        offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
        out = np.empty_like(images)
        for i in range(n):
            oy, ox = offsets[i]
            out[i] = padded[i, :, oy : oy + side, ox : ox + side]
    else:
        out = images.copy()
    if policy.flip_prob > 0.0:
        flips = rng.random(n) < policy.flip_prob
        out[flips] = out[flips, :, :, ::-1]
    return out.reshape(n, d)


def interpolate(x_i: np.ndarray, x_j: np.ndarray, lam: float) -> np.ndarray:
    """Point on the segment between two batches: (1 - lam) * x_i + lam * x_j."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"interpolation coefficient must lie in [0, 1], got {lam}")
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ShapeError(f"endpoint shapes differ: {x_i.shape} vs {x_j.shape}")
    if lam == 0.0:
        return x_i.copy()
    if lam == 1.0:
        return x_j.copy()
    out = (1.0 - lam) * x_i + lam * x_j
    # Clamp 1-ulp rounding excursions so the point stays inside the segment's
    # elementwise bounding box for every coefficient.
    np.clip(out, np.minimum(x_i, x_j), np.maximum(x_i, x_j), out=out)
    return out


def sample_region_batch(batch_i, batch_j, rng, per_sample: bool = False):
    """Interpolate two batches at a uniform random coefficient.

    Default mode draws a single coefficient per call and applies it to the
    whole batch; ``per_sample`` draws one per row instead. Returns the
    interpolated batch and the coefficient(s) for logging.
    """
    batch_i = np.asarray(batch_i, dtype=np.float64)
    batch_j = np.asarray(batch_j, dtype=np.float64)
    if batch_i.shape != batch_j.shape:
        raise ShapeError(f"endpoint shapes differ: {batch_i.shape} vs {batch_j.shape}")
    if per_sample:
        lam = rng.random(size=(batch_i.shape[0], 1))
        out = (1.0 - lam) * batch_i + lam * batch_j
        np.clip(out, np.minimum(batch_i, batch_j), np.maximum(batch_i, batch_j), out=out)
        return out, lam.ravel()
    lam = float(rng.random())
    return interpolate(batch_i, batch_j, lam), lam


def noise_batch(batch: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Batch plus iid Gaussian noise with standard deviation ``sigma``."""
    if sigma < 0.0:
        raise DomainError(f"noise standard deviation must be nonnegative, got {sigma}")
    batch = np.asarray(batch, dtype=np.float64)
    if sigma == 0.0:
        return batch.copy()
    return batch + sigma * rng.normal(size=batch.shape)
