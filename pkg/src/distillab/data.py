"""Datasets: synthetic generators, IDX image files, splits, few-shot
subsampling, and seeded batch iteration. Datasets are immutable after load;
all derivations are pure functions of (inputs, seed)."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import mlp
from . import rng as rnglib

SYNTHETIC_KINDS = ("gaussian_mixture", "two_spirals", "teacher_labeled")

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801

# gaussian_mixture geometry: a square grid of well-separated blobs whose
# classes cycle along the grid diagonals (a Gaussian checkerboard), so the
# decision surface has several pieces instead of a single hyperplane.
_MIXTURE_GRID_SPACING = 1.0
_MIXTURE_STD = 0.18


class DataError(ValueError):
    """Dataset construction or parsing failed."""


@dataclass(frozen=True)
class FeatureLayout:
    kind: str  # "flat_vector" | "square_image"
    side: int = 0
    channels: int = 0

    @classmethod
    def flat(cls) -> "FeatureLayout":
        return cls("flat_vector")

    @classmethod
    def image(cls, side: int, channels: int = 1) -> "FeatureLayout":
        if side <= 0 or channels <= 0:
            raise ValueError(f"image layout needs positive side/channels, got {side}/{channels}")
        return cls("square_image", side, channels)


@dataclass
class Dataset:
    name: str
    features: np.ndarray  # [n x d] float64
    labels: np.ndarray  # [n] int64
    class_count: int
    layout: FeatureLayout

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError(f"features must be [n x d], got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(
                f"label count {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )
        if self.labels.size == 0:
            raise DataError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DataError(
                f"labels must lie in [0, {self.class_count}), "
                f"found range [{self.labels.min()}, {self.labels.max()}]"
            )
        present = np.unique(self.labels)
        if len(present) != self.class_count:
            missing = sorted(set(range(self.class_count)) - set(present.tolist()))
            raise DataError(f"classes {missing} have no samples")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, indices, name=None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            name or self.name,
            self.features[idx].copy(),
            self.labels[idx].copy(),
            self.class_count,
            self.layout,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float | None = None
    train_indices: tuple[int, ...] | None = None
    test_indices: tuple[int, ...] | None = None
    few_shot_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        explicit = self.train_indices is not None or self.test_indices is not None
        if explicit and (self.train_indices is None or self.test_indices is None):
            raise ValueError("explicit split needs both train and test index lists")
        if not explicit:
            if self.train_fraction is None or not 0.0 < self.train_fraction < 1.0:
                raise ValueError(
                    f"train_fraction must lie in (0, 1), got {self.train_fraction}"
                )
        if not 0.0 < self.few_shot_fraction <= 1.0:
            raise ValueError(
                f"few_shot_fraction must lie in (0, 1], got {self.few_shot_fraction}"
            )


def split_train_test(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint train/test views whose indices cover the source dataset."""
    if spec.train_indices is not None:
        train_idx = np.asarray(sorted(spec.train_indices), dtype=np.int64)
        test_idx = np.asarray(sorted(spec.test_indices), dtype=np.int64)
        if np.intersect1d(train_idx, test_idx).size:
            raise DataError("explicit train/test index lists overlap")
        union = np.union1d(train_idx, test_idx)
        if union.size != ds.n or union[0] != 0 or union[-1] != ds.n - 1:
            raise DataError("explicit train/test index lists do not cover the dataset")
    else:
        perm = rnglib.Rng(spec.seed, rnglib.SPLIT).permutation(ds.n)
        n_train = int(round(spec.train_fraction * ds.n))
        n_train = min(max(n_train, 1), ds.n - 1)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
    return (
        ds.take(train_idx, name=f"{ds.name}-train"),
        ds.take(test_idx, name=f"{ds.name}-test"),
    )


def _mixture_centers(d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid blob centers in the first two coordinates plus per-blob classes."""
    side = max(3, int(np.ceil(np.sqrt(k))))
    offsets = (np.arange(side) - (side - 1) / 2.0) * _MIXTURE_GRID_SPACING
    centers = np.zeros((side * side, d))
    classes = np.zeros(side * side, dtype=np.int64)
    for i in range(side):
        for j in range(side):
            cell = i * side + j
            centers[cell, 0] = offsets[i]
            centers[cell, 1] = offsets[j]
            classes[cell] = (i + j) % k
    return centers, classes


def _allocate(total: int, buckets: int) -> np.ndarray:
    base, rem = divmod(total, buckets)
    counts = np.full(buckets, base, dtype=np.int64)
    counts[:rem] += 1
    return counts


def gen_synthetic(kind: str, n: int, d: int, k: int, seed: int) -> Dataset:
    """Deterministic synthetic classification datasets.

    * ``gaussian_mixture``: a checkerboard of Gaussian blobs in the first two
      coordinates (classes cycle along the grid diagonals; pure noise in any
      remaining coordinates).
    * ``two_spirals``: the classic interleaved pair, classes 0/1.
    * ``teacher_labeled``: uniform cube inputs labeled by the argmax of a
      frozen randomly initialized reference network, so the decision surface
      is realizable by construction.
    """
    if kind not in SYNTHETIC_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}, expected one of {SYNTHETIC_KINDS}")
    if k < 2:
        raise DataError(f"need at least 2 classes, got {k}")
    if n < 10 * k:
        raise DataError(f"need at least 10 samples per class, got n={n} for k={k}")
    if d < 2:
        raise DataError(f"synthetic generators need d >= 2, got {d}")
    stream = rnglib.Rng(seed, rnglib.DATAGEN)

    if kind == "gaussian_mixture":
        centers, center_classes = _mixture_centers(d, k)
        class_counts = _allocate(n, k)
        xs, ys = [], []
        for c in range(k):
            mode_ids = np.flatnonzero(center_classes == c)
            for mode, count in zip(mode_ids, _allocate(int(class_counts[c]), len(mode_ids))):
                xs.append(centers[mode] + _MIXTURE_STD * stream.normal(size=(count, d)))
                ys.append(np.full(count, c, dtype=np.int64))
        features = np.concatenate(xs)
        labels = np.concatenate(ys)
    elif kind == "two_spirals":
        if k != 2:
            raise DataError(f"two_spirals is a 2-class dataset, got k={k}")
        class_counts = _allocate(n, 2)
        xs, ys = [], []
        for c in range(2):
            count = int(class_counts[c])
            t = stream.uniform(0.0, 1.0, size=count)
            radius = 0.3 + 2.2 * t
            theta = 3.0 * np.pi * t + np.pi * c
            pts = np.zeros((count, d))
            pts[:, 0] = radius * np.cos(theta)
            pts[:, 1] = radius * np.sin(theta)
            pts += 0.08 * stream.normal(size=(count, d))
            xs.append(pts)
            ys.append(np.full(count, c, dtype=np.int64))
        features = np.concatenate(xs)
        labels = np.concatenate(ys)
    else:  # teacher_labeled
        features = stream.uniform(-1.0, 1.0, size=(n, d))
        ref_spec = mlp.MlpSpec((d, 32, 32, k))
        ref_seeds = rnglib.Rng(seed, rnglib.DATAGEN, 1)
        labels = None
        for _attempt in range(100):
            ref = mlp.init(ref_spec, int(ref_seeds.integers(0, 2**31)))
            candidate = np.argmax(mlp.forward_values(ref, features), axis=1).astype(np.int64)
            if len(np.unique(candidate)) == k:
                labels = candidate
                break
        if labels is None:
            raise DataError(
                f"no reference network with all {k} classes found after 100 attempts"
            )

    order = stream.permutation(len(labels))
    return Dataset(
        f"{kind}-n{n}-d{d}-k{k}-s{seed}",
        features[order],
        labels[order],
        k,
        FeatureLayout.flat(),
    )


def _read_be32(data: bytes, offset: int, path) -> int:
    if offset + 4 > len(data):
        raise DataError(f"{path}: truncated at byte {offset}, wanted a 4-byte big-endian int")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path, labels_path, name: str | None = None) -> Dataset:
    """Load an IDX image/label file pair, pixels scaled to [0, 1].

    Standardization is a separate step (:func:`channel_stats` /
    :func:`standardize`) so its constants can be computed once from the
    training split and recorded in the run config.
    """
    with open(images_path, "rb") as fh:
        img_data = fh.read()
    with open(labels_path, "rb") as fh:
        lbl_data = fh.read()

    magic = _read_be32(img_data, 0, images_path)
    if magic != _IDX_IMAGE_MAGIC:
        raise DataError(
            f"{images_path}: bad image magic 0x{magic:08x} at byte 0, "
            f"expected 0x{_IDX_IMAGE_MAGIC:08x}"
        )
    n = _read_be32(img_data, 4, images_path)
    rows = _read_be32(img_data, 8, images_path)
    cols = _read_be32(img_data, 12, images_path)
    need = n * rows * cols
    if len(img_data) - 16 != need:
        raise DataError(
            f"{images_path}: expected {need} pixel bytes at byte 16, found {len(img_data) - 16}"
        )

    magic = _read_be32(lbl_data, 0, labels_path)
    if magic != _IDX_LABEL_MAGIC:
        raise DataError(
            f"{labels_path}: bad label magic 0x{magic:08x} at byte 0, "
            f"expected 0x{_IDX_LABEL_MAGIC:08x}"
        )
    n_labels = _read_be32(lbl_data, 4, labels_path)
    if len(lbl_data) - 8 != n_labels:
        raise DataError(
            f"{labels_path}: expected {n_labels} label bytes at byte 8, "
            f"found {len(lbl_data) - 8}"
        )
    if n_labels != n:
        raise DataError(
            f"label count {n_labels} in {labels_path} does not match "
            f"image count {n} in {images_path}"
        )

    pixels = np.frombuffer(img_data, dtype=np.uint8, offset=16)
    features = pixels.astype(np.float64).reshape(n, rows * cols) / 255.0
    labels = np.frombuffer(lbl_data, dtype=np.uint8, offset=8).astype(np.int64)
    layout = FeatureLayout.image(rows, 1) if rows == cols else FeatureLayout.flat()
    return Dataset(
        name or os.path.basename(str(images_path)),
        features,
        labels,
        int(labels.max()) + 1,
        layout,
    )


def channel_stats(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of a dataset (single channel for flat data)."""
    if ds.layout.kind == "square_image":
        per_channel = ds.features.reshape(ds.n, ds.layout.channels, -1)
        mean = per_channel.mean(axis=(0, 2))
        std = per_channel.std(axis=(0, 2))
    else:
        mean = np.array([ds.features.mean()])
        std = np.array([ds.features.std()])
    return mean, np.maximum(std, 1e-8)


def standardize(ds: Dataset, mean: np.ndarray, std: np.ndarray) -> Dataset:
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if ds.layout.kind == "square_image":
        shaped = ds.features.reshape(ds.n, ds.layout.channels, -1)
        out = (shaped - mean[None, :, None]) / std[None, :, None]
        features = out.reshape(ds.n, ds.d)
    else:
        features = (ds.features - mean[0]) / std[0]
    return replace(ds, features=features)


def few_shot_subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Stratified subsample: floor(fraction * count) per class, seeded."""
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    stream = rnglib.Rng(seed, rnglib.FEW_SHOT)
    keep = []
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == c)
        m = int(np.floor(fraction * idx.size))
        if m < 1:
            raise DataError(
                f"fraction {fraction} keeps no samples of class {c} "
                f"({idx.size} available)"
            )
        keep.append(idx[stream.permutation(idx.size)[:m]])
    indices = np.sort(np.concatenate(keep))
    return ds.take(indices, name=f"{ds.name}-few{fraction:g}")


def batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index slices of a fresh (seed, epoch)-keyed permutation; the last
    partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    perm = rnglib.Rng(seed, rnglib.BATCHES, epoch).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


# ---------------------------------------------------------------------------
# dataset manifest: named IDX file pairs plus frozen standardization constants
# ---------------------------------------------------------------------------

_MANIFEST_FIELDS = ("train_images", "train_labels", "test_images", "test_labels", "mean", "std")


@dataclass
class ManifestEntry:
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    mean: tuple[float, ...] | None = None
    std: tuple[float, ...] | None = None


def load_manifest(path) -> dict[str, ManifestEntry]:
    """Flat ``name.field = value`` manifest with a version line."""
    entries: dict[str, ManifestEntry] = {}
    saw_version = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "manifest_version":
                if value != "1":
                    raise DataError(f"{path}:{lineno}: unsupported manifest_version {value!r}")
                saw_version = True
                continue
            if "." not in key:
                raise DataError(f"{path}:{lineno}: expected '<dataset>.<field>', got {key!r}")
            name, field_name = key.split(".", 1)
            if field_name not in _MANIFEST_FIELDS:
                raise DataError(
                    f"{path}:{lineno}: unknown manifest field {field_name!r} "
                    f"(expected one of {_MANIFEST_FIELDS})"
                )
            entry = entries.setdefault(name, ManifestEntry())
            if field_name in ("mean", "std"):
                setattr(entry, field_name, tuple(float(v) for v in value.split(",")))
            else:
                setattr(entry, field_name, value)
    if not saw_version:
        raise DataError(f"{path}: missing manifest_version line")
    return entries


def load_from_manifest(manifest_path, name: str) -> tuple[Dataset, Dataset, dict]:
    """Load and standardize a manifest entry's train/test pair. Constants are
    taken from the manifest when present, otherwise computed from the training
    split; either way they are returned for freezing into the run config."""
    entries = load_manifest(manifest_path)
    if name not in entries:
        raise DataError(f"{manifest_path}: no dataset named {name!r} (have {sorted(entries)})")
    entry = entries[name]
    base = os.path.dirname(os.path.abspath(str(manifest_path)))

    def resolve(p):
        if not p:
            raise DataError(f"{manifest_path}: dataset {name!r} is missing a file path")
        return p if os.path.isabs(p) else os.path.join(base, p)

    train = load_idx(resolve(entry.train_images), resolve(entry.train_labels), name=f"{name}-train")
    test = load_idx(resolve(entry.test_images), resolve(entry.test_labels), name=f"{name}-test")
    if entry.mean is not None and entry.std is not None:
        mean, std = np.asarray(entry.mean), np.asarray(entry.std)
    else:
        mean, std = channel_stats(train)
    stats = {"mean": tuple(float(v) for v in mean), "std": tuple(float(v) for v in std)}
    return standardize(train, mean, std), standardize(test, mean, std), stats
