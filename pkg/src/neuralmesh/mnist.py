"""MNIST IDX ingestion, normalization, subsetting and batching.

IDX layout: big-endian u32 magic (0x00000803 for image files with dims
count x rows x cols, 0x00000801 for label files with a single dim),
one big-endian u32 per dimension, then the raw unsigned-byte payload,
whose length must equal the product of the dimensions. Gzipped files
are detected by their leading bytes and decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_NDIMS = {IMAGE_MAGIC: 3, LABEL_MAGIC: 1}


class IdxFormatError(ValueError):
    """The file does not look like a supported IDX file."""


class IdxCorruptedError(ValueError):
    """The header is valid but the payload does not match it."""


def parse_idx(path) -> np.ndarray:
    """Read an IDX file into a uint8 array shaped by its header dims."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 4:
        raise IdxFormatError(f"{path}: too short for an IDX magic")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in _NDIMS:
        raise IdxFormatError(f"{path}: unknown IDX magic 0x{magic:08x}")
    ndims = _NDIMS[magic]
    header_len = 4 + 4 * ndims
    if len(data) < header_len:
        raise IdxCorruptedError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndims}I", data[4:header_len])
    expected = 1
    for d in dims:
        expected *= d
    payload = len(data) - header_len
    if payload != expected:
        raise IdxCorruptedError(
            f"{path}: payload holds {payload} bytes, header implies {expected}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


@dataclass
class Dataset:
    """Normalized samples: images (N, D) in [0,1], labels (N,) in [0,9]."""

    images: np.ndarray
    labels: np.ndarray
    name: str = field(default="dataset")

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ValueError(f"images must be 2-D, got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(
                f"{self.images.shape[0]} images but {self.labels.shape} labels"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("labels must lie in [0, 9]")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def input_dim(self) -> int:
        return self.images.shape[1]


def load_dataset(images_path, labels_path, limit: int | None = None, offset: int = 0, name: str = "dataset") -> Dataset:
    """Load matching image/label IDX files into a Dataset.

    Pixels are divided by 255.0 and rows flattened row-major. With
    `offset`/`limit`, the first `limit` items after skipping `offset`
    are kept; asking for more than the files hold is an error rather
    than a silent truncation.
    """
    images = parse_idx(images_path)
    labels = parse_idx(labels_path)
    if images.ndim != 3:
        raise IdxFormatError(f"{images_path}: expected an image file (3 dims)")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: expected a label file (1 dim)")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    total = images.shape[0]
    if offset < 0:
        raise ValueError("offset must be >= 0")
    if offset > total:
        raise ValueError(f"offset {offset} exceeds {total} available samples")
    available = total - offset
    if limit is None:
        limit = available
    elif limit > available:
        raise ValueError(f"limit {limit} exceeds {available} available samples")
    images = images[offset : offset + limit]
    labels = labels[offset : offset + limit]
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(images=flat, labels=labels.astype(np.int64), name=name)


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Deterministic shuffled index batches; the last may be short.

    The permutation is a pure function of (seed, epoch) via the seeded
    generator in the rng module, so any run with the same pair sees the
    same order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = make_rng(seed, epoch).permutation(len(ds))
    return [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
