"""Shared fixtures: synthetic digit corpora, IDX writers, MNIST discovery.

Real MNIST files are looked up in $MESH_MNIST_DIR (or ./data/mnist);
tests that need them skip with a clear reason when absent. Everything
else runs on seeded synthetic digits: ten fixed random templates mixed
with per-sample noise, which keeps the classes linearly separable and
the whole suite hermetic.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np
import pytest

from neuralmesh import Dataset, make_rng

TEMPLATE_STREAM = 0x54454D50
SAMPLE_STREAM = 0x53414D50


def synthetic_arrays(n: int, seed: int, stream: int = 0):
    """(uint8 images (n, 28, 28), uint8 labels (n,)) from fixed templates."""
    templates = make_rng(seed, TEMPLATE_STREAM).uniform(0.0, 1.0, (10, 28, 28))
    rng = make_rng(seed, SAMPLE_STREAM, stream)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    noise = rng.uniform(0.0, 1.0, (n, 28, 28))
    images = np.clip(0.7 * templates[labels] + 0.3 * noise, 0.0, 1.0)
    return np.round(images * 255).astype(np.uint8), labels


def synthetic_dataset(n: int, seed: int, stream: int = 0, name: str = "synthetic") -> Dataset:
    images, labels = synthetic_arrays(n, seed, stream)
    return Dataset(
        images=images.reshape(n, -1).astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        name=name,
    )


def write_idx_images(path, images: np.ndarray, gz: bool = False) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    payload = struct.pack(">IIII", 0x803, *images.shape) + images.tobytes()
    data = gzip.compress(payload) if gz else payload
    with open(path, "wb") as fh:
        fh.write(data)


def write_idx_labels(path, labels: np.ndarray, gz: bool = False) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    payload = struct.pack(">II", 0x801, labels.shape[0]) + labels.tobytes()
    data = gzip.compress(payload) if gz else payload
    with open(path, "wb") as fh:
        fh.write(data)


@pytest.fixture(scope="session")
def synthetic_idx_dir(tmp_path_factory):
    """Directory with synthetic train/test IDX files (600 train, 200 test)."""
    root = tmp_path_factory.mktemp("synthetic_idx")
    for split, n, stream in (("train", 600, 0), ("test", 200, 1)):
        images, labels = synthetic_arrays(n, seed=5, stream=stream)
        write_idx_images(root / f"{split}-images-idx3-ubyte", images)
        write_idx_labels(root / f"{split}-labels-idx1-ubyte", labels)
    return root


_MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist() -> dict | None:
    """Locate the four official MNIST files (plain or .gz), if present."""
    roots = []
    env = os.environ.get("MESH_MNIST_DIR")
    if env:
        roots.append(env)
    roots.append(os.path.join(os.path.dirname(__file__), os.pardir, "data", "mnist"))
    roots.append(os.path.join(os.getcwd(), "data", "mnist"))
    for root in roots:
        found = {}
        for key, name in _MNIST_FILES.items():
            for candidate in (os.path.join(root, name), os.path.join(root, name + ".gz")):
                if os.path.exists(candidate):
                    found[key] = candidate
                    break
        if len(found) == len(_MNIST_FILES):
            return found
    return None


@pytest.fixture(scope="session")
def mnist_paths():
    paths = find_mnist()
    if paths is None:
        pytest.skip(
            "MNIST IDX files not found; set MESH_MNIST_DIR or place the four "
            "official files under data/mnist/"
        )
    return paths
