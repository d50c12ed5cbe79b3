"""IDX file reading and writing (the MNIST/fashion-MNIST container format).

Headers are big-endian: a 4-byte magic, then one 4-byte dimension per axis.
Magic 0x00000803 marks unsigned-byte image tensors (count, rows, cols),
0x00000801 unsigned-byte label vectors (count). Files ending in .gz are
transparently decompressed.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC_IMAGES = 0x00000803
MAGIC_LABELS = 0x00000801

# standard distribution filenames inside a dataset directory
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(ValueError):
    """Malformed IDX file: wrong magic, truncated payload, or bad dimensions."""


@dataclass
class RawImageSet:
    """Images as (N, L, L) real intensities in [0, 255] plus integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 3:
            raise ValueError("images must be (N, rows, cols)")
        if len(self.labels) != len(self.images):
            raise IdxError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)


def _open_maybe_gz(path: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxError(f"truncated file: expected {n} bytes of {what}, got {len(data)}")
    return data


def load_idx(path: str, kind: str) -> np.ndarray:
    """Read one IDX file; kind is "images" or "labels".

    Images come back as (N, rows, cols) float64 in [0, 255], labels as
    (N,) int64.
    """
    if kind not in ("images", "labels"):
        raise ValueError(f"kind must be 'images' or 'labels', got {kind!r}")
    expected_magic = MAGIC_IMAGES if kind == "images" else MAGIC_LABELS
    with _open_maybe_gz(path) as f:
        (magic,) = struct.unpack(">i", _read_exact(f, 4, "magic"))
        if magic != expected_magic:
            raise IdxError(
                f"bad magic 0x{magic & 0xFFFFFFFF:08X} in {path}: "
                f"expected 0x{expected_magic:08X} for {kind}"
            )
        if kind == "images":
            count, rows, cols = struct.unpack(">iii", _read_exact(f, 12, "header"))
            if min(count, rows, cols) < 0:
                raise IdxError(f"negative dimension in header of {path}")
            raw = _read_exact(f, count * rows * cols, "pixels")
            data = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
            return data.astype(np.float64)
        (count,) = struct.unpack(">i", _read_exact(f, 4, "header"))
        if count < 0:
            raise IdxError(f"negative count in header of {path}")
        raw = _read_exact(f, count, "labels")
        return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def _find_split_file(data_dir: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"no {name} (or {name}.gz) in {data_dir}"
    )


def load_split(data_dir: str, split: str) -> RawImageSet:
    """Load the train or test split from a dataset directory.

    Expects the four standard filenames (optionally gzipped); image and
    label counts must agree.
    """
    if split not in SPLIT_FILES:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    image_name, label_name = SPLIT_FILES[split]
    images = load_idx(_find_split_file(data_dir, image_name), "images")
    labels = load_idx(_find_split_file(data_dir, label_name), "labels")
    return RawImageSet(images=images, labels=labels)


def write_idx_images(path: str, images: np.ndarray) -> None:
    """Write (N, rows, cols) values in [0, 255] as an IDX image file."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValueError("images must be (N, rows, cols)")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("image intensities must lie in [0, 255]")
    n, rows, cols = arr.shape
    with _open_for_write(path) as f:
        f.write(struct.pack(">iiii", MAGIC_IMAGES, n, rows, cols))
        f.write(np.round(arr).astype(np.uint8).tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    """Write integer labels in {0..255} as an IDX label file."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError("labels must be 1-D")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("labels must lie in {0..255}")
    with _open_for_write(path) as f:
        f.write(struct.pack(">ii", MAGIC_LABELS, len(arr)))
        f.write(arr.astype(np.uint8).tobytes())


def _open_for_write(path: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, "wb")
    return open(path, "wb")
