"""Feature pipeline: resize, optional sqrt, hypersphere normalization, FFT.

Order is fixed: bilinear resize, optional elementwise square root of the raw
intensities, per-sample mean centering and unit-norm scaling, then optional
FFT magnitude augmentation. Every finalized sample lies on the unit
hypersphere, so dot products with unit projection vectors are cosines.

The pipeline is a pure function of its configuration; fingerprint() names
the exact feature space, and models refuse to evaluate data prepared with a
different fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.transform import resize as _skimage_resize

from .idx import RawImageSet


@dataclass(frozen=True)
class PipelineConfig:
    scale: int = 1
    use_sqrt: bool = False
    use_fft: bool = False
    dtype: str = "float64"  # storage dtype of the finished matrix

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    def feature_length(self, side: int) -> int:
        """Final feature count for side x side input images."""
        m = (self.scale * side) ** 2
        if self.use_fft:
            if m % 2:
                raise ValueError(f"FFT augmentation needs even length, got {m}")
            return 3 * m // 2
        return m

    def fingerprint(self) -> str:
        return (
            f"pipe-v1:scale={self.scale}:sqrt={int(self.use_sqrt)}"
            f":fft={int(self.use_fft)}:dtype={self.dtype}"
        )


def resize_images(images: np.ndarray, scale: int) -> np.ndarray:
    """Upscale (N, R, C) images by an integer factor, bilinear.

    Half-pixel-center coordinate mapping with edge clamping; scale 1 returns
    the input bit-identically. Constant images stay constant.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return images
    n, r, c = images.shape
    out = np.empty((n, r * scale, c * scale), dtype=np.float64)
    for i in range(n):
        out[i] = _skimage_resize(
            images[i],
            (r * scale, c * scale),
            order=1,
            mode="edge",
            anti_aliasing=False,
            preserve_range=True,
        )
    return out


def sqrt_transform(images: np.ndarray) -> np.ndarray:
    """Elementwise square root of raw intensities; they must be nonnegative."""
    if images.size and images.min() < 0:
        raise ValueError("square-root transform needs nonnegative intensities")
    return np.sqrt(images)


def center_normalize(vectors: np.ndarray) -> np.ndarray:
    """Center each row to mean 0 and scale to unit Euclidean norm.

    Accepts a single vector or a stack of row vectors. A constant row has
    zero norm after centering and raises, naming the row.
    """
    single = vectors.ndim == 1
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64)).copy()
    x -= x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"degenerate sample at row {bad[0]}: constant vector")
    x /= norms[:, None]
    return x[0] if single else x


def fft_augment(vectors: np.ndarray) -> np.ndarray:
    """Append the unit-normalized magnitude spectrum; length M becomes 3M/2.

    The spectrum part keeps magnitude bins 0..M/2-1 of the DFT of the
    centered sample (a real input's spectrum is conjugate-symmetric, so the
    first half carries all of it; the DC bin is ~0 after centering). Both
    the sample and its spectrum are unit vectors, and the concatenation is
    renormalized back onto the unit hypersphere.
    """
    single = vectors.ndim == 1
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    m = x.shape[1]
    if m % 2:
        raise ValueError(f"FFT augmentation needs even length, got {m}")
    centered = x - x.mean(axis=1, keepdims=True)
    spectrum = np.abs(np.fft.rfft(centered, axis=1))[:, : m // 2]
    norms = np.linalg.norm(spectrum, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"zero-energy spectrum at row {bad[0]}")
    spectrum /= norms[:, None]
    out = np.concatenate([x, spectrum], axis=1)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if single else out


def one_hot_encode(labels: np.ndarray, classes: int) -> np.ndarray:
    """(N, K) one-hot target matrix from integer labels in {0..K-1}."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        off = labels[(labels < 0) | (labels >= classes)][0]
        raise ValueError(f"label {off} outside 0..{classes - 1}")
    out = np.zeros((len(labels), classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


_CHUNK = 4096  # samples transformed per pass; keeps resize scratch small


def run_pipeline(images: np.ndarray, config: PipelineConfig) -> np.ndarray:
    """Full preprocessing of (N, L, L) raw images to the (N, D) feature matrix."""
    n = len(images)
    side = images.shape[1] if n else 0
    d = config.feature_length(side) if n else 0
    out_dtype = np.float64 if config.dtype == "float64" else np.float32
    out = np.empty((n, d), dtype=out_dtype)
    for start in range(0, n, _CHUNK):
        chunk = images[start : start + _CHUNK]
        chunk = resize_images(chunk, config.scale)
        if config.use_sqrt:
            chunk = sqrt_transform(chunk)
        flat = chunk.reshape(len(chunk), -1)
        try:
            flat = center_normalize(flat)
            if config.use_fft:
                flat = fft_augment(flat)
        except ValueError as e:
            raise ValueError(f"{e} (chunk starting at sample {start})") from None
        out[start : start + len(flat)] = flat
    return out


def prepare_features(image_set: RawImageSet, config: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """run_pipeline plus the labels, as (features, labels)."""
    return run_pipeline(image_set.images, config), image_set.labels
