"""Residual random kernel networks.

Same residual scheme as the neural variant, but layer t's features are
kernel similarities to a random block of training samples: a block of J
sample indices is drawn from substream t, and the layer's design matrix is
phi(X X_J^T). With unit-norm samples those products are cosines, and
phi is either tanh(sqrt(D) z) or the identity. The residual update has no
step-size factor; each layer subtracts its full ridge fit.

Blocks are regenerable from the seed plus the training set, so a model can
store only indices (plus weights), or embed the block rows to be usable
without the training data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .network import TrainingTrace, accuracy, classify
from .ridge import GRAM_BLOCK_ROWS, solve_normal_equations

PHI_KINDS = ("tanh_scaled", "identity")


@dataclass
class KernelLayer:
    stream: int
    indices: np.ndarray  # (J,) int64 rows of the training set
    weight: np.ndarray  # (J, K)
    block: np.ndarray | None = None  # (J, D) sample rows, if embedded

    @property
    def width(self) -> int:
        return self.weight.shape[0]


@dataclass
class RrknModel:
    master_seed: int
    lam: float
    phi: str
    feature_length: int
    classes: int
    layers: list[KernelLayer]

    kind = "rrkn"

    def scale(self) -> float:
        return float(np.sqrt(self.feature_length))


def kernel_matrix(a: np.ndarray, block_rows_matrix: np.ndarray, phi: str, scale: float) -> np.ndarray:
    """phi(A B^T) for a block B of sample rows."""
    if phi not in PHI_KINDS:
        raise ValueError(f"phi must be one of {PHI_KINDS}, got {phi!r}")
    z = np.asarray(a, dtype=np.float64) @ np.asarray(block_rows_matrix, dtype=np.float64).T
    if phi == "tanh_scaled":
        return np.tanh(scale * z)
    return z


def train_rrkn(
    x: np.ndarray,
    y: np.ndarray,
    *,
    block_size: int,
    lam: float,
    layers: int = 1,
    epsilon: float = 0.0,
    master_seed: int = 0,
    phi: str = "tanh_scaled",
    eval_data: tuple[np.ndarray, np.ndarray] | None = None,
    embed_blocks: bool = True,
    block_rows: int = GRAM_BLOCK_ROWS,
) -> tuple[RrknModel, TrainingTrace]:
    """Train up to `layers` kernel layers of `block_size` samples each.

    Indices are drawn without replacement within a layer; the same sample
    may appear in several layers. Stops when the residual norm falls below
    epsilon.
    """
    n, dim = x.shape
    if y.shape[0] != n:
        raise ValueError(f"targets have {y.shape[0]} rows for {n} samples")
    if not 1 <= block_size <= n:
        raise ValueError(f"block size must be in 1..{n}, got {block_size}")
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    if phi not in PHI_KINDS:
        raise ValueError(f"phi must be one of {PHI_KINDS}, got {phi!r}")
    if lam < 0 or epsilon < 0:
        raise ValueError("lam and epsilon must be >= 0")

    model = RrknModel(
        master_seed=master_seed,
        lam=lam,
        phi=phi,
        feature_length=dim,
        classes=y.shape[1],
        layers=[],
    )
    scale = model.scale()
    residual = np.asarray(y, dtype=np.float64).copy()
    train_labels = np.argmax(y, axis=1)
    trace = TrainingTrace(initial_residual=float(np.linalg.norm(residual)))
    if eval_data is not None:
        trace.eval_accuracy = []
        eval_scores = np.zeros((eval_data[0].shape[0], y.shape[1]))

    for t in range(layers):
        seed = rng.derive_substream(master_seed, t)
        indices = rng.select_block_indices(seed, n, block_size)
        block = np.asarray(x[indices], dtype=np.float64)
        weight = _fit_block(x, residual, block, phi, scale, lam, block_rows)
        _subtract_fit(x, residual, block, weight, phi, scale, block_rows)
        model.layers.append(
            KernelLayer(
                stream=t,
                indices=indices,
                weight=weight,
                block=block if embed_blocks else None,
            )
        )

        trace.residual_norms.append(float(np.linalg.norm(residual)))
        trace.train_accuracy.append(accuracy(y - residual, train_labels))
        if eval_data is not None:
            _add_scores(eval_data[0], eval_scores, block, weight, phi, scale, block_rows)
            trace.eval_accuracy.append(accuracy(eval_scores, eval_data[1]))
        if trace.residual_norms[-1] < epsilon:
            trace.stop_reason = "epsilon"
            break
    return model, trace


def layer_block(
    model: RrknModel,
    layer: KernelLayer,
    train_x: np.ndarray | None = None,
) -> np.ndarray:
    """The (J, D) sample rows of one layer, embedded or sliced from train_x."""
    if layer.block is not None:
        return layer.block
    if train_x is None:
        raise ValueError(
            "model stores only block indices; pass the training feature matrix"
        )
    return np.asarray(train_x[layer.indices], dtype=np.float64)


def predict_scores(
    model: RrknModel,
    x: np.ndarray,
    train_x: np.ndarray | None = None,
    block_rows: int = GRAM_BLOCK_ROWS,
) -> np.ndarray:
    """Summed layer scores phi(X X_J^T) W over all layers."""
    if x.shape[1] != model.feature_length:
        raise ValueError(
            f"model expects {model.feature_length} features, got {x.shape[1]}"
        )
    scores = np.zeros((x.shape[0], model.classes))
    scale = model.scale()
    for layer in model.layers:
        block = layer_block(model, layer, train_x)
        _add_scores(x, scores, block, layer.weight, model.phi, scale, block_rows)
    return scores


def predict_rrkn(
    model: RrknModel,
    x: np.ndarray,
    train_x: np.ndarray | None = None,
    block_rows: int = GRAM_BLOCK_ROWS,
) -> np.ndarray:
    """Predicted class labels for new samples."""
    return classify(predict_scores(model, x, train_x, block_rows))


def _fit_block(x, residual, block, phi, scale, lam, block_rows) -> np.ndarray:
    width = block.shape[0]
    gram = np.zeros((width, width))
    rhs = np.zeros((width, residual.shape[1]))
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        k = kernel_matrix(x[lo:hi], block, phi, scale)
        gram += k.T @ k
        rhs += k.T @ residual[lo:hi]
    gram = (gram + gram.T) / 2.0
    return solve_normal_equations(gram, rhs, lam)


def _subtract_fit(x, residual, block, weight, phi, scale, block_rows) -> None:
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        k = kernel_matrix(x[lo:hi], block, phi, scale)
        residual[lo:hi] -= k @ weight


def _add_scores(x, scores, block, weight, phi, scale, block_rows) -> None:
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        k = kernel_matrix(x[lo:hi], block, phi, scale)
        scores[lo:hi] += k @ weight
