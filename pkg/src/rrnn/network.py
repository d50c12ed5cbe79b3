"""Residual random neural networks.

A single layer is the classic random-feature classifier: H = tanh(c X U^T)
with U a seeded random projection (rows unit-normalized) and c = sqrt(D),
output weights from ridge regression against one-hot targets. The residual
network stacks such layers greedily: layer t is fit to the residual
R_t = R_{t-1} - mu H_{t-1} W_{t-1} left by its predecessors, each layer
drawing its projection from substream t of the master seed. Prediction sums
mu * tanh(c X U_t^T) W_t over layers.

Ridge fitting for mu in (0, 1] can only shrink the residual, so the
residual norm trace is non-increasing; training stops when it drops below
epsilon or the layer budget is exhausted.

Everything is computed in fixed-size row blocks in index order: memory
stays bounded by the block size and results are independent of threading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .ridge import GRAM_BLOCK_ROWS, solve_normal_equations

DEFAULT_MU = 0.5


@dataclass
class ProjectionLayer:
    stream: int  # substream id under the model's master seed
    weight: np.ndarray  # (J, K) output weights

    @property
    def width(self) -> int:
        return self.weight.shape[0]


@dataclass
class TrainingTrace:
    initial_residual: float
    residual_norms: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    eval_accuracy: list[float] | None = None
    stop_reason: str = "max_layers"

    @property
    def layer_count(self) -> int:
        return len(self.residual_norms)


@dataclass
class RrnnModel:
    master_seed: int
    mu: float
    lam: float
    feature_length: int
    classes: int
    layers: list[ProjectionLayer]
    projection_scale: float | None = None  # None means sqrt(feature_length)

    kind = "rrnn"

    def scale(self) -> float:
        if self.projection_scale is not None:
            return self.projection_scale
        return float(np.sqrt(self.feature_length))


def projection_matrix(master_seed: int, stream: int, width: int, dim: int) -> np.ndarray:
    """The (width, dim) unit-row Gaussian projection of one layer."""
    seed = rng.derive_substream(master_seed, stream)
    return rng.gaussian_matrix(seed, width, dim, normalize_rows=True)


def project(
    x: np.ndarray, seed: rng.SeedSpec | int, width: int, scale: float | None = None
) -> np.ndarray:
    """Random-feature map tanh(c X U^T) with U regenerated from the seed."""
    u = rng.gaussian_matrix(seed, width, x.shape[1], normalize_rows=True)
    c = float(np.sqrt(x.shape[1])) if scale is None else scale
    return np.tanh(c * np.asarray(x, dtype=np.float64) @ u.T)


def classify(scores: np.ndarray) -> np.ndarray:
    """Predicted class per row; ties go to the lowest index."""
    return np.argmax(scores, axis=1)


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Percent of rows whose argmax matches the label."""
    return float(np.mean(classify(scores) == np.asarray(labels)) * 100.0)


def train_rrnn(
    x: np.ndarray,
    y: np.ndarray,
    *,
    width: int,
    lam: float,
    mu: float = DEFAULT_MU,
    layers: int = 1,
    epsilon: float = 0.0,
    master_seed: int = 0,
    eval_data: tuple[np.ndarray, np.ndarray] | None = None,
    projection_scale: float | None = None,
    block_rows: int = GRAM_BLOCK_ROWS,
) -> tuple[RrnnModel, TrainingTrace]:
    """Train up to `layers` residual layers of width `width`.

    y is the one-hot target matrix. Stops early once the residual Frobenius
    norm falls below epsilon. eval_data, if given, is (features, labels) of
    a held-out set whose accuracy is tracked per layer.
    """
    n, dim = x.shape
    if y.shape[0] != n:
        raise ValueError(f"targets have {y.shape[0]} rows for {n} samples")
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must be in (0, 1], got {mu}")
    if lam < 0 or epsilon < 0:
        raise ValueError("lam and epsilon must be >= 0")

    scale = float(np.sqrt(dim)) if projection_scale is None else projection_scale
    residual = np.asarray(y, dtype=np.float64).copy()
    train_labels = np.argmax(y, axis=1)
    trace = TrainingTrace(initial_residual=float(np.linalg.norm(residual)))
    if eval_data is not None:
        trace.eval_accuracy = []
        eval_scores = np.zeros((eval_data[0].shape[0], y.shape[1]))

    model = RrnnModel(
        master_seed=master_seed,
        mu=mu,
        lam=lam,
        feature_length=dim,
        classes=y.shape[1],
        layers=[],
        projection_scale=projection_scale,
    )
    for t in range(layers):
        u = projection_matrix(master_seed, t, width, dim)
        weight = _fit_to_residual(x, residual, u, scale, lam, block_rows)
        _subtract_contribution(x, residual, u, weight, mu, scale, block_rows)
        model.layers.append(ProjectionLayer(stream=t, weight=weight))

        trace.residual_norms.append(float(np.linalg.norm(residual)))
        # accumulated train scores are exactly Y - R_{t+1}
        trace.train_accuracy.append(accuracy(y - residual, train_labels))
        if eval_data is not None:
            _add_scores(eval_data[0], eval_scores, u, weight, mu, scale, block_rows)
            trace.eval_accuracy.append(accuracy(eval_scores, eval_data[1]))
        if trace.residual_norms[-1] < epsilon:
            trace.stop_reason = "epsilon"
            break
    return model, trace


def train_baseline(
    x: np.ndarray,
    y: np.ndarray,
    *,
    width: int,
    lam: float,
    master_seed: int = 0,
    eval_data: tuple[np.ndarray, np.ndarray] | None = None,
    projection_scale: float | None = None,
    block_rows: int = GRAM_BLOCK_ROWS,
) -> RrnnModel:
    """Single random-feature layer with full step size; the classic setup."""
    model, _ = train_rrnn(
        x,
        y,
        width=width,
        lam=lam,
        mu=1.0,
        layers=1,
        epsilon=0.0,
        master_seed=master_seed,
        eval_data=eval_data,
        projection_scale=projection_scale,
        block_rows=block_rows,
    )
    return model


def predict_scores(
    model: RrnnModel, x: np.ndarray, block_rows: int = GRAM_BLOCK_ROWS
) -> np.ndarray:
    """Summed layer scores mu * tanh(c X U_t^T) W_t for new samples."""
    if x.shape[1] != model.feature_length:
        raise ValueError(
            f"model expects {model.feature_length} features, got {x.shape[1]}"
        )
    scores = np.zeros((x.shape[0], model.classes))
    scale = model.scale()
    for layer in model.layers:
        u = projection_matrix(model.master_seed, layer.stream, layer.width, model.feature_length)
        _add_scores(x, scores, u, layer.weight, model.mu, scale, block_rows)
    return scores


def predict(model: RrnnModel, x: np.ndarray, block_rows: int = GRAM_BLOCK_ROWS) -> np.ndarray:
    """Predicted class labels for new samples."""
    return classify(predict_scores(model, x, block_rows))


def _hidden_block(x: np.ndarray, lo: int, hi: int, u: np.ndarray, scale: float) -> np.ndarray:
    block = np.asarray(x[lo:hi], dtype=np.float64)
    return np.tanh(scale * block @ u.T)


def _fit_to_residual(x, residual, u, scale, lam, block_rows) -> np.ndarray:
    """Ridge weights of tanh(c X U^T) against the residual, accumulated blockwise."""
    width = u.shape[0]
    gram = np.zeros((width, width))
    rhs = np.zeros((width, residual.shape[1]))
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        h = _hidden_block(x, lo, hi, u, scale)
        gram += h.T @ h
        rhs += h.T @ residual[lo:hi]
    gram = (gram + gram.T) / 2.0
    return solve_normal_equations(gram, rhs, lam)


def _subtract_contribution(x, residual, u, weight, mu, scale, block_rows) -> None:
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        h = _hidden_block(x, lo, hi, u, scale)
        residual[lo:hi] -= mu * (h @ weight)


def _add_scores(x, scores, u, weight, mu, scale, block_rows) -> None:
    for lo in range(0, x.shape[0], block_rows):
        hi = min(lo + block_rows, x.shape[0])
        h = _hidden_block(x, lo, hi, u, scale)
        scores[lo:hi] += mu * (h @ weight)
