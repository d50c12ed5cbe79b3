"""Ridge regression on the normal equations, with blocked Gram accumulation.

solve_ridge minimizes ||H W - Y||_F^2 + lam ||W||_F^2 by solving
(H^T H + lam I) W = H^T Y. The Gram matrix is accumulated over fixed-size
row blocks in index order, so results do not depend on how many rows are in
memory at once or on thread count, and the full design matrix never has to
be resident. Accumulation and solve always run in float64, even for float32
inputs.

The solve is Cholesky first; if that fails (lam = 0 on a rank-deficient
design), one jittered retry, then a rank-revealing orthogonal factorization
of the normal equations. For lam = 0 that fallback returns the minimum-norm
least-squares solution: with H = U S V^T, pinv(H^T H) H^T Y = pinv(H) Y.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

GRAM_BLOCK_ROWS = 1024


class NumericalError(RuntimeError):
    """Solver failure or non-finite values where finite ones are required."""


def gram_accumulate(design: np.ndarray, block_rows: int = GRAM_BLOCK_ROWS) -> np.ndarray:
    """H^T H accumulated over row blocks, symmetrized, float64."""
    n, width = design.shape
    gram = np.zeros((width, width), dtype=np.float64)
    for start in range(0, n, block_rows):
        block = np.asarray(design[start : start + block_rows], dtype=np.float64)
        gram += block.T @ block
    return (gram + gram.T) / 2.0


def cross_accumulate(
    design: np.ndarray, targets: np.ndarray, block_rows: int = GRAM_BLOCK_ROWS
) -> np.ndarray:
    """H^T Y accumulated over the same row blocks as gram_accumulate."""
    n, width = design.shape
    out = np.zeros((width, targets.shape[1]), dtype=np.float64)
    for start in range(0, n, block_rows):
        block = np.asarray(design[start : start + block_rows], dtype=np.float64)
        tblock = np.asarray(targets[start : start + block_rows], dtype=np.float64)
        out += block.T @ tblock
    return out


def solve_normal_equations(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Solve (gram + lam I) W = rhs for W.

    gram must be the symmetric positive semidefinite normal-equations matrix.
    Cholesky, then one retry with jitter 1e-10 * trace / J, then minimum-norm
    via scipy's rank-revealing lstsq driver.
    """
    if lam < 0:
        raise ValueError(f"regularization must be >= 0, got {lam}")
    width = gram.shape[0]
    if gram.shape != (width, width) or rhs.shape[0] != width:
        raise ValueError(f"shape mismatch: gram {gram.shape}, rhs {rhs.shape}")
    system = gram if lam == 0 else gram + lam * np.eye(width)
    w = _cholesky_solve(system, rhs)
    if w is None:
        jitter = 1e-10 * np.trace(system) / width
        w = _cholesky_solve(system + jitter * np.eye(width), rhs)
    if w is None:
        # minimum-norm solution of the (unjittered) normal equations
        w, *_ = scipy.linalg.lstsq(system, rhs, lapack_driver="gelsy", check_finite=False)
    if not np.all(np.isfinite(w)):
        raise NumericalError("ridge solve produced non-finite weights")
    return w


def _cholesky_solve(system: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    try:
        c, low = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
        return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return None


def solve_ridge(design: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    """Ridge weights W minimizing ||design @ W - targets||_F^2 + lam ||W||_F^2."""
    if design.ndim != 2 or targets.ndim != 2:
        raise ValueError("design and targets must be 2-D")
    if design.shape[0] != targets.shape[0]:
        raise ValueError(
            f"row mismatch: design has {design.shape[0]} rows, targets {targets.shape[0]}"
        )
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(targets))):
        raise ValueError("design and targets must be finite")
    gram = gram_accumulate(design)
    rhs = cross_accumulate(design, targets)
    return solve_normal_equations(gram, rhs, lam)
