"""Unit-sphere geometry in high dimension: exact formulas and Monte Carlo.

The quantities here explain why random-feature classifiers work at all in
large M: ball volume collapses into a thin surface shell, and independent
random directions are almost orthogonal with overwhelming probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass(frozen=True)
class BallMetrics:
    dim: int
    surface_area: float  # area of S^{M-1}(1)
    volume: float  # volume of the unit M-ball


def unit_ball_metrics(m: int) -> BallMetrics:
    """Surface area 2 pi^(M/2) / Gamma(M/2) and volume area/M, via log-gamma."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    log_area = math.log(2.0) + 0.5 * m * math.log(math.pi) - math.lgamma(0.5 * m)
    area = math.exp(log_area)
    return BallMetrics(dim=m, surface_area=area, volume=area / m)


def shell_fraction(m: int, eps: float) -> float:
    """Fraction of unit-ball volume within eps of the surface: 1 - (1-eps)^M.

    Computed as -expm1(M log1p(-eps)) so thin shells in high dimension do
    not lose precision.
    """
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must be in [0, 1], got {eps}")
    if eps == 1.0:
        return 1.0
    return -math.expm1(m * math.log1p(-eps))


def orthogonality_bound(m: int, delta: float) -> float:
    """Chernoff lower bound 1 - exp(-M delta^2) on Pr(|cos(u,v)| < delta)."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return -math.expm1(-m * delta * delta)


def expected_abs_cosine(m: int) -> float:
    """Large-M approximation sqrt(2 / (pi M)) of E|cos(u, v)|."""
    return math.sqrt(2.0 / (math.pi * m))


def pairwise_cosines(seed: rng.SeedSpec | int, m: int, pairs: int) -> np.ndarray:
    """|cosine| between `pairs` independent Gaussian vector pairs in R^M."""
    if pairs < 1:
        raise ValueError(f"pairs must be >= 1, got {pairs}")
    flat = rng.gaussian(seed, 2 * pairs * m).reshape(pairs, 2, m)
    u, v = flat[:, 0, :], flat[:, 1, :]
    dots = np.einsum("ij,ij->i", u, v)
    norms = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    return np.abs(dots / norms)


def orthogonality_experiment(
    seed: rng.SeedSpec | int, m: int, pairs: int, delta: float
) -> tuple[float, float]:
    """Empirical fraction of nearly-orthogonal pairs versus the Chernoff bound.

    Returns (fraction of pairs with |cos| < delta, lower bound). The
    empirical fraction should exceed the bound up to Monte Carlo noise.
    """
    bound = orthogonality_bound(m, delta)
    cosines = pairwise_cosines(seed, m, pairs)
    return float(np.mean(cosines < delta)), bound
