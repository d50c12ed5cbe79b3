"""Deterministic random generation: SplitMix64 uniforms, Box-Muller Gaussians.

Everything random in this package is a pure function of a 64-bit seed, so
projection matrices, orthonormal keys and index blocks never need to be
stored; regenerating them from the seed gives bit-identical values on any
platform. The construction is named by ALGORITHM_ID and embedded in every
persisted model and key file.

A seed is either a plain integer (an already-derived substream seed) or a
SeedSpec(master_seed, stream_id) pair; the pair is collapsed with
derive_substream, one substream per layer or purpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGORITHM_ID = "splitmix64-boxmuller-v1"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, the SplitMix64 increment

_U64_GOLDEN = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / (1 << 53)


@dataclass(frozen=True)
class SeedSpec:
    """A (master seed, stream id) pair naming one substream."""

    master_seed: int
    stream_id: int

    def substream(self) -> int:
        return derive_substream(self.master_seed, self.stream_id)


def _resolve(seed: SeedSpec | int) -> int:
    if isinstance(seed, SeedSpec):
        return seed.substream()
    return int(seed) & MASK64


def derive_substream(master_seed: int, stream_id: int) -> int:
    """Derive the substream seed for (master_seed, stream_id).

    The substream seed is the first SplitMix64 output of the state
    master_seed XOR (stream_id * GOLDEN), so stream 0 of master seed 0
    reproduces the published SplitMix64 sequence for state 0.
    """
    state = (master_seed & MASK64) ^ ((stream_id * GOLDEN) & MASK64)
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def raw64(seed: SeedSpec | int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs offset..offset+count-1 of the SplitMix64 stream, as uint64.

    Counter-based: output i mixes state seed + (i+1)*GOLDEN, so any slice of
    the stream can be produced directly and in parallel without sequencing.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    s = _resolve(seed)
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(s) + idx * _U64_GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
    return z


def uniform01(seed: SeedSpec | int, count: int, offset: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) from the top 53 bits of each 64-bit output."""
    bits = raw64(seed, count, offset)
    return (bits >> _S11).astype(np.float64) * _INV53


def gaussian(seed: SeedSpec | int, count: int) -> np.ndarray:
    """Standard normal samples via Box-Muller on consecutive uniform pairs.

    Pair (u1, u2) yields r*cos(2*pi*u2) then r*sin(2*pi*u2) with
    r = sqrt(-2*ln(1 - u1)); 1-u1 avoids log(0).
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    pairs = (count + 1) // 2
    u = uniform01(seed, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = (2.0 * np.pi) * u[:, 1]
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def gaussian_matrix(
    seed: SeedSpec | int, rows: int, cols: int, normalize_rows: bool = False
) -> np.ndarray:
    """Gaussian (rows, cols) matrix filled row-major from the substream.

    With normalize_rows, each row is scaled to unit Euclidean norm, the form
    used for projection directions (projections of unit-norm samples are
    then cosines).
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    u = gaussian(seed, rows * cols).reshape(rows, cols)
    if normalize_rows:
        norms = np.linalg.norm(u, axis=1, keepdims=True)
        u /= norms
    return u


def random_orthonormal(seed: SeedSpec | int, m: int) -> np.ndarray:
    """Haar-distributed orthonormal (m, m) matrix.

    QR of a Gaussian matrix, with the sign convention diag(R) > 0 applied to
    the columns of Q. That convention makes the factorization unique, so the
    same seed gives the same matrix everywhere.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    g = gaussian_matrix(seed, m, m)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def select_block_indices(seed: SeedSpec | int, n: int, count: int) -> np.ndarray:
    """count distinct indices in {0..n-1}, uniform without replacement.

    Partial Fisher-Yates shuffle driven by the substream: step i swaps
    position i with i + (raw mod (n - i)) and the first count entries are
    returned. The modulo bias is negligible for n far below 2^64.
    """
    if not 1 <= count <= n:
        raise ValueError(f"need 1 <= count <= n, got count={count}, n={n}")
    perm = np.arange(n, dtype=np.int64)
    bits = raw64(seed, count)
    for i in range(count):
        j = i + int(bits[i] % (n - i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:count].copy()
