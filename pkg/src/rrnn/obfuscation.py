"""Orthonormal-key obfuscation of feature vectors, with split keys.

A secret Haar-random orthonormal matrix Q rotates every sample; norms,
angles and therefore trained models are unchanged, but the data itself is
unreadable without Q. Keys act on samples as column vectors, v -> Q v, so a
matrix of row samples maps as X -> X Q^T; applied after the feature
pipeline, the key dimension equals the final feature length.

Split keys let users query a model without ever holding Q: the host draws
an orthonormal S_n from a per-user secret seed and hands the user
P_n = S_n^T Q. The user sends P_n v; the host left-multiplies by S_n and
recovers S_n P_n v = Q v, exactly what the model was trained on. Neither
factor alone reveals Q.

This is obfuscation, not cryptography; no hardness claims are made.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass(frozen=True)
class SecretKey:
    dim: int
    matrix: np.ndarray  # (dim, dim) orthonormal Q
    key_seed: tuple[int, int] | None = None  # (master, stream) when seed-generated

    def __post_init__(self):
        if self.matrix.shape != (self.dim, self.dim):
            raise ValueError(
                f"key matrix is {self.matrix.shape}, expected ({self.dim}, {self.dim})"
            )


@dataclass(frozen=True)
class UserKey:
    """The user's half of a split key: P_n and nothing else."""

    user_id: int
    dim: int
    matrix: np.ndarray  # P_n = S_n^T Q


@dataclass(frozen=True)
class SplitKey:
    user_id: int
    host_seed: int  # regenerates S_n; never given to the user
    user_matrix: np.ndarray  # P_n = S_n^T Q, the user's half
    dim: int

    def user_part(self) -> UserKey:
        return UserKey(user_id=self.user_id, dim=self.dim, matrix=self.user_matrix)


def generate_key(seed: rng.SeedSpec | int, dim: int, stream: int = 0) -> SecretKey:
    """Haar-random orthonormal key of the given dimension.

    A plain integer seed is treated as a master seed with the given stream.
    """
    if isinstance(seed, rng.SeedSpec):
        master, stream = seed.master_seed, seed.stream_id
    else:
        master = int(seed)
    q = rng.random_orthonormal(rng.derive_substream(master, stream), dim)
    return SecretKey(dim=dim, matrix=q, key_seed=(master, stream))


def regenerate_key(master_seed: int, stream: int, dim: int) -> SecretKey:
    return generate_key(rng.SeedSpec(master_seed, stream), dim)


def encrypt_matrix(x: np.ndarray, key: SecretKey) -> np.ndarray:
    """Apply the key to samples: row x_n becomes Q x_n, i.e. X -> X Q^T.

    Row norms and pairwise dot products are preserved exactly up to float
    roundoff, which is what makes training on encrypted data equivalent.
    """
    x = np.asarray(x, dtype=np.float64)
    width = x.shape[-1]
    if width != key.dim:
        raise ValueError(f"key dimension {key.dim} does not match features {width}")
    return x @ key.matrix.T


def split_key(key: SecretKey, user_seed: rng.SeedSpec | int, user_id: int = 0) -> SplitKey:
    """Factor Q = S_n P_n for one user.

    S_n is orthonormal from the user's host-side seed; the user receives
    P_n = S_n^T Q. Since S_n S_n^T = I, the product S_n P_n reconstructs Q.
    """
    host_seed = user_seed.substream() if isinstance(user_seed, rng.SeedSpec) else int(user_seed)
    s = rng.random_orthonormal(host_seed, key.dim)
    p = s.T @ key.matrix
    return SplitKey(user_id=user_id, host_seed=host_seed, user_matrix=p, dim=key.dim)


def user_transform(split: SplitKey | UserKey | np.ndarray, x: np.ndarray) -> np.ndarray:
    """User-side half of the query protocol: v -> P_n v (rows X -> X P_n^T)."""
    if isinstance(split, SplitKey):
        p = split.user_matrix
    elif isinstance(split, UserKey):
        p = split.matrix
    else:
        p = np.asarray(split)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.shape[1]:
        raise ValueError(f"user key is {p.shape}, input has {x.shape[-1]} features")
    return x @ p.T


def host_transform(encrypted: np.ndarray, split: SplitKey) -> np.ndarray:
    """Host-side completion: v -> S_n v, so S_n (P_n x) = Q x.

    S_n is regenerated from the stored host seed; the output is encrypted
    exactly as the model's training data and can be scored directly.
    """
    s = rng.random_orthonormal(split.host_seed, split.dim)
    x = np.asarray(encrypted, dtype=np.float64)
    if x.shape[-1] != split.dim:
        raise ValueError(f"split key dimension {split.dim}, input has {x.shape[-1]}")
    return x @ s.T


def reconstruct_from_split(split: SplitKey) -> np.ndarray:
    """S_n P_n, which must equal Q; used to verify a split."""
    s = rng.random_orthonormal(split.host_seed, split.dim)
    return s @ split.user_matrix
