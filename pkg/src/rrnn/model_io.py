"""Binary containers for trained models and obfuscation keys.

Both share one envelope: 4-byte magic, little-endian uint32 format version,
little-endian uint64 metadata length, canonical JSON metadata (sorted keys,
no whitespace), then raw little-endian float64 row-major array payloads in
a fixed order. Writing the same object twice produces byte-identical files,
which is part of the determinism contract.

Model files use magic "RRNM". The payload holds each layer's weight matrix
in layer order; kernel models that embed their sample blocks interleave
each block right after its layer's weights. Key files use magic "RRKQ" and
hold the matrix payload only when the key is not regenerable from a seed
(or embedding was requested).
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .kernel import KernelLayer, RrknModel
from .network import ProjectionLayer, RrnnModel, TrainingTrace
from .obfuscation import SecretKey, SplitKey, UserKey
from .pipeline import PipelineConfig
from .rng import ALGORITHM_ID

MODEL_MAGIC = b"RRNM"
KEY_MAGIC = b"RRKQ"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQ")


class ContainerError(ValueError):
    """Malformed model or key file."""


def _canonical_json(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_container(path: str, magic: bytes, meta: dict, arrays: list[np.ndarray]) -> None:
    blob = _canonical_json(meta)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(magic, FORMAT_VERSION, len(blob)))
        f.write(blob)
        for arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_container(path: str, magic: bytes) -> tuple[dict, memoryview]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ContainerError(f"{path}: too short for a container header")
    got_magic, version, meta_len = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise ContainerError(
            f"{path}: bad magic {got_magic!r}, expected {magic!r}"
        )
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format version {version}")
    start = _HEADER.size
    if start + meta_len > len(raw):
        raise ContainerError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[start : start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: corrupt metadata: {e}") from None
    return meta, memoryview(raw)[start + meta_len :]


class _PayloadReader:
    def __init__(self, path: str, buf: memoryview):
        self.path = path
        self.buf = buf
        self.offset = 0

    def take(self, rows: int, cols: int) -> np.ndarray:
        nbytes = rows * cols * 8
        end = self.offset + nbytes
        if end > len(self.buf):
            raise ContainerError(f"{self.path}: truncated payload")
        arr = np.frombuffer(self.buf[self.offset : end], dtype="<f8")
        self.offset = end
        return arr.reshape(rows, cols).astype(np.float64)

    def finish(self) -> None:
        if self.offset != len(self.buf):
            raise ContainerError(
                f"{self.path}: {len(self.buf) - self.offset} unexpected trailing bytes"
            )


def feature_fingerprint(x: np.ndarray) -> str:
    """sha256 of a feature matrix's shape, dtype and exact bytes."""
    h = hashlib.sha256()
    h.update(f"{x.shape[0]}x{x.shape[1]}:{x.dtype.str}".encode())
    for lo in range(0, x.shape[0], 1024):
        h.update(np.ascontiguousarray(x[lo : lo + 1024]).tobytes())
    return "sha256:" + h.hexdigest()


def _trace_meta(trace: TrainingTrace | None) -> dict:
    if trace is None:
        return {}
    meta = {
        "initial_residual": trace.initial_residual,
        "residual_norms": trace.residual_norms,
        "stop_reason": trace.stop_reason,
        "train_accuracy": trace.train_accuracy,
    }
    if trace.eval_accuracy is not None:
        meta["eval_accuracy"] = trace.eval_accuracy
    return {"trace": meta}


def save_model(
    path: str,
    model: RrnnModel | RrknModel,
    pipeline: PipelineConfig,
    trace: TrainingTrace | None = None,
    train_fingerprint: str | None = None,
) -> None:
    """Write a trained model plus the pipeline configuration it expects."""
    meta = {
        "classes": model.classes,
        "feature_length": model.feature_length,
        "fingerprint": pipeline.fingerprint(),
        "format": FORMAT_VERSION,
        "kind": model.kind,
        "lambda": model.lam,
        "master_seed": model.master_seed,
        "pipeline": {
            "dtype": pipeline.dtype,
            "fft": pipeline.use_fft,
            "scale": pipeline.scale,
            "sqrt": pipeline.use_sqrt,
        },
        "rng": ALGORITHM_ID,
    }
    meta.update(_trace_meta(trace))
    arrays: list[np.ndarray] = []
    if isinstance(model, RrnnModel):
        meta["mu"] = model.mu
        meta["projection_scale"] = model.projection_scale
        meta["layers"] = [
            {"stream": layer.stream, "width": layer.width} for layer in model.layers
        ]
        arrays = [layer.weight for layer in model.layers]
    elif isinstance(model, RrknModel):
        meta["phi"] = model.phi
        embedded = all(layer.block is not None for layer in model.layers)
        meta["blocks_embedded"] = embedded
        if train_fingerprint is not None:
            meta["train_fingerprint"] = train_fingerprint
        meta["layers"] = [
            {
                "stream": layer.stream,
                "width": layer.width,
                "indices": [int(i) for i in layer.indices],
            }
            for layer in model.layers
        ]
        for layer in model.layers:
            arrays.append(layer.weight)
            if embedded:
                arrays.append(layer.block)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    _write_container(path, MODEL_MAGIC, meta, arrays)


def load_model(path: str) -> tuple[RrnnModel | RrknModel, dict]:
    """Read a model file back; returns (model, metadata dict)."""
    meta, payload = _read_container(path, MODEL_MAGIC)
    reader = _PayloadReader(path, payload)
    kind = meta.get("kind")
    classes = meta["classes"]
    dim = meta["feature_length"]
    if kind == "rrnn":
        layers = [
            ProjectionLayer(
                stream=spec["stream"], weight=reader.take(spec["width"], classes)
            )
            for spec in meta["layers"]
        ]
        model: RrnnModel | RrknModel = RrnnModel(
            master_seed=meta["master_seed"],
            mu=meta["mu"],
            lam=meta["lambda"],
            feature_length=dim,
            classes=classes,
            layers=layers,
            projection_scale=meta.get("projection_scale"),
        )
    elif kind == "rrkn":
        embedded = meta.get("blocks_embedded", False)
        layers = []
        for spec in meta["layers"]:
            weight = reader.take(spec["width"], classes)
            block = reader.take(spec["width"], dim) if embedded else None
            layers.append(
                KernelLayer(
                    stream=spec["stream"],
                    indices=np.asarray(spec["indices"], dtype=np.int64),
                    weight=weight,
                    block=block,
                )
            )
        model = RrknModel(
            master_seed=meta["master_seed"],
            lam=meta["lambda"],
            phi=meta["phi"],
            feature_length=dim,
            classes=classes,
            layers=layers,
        )
    else:
        raise ContainerError(f"{path}: unknown model kind {kind!r}")
    reader.finish()
    return model, meta


def pipeline_from_meta(meta: dict) -> PipelineConfig:
    p = meta["pipeline"]
    return PipelineConfig(
        scale=p["scale"], use_sqrt=p["sqrt"], use_fft=p["fft"], dtype=p["dtype"]
    )


def save_secret_key(path: str, key: SecretKey, include_matrix: bool = False) -> None:
    """Write a secret key; seed-generated keys omit the matrix by default."""
    if key.key_seed is None and not include_matrix:
        raise ValueError("key has no generating seed; the matrix must be included")
    meta = {
        "dim": key.dim,
        "format": FORMAT_VERSION,
        "kind": "secret",
        "matrix_included": include_matrix,
        "rng": ALGORITHM_ID,
        "seed": list(key.key_seed) if key.key_seed is not None else None,
    }
    arrays = [key.matrix] if include_matrix else []
    _write_container(path, KEY_MAGIC, meta, arrays)


def save_user_key(path: str, split: SplitKey | UserKey) -> None:
    """Write the user's half of a split key. Never contains the host seed."""
    user = split.user_part() if isinstance(split, SplitKey) else split
    meta = {
        "dim": user.dim,
        "format": FORMAT_VERSION,
        "kind": "user",
        "matrix_included": True,
        "rng": ALGORITHM_ID,
        "user_id": user.user_id,
    }
    _write_container(path, KEY_MAGIC, meta, [user.matrix])


def load_key(path: str) -> SecretKey | UserKey:
    """Read a key file; returns a SecretKey or a user half, by its kind."""
    meta, payload = _read_container(path, KEY_MAGIC)
    reader = _PayloadReader(path, payload)
    dim = meta["dim"]
    kind = meta.get("kind")
    if kind == "secret":
        if meta.get("matrix_included"):
            matrix = reader.take(dim, dim)
        else:
            from . import rng

            master, stream = meta["seed"]
            matrix = rng.random_orthonormal(rng.derive_substream(master, stream), dim)
        seed = tuple(meta["seed"]) if meta.get("seed") is not None else None
        key: SecretKey | UserKey = SecretKey(dim=dim, matrix=matrix, key_seed=seed)
    elif kind == "user":
        key = UserKey(user_id=meta["user_id"], dim=dim, matrix=reader.take(dim, dim))
    else:
        raise ContainerError(f"{path}: unknown key kind {kind!r}")
    reader.finish()
    return key
