"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TABT"                magic
    u32                    format version
    str                    phase tag
    str                    JSON: {"run_config": ..., "model": {...construction args...}}
    str                    schema fingerprint (sha256 hex)
    tensors                named parameters
    u32                    1 if optimizer state follows, else 0
      u64                  optimizer step count
      tensors              first moments
      tensors              second moments

    str     := u32 byte length, utf-8 bytes
    tensors := u32 count, then per tensor: str name, u32 ndim, u32 dims[ndim], f32 data (row-major)
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FingerprintError
from .model import ModelConfig, TabTransformer

MAGIC = b"TABT"
FORMAT_VERSION = 1
PHASES = ("supervised", "pretrain-mlm", "pretrain-rtd", "finetune")


@dataclass
class Checkpoint:
    phase: str
    config: dict
    schema_fingerprint: str
    params: dict[str, np.ndarray]
    optimizer: dict | None = None
    extra: dict = field(default_factory=dict)


def _w_str(fh, s: str) -> None:
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def _r_exact(fh, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise DataError("truncated checkpoint")
    return b


def _r_u32(fh) -> int:
    return struct.unpack("<I", _r_exact(fh, 4))[0]


def _r_str(fh) -> str:
    return _r_exact(fh, _r_u32(fh)).decode("utf-8")


def _w_tensors(fh, tensors: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        _w_str(fh, name)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _r_tensors(fh) -> dict[str, np.ndarray]:
    out = {}
    for _ in range(_r_u32(fh)):
        name = _r_str(fh)
        ndim = _r_u32(fh)
        shape = struct.unpack(f"<{ndim}I", _r_exact(fh, 4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(_r_exact(fh, 4 * count), dtype="<f4").astype(np.float32)
        out[name] = data.reshape(shape)
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    _w_str(fh, ckpt.phase)
    _w_str(fh, json.dumps(ckpt.config, sort_keys=True))
    _w_str(fh, ckpt.schema_fingerprint)
    _w_tensors(fh, ckpt.params)
    if ckpt.optimizer is None:
        fh.write(struct.pack("<I", 0))
    else:
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<Q", int(ckpt.optimizer["t"])))
        _w_tensors(fh, ckpt.optimizer["m"])
        _w_tensors(fh, ckpt.optimizer["v"])
    return fh.getvalue()


def loads(blob: bytes, expected_fingerprint: str | None = None) -> Checkpoint:
    fh = io.BytesIO(blob)
    if fh.read(4) != MAGIC:
        raise DataError("not a checkpoint (bad magic)")
    version = _r_u32(fh)
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    phase = _r_str(fh)
    config = json.loads(_r_str(fh))
    fingerprint = _r_str(fh)
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintError(
            f"schema fingerprint mismatch: checkpoint has {fingerprint[:16]}..., data schema has {expected_fingerprint[:16]}...")
    params = _r_tensors(fh)
    optimizer = None
    if _r_u32(fh):
        t = struct.unpack("<Q", _r_exact(fh, 8))[0]
        optimizer = {"t": t, "m": _r_tensors(fh), "v": _r_tensors(fh)}
    return Checkpoint(phase, config, fingerprint, params, optimizer)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path, expected_fingerprint: str | None = None) -> Checkpoint:
    return loads(Path(path).read_bytes(), expected_fingerprint)


def model_spec(model: TabTransformer) -> dict:
    from dataclasses import asdict

    cfg = asdict(model.config)
    cfg["head_hidden"] = list(cfg["head_hidden"])
    return {"cardinalities": model.cardinalities, "n_cont": model.n_cont, "seed": model.seed, "config": cfg}


def build_model(spec: dict) -> TabTransformer:
    cfg = dict(spec["config"])
    cfg["head_hidden"] = tuple(cfg["head_hidden"])
    return TabTransformer(spec["cardinalities"], spec["n_cont"], ModelConfig(**cfg), seed=spec["seed"])


def make_checkpoint(model: TabTransformer, phase: str, fingerprint: str, run_config: dict | None = None,
                    extra_params: dict[str, np.ndarray] | None = None, optimizer=None) -> Checkpoint:
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    params = model.state_dict()
    if extra_params:
        params.update(extra_params)
    opt = None
    if optimizer is not None and optimizer.m:
        names = list(model.params)
        opt = {"t": optimizer.t, "m": dict(zip(names, optimizer.m)), "v": dict(zip(names, optimizer.v))}
    config = {"run_config": run_config or {}, "model": model_spec(model)}
    return Checkpoint(phase, config, fingerprint, params, opt)


def model_from_checkpoint(ckpt: Checkpoint) -> TabTransformer:
    model = build_model(ckpt.config["model"])
    model.load_state_dict({k: v for k, v in ckpt.params.items() if k in model.params})
    return model
