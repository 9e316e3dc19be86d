"""Binary checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes  b"DAGFLOW\\x00"
    version      u32
    config hash  16 ASCII bytes
    meta length  u64, then that many bytes of UTF-8 JSON
    n arrays     u32
    per array:   u16 name length, name (UTF-8), u8 ndim, ndim x u64 shape,
                 prod(shape) x f64 data
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dagflow.errors import ContractError
from dagflow.numerics.optim import OptimizerState

MAGIC = b"DAGFLOW\x00"
FORMAT_VERSION = 1


class CheckpointError(ContractError):
    pass


@dataclass
class Checkpoint:
    meta: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    config_hash: str = "0" * 16

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Arrays stored under ``prefix/``, with the prefix stripped."""
        head = prefix + "/"
        return {k[len(head):]: v for k, v in self.arrays.items() if k.startswith(head)}


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write to a sibling temp file then rename, so readers never see a torn file."""
    h = ckpt.config_hash.encode("ascii")
    if len(h) != 16:
        raise CheckpointError("config hash must be 16 ASCII characters")
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), h, struct.pack("<Q", len(meta)), meta,
             struct.pack("<I", len(ckpt.arrays))]
    for name in ckpt.arrays:  # insertion order is the ParamSet order
        arr = np.asarray(ckpt.arrays[name], dtype="<f8")  # tobytes() is C-order; keeps 0-d shape
        nb = name.encode("utf-8")
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}Q", *arr.shape), arr.tobytes()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(8) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format version {version}")
    chash = take(16).decode("ascii")
    (mlen,) = struct.unpack("<Q", take(8))
    meta = json.loads(take(mlen).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last array")
    return Checkpoint(meta=meta, arrays=arrays, config_hash=chash)


def pack_params(prefix: str, params) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": np.asarray(v) for k, v in params.items()}


def pack_optimizer(prefix: str, opt: OptimizerState) -> tuple[dict, dict]:
    arrays = {**pack_params(f"{prefix}/m", opt.m), **pack_params(f"{prefix}/v", opt.v)}
    meta = {"lr": opt.lr, "betas": list(opt.betas), "eps": opt.eps,
            "weight_decay": opt.weight_decay, "step": opt.step}
    return arrays, meta


def unpack_optimizer(ckpt: Checkpoint, prefix: str, meta: dict) -> OptimizerState:
    return OptimizerState(lr=meta["lr"], betas=tuple(meta["betas"]), eps=meta["eps"],
                          weight_decay=meta["weight_decay"], step=meta["step"],
                          m=ckpt.group(f"{prefix}/m"), v=ckpt.group(f"{prefix}/v"))
