"""Single-file binary checkpoints.

Layout (little endian)::

    magic      8 bytes  b"ATTNLOCO"
    version    u32
    length     u64      payload size in bytes
    checksum   32 bytes SHA-256 of the payload
    payload    records, sorted by name

Each record is ``name_len u32, name utf-8, dtype_len u32, dtype str,
ndim u32, shape u64 * ndim, payload bytes`` (C order). The record
``__meta__`` holds a UTF-8 JSON document (sorted keys) with the run config,
counters, curriculum families and RNG states. Saving, loading and saving
again produces an identical file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"ATTNLOCO"
VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")
META = "__meta__"


@dataclass
class Checkpoint:
    config: dict
    weights: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    curriculum: dict | None = None  # families, family, level, frozen, rng
    epoch: int = 0
    stage: int = 1
    rng_states: dict[str, dict] = field(default_factory=dict)
    version: int = VERSION

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"weights/{k}": v for k, v in self.weights.items()}
        out.update({f"optimizer/{k}": v for k, v in self.optimizer.items()})
        if self.curriculum is not None:
            out["curriculum/family"] = np.asarray(self.curriculum["family"])
            out["curriculum/level"] = np.asarray(self.curriculum["level"])
        return out

    def meta(self) -> dict:
        cur = None
        if self.curriculum is not None:
            cur = {k: v for k, v in self.curriculum.items() if k not in ("family", "level")}
        return {
            "config": self.config,
            "epoch": int(self.epoch),
            "stage": int(self.stage),
            "rng_states": self.rng_states,
            "curriculum": cur,
        }


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _record(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    dtype = arr.dtype.str.encode("ascii")
    key = name.encode("utf-8")
    parts = [struct.pack("<I", len(key)), key, struct.pack("<I", len(dtype)), dtype, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    parts.append(arr.tobytes())
    return b"".join(parts)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arrays = ckpt.arrays()
    meta = json.dumps(ckpt.meta(), sort_keys=True, default=_json_default).encode("utf-8")
    arrays[META] = np.frombuffer(meta, dtype=np.uint8)
    payload = b"".join(_record(k, arrays[k]) for k in sorted(arrays))
    digest = hashlib.sha256(payload).digest()
    return _HEADER.pack(MAGIC, ckpt.version, len(payload), digest) + payload


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    tmp.replace(path)
    return path


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{source}: truncated header")
    magic, version, length, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{source}: checkpoint version {version}, this build reads version {VERSION}")
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise CheckpointError(f"{source}: truncated payload ({len(payload)} of {length} bytes)")
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{source}: checksum mismatch")
    arrays = {}
    k = 0
    try:
        while k < len(payload):
            (n,) = struct.unpack_from("<I", payload, k)
            name = payload[k + 4:k + 4 + n].decode("utf-8")
            k += 4 + n
            (n,) = struct.unpack_from("<I", payload, k)
            dtype = np.dtype(payload[k + 4:k + 4 + n].decode("ascii"))
            k += 4 + n
            (ndim,) = struct.unpack_from("<I", payload, k)
            shape = struct.unpack_from(f"<{ndim}Q", payload, k + 4)
            k += 4 + 8 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if k + size > len(payload):
                raise CheckpointError(f"{source}: record {name!r} overruns the payload")
            arrays[name] = np.frombuffer(payload[k:k + size], dtype=dtype).reshape(shape).copy()
            k += size
    except (struct.error, UnicodeDecodeError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{source}: malformed record ({exc})") from exc
    if META not in arrays:
        raise CheckpointError(f"{source}: missing metadata record")
    meta = json.loads(arrays.pop(META).tobytes().decode("utf-8"))
    weights = {k[8:]: v for k, v in arrays.items() if k.startswith("weights/")}
    optimizer = {k[10:]: v for k, v in arrays.items() if k.startswith("optimizer/")}
    curriculum = None
    if meta.get("curriculum") is not None:
        curriculum = dict(meta["curriculum"])
        curriculum["family"] = arrays["curriculum/family"]
        curriculum["level"] = arrays["curriculum/level"]
    return Checkpoint(
        config=meta["config"], weights=weights, optimizer=optimizer, curriculum=curriculum,
        epoch=meta["epoch"], stage=meta["stage"], rng_states=meta["rng_states"], version=version,
    )


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    return decode_checkpoint(path.read_bytes(), str(path))
