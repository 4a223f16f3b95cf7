"""Versioned binary checkpoint container.

Layout::

    b"LXMQCKPT" | u32 version | u64 header length | JSON header | raw arrays | sha256 of all prior bytes

The header (sorted-key JSON) carries the kind, the training step, free-form
metadata (architecture descriptors, config) and the name/shape of every array.
Arrays are stored back to back as little-endian float64. Nothing time- or
host-dependent is written, so identical runs give identical files.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .nets import build
from .optim import RmsProp

MAGIC = b"LXMQCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    kind: str
    step: int
    meta: dict = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        names = sorted(self.arrays)
        header = {
            "kind": self.kind,
            "step": int(self.step),
            "meta": self.meta,
            "arrays": [{"name": n, "shape": list(np.shape(self.arrays[n]))} for n in names],
        }
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        body = b"".join(np.ascontiguousarray(self.arrays[n], dtype=_DTYPE).tobytes() for n in names)
        blob = _PREFIX.pack(MAGIC, VERSION, len(hb)) + hb + body
        return blob + hashlib.sha256(blob).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < _PREFIX.size + 32:
            raise CheckpointError("checkpoint truncated")
        blob, digest = data[:-32], data[-32:]
        if hashlib.sha256(blob).digest() != digest:
            raise CheckpointError("checkpoint checksum mismatch (file corrupt or truncated)")
        magic, version, hlen = _PREFIX.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = _PREFIX.size
        try:
            header = json.loads(blob[off:off + hlen])
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
        off += hlen
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
            if off + n > len(blob):
                raise CheckpointError("checkpoint body shorter than its header claims")
            arrays[spec["name"]] = np.frombuffer(blob, _DTYPE, count=n // 8, offset=off).reshape(shape).astype(float)
            off += n
        if off != len(blob):
            raise CheckpointError("trailing bytes after checkpoint arrays")
        return cls(header["kind"], header["step"], header["meta"], arrays)

    def save(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(data)


def pack_qfunction(ckpt: Checkpoint, name: str, f, opt: RmsProp | None = None):
    """Store ``f`` (and optionally its optimiser state) under ``name``."""
    ckpt.meta.setdefault("qfunctions", {})[name] = {
        "descriptor": f.descriptor(),
        "optimizer": None if opt is None else {"lr": opt.lr, "rho": opt.rho, "eps": opt.eps, "steps": opt.steps},
    }
    for i, p in enumerate(f.params):
        ckpt.arrays[f"{name}/param{i}"] = p
    if opt is not None:
        for k, v in opt.state_arrays().items():
            ckpt.arrays[f"{name}/opt/{k}"] = v


def unpack_qfunction(ckpt: Checkpoint, name: str):
    """Rebuild ``(f, opt_or_None)`` stored under ``name``."""
    try:
        entry = ckpt.meta["qfunctions"][name]
        f = build(entry["descriptor"])
        for i, p in enumerate(f.params):
            src = ckpt.arrays[f"{name}/param{i}"]
            if src.shape != p.shape:
                raise CheckpointError(f"{name}/param{i}: shape {src.shape} != {p.shape}")
            p[...] = src
        opt = None
        if entry.get("optimizer"):
            o = entry["optimizer"]
            opt = RmsProp(f.params, o["lr"], o["rho"], o["eps"])
            opt.load_state({k.split("/")[-1]: v for k, v in ckpt.arrays.items()
                            if k.startswith(f"{name}/opt/")}, o["steps"])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks entry {exc}") from exc
    return f, opt
