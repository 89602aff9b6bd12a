"""Checkpoint format: JSON manifest + little-endian float64 buffer blob.

``save_checkpoint(path, ...)`` writes ``<path>.json`` (architecture config,
its fingerprint, buffer names/shapes/flags, seed, step) and ``<path>.bin``
(the named buffers concatenated in manifest order as little-endian float64).
The round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IntegrityError
from .params import ParamStore


def architecture_fingerprint(arch: dict) -> str:
    canonical = json.dumps(arch, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    arch: dict
    buffers: dict[str, np.ndarray]
    trainable: dict[str, bool]
    seed: int
    step: int
    fingerprint: str


def save_checkpoint(path: str | Path, arch: dict, store: ParamStore,
                    seed: int = 0, step: int = 0) -> None:
    path = Path(path)
    entries = []
    chunks = []
    for p in store:
        entries.append({"name": p.name, "shape": list(p.value.shape),
                        "trainable": p.trainable})
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    manifest = {
        "architecture": arch,
        "fingerprint": architecture_fingerprint(arch),
        "buffers": entries,
        "seed": seed,
        "step": step,
    }
    path.with_suffix(".json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    path.with_suffix(".bin").write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    blob = path.with_suffix(".bin").read_bytes()
    data = np.frombuffer(blob, dtype="<f8")
    buffers: dict[str, np.ndarray] = {}
    trainable: dict[str, bool] = {}
    offset = 0
    for entry in manifest["buffers"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        buffers[entry["name"]] = data[offset:offset + size].reshape(entry["shape"]).copy()
        trainable[entry["name"]] = bool(entry["trainable"])
        offset += size
    if offset != data.size:
        raise IntegrityError(
            f"checkpoint blob has {data.size} values, manifest expects {offset}")
    return Checkpoint(
        arch=manifest["architecture"],
        buffers=buffers,
        trainable=trainable,
        seed=int(manifest["seed"]),
        step=int(manifest["step"]),
        fingerprint=manifest["fingerprint"],
    )


def restore_into(store: ParamStore, ckpt: Checkpoint) -> None:
    """Copy checkpoint buffers into an already-built store (names must match)."""
    names = set(store.names())
    if names != set(ckpt.buffers):
        missing = names.symmetric_difference(ckpt.buffers)
        raise IntegrityError(f"checkpoint/model buffer mismatch: {sorted(missing)[:5]}")
    for name, value in ckpt.buffers.items():
        p = store[name]
        if p.value.shape != value.shape:
            raise IntegrityError(f"buffer {name!r} shape {value.shape} != {p.value.shape}")
        p.value[...] = value
        p.trainable = ckpt.trainable[name]
