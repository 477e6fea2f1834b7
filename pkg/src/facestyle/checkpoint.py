"""Flat, deterministic checkpoint container.

Layout of a .fsck file:

    magic "FSCKPT1\\n"
    8-byte little-endian manifest length
    manifest JSON (sorted keys, compact separators)
    raw payload: every tensor as little-endian float32, row-major,
    concatenated in manifest order

The manifest records kind, config, free-form extra metadata, and for each
tensor its name, shape, offset, and byte length, plus a sha256 over the whole
payload. Identical state always serializes to identical bytes, and a damaged
file fails loudly with the offending field named.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"FSCKPT1\n"


@dataclass
class Checkpoint:
    kind: str
    config: dict[str, Any]
    extra: dict[str, Any]
    tensors: dict[str, torch.Tensor]
    file_hash: str


def _tensor_bytes(t: torch.Tensor) -> bytes:
    if t.dtype != torch.float32:
        raise CheckpointError(f"only float32 tensors are serializable, got {t.dtype}")
    return np.ascontiguousarray(t.detach().numpy()).astype("<f4", copy=False).tobytes()


def save_checkpoint(
    path: str | Path,
    kind: str,
    state: Mapping[str, torch.Tensor],
    config: Mapping[str, Any],
    extra: Mapping[str, Any] | None = None,
) -> str:
    """Write a checkpoint atomically; returns the sha256 of the final file."""
    names = sorted(state.keys())
    chunks: list[bytes] = []
    index = []
    offset = 0
    for name in names:
        raw = _tensor_bytes(state[name])
        index.append(
            {"name": name, "shape": list(state[name].shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "kind": kind,
        "config": dict(config),
        "extra": dict(extra or {}),
        "tensors": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = MAGIC + len(mbytes).to_bytes(8, "little") + mbytes + payload

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path: str | Path, expected_kind: str | None = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no such checkpoint: {path}")
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    mlen = int.from_bytes(blob[len(MAGIC) : len(MAGIC) + 8], "little")
    mstart = len(MAGIC) + 8
    if mstart + mlen > len(blob):
        raise CheckpointError(f"{path}: truncated manifest ({len(blob)} bytes total)")
    try:
        manifest = json.loads(blob[mstart : mstart + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from exc
    for key in ("kind", "config", "extra", "tensors", "payload_sha256"):
        if key not in manifest:
            raise CheckpointError(f"{path}: manifest missing field {key!r}")
    if expected_kind is not None and manifest["kind"] != expected_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind is {manifest['kind']!r}, expected {expected_kind!r}"
        )
    payload = blob[mstart + mlen :]
    tensors: dict[str, torch.Tensor] = {}
    for entry in manifest["tensors"]:
        name, shape = entry["name"], entry["shape"]
        off, nbytes = entry["offset"], entry["nbytes"]
        if off + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: payload truncated, tensor {name!r} needs bytes "
                f"[{off}, {off + nbytes}) but payload has {len(payload)}"
            )
        want = int(np.prod(shape)) * 4 if shape else 4
        if nbytes != want:
            raise CheckpointError(
                f"{path}: tensor {name!r} length {nbytes} does not match shape {shape}"
            )
        arr = np.frombuffer(payload[off : off + nbytes], dtype="<f4").reshape(shape)
        tensors[name] = torch.from_numpy(arr.copy())
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest["payload_sha256"]:
        raise CheckpointError(f"{path}: payload sha256 mismatch (file damaged)")
    return Checkpoint(
        kind=manifest["kind"],
        config=manifest["config"],
        extra=manifest["extra"],
        tensors=tensors,
        file_hash=hashlib.sha256(blob).hexdigest(),
    )


def checkpoint_hash(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"no such checkpoint: {p}")
    return hashlib.sha256(p.read_bytes()).hexdigest()
