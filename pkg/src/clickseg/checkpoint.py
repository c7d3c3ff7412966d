"""Single-file checkpoints: JSON manifest + raw little-endian float blob.

Layout: 8-byte magic, 4-byte little-endian manifest length, UTF-8 JSON
manifest, then the concatenated tensor data. The manifest records name,
shape, dtype and byte offset per tensor, so the round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import Segmenter
from .optim import AdamW
from .tensor import ContractError

MAGIC = b"CSEGCKPT"


def _dtype_tag(arr: np.ndarray) -> str:
    return {"float32": "f4", "float64": "f8"}[arr.dtype.name]


def save_checkpoint(path, model: Segmenter, optimizer: AdamW | None = None,
                    extra: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {f"model.{k}": p.data for k, p in model.parameters().items()}
    meta: dict = {"config": model.cfg.to_dict()}
    if optimizer is not None:
        state = optimizer.state_dict()
        meta["optimizer"] = {"step_count": state["step_count"], "lr": state["lr"]}
        for k, v in state["m"].items():
            arrays[f"optim.m.{k}"] = v
        for k, v in state["v"].items():
            arrays[f"optim.v.{k}"] = v
    if extra:
        meta["extra"] = extra

    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": _dtype_tag(arr), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"meta": meta, "tensors": entries}).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for raw in blobs:
            f.write(raw)


def _read_manifest(path) -> tuple[dict, int]:
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ContractError(f"{path} is not a checkpoint file")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
    return manifest, 12 + mlen


def _read_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    manifest, base = _read_manifest(path)
    data = Path(path).read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for ent in manifest["tensors"]:
        start = base + ent["offset"]
        raw = data[start:start + ent["nbytes"]]
        arr = np.frombuffer(raw, dtype="<" + ent["dtype"]).reshape(ent["shape"])
        arrays[ent["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return manifest, arrays


def load_checkpoint(path) -> Segmenter:
    """Rebuild the model from a checkpoint file."""
    manifest, arrays = _read_arrays(path)
    cfg = ModelConfig.from_dict(manifest["meta"]["config"])
    model = Segmenter(cfg, seed=0)
    for key, p in model.parameters().items():
        name = f"model.{key}"
        if name not in arrays:
            raise ContractError(f"checkpoint missing tensor {name}")
        if tuple(arrays[name].shape) != p.data.shape:
            raise ContractError(f"shape mismatch for {name}: {arrays[name].shape} vs {p.data.shape}")
        p.data = arrays[name]
    return model


def load_optimizer(path, optimizer: AdamW) -> None:
    """Restore AdamW moments/step saved alongside the model."""
    manifest, arrays = _read_arrays(path)
    opt_meta = manifest["meta"].get("optimizer")
    if opt_meta is None:
        raise ContractError("checkpoint carries no optimizer state")
    optimizer.load_state_dict({
        "step_count": opt_meta["step_count"],
        "lr": opt_meta["lr"],
        "m": {k[len("optim.m."):]: v for k, v in arrays.items() if k.startswith("optim.m.")},
        "v": {k[len("optim.v."):]: v for k, v in arrays.items() if k.startswith("optim.v.")},
    })


def checkpoint_extra(path) -> dict:
    manifest, _ = _read_manifest(path)
    return manifest["meta"].get("extra", {})


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
