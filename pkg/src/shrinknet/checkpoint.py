"""AMCW checkpoint format.

Little-endian: magic "AMCW", u16 version=1, u32 tensor count, then per
tensor a u16-length-prefixed UTF-8 name, u8 rank, u32 dims, raw float32
payload; then a u32-length-prefixed UTF-8 metadata block of key=value lines.
Both trainable parameters and batch-norm running statistics are stored.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import Model, ModelConfig

MAGIC = b"AMCW"
VERSION = 1


class CheckpointError(Exception):
    pass


def _collect_tensors(model: Model) -> list[tuple[str, np.ndarray]]:
    out = [(name, p.data) for name, p in model.named_params()]
    for name, layer, attr in model.named_buffers():
        out.append((name, getattr(layer, attr)))
    return out


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> None:
    meta = dict(model.cfg.to_dict())
    if metadata:
        meta.update(metadata)
    with open(path, "wb") as f:
        tensors = _collect_tensors(model)
        f.write(MAGIC + struct.pack("<HI", VERSION, len(tensors)))
        for name, arr in tensors:
            raw = name.encode("utf-8")
            a = np.asarray(arr, dtype="<f4")  # tobytes() emits C order; keeps 0-d rank
            f.write(struct.pack("<H", len(raw)) + raw)
            f.write(struct.pack("<B", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes())
        block = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")
        f.write(struct.pack("<I", len(block)) + block)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as f:
        head = f.read(10)
        if len(head) < 10 or head[:4] != MAGIC:
            raise CheckpointError(f"{path}: not an AMCW checkpoint")
        version, count = struct.unpack("<HI", head[4:])
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(f.read(4 * n), dtype="<f4")
            arr = arr.reshape(dims) if rank else arr.reshape(())
            tensors[name] = arr.copy()
        (mlen,) = struct.unpack("<I", f.read(4))
        meta = {}
        for line in f.read(mlen).decode("utf-8").splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k] = v
    return tensors, meta


def load_model(path) -> tuple[Model, dict[str, str]]:
    """Rebuild a model from a checkpoint; running stats mark BN initialized."""
    tensors, meta = read_checkpoint(path)
    cfg = ModelConfig.from_dict(meta)
    model = Model(cfg, seed=0)
    load_into(model, tensors)
    return model, meta


def load_into(model: Model, tensors: dict[str, np.ndarray]) -> None:
    for name, p in model.named_params():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        if tensors[name].shape != p.data.shape:
            raise CheckpointError(
                f"tensor {name!r}: shape {tensors[name].shape} != {p.data.shape}")
        p.data = tensors[name].astype(p.data.dtype)
    for name, layer, attr in model.named_buffers():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing buffer {name!r}")
        setattr(layer, attr, tensors[name].astype(np.float32))
        layer.initialized = True
