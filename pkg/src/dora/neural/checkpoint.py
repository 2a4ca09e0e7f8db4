"""Binary checkpoints.

Layout (little-endian)::

    8 bytes   magic b"DORACKPT"
    u32       format version (1)
    u32       header length H in bytes
    H bytes   UTF-8 JSON header (sorted keys): arm, model config, dtype,
              parameter names and shapes in registration order, user meta
    rest      parameters concatenated in header order, raw dtype values

The header carries everything needed to rebuild the module, so a checkpoint
loads without the training profile.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import DoraVAE, EncoderConfig

MAGIC = b"DORACKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DTYPES = {"float32": (torch.float32, "<f4"), "float64": (torch.float64, "<f8")}


class CheckpointError(ValueError):
    pass


def _dtype_name(dtype: torch.dtype) -> str:
    for name, (td, _) in _DTYPES.items():
        if td == dtype:
            return name
    raise CheckpointError(f"unsupported parameter dtype {dtype}")


def checkpoint_bytes(model: DoraVAE, meta: dict | None = None) -> bytes:
    names, shapes, blobs = [], [], []
    dtype = None
    for name, p in model.named_parameters():
        if dtype is None:
            dtype = p.dtype
        elif p.dtype != dtype:
            raise CheckpointError("mixed parameter dtypes")
        names.append(name)
        shapes.append(list(p.shape))
        blobs.append(p.detach().cpu().numpy().astype(_DTYPES[_dtype_name(p.dtype)][1]).tobytes())
    header = {
        "arm": model.arm,
        "config": model.config.__dict__,
        "dtype": _dtype_name(dtype),
        "names": names,
        "shapes": shapes,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(blobs)


def save_checkpoint(path, model: DoraVAE, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, meta))


def load_checkpoint(path) -> tuple[DoraVAE, dict]:
    """Rebuild the model from a checkpoint. Returns ``(model, meta)``."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError("file too short for a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    header = json.loads(data[start : start + hlen].decode("utf-8"))
    torch_dtype, np_dtype = _DTYPES[header["dtype"]]
    model = DoraVAE(EncoderConfig(**header["config"]), header["arm"]).to(torch_dtype)
    params = dict(model.named_parameters())
    if list(params) != header["names"]:
        raise CheckpointError("parameter layout does not match the model definition")
    flat = np.frombuffer(data, dtype=np_dtype, offset=start + hlen)
    expected = sum(int(np.prod(s)) for s in header["shapes"])
    if flat.size != expected:
        raise CheckpointError(f"parameter blob has {flat.size} values, expected {expected}")
    offset = 0
    with torch.no_grad():
        for name, shape in zip(header["names"], header["shapes"]):
            n = int(np.prod(shape))
            params[name].copy_(torch.from_numpy(flat[offset : offset + n].reshape(shape).copy()))
            offset += n
    return model, header["meta"]
