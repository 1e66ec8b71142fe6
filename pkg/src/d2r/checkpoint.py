"""Binary checkpoint format.

Layout (little-endian throughout):
  magic "D2RC" | u32 version | u64 config length | config utf-8 |
  u32 tensor count | records | u32 CRC32 of the concatenated payloads
Each record: u16 name length | name utf-8 | u8 dtype tag | u8 ndim |
  ndim x u32 dims | raw values.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"D2RC"
VERSION = 1

_DTYPES = {
    torch.float32: (0, "<f4"),
    torch.float64: (1, "<f8"),
    torch.bool: (2, "|b1"),
    torch.int64: (3, "<i8"),
    torch.uint8: (4, "|u1"),
}
_TAG_TO_TORCH = {tag: (dt, np_dt) for dt, (tag, np_dt) in _DTYPES.items()}


def save_checkpoint(path: str | Path, config_text: str, tensors: dict[str, torch.Tensor]):
    payload_crc = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        cfg = config_text.encode()
        fh.write(struct.pack("<Q", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            if t.dtype not in _DTYPES:
                raise CheckpointError(f"unsupported dtype {t.dtype} for tensor {name!r}")
            tag, np_dt = _DTYPES[t.dtype]
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", tag, t.dim()))
            for d in t.shape:
                fh.write(struct.pack("<I", d))
            raw = np.ascontiguousarray(t.detach().cpu().numpy(), dtype=np_dt).tobytes()
            payload_crc = zlib.crc32(raw, payload_crc)
            fh.write(raw)
        fh.write(struct.pack("<I", payload_crc))


def load_checkpoint(path: str | Path) -> tuple[str, dict[str, torch.Tensor]]:
    data = Path(path).read_bytes()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise CheckpointError(f"truncated checkpoint {path}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack("<Q", take(8))
    config_text = take(cfg_len).decode()
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, torch.Tensor] = {}
    crc = 0
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        tag, ndim = struct.unpack("<BB", take(2))
        if tag not in _TAG_TO_TORCH:
            raise CheckpointError(f"{path}: unknown dtype tag {tag}")
        dims = [struct.unpack("<I", take(4))[0] for _ in range(ndim)]
        torch_dt, np_dt = _TAG_TO_TORCH[tag]
        n_elem = int(np.prod(dims)) if dims else 1
        raw = take(n_elem * np.dtype(np_dt).itemsize)
        crc = zlib.crc32(raw, crc)
        arr = np.frombuffer(raw, dtype=np_dt).reshape(dims).copy()
        tensors[name] = torch.from_numpy(arr).to(torch_dt)
    (stored_crc,) = struct.unpack("<I", take(4))
    if stored_crc != crc:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    return config_text, tensors
