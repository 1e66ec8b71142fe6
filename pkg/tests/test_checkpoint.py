import struct

import pytest
import torch

from d2r.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from d2r.errors import CheckpointError


def sample_tensors():
    g = torch.Generator().manual_seed(0)
    return {
        "w": torch.randn(3, 4, generator=g),
        "d": torch.randn(2, 2, generator=g, dtype=torch.float64),
        "flag": torch.tensor(True),
        "step": torch.tensor(123, dtype=torch.int64),
        "rng": torch.Generator().manual_seed(7).get_state(),
        "scalar": torch.tensor(2.5),
    }


def test_roundtrip_all_dtypes(tmp_path):
    p = tmp_path / "a.ckpt"
    tensors = sample_tensors()
    save_checkpoint(p, "config text\n", tensors)
    cfg, back = load_checkpoint(p)
    assert cfg == "config text\n"
    assert set(back) == set(tensors)
    for k in tensors:
        assert back[k].dtype == tensors[k].dtype
        assert torch.equal(back[k], tensors[k])


def test_magic_bytes(tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, "", sample_tensors())
    assert p.read_bytes()[:4] == MAGIC == b"D2RC"


def test_payload_corruption_detected(tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, "cfg", sample_tensors())
    raw = bytearray(p.read_bytes())
    raw[-20] ^= 0xFF  # flip a payload byte, leave the trailing CRC alone
    p.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_bad_magic_and_version(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE" + struct.pack("<I", 1))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    p.write_bytes(MAGIC + struct.pack("<I", 99) + struct.pack("<Q", 0))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_truncation_detected(tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, "cfg", sample_tensors())
    p.write_bytes(p.read_bytes()[:-6])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "a.ckpt", "", {"x": torch.zeros(2, dtype=torch.complex64)})


def test_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, "cfg", sample_tensors())
    save_checkpoint(b, "cfg", sample_tensors())
    assert a.read_bytes() == b.read_bytes()
