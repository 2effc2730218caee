import struct

import numpy as np
import pytest

from sxl.grid import GridStack
from sxl.io import (FormatError, decode_grid, encode_grid, load_checkpoint, read_grid, read_single,
                    save_checkpoint, write_grid)


def _stack(seed=0, c=3, h=8, w=6):
    return GridStack(np.random.default_rng(seed).normal(size=(c, h, w)))


def test_round_trip_after_f32(tmp_path):
    s = _stack()
    write_grid(s, tmp_path / "a.grd")
    back = read_grid(tmp_path / "a.grd")
    assert back.factors == s.factors
    assert np.array_equal(back.channels, s.channels.astype(np.float32).astype(np.float64))


def test_layout_is_little_endian_channel_major():
    s = GridStack(np.arange(2 * 2 * 3, dtype=np.float64).reshape(2, 2, 3), factors=(1, 4))
    buf = encode_grid(s)
    assert buf[:4] == b"GRDF" and buf[4] == 1
    assert struct.unpack_from("<III", buf, 5) == (2, 3, 2)
    payload = np.frombuffer(buf, dtype="<f4", count=12, offset=17)
    assert np.array_equal(payload, np.arange(12))
    assert struct.unpack_from("<II", buf, 17 + 48) == (1, 4)
    assert len(buf) == 17 + 48 + 8


def test_encoding_is_deterministic():
    assert encode_grid(_stack(3)) == encode_grid(_stack(3))


@pytest.mark.parametrize("mutate, offset", [
    (lambda b: b"XXXX" + b[4:], 0),
    (lambda b: b[:4] + b"\x02" + b[5:], 4),
    (lambda b: b[:10], 10),
    (lambda b: b[:30], 30),
    (lambda b: b + b"\x00", None),
    (lambda b: b[:-2], None),
])
def test_corrupt_inputs_report_offsets(mutate, offset):
    buf = encode_grid(_stack())
    with pytest.raises(FormatError) as err:
        decode_grid(mutate(buf))
    assert "offset" in str(err.value)
    if offset is not None:
        assert err.value.offset == offset


def test_zero_dimension_and_overflow_rejected():
    head = struct.pack("<4sBIII", b"GRDF", 1, 0, 4, 1)
    with pytest.raises(FormatError):
        decode_grid(head)
    huge = struct.pack("<4sBIII", b"GRDF", 1, 65536, 65536, 2)
    with pytest.raises(FormatError, match="overflow|large"):
        decode_grid(huge)


def test_non_finite_payload_rejected():
    buf = bytearray(encode_grid(GridStack(np.zeros((1, 2, 2)))))
    buf[17:21] = struct.pack("<f", float("nan"))
    with pytest.raises(FormatError):
        decode_grid(bytes(buf))


def test_read_single_requires_one_channel(tmp_path):
    write_grid(_stack(c=2), tmp_path / "two.grd")
    with pytest.raises(ValueError):
        read_single(tmp_path / "two.grd")
    write_grid(_stack(c=1), tmp_path / "one.grd")
    assert read_single(tmp_path / "one.grd").shape == (8, 6)


def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"layer.weight": rng.normal(size=(3, 4)), "layer.bias": rng.normal(size=3),
               "scalar": np.array(2.5), "unicodé": np.zeros((0, 2))}
    save_checkpoint(tmp_path / "c.ckpt", tensors, step=17)
    back, step = load_checkpoint(tmp_path / "c.ckpt")
    assert step == 17 and list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert np.array_equal(back[k], tensors[k])


def test_checkpoint_truncation_detected(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", {"w": np.ones(5)}, step=1)
    data = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:-3])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "m.ckpt").write_bytes(b"GRDF" + data[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "m.ckpt")
