"""Binary containers: GRDF grid stacks and named-tensor checkpoints.

GRDF v1 layout (little-endian)::

    0   4s   magic b"GRDF"
    4   u8   version (1)
    5   u32  rows
    9   u32  cols
    13  u32  channels
    17  f32  channels*rows*cols values, channel-major, row-major within channel
    ..  u32  channels coarsening factors

Checkpoints use magic b"GRDK" with the same version byte, then a u64 optimizer
step count, a u32 tensor count and, per tensor, a u32 name length, the UTF-8
name, a u32 ndim, ndim u32 dims and the f64 payload.
"""
import os
import struct
from collections import OrderedDict

import numpy as np

from .grid import GridStack

GRDF_MAGIC = b"GRDF"
CKPT_MAGIC = b"GRDK"
VERSION = 1
_HEADER = struct.Struct("<4sBIII")
_MAX_ELEMENTS = 2 ** 31


class FormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def encode_grid(stack):
    if not isinstance(stack, GridStack):
        stack = GridStack(np.asarray(stack))
    c, h, w = stack.shape
    if not np.all(np.isfinite(stack.channels)):
        raise ValueError("cannot store non-finite values")
    payload = stack.channels.astype("<f4").tobytes(order="C")
    factors = np.asarray(stack.factors, dtype="<u4").tobytes()
    return _HEADER.pack(GRDF_MAGIC, VERSION, h, w, c) + payload + factors


def decode_grid(buf):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", len(buf))
    magic, version, rows, cols, channels = _HEADER.unpack_from(buf, 0)
    if magic != GRDF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {GRDF_MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if rows == 0 or cols == 0 or channels == 0:
        raise FormatError(f"zero dimension in shape {channels}x{rows}x{cols}", 5)
    count = rows * cols * channels
    if count > _MAX_ELEMENTS:
        raise FormatError(f"shape {channels}x{rows}x{cols} overflows the element limit", 5)
    start = _HEADER.size
    end = start + 4 * count
    if len(buf) < end:
        raise FormatError(
            f"truncated payload: expected {count} floats, found {(len(buf) - start) // 4}", len(buf)
        )
    values = np.frombuffer(buf, dtype="<f4", count=count, offset=start)
    fend = end + 4 * channels
    if len(buf) < fend:
        raise FormatError(f"truncated factor block: expected {channels} factors", len(buf))
    if len(buf) > fend:
        raise FormatError(f"{len(buf) - fend} unexpected trailing bytes", fend)
    factors = np.frombuffer(buf, dtype="<u4", count=channels, offset=end)
    data = values.astype(np.float64).reshape(channels, rows, cols)
    if not np.all(np.isfinite(data)):
        raise FormatError("payload contains non-finite values", start)
    try:
        return GridStack(data, tuple(int(f) for f in factors))
    except ValueError as exc:
        raise FormatError(str(exc), end) from None


def write_grid(stack, path):
    buf = encode_grid(stack)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory {parent} does not exist")
    with open(path, "wb") as fh:
        fh.write(buf)


def read_grid(path):
    with open(path, "rb") as fh:
        return decode_grid(fh.read())


def read_single(path):
    """Read a single-channel GRDF file as a 2-D array."""
    stack = read_grid(path)
    if len(stack) != 1:
        raise ValueError(f"{path}: expected one channel, found {len(stack)}")
    return stack.channels[0]


def save_checkpoint(path, tensors, step=0):
    chunks = [CKPT_MAGIC, struct.pack("<BQI", VERSION, int(step), len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Return ``(tensors, step)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {CKPT_MAGIC!r}", 0)
    if len(buf) < 17:
        raise FormatError("truncated checkpoint header", len(buf))
    version, step, count = struct.unpack_from("<BQI", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = 17
    out = OrderedDict()

    def need(n):
        if pos + n > len(buf):
            raise FormatError(f"truncated checkpoint: need {n} bytes", pos)

    for _ in range(count):
        need(4)
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(nlen)
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        need(4)
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(4 * ndim)
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        need(8 * size)
        out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} unexpected trailing bytes", pos)
    return out, step
