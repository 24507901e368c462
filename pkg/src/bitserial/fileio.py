"""FLXQ tensor container: float, quantized, and packed tensors on disk.

Byte-exact layout (everything little-endian, see docs/format.md):

    0  4s   magic  b"FLXQ"
    4  u16  version (currently 1)
    6  u8   kind: 0 float tensor, 1 quant tensor, 2 packed tensor
    7  u8   payload dtype code
    8  u8   ndim
    9  u64 * ndim  dims

kind 1 appends  u8 bits, u8 group_axis, u32 group_size, u8 scale dtype
code, then the scales block [rows, n_groups] and the values payload.
kind 2 appends  u8 bits, u8 flags (bit 0: signed planes), u8 word_bits,
u8 reserved, u16 chunk_m/chunk_k/mma_m/mma_n/mma_k, u64 rows, u64 cols,
then the packed words; its dims field is the 5-D logical word shape.

Unknown versions and size mismatches are rejected before any payload is
interpreted, and writers stage to a temp file and rename so a failed run
never leaves a partial container behind.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError
from .packing import PackConfig, PackedTensor
from .quantize import QuantTensor

MAGIC = b"FLXQ"
VERSION = 1

KIND_FLOAT = 0
KIND_QUANT = 1
KIND_PACKED = 2

_DTYPES = {
    0: np.dtype("<f8"),
    1: np.dtype("<f4"),
    2: np.dtype("<f2"),
    3: np.dtype("|i1"),
    4: np.dtype("<i2"),
    5: np.dtype("<i4"),
    6: np.dtype("<u4"),
    7: np.dtype("<u8"),
}
_DTYPE_CODES = {dt: code for code, dt in _DTYPES.items()}

_HEAD = struct.Struct("<4sHBBB")
_QUANT_EXTRA = struct.Struct("<BBIB")
_PACKED_EXTRA = struct.Struct("<BBBBHHHHHQQ")


def _dtype_code(dtype: np.dtype) -> int:
    dtype = np.dtype(dtype)
    try:
        return _DTYPE_CODES[dtype]
    except KeyError:
        raise FormatError(f"dtype {dtype} has no FLXQ code") from None


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".flxq-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _header(kind: int, dtype_code: int, dims: tuple[int, ...]) -> bytes:
    head = _HEAD.pack(MAGIC, VERSION, kind, dtype_code, len(dims))
    return head + b"".join(struct.pack("<Q", d) for d in dims)


def write_float(path: str, data: np.ndarray, dtype="<f8") -> None:
    data = np.asarray(data)
    if data.ndim != 2:
        raise FormatError(f"float tensors must be 2-D, got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype=np.dtype(dtype)).tobytes()
    _atomic_write(path, _header(KIND_FLOAT, _dtype_code(dtype), data.shape) + payload)


def write_quant(path: str, q: QuantTensor, scale_dtype="<f8") -> None:
    scale_dtype = np.dtype(scale_dtype)
    blob = _header(KIND_QUANT, _dtype_code("|i1"), q.values.shape)
    blob += _QUANT_EXTRA.pack(q.bits, q.group_axis, q.group_size, _dtype_code(scale_dtype))
    blob += np.ascontiguousarray(q.scales, dtype=scale_dtype).tobytes()
    blob += np.ascontiguousarray(q.values, dtype="|i1").tobytes()
    _atomic_write(path, blob)


def write_packed(path: str, p: PackedTensor) -> None:
    cfg = p.config
    blob = _header(KIND_PACKED, _dtype_code(cfg.word_dtype), p.words.shape)
    blob += _PACKED_EXTRA.pack(
        p.bits, 1 if p.signed else 0, cfg.word_bits, 0,
        cfg.chunk_m, cfg.chunk_k, cfg.mma_m, cfg.mma_n, cfg.mma_k,
        p.rows, p.cols,
    )
    blob += np.ascontiguousarray(p.words, dtype=cfg.word_dtype).tobytes()
    _atomic_write(path, blob)


class _Reader:
    def __init__(self, path: str):
        self.path = path
        with open(path, "rb") as fh:
            self.buf = fh.read()
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated while reading {what} at offset {self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, dtype: np.dtype, count: int, what: str) -> np.ndarray:
        raw = self.take(dtype.itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype)

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(
                f"{self.path}: {len(self.buf) - self.pos} trailing bytes after payload"
            )


def read(path: str):
    """Read any FLXQ container; returns ndarray, QuantTensor, or PackedTensor."""
    r = _Reader(path)
    magic, version, kind, dtype_code, ndim = _HEAD.unpack(r.take(_HEAD.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} (expected {VERSION})")
    if dtype_code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    if not 1 <= ndim <= 8:
        raise FormatError(f"{path}: implausible ndim {ndim}")
    dtype = _DTYPES[dtype_code]
    dims = tuple(int(d) for d in r.array(np.dtype("<u8"), ndim, "dims"))
    count = 1
    for d in dims:
        count *= d

    if kind == KIND_FLOAT:
        data = r.array(dtype, count, "float payload").reshape(dims)
        r.done()
        return np.array(data, dtype=np.float64)

    if kind == KIND_QUANT:
        bits, group_axis, group_size, scale_code = _QUANT_EXTRA.unpack(
            r.take(_QUANT_EXTRA.size, "quant header")
        )
        if scale_code not in _DTYPES:
            raise FormatError(f"{path}: unknown scale dtype code {scale_code}")
        if len(dims) != 2:
            raise FormatError(f"{path}: quant tensors must be 2-D, got {dims}")
        rows, cols = dims
        n_groups = -(-cols // group_size) if group_size else 0
        if n_groups == 0:
            raise FormatError(f"{path}: invalid group_size {group_size}")
        scales = r.array(_DTYPES[scale_code], rows * n_groups, "scales")
        values = r.array(dtype, count, "quant payload").reshape(dims)
        r.done()
        return QuantTensor(
            values=np.array(values, dtype=np.int8),
            scales=scales.astype(np.float64).reshape(rows, n_groups),
            bits=bits,
            group_size=group_size,
            group_axis=group_axis,
        )

    if kind == KIND_PACKED:
        (bits, flags, word_bits, _pad, chunk_m, chunk_k, mma_m, mma_n, mma_k,
         rows, cols) = _PACKED_EXTRA.unpack(r.take(_PACKED_EXTRA.size, "packed header"))
        cfg = PackConfig(
            chunk_m=chunk_m, chunk_k=chunk_k, mma_m=mma_m, mma_n=mma_n,
            mma_k=mma_k, word_bits=word_bits,
        )
        if dtype != cfg.word_dtype:
            raise FormatError(f"{path}: payload dtype {dtype} does not match word_bits {word_bits}")
        words = r.array(dtype, count, "packed payload").reshape(dims)
        r.done()
        return PackedTensor(
            words=np.array(words), bits=bits, signed=bool(flags & 1),
            config=cfg, rows=rows, cols=cols,
        )

    raise FormatError(f"{path}: unknown kind {kind}")


def read_float(path: str) -> np.ndarray:
    out = read(path)
    if not isinstance(out, np.ndarray):
        raise FormatError(f"{path}: expected a float tensor (kind 0)")
    return out


def read_quant(path: str) -> QuantTensor:
    out = read(path)
    if not isinstance(out, QuantTensor):
        raise FormatError(f"{path}: expected a quant tensor (kind 1)")
    return out


def read_packed(path: str) -> PackedTensor:
    out = read(path)
    if not isinstance(out, PackedTensor):
        raise FormatError(f"{path}: expected a packed tensor (kind 2)")
    return out


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
