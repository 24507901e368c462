"""Chunked, word-aligned packing of bit planes.

The GEMM engine consumes bit planes as machine words.  A plane matrix
[R, K] is tiled into chunks of chunk_m rows by chunk_k columns (chunk_k =
128, one binary multiply pass per chunk) and laid out as

    [K/chunk_k, R/chunk_m, bits, chunk_m, chunk_k/word_bits]

in k-chunk-major order, so all chunk_k bits of one (row, plane, k-chunk)
triple are contiguous.  Bit j of a chunk lives in word j // word_bits at
bit position j % word_bits (LSB first), and words are little-endian.
R and K are zero-padded up to chunk multiples; original dims are kept so
results can be cropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitplane import BitPlaneSet, plane_coeffs
from .errors import ConfigError, FormatError

MMA_M = 8
MMA_N = 8
MMA_K = 128

_WORD_DTYPES = {32: np.dtype("<u4"), 64: np.dtype("<u8")}


@dataclass(frozen=True)
class PackConfig:
    """Chunk geometry for the packed layout.

    chunk_m is the rows-per-chunk of the operand being packed: min(M, MMA_M)
    for activations (M = batch rows), MMA_N for weights.  chunk_k is fixed
    at the binary-multiply contraction width.
    """

    chunk_m: int
    chunk_k: int = MMA_K
    mma_m: int = MMA_M
    mma_n: int = MMA_N
    mma_k: int = MMA_K
    word_bits: int = 64

    def __post_init__(self):
        if self.word_bits not in _WORD_DTYPES:
            raise ConfigError(f"word_bits must be 32 or 64, got {self.word_bits}")
        if self.chunk_k != self.mma_k:
            raise ConfigError(f"chunk_k ({self.chunk_k}) must equal mma_k ({self.mma_k})")
        if self.chunk_k % self.word_bits != 0:
            raise ConfigError(
                f"chunk_k ({self.chunk_k}) must be a multiple of word_bits ({self.word_bits})"
            )
        if not 1 <= self.chunk_m <= self.mma_m:
            raise ConfigError(f"chunk_m ({self.chunk_m}) must be in 1..{self.mma_m}")

    @property
    def words_per_chunk(self) -> int:
        return self.chunk_k // self.word_bits

    @property
    def word_dtype(self) -> np.dtype:
        return _WORD_DTYPES[self.word_bits]


def activation_pack_config(m: int, word_bits: int = 64) -> PackConfig:
    """Activation chunking: chunk_m = min(M, MMA_M), so GEMV packs 1-row chunks."""
    return PackConfig(chunk_m=min(m, MMA_M), word_bits=word_bits)


def weight_pack_config(word_bits: int = 64) -> PackConfig:
    """Weight chunking: full MMA_N rows per chunk."""
    return PackConfig(chunk_m=MMA_N, word_bits=word_bits)


@dataclass(frozen=True)
class PackedTensor:
    """Word-packed bit planes in the chunked layout.

    words: uint array [n_kchunks, n_rchunks, bits, chunk_m, words_per_chunk];
    raveling it in C order gives the flat word stream of the container
    format.  rows/cols are the pre-padding matrix dims.
    """

    words: np.ndarray
    bits: int
    signed: bool
    config: PackConfig
    rows: int
    cols: int

    def __post_init__(self):
        expected = self.logical_shape
        if self.words.shape != expected:
            raise FormatError(f"words shape {self.words.shape} != expected {expected}")

    @property
    def n_kchunks(self) -> int:
        return -(-self.cols // self.config.chunk_k)

    @property
    def n_rchunks(self) -> int:
        return -(-self.rows // self.config.chunk_m)

    @property
    def padded_rows(self) -> int:
        return self.n_rchunks * self.config.chunk_m

    @property
    def padded_cols(self) -> int:
        return self.n_kchunks * self.config.chunk_k

    @property
    def logical_shape(self) -> tuple[int, int, int, int, int]:
        return (
            self.n_kchunks,
            self.n_rchunks,
            self.bits,
            self.config.chunk_m,
            self.config.words_per_chunk,
        )

    def word_index(self, kc: int, rc: int, s: int, r: int, w: int) -> int:
        """Flat index of word (k-chunk, row-chunk, plane, row, word-in-chunk)."""
        cfg = self.config
        return ((((kc * self.n_rchunks) + rc) * self.bits + s) * cfg.chunk_m + r) * cfg.words_per_chunk + w


def pack(bp: BitPlaneSet, cfg: PackConfig) -> PackedTensor:
    """Pack bit planes into the chunked word layout, zero-padding to chunk multiples."""
    rows, cols = bp.shape
    n_rchunks = -(-rows // cfg.chunk_m)
    n_kchunks = -(-cols // cfg.chunk_k)
    padded = np.zeros((bp.bits, n_rchunks * cfg.chunk_m, n_kchunks * cfg.chunk_k), dtype=np.uint8)
    padded[:, :rows, :cols] = bp.planes
    # [s, rc, r, kc, j] -> [kc, rc, s, r, j]
    tiled = padded.reshape(
        bp.bits, n_rchunks, cfg.chunk_m, n_kchunks, cfg.chunk_k
    ).transpose(3, 1, 0, 2, 4)
    packed_bytes = np.packbits(np.ascontiguousarray(tiled), axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed_bytes).view(cfg.word_dtype)
    return PackedTensor(
        words=words, bits=bp.bits, signed=bp.signed, config=cfg, rows=rows, cols=cols
    )


def unpack(p: PackedTensor, cfg: PackConfig) -> BitPlaneSet:
    """Exact inverse of :func:`pack` over the unpadded region."""
    if cfg != p.config:
        raise FormatError(f"pack config mismatch: tensor carries {p.config}, got {cfg}")
    bytes_view = np.ascontiguousarray(p.words).view(np.uint8)
    bits_arr = np.unpackbits(bytes_view, axis=-1, bitorder="little")
    # [kc, rc, s, r, j] -> [s, rc, r, kc, j]
    planes = bits_arr.transpose(2, 1, 3, 0, 4).reshape(
        p.bits, p.padded_rows, p.padded_cols
    )[:, : p.rows, : p.cols]
    return BitPlaneSet(
        planes=np.ascontiguousarray(planes),
        coeffs=plane_coeffs(p.bits, p.signed),
        bits=p.bits,
        signed=p.signed,
    )
