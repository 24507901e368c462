"""Chunked word packing: layout addressing, bijection, padding."""

import numpy as np
import pytest

from bitserial.bitplane import decompose, recompose
from bitserial.errors import ConfigError, FormatError
from bitserial.packing import (
    PackConfig,
    activation_pack_config,
    pack,
    unpack,
    weight_pack_config,
)
from bitserial.quantize import QuantTensor, qmax


def random_quant(rng, rows, cols, bits, group_size=128):
    lim = qmax(bits)
    values = rng.integers(-lim, lim + 1, size=(rows, cols)).astype(np.int8)
    scales = rng.uniform(0.5, 2.0, size=(rows, -(-cols // group_size)))
    return QuantTensor(values=values, scales=scales, bits=bits, group_size=group_size)


class TestPackConfig:
    def test_activation_config_clamps_chunk_m(self):
        assert activation_pack_config(1).chunk_m == 1
        assert activation_pack_config(4).chunk_m == 4
        assert activation_pack_config(100).chunk_m == 8

    def test_weight_config_uses_full_tile(self):
        assert weight_pack_config().chunk_m == 8

    def test_word_bits_must_divide_chunk(self):
        with pytest.raises(ConfigError):
            PackConfig(chunk_m=8, word_bits=48)

    def test_chunk_m_bounded_by_mma(self):
        with pytest.raises(ConfigError):
            PackConfig(chunk_m=9)


class TestPackShapes:
    def test_spec_shape_8x256_q6(self):
        # 8 rows, 256 cols, 6 planes, 64-bit words: [2, 1, 6, 8, 2], 192 words
        rng = np.random.default_rng(0)
        q = random_quant(rng, 8, 256, 6)
        p = pack(decompose(q), weight_pack_config())
        assert p.words.shape == (2, 1, 6, 8, 2)
        assert p.words.size == 192

    def test_gemv_single_row_chunks(self):
        rng = np.random.default_rng(1)
        q = random_quant(rng, 1, 512, 6)
        p = pack(decompose(q), activation_pack_config(1))
        assert p.words.shape == (4, 1, 6, 1, 2)

    def test_word_index_formula_is_ravel_order(self):
        rng = np.random.default_rng(2)
        q = random_quant(rng, 9, 300, 3)
        p = pack(decompose(q), activation_pack_config(9))
        flat = p.words.ravel()
        idx = [
            p.word_index(kc, rc, s, r, w)
            for kc in range(p.n_kchunks)
            for rc in range(p.n_rchunks)
            for s in range(p.bits)
            for r in range(p.config.chunk_m)
            for w in range(p.config.words_per_chunk)
        ]
        assert idx == list(range(flat.size))
        # strictly increasing in lexicographic coordinate order
        assert all(b == a + 1 for a, b in zip(idx, idx[1:]))

    def test_bit_order_lsb_first_within_word(self):
        # a single set bit at column j lands in word j//64 at bit j%64
        from bitserial.bitplane import BitPlaneSet

        for col in (0, 1, 63, 64, 100, 127):
            planes = np.zeros((1, 1, 128), dtype=np.uint8)
            planes[0, 0, col] = 1
            bp = BitPlaneSet(planes=planes, coeffs=np.array([1]), bits=1, signed=False)
            p = pack(bp, PackConfig(chunk_m=1))
            words = p.words.ravel()
            assert words[col // 64] == np.uint64(1) << np.uint64(col % 64)


class TestRoundTrip:
    @pytest.mark.parametrize("word_bits", [32, 64])
    @pytest.mark.parametrize("rows,cols", [(1, 128), (3, 300), (8, 256), (17, 1000)])
    def test_unpack_inverts_pack(self, word_bits, rows, cols):
        rng = np.random.default_rng(rows * cols)
        q = random_quant(rng, rows, cols, 6)
        cfg = activation_pack_config(rows, word_bits)
        p = pack(decompose(q), cfg)
        bp = unpack(p, cfg)
        assert np.array_equal(recompose(bp), q.values.astype(np.int64))

    def test_padded_region_is_zero(self):
        rng = np.random.default_rng(3)
        q = random_quant(rng, 3, 200, 6)
        p = pack(decompose(q), weight_pack_config())
        full = np.unpackbits(
            np.ascontiguousarray(p.words).view(np.uint8), axis=-1, bitorder="little"
        )
        # bits beyond col 200 of chunk 1 and rows 3..7 must be zero
        planes = full.transpose(2, 1, 3, 0, 4).reshape(p.bits, p.padded_rows, p.padded_cols)
        assert not planes[:, 3:, :].any()
        assert not planes[:, :, 200:].any()

    def test_unpack_rejects_other_config(self):
        rng = np.random.default_rng(4)
        q = random_quant(rng, 8, 128, 6)
        p = pack(decompose(q), weight_pack_config())
        with pytest.raises(FormatError):
            unpack(p, PackConfig(chunk_m=4))

    def test_word32_and_word64_encode_same_bits(self):
        rng = np.random.default_rng(5)
        q = random_quant(rng, 4, 256, 6)
        p64 = pack(decompose(q), activation_pack_config(4, 64))
        p32 = pack(decompose(q), activation_pack_config(4, 32))
        assert p64.words.tobytes() == p32.words.tobytes()
