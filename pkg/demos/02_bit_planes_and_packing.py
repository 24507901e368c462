"""Bit-plane decomposition and the chunked word layout.

Shows how signed integers split into weighted binary planes, reproduces
the classic weighted-bit product expansion for a 2-bit x 4-bit scalar
pair, and inspects the packed word layout the GEMM engine consumes.
"""

import numpy as np

from bitserial import (
    activation_pack_config,
    bit_planes,
    pack,
    plane_coeff,
    quantize,
    recompose,
    unpack,
)
from bitserial.bitplane import decompose
from bitserial.engine import reduce_bits

# --- scalar bit expansion -------------------------------------------------
# a = 3 in 2 bits, b = 5 in 4 bits: a*b = sum over bit pairs of
# a_s * b_t * 2^(s+t).  The partial grid has one popcount per (s, t).
a, b = 3, 5
pa = bit_planes(np.array([[a]]), 2, signed=False).planes[:, 0, 0]
pb = bit_planes(np.array([[b]]), 4, signed=False).planes[:, 0, 0]
print(f"a = {a} -> bits {pa.tolist()} (LSB first)")
print(f"b = {b} -> bits {pb.tolist()}")
grid = np.einsum("s,t->st", pa.astype(np.int64), pb.astype(np.int64))
print("partial grid Y[s,t]:\n", grid)
print("weighted sum:", int(reduce_bits(grid, 2, 4, signed=False)), "== a*b =", a * b)

# --- signed planes ----------------------------------------------------------
# Two's complement gives the MSB plane a negative weight, so the same
# AND+popcount machinery handles signed operands exactly.
print("\nsigned 6-bit plane coefficients:",
      [plane_coeff(s, 6, signed=True) for s in range(6)])
v = np.array([[-1, -31, 0, 17]])
bp = bit_planes(v, 6, signed=True)
print("values        ", v[0])
print("planes (rows = bit index):")
print(bp.planes[:, 0, :])
print("recomposed    ", recompose(bp)[0])

# --- chunked packing --------------------------------------------------------
# A quantized 4x300 activation tensor packs into chunks of 4 rows x 128
# bits; K pads to 384, planes become little-endian 64-bit words laid out
# [k-chunk, row-chunk, plane, row, word].
rng = np.random.default_rng(1)
q = quantize(rng.standard_normal((4, 300)), 6, 128)
cfg = activation_pack_config(q.shape[0])
packed = pack(decompose(q), cfg)
print("\npacked word shape [kc, rc, plane, row, word]:", packed.words.shape)
print("original dims kept for cropping:", (packed.rows, packed.cols))
print("flat index of (kc=1, rc=0, plane=2, row=3, word=1):",
      packed.word_index(1, 0, 2, 3, 1))

# The layout is a bijection over the unpadded region.
assert np.array_equal(recompose(unpack(packed, cfg)), q.values.astype(np.int64))
print("unpack(pack(x)) == x: True")

# GEMV case: a single activation row packs into 1-row chunks, no padding.
qv = quantize(rng.standard_normal((1, 512)), 6, 128)
pv = pack(decompose(qv), activation_pack_config(1))
print("GEMV packed shape:", pv.words.shape)
