"""Two's-complement bit-plane decomposition of quantized tensors.

A b-bit signed value v is written as

    v = sum_{s<b-1} bit_s(v) * 2^s  -  bit_{b-1}(v) * 2^(b-1)

so plane s holds bit s of every element's two's-complement encoding and the
MSB plane carries a negative coefficient.  An unsigned mode (coefficients
2^s for every plane) is kept for non-negative operands and for reproducing
the textbook weighted-bit product expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .quantize import QuantTensor


def plane_coeff(s: int, bits: int, signed: bool = True) -> int:
    """Reconstruction weight of bit plane s for a b-bit encoding."""
    if not 0 <= s < bits:
        raise IndexError(f"bit index {s} out of range for {bits}-bit planes")
    if signed and s == bits - 1:
        return -(1 << s)
    return 1 << s


def plane_coeffs(bits: int, signed: bool = True) -> np.ndarray:
    """All plane coefficients as an int64 vector [bits]."""
    return np.array([plane_coeff(s, bits, signed) for s in range(bits)], dtype=np.int64)


@dataclass(frozen=True)
class BitPlaneSet:
    """Per-bit binary planes of an integer tensor.

    planes: uint8 array [bits, rows, cols] with entries in {0, 1}
    coeffs: int64 [bits]; sum_s coeffs[s] * planes[s] reconstructs the input
    """

    planes: np.ndarray
    coeffs: np.ndarray
    bits: int
    signed: bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]


def bit_planes(values: np.ndarray, bits: int, signed: bool = True) -> BitPlaneSet:
    """Decompose an integer array into bit planes.

    Signed mode accepts the full two's-complement range
    [-2^(b-1), 2^(b-1)-1]; unsigned mode accepts [0, 2^b-1].
    """
    values = np.asarray(values)
    if not np.issubdtype(values.dtype, np.integer):
        raise InvalidInputError(f"expected integer values, got dtype {values.dtype}")
    if values.ndim == 1:
        values = values[None, :]
    if signed:
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    else:
        lo, hi = 0, (1 << bits) - 1
    if values.size and (values.min() < lo or values.max() > hi):
        raise InvalidInputError(
            f"values outside the {'signed' if signed else 'unsigned'} {bits}-bit "
            f"range [{lo}, {hi}]"
        )
    # Masking to b bits yields the two's-complement pattern for negatives.
    encoded = values.astype(np.int64) & ((1 << bits) - 1)
    shifts = np.arange(bits, dtype=np.int64)[:, None, None]
    planes = ((encoded[None, :, :] >> shifts) & 1).astype(np.uint8)
    return BitPlaneSet(planes=planes, coeffs=plane_coeffs(bits, signed), bits=bits, signed=signed)


def decompose(q: QuantTensor) -> BitPlaneSet:
    """Signed bit-plane decomposition of a quantized tensor."""
    return bit_planes(q.values, q.bits, signed=True)


def recompose(bp: BitPlaneSet) -> np.ndarray:
    """Exact inverse of decomposition: sum of coefficient-weighted planes."""
    return np.einsum("s,sij->ij", bp.coeffs, bp.planes.astype(np.int64))
