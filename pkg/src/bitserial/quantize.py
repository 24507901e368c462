"""Symmetric fine-grained group quantization.

Tensors are 2-D arrays with the contraction dimension (K) along columns.
Each row is split into consecutive groups of ``group_size`` elements and
every group shares one strictly positive scaling factor.  Quantized values
use the symmetric range [-(2^(b-1)-1), 2^(b-1)-1]; the asymmetric endpoint
-2^(b-1) is never emitted.

Rounding is half-away-from-zero, which keeps the per-element round-trip
error within scale/2.  All-zero groups get scale 1.0 so dequantization is
exact and division is always safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import InvalidInputError, PolicyMissError

DEFAULT_GROUP_SIZE = 128

LAYER_KINDS = ("qkv_proj", "o_proj", "gate_proj", "up_proj", "down_proj", "generic")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round ties to even; the quantizer contract is ties away from zero.
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def qmax(bits: int) -> int:
    """Largest magnitude representable in the symmetric b-bit range."""
    return (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantTensor:
    """Signed group-quantized tensor.

    values:     int8 array [rows, cols], entries in [-qmax(bits), qmax(bits)]
    scales:     float64 array [rows, n_groups], all > 0
    bits:       bit width b (6 and 8 are the production widths; 2..8 accepted)
    group_size: elements per scale group along the column (K) axis
    group_axis: always 1; groups run along K
    """

    values: np.ndarray
    scales: np.ndarray
    bits: int
    group_size: int
    group_axis: int = 1

    def __post_init__(self):
        if self.values.ndim != 2:
            raise InvalidInputError(f"values must be 2-D, got shape {self.values.shape}")
        if self.group_axis != 1:
            raise InvalidInputError("groups must run along axis 1 (K)")
        if not 2 <= self.bits <= 8:
            raise InvalidInputError(f"bits must be in 2..8, got {self.bits}")
        if self.group_size < 1:
            raise InvalidInputError(f"group_size must be >= 1, got {self.group_size}")
        rows, cols = self.values.shape
        n_groups = -(-cols // self.group_size)
        if self.scales.shape != (rows, n_groups):
            raise InvalidInputError(
                f"scales shape {self.scales.shape} != expected {(rows, n_groups)}"
            )
        if not np.all(self.scales > 0):
            raise InvalidInputError("all scales must be strictly positive")
        lim = qmax(self.bits)
        if np.any(np.abs(self.values) > lim):
            raise InvalidInputError(f"values exceed symmetric {self.bits}-bit range +/-{lim}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_groups(self) -> int:
        return self.scales.shape[1]


def compute_group_scale(group: np.ndarray, bits: int) -> float:
    """Scale for one group: max(|group|) / qmax(bits); 1.0 for an all-zero group."""
    group = np.asarray(group, dtype=np.float64)
    if group.size == 0:
        raise InvalidInputError("group must be non-empty")
    if not np.all(np.isfinite(group)):
        raise InvalidInputError("group contains non-finite values")
    if not 2 <= bits <= 8:
        raise InvalidInputError(f"bits must be in 2..8, got {bits}")
    peak = float(np.max(np.abs(group)))
    return peak / qmax(bits) if peak > 0.0 else 1.0


def group_scales(data: np.ndarray, bits: int, group_size: int) -> np.ndarray:
    """Per-(row, group) scales for a 2-D tensor, groups along axis 1.

    The final group may be partial when group_size does not divide K; it is
    scaled by its own max-abs like any other group.
    """
    rows, cols = data.shape
    n_groups = -(-cols // group_size)
    padded = np.zeros((rows, n_groups * group_size), dtype=np.float64)
    padded[:, :cols] = np.abs(data)
    peaks = padded.reshape(rows, n_groups, group_size).max(axis=2)
    return np.where(peaks > 0.0, peaks / qmax(bits), 1.0)


def expand_scales(scales: np.ndarray, group_size: int, cols: int) -> np.ndarray:
    """Broadcast per-group scales to one scale per element position."""
    return np.repeat(scales, group_size, axis=1)[:, :cols]


def quantize(
    data: np.ndarray,
    bits: int,
    group_size: int = DEFAULT_GROUP_SIZE,
    fp16_scales: bool = False,
) -> QuantTensor:
    """Symmetric group quantization of a 2-D float tensor.

    Each element x with group scale s maps to
    clamp(round_half_away_from_zero(x / s), -qmax, qmax).  With
    ``fp16_scales`` the scales are rounded to float16 precision before use
    (fidelity mode mirroring half-precision scale storage); the default
    keeps full float64 working precision.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidInputError(f"expected a 2-D tensor, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("input contains non-finite values")
    if not 2 <= bits <= 8:
        raise InvalidInputError(f"bits must be in 2..8, got {bits}")
    if group_size < 1:
        raise InvalidInputError(f"group_size must be >= 1, got {group_size}")

    scales = group_scales(data, bits, group_size)
    if fp16_scales:
        scales = scales.astype(np.float16).astype(np.float64)
    per_elem = expand_scales(scales, group_size, data.shape[1])
    lim = qmax(bits)
    values = np.clip(_round_half_away(data / per_elem), -lim, lim).astype(np.int8)
    return QuantTensor(values=values, scales=scales, bits=bits, group_size=group_size)


def dequantize(q: QuantTensor) -> np.ndarray:
    """Inverse map: value * group scale, elementwise."""
    per_elem = expand_scales(q.scales, q.group_size, q.values.shape[1])
    return q.values.astype(np.float64) * per_elem


@dataclass(frozen=True)
class BitPolicy:
    """Per-layer-kind activation bit widths; weights are uniform."""

    weight_bits: int = 6
    activation_bits_by_layer: Mapping[str, int] = field(
        default_factory=lambda: MappingProxyType({})
    )

    def __post_init__(self):
        for kind, bits in self.activation_bits_by_layer.items():
            if bits not in (6, 8):
                raise InvalidInputError(f"policy maps {kind!r} to {bits}, expected 6 or 8")


def _default_policy() -> BitPolicy:
    table = {kind: 6 for kind in LAYER_KINDS}
    table["down_proj"] = 8
    return BitPolicy(weight_bits=6, activation_bits_by_layer=MappingProxyType(table))


def uniform_policy(bits: int = 6) -> BitPolicy:
    """Uniform activation policy, e.g. for non-GLU model families."""
    return BitPolicy(
        weight_bits=6,
        activation_bits_by_layer=MappingProxyType({kind: bits for kind in LAYER_KINDS}),
    )


#: Default mixed-precision policy: 8-bit activations for down_proj, 6 elsewhere.
DEFAULT_POLICY = _default_policy()


def activation_bits(layer_kind: str, policy: BitPolicy = DEFAULT_POLICY) -> int:
    """Activation bit width for a layer kind under the given policy."""
    try:
        return policy.activation_bits_by_layer[layer_kind]
    except KeyError:
        raise PolicyMissError(
            f"no policy entry for layer kind {layer_kind!r}; "
            f"known kinds: {sorted(policy.activation_bits_by_layer)}"
        ) from None
