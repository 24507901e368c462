"""Fine-grained group quantization, step by step.

Walks a small tensor through symmetric 6-bit quantization with per-group
scales, shows the round-trip error bound, and resolves per-layer
activation widths from the mixed-precision policy.
"""

import numpy as np

from bitserial import (
    DEFAULT_POLICY,
    activation_bits,
    compute_group_scale,
    dequantize,
    quantize,
)
from bitserial.quantize import expand_scales

rng = np.random.default_rng(0)

# One row, two groups of 4 (tiny group size so everything is visible).
x = np.array([[0.9, -0.2, 0.4, -1.0, 0.05, 0.02, -0.01, 0.03]])
print("input row:        ", x[0])

# Each group's scale is max|group| / (2^(b-1) - 1): the largest magnitude
# maps to the top of the signed 6-bit grid (+/-31).
for g in range(2):
    group = x[0, 4 * g : 4 * g + 4]
    print(f"group {g}: max|x| = {np.abs(group).max():.3f}  "
          f"scale = {compute_group_scale(group, 6):.5f}")

q = quantize(x, bits=6, group_size=4)
print("quantized values: ", q.values[0])
print("scales:           ", q.scales[0])

# Dequantization multiplies each value by its group scale.  The small
# second group gets its own fine scale, which is the whole point of
# grouping: one coarse per-row scale would crush it.
back = dequantize(q)
print("reconstructed:    ", np.round(back[0], 4))
err = np.abs(x - back)
bound = expand_scales(q.scales, 4, 8) / 2
print("max |error|:       %.5f  (bound scale/2 = %.5f)" % (err.max(), bound.max()))
assert np.all(err <= bound + 1e-12)

# At production size: 4 rows x 1024 columns, groups of 128.
big = rng.standard_normal((4, 1024)) * 3
qb = quantize(big, bits=6, group_size=128)
rel = np.abs(big - dequantize(qb)).max() / np.abs(big).max()
print(f"\n4x1024 tensor, groups of 128: {qb.scales.shape[1]} scales per row, "
      f"worst relative error {rel:.4f}")

# The layer policy: 8-bit activations only where sensitivity demands it.
print("\nactivation widths under the default policy:")
for kind in ("qkv_proj", "o_proj", "gate_proj", "up_proj", "down_proj"):
    print(f"  {kind:10s} -> {activation_bits(kind, DEFAULT_POLICY)} bits")
