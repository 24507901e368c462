"""Group quantizer: scales, round trips, policy."""

import numpy as np
import pytest

from bitserial.errors import InvalidInputError, PolicyMissError
from bitserial.quantize import (
    DEFAULT_POLICY,
    LAYER_KINDS,
    BitPolicy,
    QuantTensor,
    activation_bits,
    compute_group_scale,
    dequantize,
    expand_scales,
    quantize,
    uniform_policy,
)


class TestGroupScale:
    def test_unit_pair_6bit(self):
        # max|x| = 1 over 2^5 - 1 = 31
        assert compute_group_scale(np.array([1.0, -1.0]), 6) == pytest.approx(1 / 31)

    def test_all_zero_group_uses_unit_scale(self):
        assert compute_group_scale(np.array([0.0, 0.0]), 6) == 1.0

    def test_8bit_divisor(self):
        assert compute_group_scale(np.array([2.0, -0.5]), 8) == pytest.approx(2 / 127)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            compute_group_scale(np.array([1.0, np.nan]), 6)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            compute_group_scale(np.array([]), 6)


class TestQuantize:
    def test_unit_pair_hits_range_ends(self):
        q = quantize(np.array([[1.0, -1.0]]), 6, group_size=2)
        assert q.values.tolist() == [[31, -31]]
        assert q.scales[0, 0] == pytest.approx(1 / 31)

    def test_all_zero_tensor(self):
        q = quantize(np.zeros((3, 8)), 6, group_size=4)
        assert not q.values.any()
        assert np.all(q.scales == 1.0)

    def test_round_trip_bound_random(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((4, 256)) * 3
        q = quantize(x, 6, group_size=128)
        err = np.abs(x - dequantize(q))
        bound = expand_scales(q.scales, 128, 256) / 2
        assert np.all(err <= bound + 1e-12)

    def test_partial_final_group(self):
        # K = 300 with group 128 leaves a 44-wide final group.
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 300))
        q = quantize(x, 6, group_size=128)
        assert q.scales.shape == (2, 3)
        assert q.scales[0, 2] == pytest.approx(np.abs(x[0, 256:]).max() / 31)

    def test_group_larger_than_k(self):
        x = np.array([[0.5, -0.25, 0.125]])
        q = quantize(x, 6, group_size=128)
        assert q.scales.shape == (1, 1)
        assert np.all(np.abs(x - dequantize(q)) <= q.scales[0, 0] / 2)

    def test_never_emits_asymmetric_endpoint(self):
        rng = np.random.default_rng(1)
        for bits in (6, 8):
            q = quantize(rng.standard_normal((8, 128)) * 50, bits, 32)
            assert q.values.min() >= -(2 ** (bits - 1) - 1)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 64))
        a, b = quantize(x, 6, 32), quantize(x, 6, 32)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.scales, b.scales)

    def test_half_away_rounding(self):
        # x/s = 2.5 must round to 3, -2.5 to -3.
        q = quantize(np.array([[2.5, -2.5, 31.0]]), 6, group_size=3)
        assert q.scales[0, 0] == 1.0
        assert q.values.tolist() == [[3, -3, 31]]

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            quantize(np.array([[np.inf, 1.0]]), 6, 2)

    def test_fp16_scale_mode_round_trips_via_half(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 128))
        q = quantize(x, 6, 128, fp16_scales=True)
        assert np.array_equal(q.scales, q.scales.astype(np.float16).astype(np.float64))

    def test_scale_positivity_on_mixed_zero_groups(self):
        x = np.zeros((2, 256))
        x[0, :128] = 1.0
        q = quantize(x, 6, 128)
        assert np.all(q.scales > 0)

    def test_dequantize_zero_values_ignores_scales(self):
        q = QuantTensor(
            values=np.zeros((2, 4), dtype=np.int8),
            scales=np.full((2, 1), 7.5),
            bits=6,
            group_size=4,
        )
        assert not dequantize(q).any()


class TestQuantTensorValidation:
    def test_scale_count_checked(self):
        with pytest.raises(InvalidInputError):
            QuantTensor(
                values=np.zeros((2, 256), dtype=np.int8),
                scales=np.ones((2, 1)),
                bits=6,
                group_size=128,
            )

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(InvalidInputError):
            QuantTensor(
                values=np.zeros((1, 4), dtype=np.int8),
                scales=np.zeros((1, 1)),
                bits=6,
                group_size=4,
            )

    def test_out_of_range_values_rejected(self):
        with pytest.raises(InvalidInputError):
            QuantTensor(
                values=np.full((1, 4), -32, dtype=np.int8),
                scales=np.ones((1, 1)),
                bits=6,
                group_size=4,
            )


class TestPolicy:
    def test_down_proj_gets_8(self):
        assert activation_bits("down_proj", DEFAULT_POLICY) == 8

    @pytest.mark.parametrize("kind", ["qkv_proj", "o_proj", "gate_proj", "up_proj", "generic"])
    def test_other_layers_get_6(self, kind):
        assert activation_bits(kind, DEFAULT_POLICY) == 6

    def test_uniform_policy_for_non_glu(self):
        policy = uniform_policy(6)
        assert all(activation_bits(k, policy) == 6 for k in LAYER_KINDS)

    def test_policy_total_over_kinds(self):
        for kind in LAYER_KINDS:
            assert activation_bits(kind, DEFAULT_POLICY) in (6, 8)

    def test_unknown_kind_raises(self):
        with pytest.raises(PolicyMissError):
            activation_bits("lm_head", DEFAULT_POLICY)

    def test_policy_rejects_odd_bits(self):
        with pytest.raises(InvalidInputError):
            BitPolicy(weight_bits=6, activation_bits_by_layer={"generic": 5})
