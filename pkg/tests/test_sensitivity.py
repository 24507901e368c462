"""Layer sensitivity metrics, ranking, and policy assignment."""

import math

import numpy as np
import pytest

from bitserial.errors import InvalidInputError
from bitserial.quantize import LAYER_KINDS
from bitserial.sensitivity import (
    LayerDump,
    assign_policy,
    layer_error,
    make_glu_fixture,
    outlier_score,
    rank_layers,
)


def gaussian_dump(seed, kind="generic", name=None, tokens=16, hidden=256, out=32):
    rng = np.random.default_rng(seed)
    return LayerDump(
        layer_name=name or f"layer.{kind}.{seed}",
        layer_kind=kind,
        weight=rng.standard_normal((out, hidden)),
        activations=rng.standard_normal((tokens, hidden)),
    )


class TestLayerError:
    def test_grid_aligned_case_is_high_sqnr(self):
        # values already on the quant grid reconstruct near-exactly
        w = np.eye(8, 128)
        x = np.eye(8, 128)
        sqnr, mse = layer_error(
            LayerDump(layer_name="id", layer_kind="generic", weight=w, activations=x),
            6, 6, 128,
        )
        assert sqnr > 30
        assert mse < 1e-6

    def test_zero_activations_hit_sentinel(self):
        d = LayerDump(
            layer_name="z", layer_kind="generic",
            weight=np.ones((4, 128)), activations=np.zeros((4, 128)),
        )
        sqnr, mse = layer_error(d, 6, 6, 128)
        assert math.isinf(sqnr)
        assert mse == 0.0

    def test_outlier_reduces_sqnr(self):
        base = gaussian_dump(0)
        spiked_acts = base.activations.copy()
        spiked_acts[:, 7] *= 100
        spiked = LayerDump(
            layer_name=base.layer_name, layer_kind="generic",
            weight=base.weight, activations=spiked_acts,
        )
        assert layer_error(spiked, 6, 6)[0] < layer_error(base, 6, 6)[0]

    @pytest.mark.parametrize("gain", [10, 30, 100])
    def test_outlier_monotonicity(self, gain):
        # Holds through the 100x regime; at extreme gains (c >~ 300) the
        # outlier product dominates the signal while the noise from zeroed
        # group-mates saturates, so SQNR recovers and the comparison flips.
        base = gaussian_dump(3)
        spiked_acts = base.activations.copy()
        spiked_acts[:, 0] *= gain
        spiked = LayerDump(
            layer_name=base.layer_name, layer_kind="generic",
            weight=base.weight, activations=spiked_acts,
        )
        assert layer_error(spiked, 6, 6)[0] <= layer_error(base, 6, 6)[0]

    def test_bit_monotonicity(self):
        for seed in range(10):
            d = gaussian_dump(seed)
            assert layer_error(d, 6, 8)[0] >= layer_error(d, 6, 6)[0]

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            LayerDump(
                layer_name="bad", layer_kind="generic",
                weight=np.ones((4, 128)), activations=np.ones((4, 64)),
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidInputError):
            LayerDump(
                layer_name="bad", layer_kind="mlp",
                weight=np.ones((4, 64)), activations=np.ones((4, 64)),
            )


class TestOutlierScore:
    def test_uniform_channels_score_near_one(self):
        rng = np.random.default_rng(0)
        assert outlier_score(rng.standard_normal((64, 128))) < 3

    def test_spiked_channel_dominates(self):
        rng = np.random.default_rng(1)
        acts = rng.standard_normal((64, 128))
        acts[:, 5] *= 100
        assert outlier_score(acts) > 20


class TestRanking:
    def test_glu_fixture_puts_down_proj_first(self):
        hits = sum(
            rank_layers(make_glu_fixture(seed)).ranking[0].endswith("down_proj")
            for seed in range(10)
        )
        assert hits == 10

    def test_ranking_is_permutation(self):
        dumps = make_glu_fixture(0)
        report = rank_layers(dumps)
        assert sorted(report.ranking) == sorted(d.layer_name for d in dumps)

    def test_deterministic(self):
        dumps = make_glu_fixture(1)
        a = rank_layers(dumps)
        b = rank_layers(dumps)
        assert a.ranking == b.ranking
        assert [m.sqnr_db for m in a.metrics] == [m.sqnr_db for m in b.metrics]

    def test_parallel_matches_serial(self):
        dumps = make_glu_fixture(2)
        assert rank_layers(dumps, workers=4).ranking == rank_layers(dumps).ranking

    def test_identical_dumps_tie_break_by_name(self):
        base = gaussian_dump(5)
        dumps = [
            LayerDump(layer_name=name, layer_kind="generic",
                      weight=base.weight, activations=base.activations)
            for name in ("c", "a", "b")
        ]
        assert rank_layers(dumps).ranking == ("a", "b", "c")

    def test_single_layer(self):
        report = rank_layers([gaussian_dump(6)])
        assert len(report.ranking) == 1

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            rank_layers([])


class TestAssignPolicy:
    def test_budget_one_promotes_down_proj(self):
        policy = assign_policy(rank_layers(make_glu_fixture(0)), 8, budget_k=1)
        table = policy.activation_bits_by_layer
        assert table["down_proj"] == 8
        assert all(table[k] == 6 for k in LAYER_KINDS if k != "down_proj")

    def test_budget_zero_is_uniform(self):
        policy = assign_policy(rank_layers(make_glu_fixture(0)), 8, budget_k=0)
        assert all(b == 6 for b in policy.activation_bits_by_layer.values())

    def test_budget_all_promotes_every_layer(self):
        dumps = make_glu_fixture(0)
        policy = assign_policy(rank_layers(dumps), 8, budget_k=len(dumps))
        promoted = {d.layer_kind for d in dumps}
        table = policy.activation_bits_by_layer
        assert all(table[k] == 8 for k in promoted)

    def test_exactly_budget_layers_promoted(self):
        dumps = make_glu_fixture(4)
        for budget in range(len(dumps) + 1):
            table = assign_policy(rank_layers(dumps), 8, budget).activation_bits_by_layer
            assert sum(1 for k in table.values() if k == 8) == budget

    def test_budget_beyond_layers_rejected(self):
        with pytest.raises(InvalidInputError):
            assign_policy(rank_layers(make_glu_fixture(0)), 8, budget_k=9)
