"""Memory transaction simulator: golden figures, conflicts, conservation."""

import pytest

from bitserial.errors import BoundsError, ConfigError
from bitserial.memsim import (
    GOLDEN_CASES,
    AccessPattern,
    AccessPhase,
    LaneRequest,
    chunked_layout_pattern,
    golden_fp16_pattern,
    golden_naive6_pattern,
    golden_naive6_straddle_pattern,
    golden_reports,
    naive_layout_pattern,
    simulate,
)
from bitserial.packing import PackConfig, activation_pack_config


def shared_phase(reqs):
    return AccessPattern(
        phases=(AccessPhase(space="shared", requests=tuple(reqs)),),
        extent_bytes=1 << 20,
    )


class TestGoldenTriple:
    def test_fp16_aligned_full_utilization(self):
        assert simulate(golden_fp16_pattern()).utilization == 1.0

    def test_naive6_single_word(self):
        assert simulate(golden_naive6_pattern()).utilization == 0.375

    def test_naive6_straddle_worst_case(self):
        rep = simulate(golden_naive6_straddle_pattern())
        assert rep.utilization == 0.1875
        assert rep.moved_bits == 2 * simulate(golden_naive6_pattern()).moved_bits

    def test_golden_reports_all_ok(self):
        assert all(e["ok"] for e in golden_reports())
        assert [e["name"] for e in golden_reports()] == [n for n, _, _ in GOLDEN_CASES]


class TestConflictModel:
    def test_column_stride_serializes_on_one_bank(self):
        # 32 lanes all hitting bank 0 at 32 different rows: 31 replays
        reqs = [LaneRequest(lane=i, byte_offset=128 * i, byte_length=4, useful_bits=32)
                for i in range(32)]
        rep = simulate(shared_phase(reqs))
        assert rep.bank_conflicts == 31
        assert rep.transactions == 32

    def test_broadcast_same_word_is_free(self):
        reqs = [LaneRequest(lane=i, byte_offset=0, byte_length=4, useful_bits=32)
                for i in range(32)]
        rep = simulate(shared_phase(reqs))
        assert rep.bank_conflicts == 0
        assert rep.transactions == 1

    def test_two_rows_one_bank_counts_single_replay(self):
        reqs = [
            LaneRequest(lane=0, byte_offset=0, byte_length=4, useful_bits=32),
            LaneRequest(lane=1, byte_offset=128, byte_length=4, useful_bits=32),
            LaneRequest(lane=2, byte_offset=4, byte_length=4, useful_bits=32),
        ]
        rep = simulate(shared_phase(reqs))
        assert rep.bank_conflicts == 1
        assert rep.transactions == 2

    def test_global_segments_counted(self):
        reqs = [LaneRequest(lane=i, byte_offset=16 * i, byte_length=16, useful_bits=128)
                for i in range(32)]
        pat = AccessPattern(
            phases=(AccessPhase(space="global", requests=tuple(reqs)),),
            extent_bytes=512,
        )
        rep = simulate(pat)
        # 512 bytes = four full 128-byte transactions
        assert rep.transactions == 4
        assert rep.moved_bits == 4 * 128 * 8
        assert rep.utilization == 1.0

    def test_out_of_extent_raises(self):
        pat = AccessPattern(
            phases=(AccessPhase(space="shared", requests=(
                LaneRequest(lane=0, byte_offset=100, byte_length=8, useful_bits=64),
            )),),
            extent_bytes=104,
        )
        with pytest.raises(BoundsError):
            simulate(pat)


class TestNaivePattern:
    def test_fp16_all_aligned(self):
        rep = simulate(naive_layout_pattern(16, 8, 16))
        assert rep.utilization == 1.0
        assert rep.bank_conflicts == 0

    def test_8bit_half_utilization(self):
        # two 8-bit elements = 16 useful bits per 32-bit word
        assert simulate(naive_layout_pattern(8, 8, 16)).utilization == 0.5

    def test_4bit_quarter_utilization(self):
        assert simulate(naive_layout_pattern(4, 8, 16)).utilization == 0.25

    def test_6bit_straddle_structure(self):
        # pairs take 12 bits; lcm(12, 32) = 96 bits = 8 lanes, with lanes at
        # bit offsets 24 and 28 (mod 32) straddling in every cycle of 8
        pat = naive_layout_pattern(6, 8, 16)
        straddlers = [
            i for i, req in enumerate(pat.phases[0].requests)
            if len(range(req.byte_offset // 4, (req.byte_offset + req.byte_length - 1) // 4 + 1)) > 1
        ]
        assert straddlers == [2, 5, 10, 13, 18, 21, 26, 29]
        for cycle_start in range(0, 32, 8):
            assert any(cycle_start <= s < cycle_start + 16 for s in straddlers)

    def test_6bit_mixed_utilization(self):
        # per 8 lanes: 6 aligned (1 word) + 2 straddling (2 words) = 10 words
        rep = simulate(naive_layout_pattern(6, 8, 16))
        assert rep.utilization == pytest.approx(96 / 320)

    def test_rejects_unsupported_width(self):
        with pytest.raises(ConfigError):
            naive_layout_pattern(5, 8, 16)


class TestChunkedPattern:
    @pytest.mark.parametrize("bits", [6, 8])
    @pytest.mark.parametrize("bm", [1, 2, 8])
    @pytest.mark.parametrize("bk", [128, 512])
    def test_conflict_free_everywhere(self, bits, bm, bk):
        cfg = activation_pack_config(bm)
        rep = simulate(chunked_layout_pattern(cfg, bits, bm, bk))
        assert rep.bank_conflicts == 0

    def test_shared_phases_merge_into_single_transactions(self):
        cfg = activation_pack_config(2)
        pat = chunked_layout_pattern(cfg, 6, 2, 512)
        rep = simulate(pat)
        shared = [ph for ph in pat.phases if ph.space == "shared"]
        # every full shared phase is exactly one maximal transaction
        global_tx = simulate(AccessPattern(
            phases=tuple(ph for ph in pat.phases if ph.space == "global"),
            extent_bytes=pat.extent_bytes,
        )).transactions
        assert rep.transactions - global_tx == len(shared)

    def test_degenerate_single_chunk_is_dense(self):
        cfg = PackConfig(chunk_m=8)
        pat = chunked_layout_pattern(cfg, 6, 8, 128)
        offsets = sorted(
            r.byte_offset for ph in pat.phases if ph.space == "shared" for r in ph.requests
        )
        assert offsets == list(range(0, 8 * 128 * 6 // 8, 4))

    def test_full_payload_fully_utilized(self):
        cfg = activation_pack_config(8)
        rep = simulate(chunked_layout_pattern(cfg, 6, 8, 512))
        assert rep.utilization == 1.0

    def test_incompatible_dims_rejected(self):
        with pytest.raises(ConfigError):
            chunked_layout_pattern(activation_pack_config(8), 6, 7, 128)
        with pytest.raises(ConfigError):
            chunked_layout_pattern(activation_pack_config(8), 6, 8, 100)


class TestConservation:
    @pytest.mark.parametrize("bits", [4, 6, 8, 16])
    def test_useful_never_exceeds_moved(self, bits):
        rep = simulate(naive_layout_pattern(bits, 8, 32))
        assert 0 < rep.utilization <= 1.0
        assert rep.useful_bits <= rep.moved_bits

    def test_padding_never_helps(self):
        # same payload, increasingly padded strides: utilization monotone down
        def padded_pattern(stride):
            reqs = [
                LaneRequest(lane=i, byte_offset=stride * i, byte_length=2, useful_bits=12)
                for i in range(16)
            ]
            return shared_phase(reqs)

        utils = [simulate(padded_pattern(s)).utilization for s in (2, 4, 8, 16)]
        assert all(a >= b for a, b in zip(utils, utils[1:]))
