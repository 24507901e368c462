"""Built-in verification suites backing the `verify` CLI command.

Each suite returns (name, ok, detail) tuples; the CLI prints one line per
check and exits nonzero when anything fails.  These are smoke-level
versions of the full pytest acceptance suite, runnable from an installed
package without test sources.
"""

from __future__ import annotations

import numpy as np

from .bitplane import bit_planes, decompose, recompose
from .engine import GemmConfig, group_matmul_fused, int_matmul_reference, reduce_bits
from .memsim import chunked_layout_pattern, golden_reports, simulate
from .packing import PackConfig, activation_pack_config, pack, unpack, weight_pack_config
from .quantize import QuantTensor, qmax, quantize, dequantize
from .sensitivity import layer_error, make_glu_fixture, rank_layers

Check = tuple[str, bool, str]


def random_quant(rng, rows: int, cols: int, bits: int, group_size: int) -> QuantTensor:
    """Directly sampled quant tensor covering the full symmetric value range."""
    lim = qmax(bits)
    values = rng.integers(-lim, lim + 1, size=(rows, cols), dtype=np.int64).astype(np.int8)
    n_groups = -(-cols // group_size)
    scales = rng.uniform(0.25, 4.0, size=(rows, n_groups))
    return QuantTensor(values=values, scales=scales, bits=bits, group_size=group_size)


def run_fused_pair(wq: QuantTensor, xq: QuantTensor, word_bits: int = 64):
    """(fused, reference) outputs for a quant tensor pair."""
    m, k = xq.shape
    n = wq.shape[0]
    cfg = GemmConfig(
        m=m, n=n, k=k,
        weight_bits=wq.bits, activation_bits=xq.bits, group_size=wq.group_size,
    )
    wp = pack(decompose(wq), weight_pack_config(word_bits))
    xp = pack(decompose(xq), activation_pack_config(m, word_bits))
    fused = group_matmul_fused(wp, xp, wq.scales, xq.scales, cfg, trace=True)
    ref = int_matmul_reference(wq, xq, cfg, trace=True)
    return fused, ref


def oracle_suite(full: bool = False, seed: int = 2024, cases: int = 40) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks: list[Check] = []
    bad = 0
    for _ in range(cases):
        m = int(rng.choice([1, 4, 8, 16]))
        n = int(rng.integers(8, 65))
        k = int(rng.integers(128, 1025))
        p, q = (6, 6) if rng.integers(2) else (6, 8)
        wq = random_quant(rng, n, k, p, 128)
        xq = random_quant(rng, m, k, q, 128)
        fused, ref = run_fused_pair(wq, xq)
        if not (
            np.array_equal(fused.data, ref.data)
            and np.array_equal(fused.group_partials, ref.group_partials)
        ):
            bad += 1
    checks.append(
        ("oracle-equivalence", bad == 0, f"{cases - bad}/{cases} random W6A6/W6A8 cases exact")
    )
    if full:
        bad = 0
        total = 0
        for p in range(2, 9):
            for q in range(2, 9):
                wq = random_quant(rng, 8, 256, p, 64)
                xq = random_quant(rng, 4, 256, q, 64)
                fused, ref = run_fused_pair(wq, xq)
                total += 1
                if not np.array_equal(fused.data, ref.data):
                    bad += 1
        checks.append(
            ("oracle-sweep-2..8", bad == 0, f"{total - bad}/{total} precision pairs exact")
        )
    return checks


def scalar_expansion_suite() -> list[Check]:
    ok_u = all(
        int(reduce_bits(
            np.einsum(
                "s,t->st",
                bit_planes(np.array([[a]]), 2, signed=False).planes[:, 0, 0],
                bit_planes(np.array([[b]]), 4, signed=False).planes[:, 0, 0],
            ),
            2, 4, signed=False,
        )) == a * b
        for a in range(4)
        for b in range(16)
    )
    ok_s = all(
        int(reduce_bits(
            np.einsum(
                "s,t->st",
                bit_planes(np.array([[a]]), 6, signed=True).planes[:, 0, 0].astype(np.int64),
                bit_planes(np.array([[b]]), 6, signed=True).planes[:, 0, 0].astype(np.int64),
            ),
            6, 6, signed=True,
        )) == a * b
        for a in range(-32, 32)
        for b in range(-32, 32)
    )
    return [
        ("scalar-expansion-unsigned", ok_u, "2-bit x 4-bit products over [0,3]x[0,15]"),
        ("scalar-expansion-signed", ok_s, "6-bit products over [-32,31]^2"),
    ]


def packing_suite(seed: int = 7, cases: int = 20) -> list[Check]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        rows = int(rng.integers(1, 20))
        cols = int(rng.integers(1, 400))
        bits = int(rng.integers(2, 9))
        word_bits = int(rng.choice([32, 64]))
        q = random_quant(rng, rows, cols, bits, 128)
        cfg = PackConfig(chunk_m=min(rows, 8), word_bits=word_bits)
        packed = pack(decompose(q), cfg)
        back = recompose(unpack(packed, cfg))
        if not np.array_equal(back, q.values.astype(np.int64)):
            bad += 1
    return [("packing-bijection", bad == 0, f"{cases - bad}/{cases} decompose/pack round trips exact")]


def quantization_suite(seed: int = 11, cases: int = 200) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    ok = True
    for _ in range(cases):
        data = rng.standard_normal((4, 128)) * rng.uniform(0.01, 100)
        q = quantize(data, int(rng.choice([6, 8])), 128)
        err = np.abs(data - dequantize(q))
        bound = np.repeat(q.scales, 128, axis=1)[:, :128] / 2
        slack = np.max(err - bound)
        worst = max(worst, slack)
        if slack > 4 * np.finfo(np.float64).eps * np.max(np.abs(data)):
            ok = False
    return [("quantization-bound", ok, f"max excess over scale/2: {worst:.3e}")]


def layout_suite() -> list[Check]:
    checks: list[Check] = []
    for entry in golden_reports():
        checks.append(
            (
                f"layout-golden-{entry['name']}",
                entry["ok"],
                f"utilization {entry['report']['utilization']} "
                f"(expected {entry['expected_utilization']})",
            )
        )
    conflict_free = True
    for bits in (6, 8):
        for bm in (1, 2, 8):
            for bk in (128, 512):
                rep = simulate(chunked_layout_pattern(activation_pack_config(bm), bits, bm, bk))
                conflict_free &= rep.bank_conflicts == 0
    checks.append(
        ("layout-chunked-conflict-free", conflict_free, "bits {6,8} x BM {1,2,8} x BK {128,512}")
    )
    return checks


def sensitivity_suite(seeds: int = 5) -> list[Check]:
    first = 0
    mono = 0
    for seed in range(seeds):
        dumps = make_glu_fixture(seed)
        if rank_layers(dumps).ranking[0].endswith("down_proj"):
            first += 1
        down = next(d for d in dumps if d.layer_kind == "down_proj")
        if layer_error(down, 6, 8)[0] >= layer_error(down, 6, 6)[0]:
            mono += 1
    return [
        ("sensitivity-ranking", first == seeds, f"down_proj most sensitive in {first}/{seeds} seeds"),
        ("sensitivity-bit-monotonic", mono == seeds, f"SQNR(A8) >= SQNR(A6) in {mono}/{seeds} seeds"),
    ]


def run_all(full: bool = False) -> list[Check]:
    checks: list[Check] = []
    checks += oracle_suite(full=full)
    checks += scalar_expansion_suite()
    checks += packing_suite()
    checks += quantization_suite()
    checks += layout_suite()
    checks += sensitivity_suite()
    return checks
