"""Benchmark harness for the tiled bit-serial GEMM.

Shapes mirror decoder-style linear layers at token-generation batch sizes
(M in {1, 4, 8}); the GEMV row is the dominant case.  Large production
dims are divided by a documented scale factor for desk runs, except the
4096x4096 GEMV class which runs at full size.  The tile sweep replaces
auto kernel search: it times every (bm, bn, bk) combination and picks the
fastest, breaking exact ties toward the smallest tile.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bitplane import decompose
from .engine import GemmConfig, execute_tiled
from .packing import activation_pack_config, pack, weight_pack_config
from .verify import random_quant


@dataclass(frozen=True)
class BenchCase:
    name: str
    m: int
    n: int
    k: int
    p: int = 6
    q: int = 6


@dataclass
class BenchResult:
    name: str
    shape: tuple[int, int, int]
    p: int
    q: int
    group_size: int
    stages: int
    workers: int
    tile: tuple[int, int, int]
    wall_ns: int
    bmma_passes: int
    effective_gops: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": list(self.shape),
            "p": self.p,
            "q": self.q,
            "group_size": self.group_size,
            "stages": self.stages,
            "workers": self.workers,
            "tile": list(self.tile),
            "wall_ns": self.wall_ns,
            "bmma_passes": self.bmma_passes,
            "effective_GOPS": self.effective_gops,
        }


def _clamp_tile(value: int, limit: int, chunk: int) -> int:
    # Tile dims must stay chunk multiples; shrink to the padded problem size.
    padded = -(-limit // chunk) * chunk
    return min(value, padded)


def run_case(
    case: BenchCase,
    group_size: int = 128,
    bm: int = 8,
    bn: int = 64,
    bk: int = 512,
    stages: int = 2,
    workers: int = 4,
    repeat: int = 3,
    seed: int = 0,
) -> BenchResult:
    """Time one GEMM shape; wall_ns is the best of `repeat` runs."""
    rng = np.random.default_rng(seed)
    wq = random_quant(rng, case.n, case.k, case.p, group_size)
    xq = random_quant(rng, case.m, case.k, case.q, group_size)
    wp = pack(decompose(wq), weight_pack_config())
    xp = pack(decompose(xq), activation_pack_config(case.m))
    cm, cn, ck = xp.config.chunk_m, wp.config.chunk_m, xp.config.chunk_k
    cfg = GemmConfig(
        m=case.m, n=case.n, k=case.k,
        weight_bits=case.p, activation_bits=case.q, group_size=group_size,
        bm=max(_clamp_tile(bm, case.m, cm), cm),
        bn=max(_clamp_tile(bn, case.n, cn), cn),
        bk=max(_clamp_tile(bk, case.k, ck), ck),
        pipeline_stages=stages, worker_count=workers,
    )
    best_ns = None
    passes = 0
    for _ in range(repeat):
        t0 = time.perf_counter_ns()
        out = execute_tiled(wp, xp, wq.scales, xq.scales, cfg)
        dt = time.perf_counter_ns() - t0
        passes = out.bmma_passes
        best_ns = dt if best_ns is None else min(best_ns, dt)
    flops = 2 * case.m * case.n * case.k
    return BenchResult(
        name=case.name,
        shape=(case.m, case.n, case.k),
        p=case.p,
        q=case.q,
        group_size=group_size,
        stages=stages,
        workers=workers,
        tile=(cfg.bm, cfg.bn, cfg.bk),
        wall_ns=best_ns,
        bmma_passes=passes,
        effective_gops=flops / best_ns,
    )


def llama_shape_cases(scale: int = 8) -> list[BenchCase]:
    """Decoder linear-layer shapes at batch 1/4/8.

    The 70B-class down projection (28672 x 8192, W6A8) and the 7B FFN dims
    are divided by `scale`; the 4k attention GEMM runs unscaled.
    """
    classes = [
        ("attn_4k", 4096, 4096, 6, 1),
        ("ffn_down_7b", 11008, 4096, 8, scale),
        ("ffn_down_70b", 28672, 8192, 8, scale),
    ]
    cases = []
    for m in (1, 4, 8):
        for name, k, n, q, div in classes:
            cases.append(BenchCase(name=f"{name}_b{m}", m=m, n=n // div, k=k // div, p=6, q=q))
    return cases


def run_llama_suite(scale: int = 8, repeat: int = 3, stages: int = 2, workers: int = 4) -> dict:
    results = [run_case(c, repeat=repeat, stages=stages, workers=workers) for c in llama_shape_cases(scale)]
    return {"suite": "llama-shapes", "results": [r.to_dict() for r in results]}


def run_sweep(
    m: int = 8,
    n: int = 256,
    k: int = 1024,
    p: int = 6,
    q: int = 6,
    repeat: int = 3,
    stages: int = 2,
    workers: int = 4,
) -> dict:
    """Exhaustive tile sweep; deterministic winner (ties -> smallest bm, bn, bk)."""
    case = BenchCase(name="sweep", m=m, n=n, k=k, p=p, q=q)
    results = []
    for bm in (8,):
        for bn in (8, 16, 32, 64, 128):
            for bk in (128, 256, 512, 1024):
                results.append(
                    run_case(case, bm=bm, bn=bn, bk=bk, repeat=repeat, stages=stages, workers=workers)
                )
    best = min(results, key=lambda r: (-r.effective_gops, r.tile))
    return {
        "suite": "sweep",
        "results": [r.to_dict() for r in results],
        "best": best.to_dict(),
    }
