"""Tiled multi-worker execution and the tile-parameter sweep.

Demonstrates the determinism contract of the pipelined executor (results
never depend on stage/worker counts), then times a GEMV shape and runs a
small tile sweep to pick the best blocking.
"""

import time

import numpy as np

from bitserial import (
    GemmConfig,
    activation_pack_config,
    decompose,
    execute_tiled,
    group_matmul_fused,
    pack,
    weight_pack_config,
)
from bitserial.bench import BenchCase, run_case, run_sweep
from bitserial.verify import random_quant

rng = np.random.default_rng(3)

# --- determinism across schedules -------------------------------------------
m, n, k = 8, 128, 2048
wq = random_quant(rng, n, k, 6, 128)
xq = random_quant(rng, m, k, 8, 128)
wp = pack(decompose(wq), weight_pack_config())
xp = pack(decompose(xq), activation_pack_config(m))

base = group_matmul_fused(
    wp, xp, wq.scales, xq.scales,
    GemmConfig(m=m, n=n, k=k, weight_bits=6, activation_bits=8),
)
print("stage/worker grid vs single-pass fused output:")
for workers in (1, 4):
    for stages in (1, 3):
        cfg = GemmConfig(m=m, n=n, k=k, weight_bits=6, activation_bits=8,
                         bm=8, bn=32, bk=512,
                         pipeline_stages=stages, worker_count=workers)
        t0 = time.perf_counter()
        out = execute_tiled(wp, xp, wq.scales, xq.scales, cfg)
        dt = (time.perf_counter() - t0) * 1e3
        print(f"  workers={workers} stages={stages}: bit-identical="
          f"{np.array_equal(out.data, base.data)}  {dt:6.1f} ms")

# --- the decoding-shape GEMV ------------------------------------------------
# M=1 dominates autoregressive decoding; chunk_m drops to 1 so no padding
# work is wasted on the batch dimension.
case = BenchCase(name="gemv_4k", m=1, n=4096, k=4096)
res = run_case(case, repeat=3, stages=2, workers=4)
print(f"\nGEMV (1,4096)x(4096,4096) W6A6: {res.wall_ns / 1e6:.1f} ms, "
      f"{res.effective_gops:.3f} effective GOPS, {res.bmma_passes} bmma passes")

# --- tile sweep --------------------------------------------------------------
print("\ntile sweep on (8, 256, 1024):")
doc = run_sweep(m=8, n=256, k=1024, repeat=1, workers=4)
for r in sorted(doc["results"], key=lambda r: -r["effective_GOPS"])[:5]:
    print(f"  tile {tuple(r['tile'])}: {r['effective_GOPS']:7.3f} GOPS")
print("winner:", tuple(doc["best"]["tile"]))
