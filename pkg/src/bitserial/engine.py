"""Bit-serial GEMM over packed bit planes.

The engine computes Y[m, n] = sum_k X[m, k] * W[n, k] for group-quantized
operands without ever multiplying integers wider than one bit: every
(weight plane s, activation plane t) pair is contracted by AND + popcount,
the p*q partial grids are combined with their signed bit-significance
coefficients, and the per-group integer sums are dequantized in the
accumulation loop (one fused multiply by the product of the two group
scales, ascending group order, full float64 precision).

``int_matmul_reference`` is the independent oracle: plain integer dot
products per group followed by the identical scale accumulation.  The two
paths agree bit-for-bit, which the test suite asserts.
"""

from __future__ import annotations

import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bitplane import BitPlaneSet, decompose, plane_coeffs
from .errors import ConfigError, ShapeError
from .packing import PackedTensor, activation_pack_config, pack, weight_pack_config
from .quantize import DEFAULT_GROUP_SIZE, QuantTensor, quantize


@dataclass(frozen=True)
class GemmConfig:
    """Problem shape, precision pair, grouping and execution parameters.

    (weight_bits, activation_bits) = (6, 6) and (6, 8) are the production
    precision pairs; any pair in 2..8 is accepted for testing.  bm/bn/bk
    are the output/contraction tile sizes used by :func:`execute_tiled`.
    """

    m: int
    n: int
    k: int
    weight_bits: int = 6
    activation_bits: int = 6
    group_size: int = DEFAULT_GROUP_SIZE
    bm: int = 8
    bn: int = 64
    bk: int = 512
    pipeline_stages: int = 1
    worker_count: int = 1

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ConfigError(f"dims must be positive, got {(self.m, self.n, self.k)}")
        for name in ("weight_bits", "activation_bits"):
            bits = getattr(self, name)
            if not 2 <= bits <= 8:
                raise ConfigError(f"{name} must be in 2..8, got {bits}")
        if self.group_size < 1:
            raise ConfigError(f"group_size must be >= 1, got {self.group_size}")
        if min(self.bm, self.bn, self.bk) < 1:
            raise ConfigError(f"tile dims must be positive, got {(self.bm, self.bn, self.bk)}")
        if self.pipeline_stages < 1:
            raise ConfigError(f"pipeline_stages must be >= 1, got {self.pipeline_stages}")
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")

    @property
    def n_groups(self) -> int:
        return -(-self.k // self.group_size)


@dataclass
class GemmOutput:
    """Dequantized result plus instrumentation.

    bmma_passes counts every binary multiply pass: one AND+popcount
    contraction of a (weight chunk, activation chunk) pair over one group
    segment and one (s, t) plane pair.
    group_partials, when traced, holds the exact per-group integer sums
    [n_groups, m, n].
    """

    data: np.ndarray
    bmma_passes: int = 0
    group_partials: np.ndarray | None = None


def bmma_chunk(w_words, x_words) -> int:
    """AND + popcount contraction of two equal word spans (one chunk row pair)."""
    w = np.asarray(w_words)
    x = np.asarray(x_words)
    if w.ndim != 1 or x.ndim != 1 or w.shape != x.shape:
        raise ShapeError(f"word spans must be equal 1-D, got {w.shape} and {x.shape}")
    return int(np.bitwise_count(w & x).sum(dtype=np.int64))


def bit_product_grid(w_planes: BitPlaneSet, x_planes: BitPlaneSet) -> np.ndarray:
    """Dense partial grid Y^(s,t)[m,n] = sum_k w_plane_s[n,k] * x_plane_t[m,k].

    The unpacked counterpart of the engine's inner loop, kept as a bridge
    oracle between scalar bit expansion and the packed word path.
    """
    if w_planes.shape[1] != x_planes.shape[1]:
        raise ShapeError(
            f"contraction mismatch: weights K={w_planes.shape[1]}, "
            f"activations K={x_planes.shape[1]}"
        )
    w = w_planes.planes.astype(np.int64)
    x = x_planes.planes.astype(np.int64)
    return np.einsum("snk,tmk->stmn", w, x)


def reduce_bits(
    partials: np.ndarray, weight_bits: int, activation_bits: int, signed: bool = True
) -> np.ndarray:
    """Bit-significance weighted reduction of a partial grid.

    partials is indexed [s, t, ...]; the result is
    sum_s sum_t coeff(s) * coeff(t) * partials[s, t].  Unsigned mode uses
    2^(s+t); signed mode gives the MSB planes two's-complement weights.
    """
    partials = np.asarray(partials)
    if partials.ndim < 2 or partials.shape[0] != weight_bits or partials.shape[1] != activation_bits:
        raise ShapeError(
            f"partials must be [{weight_bits}, {activation_bits}, ...], got {partials.shape}"
        )
    cw = plane_coeffs(weight_bits, signed)
    cx = plane_coeffs(activation_bits, signed)
    return np.einsum("s,t,st...->...", cw, cx, partials.astype(np.int64))


def fold_chunk_level(lane_partials, chunk_m: int, mma_m: int):
    """Tree-fold lane-group partials down to chunk_m groups.

    Models the register-exchange reduction used when the batch runs smaller
    than the multiply tile: mma_m lane groups hold partials for output row
    (g mod chunk_m), and log2(mma_m) - log2(chunk_m) fold rounds combine
    group j with group j + active/2.  Returns (folded, rounds) with folded
    holding the completed sums in the first chunk_m groups.
    """
    for name, v in (("chunk_m", chunk_m), ("mma_m", mma_m)):
        if v < 1 or v & (v - 1):
            raise ConfigError(f"{name} must be a power of two, got {v}")
    if chunk_m > mma_m:
        raise ConfigError(f"chunk_m ({chunk_m}) must not exceed mma_m ({mma_m})")
    lanes = np.array(lane_partials)
    if lanes.shape[0] != mma_m:
        raise ShapeError(f"expected {mma_m} lane groups on axis 0, got {lanes.shape[0]}")
    active = mma_m
    rounds = 0
    while active > chunk_m:
        half = active // 2
        lanes[:half] += lanes[half:active]
        active = half
        rounds += 1
    return lanes[:chunk_m], rounds


# ---------------------------------------------------------------------------
# fused path internals
# ---------------------------------------------------------------------------


def _group_segments(n_groups: int, group_size: int, k_pad: int, chunk_k: int):
    """Per group, the (k-chunk, lo, hi) bit segments it covers.

    The final group is extended through the zero padding so its popcounts
    may safely include padded (all-zero) bits.
    """
    segments = []
    for g in range(n_groups):
        lo = g * group_size
        hi = (g + 1) * group_size if g < n_groups - 1 else k_pad
        segs = []
        for kc in range(lo // chunk_k, -(-hi // chunk_k)):
            base = kc * chunk_k
            segs.append((kc, max(lo, base) - base, min(hi, base + chunk_k) - base))
        segments.append(segs)
    return segments


def _segment_mask(lo: int, hi: int, chunk_k: int, word_bits: int, dtype) -> np.ndarray | None:
    """Word mask selecting chunk bits [lo, hi); None when the span is full."""
    if lo == 0 and hi == chunk_k:
        return None
    mask = np.zeros(chunk_k // word_bits, dtype=dtype)
    for w in range(mask.size):
        s = max(lo, w * word_bits)
        e = min(hi, (w + 1) * word_bits)
        if s < e:
            mask[w] = (((1 << (e - s)) - 1) << (s - w * word_bits))
    return mask


def _bmma_block(w_block: np.ndarray, x_block: np.ndarray, mask) -> np.ndarray:
    """Popcount grids for every plane pair of one k-chunk.

    w_block is [NC, p, cn, W], x_block [MC, q, cm, W]; the result
    [MC, NC, q, p, cm, cn] holds one AND+popcount contraction per
    (activation plane t, weight plane s) pair and chunk pair.  One call
    covers all p*q binary multiply passes of the chunk, which keeps the
    work per numpy dispatch large enough to parallelize.
    """
    anded = x_block[:, None, :, None, :, None, :] & w_block[None, :, None, :, None, :, :]
    if mask is not None:
        anded &= mask
    return np.bitwise_count(anded).sum(axis=-1, dtype=np.int64)


def _scale_accumulate(acc, x_scales_g, w_scales_g, partial_int, trace_slot=None):
    # One fused dequantization step; both the bit-serial and the reference
    # path must funnel through this exact expression for bit-identity.
    if trace_slot is not None:
        trace_slot[...] = partial_int
    acc += (x_scales_g[:, None] * w_scales_g[None, :]) * partial_int.astype(np.float64)


def _pad_scales(scales: np.ndarray, padded_rows: int) -> np.ndarray:
    if scales.shape[0] == padded_rows:
        return scales
    out = np.ones((padded_rows, scales.shape[1]), dtype=np.float64)
    out[: scales.shape[0]] = scales
    return out


def _check_operands(wp: PackedTensor, xp: PackedTensor, w_scales, x_scales, cfg: GemmConfig):
    if wp.cols != cfg.k or xp.cols != cfg.k:
        raise ShapeError(
            f"K mismatch: weights have K={wp.cols}, activations K={xp.cols}, config k={cfg.k}"
        )
    if wp.rows != cfg.n or xp.rows != cfg.m:
        raise ShapeError(
            f"row mismatch: weights {wp.rows} rows (config n={cfg.n}), "
            f"activations {xp.rows} rows (config m={cfg.m})"
        )
    if wp.bits != cfg.weight_bits or xp.bits != cfg.activation_bits:
        raise ShapeError(
            f"bit mismatch: packed ({wp.bits}, {xp.bits}) vs config "
            f"({cfg.weight_bits}, {cfg.activation_bits})"
        )
    if wp.config.chunk_k != xp.config.chunk_k or wp.config.word_bits != xp.config.word_bits:
        raise ShapeError("weight and activation packs must share chunk_k and word_bits")
    g = cfg.n_groups
    if np.shape(w_scales) != (cfg.n, g):
        raise ShapeError(f"weight scales shape {np.shape(w_scales)} != {(cfg.n, g)}")
    if np.shape(x_scales) != (cfg.m, g):
        raise ShapeError(f"activation scales shape {np.shape(x_scales)} != {(cfg.m, g)}")


def _accumulate_groups(
    acc: np.ndarray,
    w_words: np.ndarray,
    x_words: np.ndarray,
    w_scales_pad: np.ndarray,
    x_scales_pad: np.ndarray,
    group_ids,
    segments,
    kc_base: int,
    coeff_w: np.ndarray,
    coeff_x: np.ndarray,
    chunk_k: int,
    word_bits: int,
    trace: np.ndarray | None,
) -> int:
    """Fused per-group loop over one K span.  Returns the bmma pass count.

    acc is the padded output block the span contributes to; w_words /
    x_words are [KC_span, RC, bits, rows, W] word blocks with k-chunk
    indices offset by kc_base.
    """
    p, q = coeff_w.size, coeff_x.size
    mc, cm = x_words.shape[1], x_words.shape[3]
    nc, cn = w_words.shape[1], w_words.shape[3]
    weights_ts = np.einsum("t,s->ts", coeff_x, coeff_w)
    passes = 0
    for g, segs in zip(group_ids, segments):
        partial = np.zeros((mc, nc, cm, cn), dtype=np.int64)
        for kc, lo, hi in segs:
            mask = _segment_mask(lo, hi, chunk_k, word_bits, w_words.dtype)
            grid = _bmma_block(w_words[kc - kc_base], x_words[kc - kc_base], mask)
            partial += np.tensordot(weights_ts, grid, axes=([0, 1], [2, 3]))
            passes += p * q * mc * nc
        partial2d = partial.transpose(0, 2, 1, 3).reshape(mc * cm, nc * cn)
        trace_slot = trace[g] if trace is not None else None
        _scale_accumulate(acc, x_scales_pad[:, g], w_scales_pad[:, g], partial2d, trace_slot)
    return passes


def group_matmul_fused(
    wp: PackedTensor,
    xp: PackedTensor,
    w_scales: np.ndarray,
    x_scales: np.ndarray,
    cfg: GemmConfig,
    trace: bool = False,
) -> GemmOutput:
    """Bit-serial GEMM with fused group-wise dequantization.

    Per output cell and scale group i the engine computes the exact integer
    sum over all (s, t) plane pairs of coeff(s)*coeff(t)*popcount(AND), then
    accumulates w_scale[i] * x_scale[i] * sum in ascending group order.
    """
    w_scales = np.asarray(w_scales, dtype=np.float64)
    x_scales = np.asarray(x_scales, dtype=np.float64)
    _check_operands(wp, xp, w_scales, x_scales, cfg)

    segments = _group_segments(cfg.n_groups, cfg.group_size, xp.padded_cols, xp.config.chunk_k)
    acc = np.zeros((xp.padded_rows, wp.padded_rows), dtype=np.float64)
    trace_arr = (
        np.zeros((cfg.n_groups, xp.padded_rows, wp.padded_rows), dtype=np.int64)
        if trace
        else None
    )
    passes = _accumulate_groups(
        acc,
        wp.words,
        xp.words,
        _pad_scales(w_scales, wp.padded_rows),
        _pad_scales(x_scales, xp.padded_rows),
        range(cfg.n_groups),
        segments,
        0,
        plane_coeffs(wp.bits, wp.signed),
        plane_coeffs(xp.bits, xp.signed),
        xp.config.chunk_k,
        xp.config.word_bits,
        trace_arr,
    )
    return GemmOutput(
        data=acc[: cfg.m, : cfg.n],
        bmma_passes=passes,
        group_partials=trace_arr[:, : cfg.m, : cfg.n] if trace else None,
    )


def int_matmul_reference(
    wq: QuantTensor, xq: QuantTensor, cfg: GemmConfig, trace: bool = False
) -> GemmOutput:
    """Oracle path: per-group integer dot products, no bit decomposition.

    Uses the same scale accumulation expression and group order as the
    fused engine, so outputs must match it bit-for-bit.
    """
    if wq.shape != (cfg.n, cfg.k) or xq.shape != (cfg.m, cfg.k):
        raise ShapeError(
            f"operand shapes {wq.shape} / {xq.shape} do not match config "
            f"(n={cfg.n}, m={cfg.m}, k={cfg.k})"
        )
    if wq.group_size != cfg.group_size or xq.group_size != cfg.group_size:
        raise ShapeError("operand group sizes must match the config group_size")
    if wq.bits != cfg.weight_bits or xq.bits != cfg.activation_bits:
        raise ShapeError("operand bit widths must match the config precision pair")

    w = wq.values.astype(np.int64)
    x = xq.values.astype(np.int64)
    acc = np.zeros((cfg.m, cfg.n), dtype=np.float64)
    trace_arr = np.zeros((cfg.n_groups, cfg.m, cfg.n), dtype=np.int64) if trace else None
    for g in range(cfg.n_groups):
        lo = g * cfg.group_size
        hi = min(lo + cfg.group_size, cfg.k)
        partial = x[:, lo:hi] @ w[:, lo:hi].T
        trace_slot = trace_arr[g] if trace else None
        _scale_accumulate(acc, xq.scales[:, g], wq.scales[:, g], partial, trace_slot)
    return GemmOutput(data=acc, bmma_passes=0, group_partials=trace_arr)


# ---------------------------------------------------------------------------
# tiled, pipelined executor
# ---------------------------------------------------------------------------

_STOP = object()


def _prefetched(gather, ktiles, stages: int):
    """Yield gathered K-tile blocks, keeping up to `stages` buffers in flight."""
    if stages == 1 or len(ktiles) <= 1:
        for kt in ktiles:
            yield gather(kt)
        return
    buf: queue.Queue = queue.Queue(maxsize=stages - 1)

    def producer():
        for kt in ktiles:
            buf.put(gather(kt))
        buf.put(_STOP)

    thread = threading.Thread(target=producer, daemon=True)
    thread.start()
    while True:
        block = buf.get()
        if block is _STOP:
            break
        yield block
    thread.join()


def execute_tiled(
    wp: PackedTensor,
    xp: PackedTensor,
    w_scales: np.ndarray,
    x_scales: np.ndarray,
    cfg: GemmConfig,
) -> GemmOutput:
    """Tiled multi-worker GEMM with a prefetch/compute pipeline.

    Output tiles of bm x bn rows/cols are distributed over worker_count
    threads; each tile walks the contraction dimension in bk-sized K-tiles,
    gathering the next K-tile's operand words while the current one
    computes (pipeline_stages in-flight buffers).  Results are identical
    bit-for-bit to :func:`group_matmul_fused` for every stage/worker count.
    """
    w_scales = np.asarray(w_scales, dtype=np.float64)
    x_scales = np.asarray(x_scales, dtype=np.float64)
    _check_operands(wp, xp, w_scales, x_scales, cfg)
    cm, cn = xp.config.chunk_m, wp.config.chunk_m
    ck = xp.config.chunk_k
    if cfg.bm % cm or cfg.bn % cn or cfg.bk % ck:
        raise ConfigError(
            f"tile dims (bm={cfg.bm}, bn={cfg.bn}, bk={cfg.bk}) must be multiples of "
            f"chunk dims (chunk_m={cm}, chunk_n={cn}, chunk_k={ck})"
        )
    k_pad = xp.padded_cols
    if k_pad > cfg.bk and cfg.bk % cfg.group_size:
        raise ConfigError(
            f"bk ({cfg.bk}) must cover whole scale groups (group_size={cfg.group_size}) "
            "so fused dequantization applies each group's scales exactly once"
        )

    segments = _group_segments(cfg.n_groups, cfg.group_size, k_pad, ck)
    coeff_w = plane_coeffs(wp.bits, wp.signed)
    coeff_x = plane_coeffs(xp.bits, xp.signed)
    w_scales_pad = _pad_scales(w_scales, wp.padded_rows)
    x_scales_pad = _pad_scales(x_scales, xp.padded_rows)

    kc_per_tile = cfg.bk // ck
    n_ktiles = -(-xp.n_kchunks // kc_per_tile)
    groups_by_ktile: list[list[int]] = [[] for _ in range(n_ktiles)]
    for g, segs in enumerate(segments):
        groups_by_ktile[segs[0][0] // kc_per_tile].append(g)

    m_step = cfg.bm // cm
    n_step = cfg.bn // cn
    m_tiles = [(rc, min(rc + m_step, xp.n_rchunks)) for rc in range(0, xp.n_rchunks, m_step)]
    n_tiles = [(rc, min(rc + n_step, wp.n_rchunks)) for rc in range(0, wp.n_rchunks, n_step)]

    out = np.zeros((xp.padded_rows, wp.padded_rows), dtype=np.float64)

    def run_tile(mt: tuple[int, int], nt: tuple[int, int]) -> int:
        m0, m1 = mt
        n0, n1 = nt
        acc = np.zeros(((m1 - m0) * cm, (n1 - n0) * cn), dtype=np.float64)
        xs = x_scales_pad[m0 * cm : m1 * cm]
        ws = w_scales_pad[n0 * cn : n1 * cn]

        def gather(kt: int):
            # Prefetch stage: contiguous copies of this K-tile's operand words.
            ks = kt * kc_per_tile
            ke = min(ks + kc_per_tile, xp.n_kchunks)
            return (
                ks,
                np.ascontiguousarray(wp.words[ks:ke, n0:n1]),
                np.ascontiguousarray(xp.words[ks:ke, m0:m1]),
            )

        passes = 0
        for kt, (kc_base, wb, xb) in zip(
            range(n_ktiles), _prefetched(gather, list(range(n_ktiles)), cfg.pipeline_stages)
        ):
            gids = groups_by_ktile[kt]
            passes += _accumulate_groups(
                acc, wb, xb, ws, xs, gids, [segments[g] for g in gids], kc_base,
                coeff_w, coeff_x, ck, xp.config.word_bits, None,
            )
        out[m0 * cm : m1 * cm, n0 * cn : n1 * cn] = acc
        return passes

    tiles = [(mt, nt) for mt in m_tiles for nt in n_tiles]
    if cfg.worker_count == 1 or len(tiles) == 1:
        total = sum(run_tile(mt, nt) for mt, nt in tiles)
    else:
        with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
            total = sum(pool.map(lambda t: run_tile(*t), tiles))
    return GemmOutput(data=out[: cfg.m, : cfg.n], bmma_passes=total)


def quantized_linear(
    weight: np.ndarray,
    activations: np.ndarray,
    weight_bits: int = 6,
    activation_bits: int = 6,
    group_size: int = DEFAULT_GROUP_SIZE,
    word_bits: int = 64,
    trace: bool = False,
) -> GemmOutput:
    """Quantize, decompose, pack, and run the fused engine in one call.

    weight is [N, K], activations [M, K]; the result approximates
    activations @ weight.T the way the full bit-serial pipeline computes it.
    """
    wq = quantize(weight, weight_bits, group_size)
    xq = quantize(activations, activation_bits, group_size)
    wp = pack(decompose(wq), weight_pack_config(word_bits))
    xp = pack(decompose(xq), activation_pack_config(xq.shape[0], word_bits))
    cfg = GemmConfig(
        m=xq.shape[0],
        n=wq.shape[0],
        k=wq.shape[1],
        weight_bits=weight_bits,
        activation_bits=activation_bits,
        group_size=group_size,
    )
    return group_matmul_fused(wp, xp, wq.scales, xq.scales, cfg, trace=trace)
