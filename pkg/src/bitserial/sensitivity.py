"""Layer-wise quantization sensitivity analysis.

Given per-layer weight and activation dumps, each layer's float output
X @ W.T is compared against the full quantize -> bit-serial GEMM pipeline
at the requested precision, yielding SQNR/MSE.  Layers are ranked most
sensitive first (ascending SQNR) and a bit-width policy assigns the high
activation precision to the top of the ranking.

SQNR on the layer's own output is a deliberate desk-scale proxy for
model-level quality probes; the meaningful result is the ordering, not the
absolute dB values.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .engine import quantized_linear
from .errors import InvalidInputError
from .quantize import DEFAULT_GROUP_SIZE, LAYER_KINDS, BitPolicy

#: SQNR stand-in when the quantized output is exact or the reference is zero.
SQNR_EXACT = math.inf


@dataclass(frozen=True)
class LayerDump:
    """One linear layer's operands: weight [N, K], activations [tokens, K]."""

    layer_name: str
    layer_kind: str
    weight: np.ndarray
    activations: np.ndarray

    def __post_init__(self):
        if self.layer_kind not in LAYER_KINDS:
            raise InvalidInputError(
                f"unknown layer kind {self.layer_kind!r}; expected one of {LAYER_KINDS}"
            )
        if self.weight.ndim != 2 or self.activations.ndim != 2:
            raise InvalidInputError("weight and activations must be 2-D")
        if self.weight.shape[1] != self.activations.shape[1]:
            raise InvalidInputError(
                f"activation K={self.activations.shape[1]} does not match "
                f"weight input dim {self.weight.shape[1]}"
            )


@dataclass(frozen=True)
class LayerMetrics:
    layer_name: str
    layer_kind: str
    sqnr_db: float
    output_mse: float
    outlier_score: float

    def to_dict(self) -> dict:
        return {
            "layer_name": self.layer_name,
            "layer_kind": self.layer_kind,
            "sqnr_db": self.sqnr_db,
            "output_mse": self.output_mse,
            "outlier_score": self.outlier_score,
        }


@dataclass(frozen=True)
class SensitivityReport:
    """Per-layer metrics plus the most-sensitive-first ranking."""

    metrics: tuple[LayerMetrics, ...]
    ranking: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "layers": [m.to_dict() for m in self.metrics],
            "ranking": list(self.ranking),
        }


def outlier_score(activations: np.ndarray) -> float:
    """Max channel peak over median channel peak; large for outlier channels."""
    peaks = np.abs(activations).max(axis=0)
    med = float(np.median(peaks))
    return float(peaks.max() / med) if med > 0 else math.inf


def layer_error(
    dump: LayerDump,
    w_bits: int = 6,
    a_bits: int = 6,
    group_size: int = DEFAULT_GROUP_SIZE,
) -> tuple[float, float]:
    """(sqnr_db, output_mse) of the quantized layer output vs float."""
    ref = dump.activations @ dump.weight.T
    got = quantized_linear(
        dump.weight, dump.activations, w_bits, a_bits, group_size
    ).data
    err = ref - got
    noise = float(np.sum(err * err))
    signal = float(np.sum(ref * ref))
    mse = noise / err.size
    if signal == 0.0 or noise == 0.0:
        return SQNR_EXACT, mse
    return 10.0 * math.log10(signal / noise), mse


def _layer_metrics(dump: LayerDump, w_bits, a_bits, group_size) -> LayerMetrics:
    sqnr, mse = layer_error(dump, w_bits, a_bits, group_size)
    return LayerMetrics(
        layer_name=dump.layer_name,
        layer_kind=dump.layer_kind,
        sqnr_db=sqnr,
        output_mse=mse,
        outlier_score=outlier_score(dump.activations),
    )


def rank_layers(
    dumps: list[LayerDump],
    w_bits: int = 6,
    a_bits: int = 6,
    group_size: int = DEFAULT_GROUP_SIZE,
    workers: int = 1,
) -> SensitivityReport:
    """Evaluate all layers and rank them most sensitive (lowest SQNR) first.

    Ties break by layer name, so the ranking is deterministic.
    """
    if not dumps:
        raise InvalidInputError("need at least one layer dump")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            metrics = list(
                pool.map(lambda d: _layer_metrics(d, w_bits, a_bits, group_size), dumps)
            )
    else:
        metrics = [_layer_metrics(d, w_bits, a_bits, group_size) for d in dumps]
    ranked = sorted(metrics, key=lambda m: (m.sqnr_db, m.layer_name))
    return SensitivityReport(
        metrics=tuple(metrics), ranking=tuple(m.layer_name for m in ranked)
    )


def assign_policy(
    report: SensitivityReport, high_bits: int = 8, budget_k: int = 1
) -> BitPolicy:
    """Give the budget_k most sensitive layers high-precision activations.

    Every declared layer kind gets an entry; kinds outside the budget stay
    at 6 bits, weights are uniformly 6.
    """
    if budget_k > len(report.ranking):
        raise InvalidInputError(
            f"budget_k ({budget_k}) exceeds layer count ({len(report.ranking)})"
        )
    promoted_names = set(report.ranking[:budget_k])
    table = {kind: 6 for kind in LAYER_KINDS}
    for m in report.metrics:
        if m.layer_name in promoted_names:
            table[m.layer_kind] = high_bits
    return BitPolicy(weight_bits=6, activation_bits_by_layer=MappingProxyType(table))


def make_glu_fixture(
    seed: int,
    tokens: int = 16,
    hidden: int = 256,
    out_features: int = 32,
    outlier_gain: float = 100.0,
) -> list[LayerDump]:
    """Synthetic GLU-block layer suite with a heavy-tailed down_proj input.

    Every layer draws i.i.d. gaussian weight/activation dumps; the
    down_proj activations get one channel scaled by ``outlier_gain``,
    reproducing the outlier structure that makes that layer the
    quantization-critical one.
    """
    rng = np.random.default_rng(seed)
    dumps = []
    for kind in ("qkv_proj", "o_proj", "gate_proj", "up_proj", "down_proj"):
        weight = rng.standard_normal((out_features, hidden))
        acts = rng.standard_normal((tokens, hidden))
        if kind == "down_proj":
            acts[:, rng.integers(hidden)] *= outlier_gain
        dumps.append(
            LayerDump(
                layer_name=f"model.layers.0.{kind}",
                layer_kind=kind,
                weight=weight,
                activations=acts,
            )
        )
    return dumps
