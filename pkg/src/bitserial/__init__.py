"""Bit-serial quantized GEMM engine and analysis toolkit.

Capabilities: symmetric group quantization with a per-layer bit-width
policy, two's-complement bit-plane decomposition and chunked word packing,
AND+popcount matrix multiply with bit-significance reduction and fused
group-wise dequantization, a banked-memory transaction simulator, and
layer sensitivity analysis for mixed-precision policies.
"""

from .bitplane import BitPlaneSet, bit_planes, decompose, plane_coeff, plane_coeffs, recompose
from .engine import (
    GemmConfig,
    GemmOutput,
    bit_product_grid,
    bmma_chunk,
    execute_tiled,
    fold_chunk_level,
    group_matmul_fused,
    int_matmul_reference,
    quantized_linear,
    reduce_bits,
)
from .errors import (
    BitserialError,
    BoundsError,
    ConfigError,
    FormatError,
    InvalidInputError,
    PolicyMissError,
    ShapeError,
)
from .memsim import (
    AccessPattern,
    AccessPhase,
    LaneRequest,
    LayoutReport,
    MemModel,
    chunked_layout_pattern,
    golden_reports,
    naive_layout_pattern,
    simulate,
)
from .packing import (
    PackConfig,
    PackedTensor,
    activation_pack_config,
    pack,
    unpack,
    weight_pack_config,
)
from .quantize import (
    DEFAULT_POLICY,
    LAYER_KINDS,
    BitPolicy,
    QuantTensor,
    activation_bits,
    compute_group_scale,
    dequantize,
    quantize,
    uniform_policy,
)
from .sensitivity import (
    LayerDump,
    LayerMetrics,
    SensitivityReport,
    assign_policy,
    layer_error,
    make_glu_fixture,
    outlier_score,
    rank_layers,
)

__version__ = "0.1.0"
