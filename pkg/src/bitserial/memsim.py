"""Transaction-level model of banked shared memory and coalesced global loads.

The model is structural, not cycle-accurate: it answers how many
transactions a warp-wide access decomposes into, how many bank replays it
suffers, and what fraction of the moved bits is useful payload.

Accounting rules:

* shared space: every lane access moves whole bank-width words (32 bits).
  A multi-word lane request is issued word by word; each issue round is
  one transaction attempt, and two lanes addressing different rows of the
  same bank in one attempt add one replay (and one extra transaction) per
  extra row.  Lanes broadcasting from the same word do not conflict.
  Moved bits are counted per lane-word touched.
* global space: a warp request is served in aligned 128-byte segments;
  transactions = distinct segments touched, and every touched segment
  moves in full.

Utilization = useful payload bits / moved bits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BoundsError, ConfigError, InvalidInputError
from .packing import PackConfig

SHARED = "shared"
GLOBAL = "global"


@dataclass(frozen=True)
class MemModel:
    bank_count: int = 32
    bank_width_bits: int = 32
    transaction_bytes: int = 128
    lane_count: int = 32

    @property
    def bank_width_bytes(self) -> int:
        return self.bank_width_bits // 8

    @property
    def row_bytes(self) -> int:
        # One full-width access row: all banks side by side.
        return self.bank_count * self.bank_width_bytes


@dataclass(frozen=True)
class LaneRequest:
    """One lane's logical read: byte span plus the payload bits it wants."""

    lane: int
    byte_offset: int
    byte_length: int
    useful_bits: int

    def __post_init__(self):
        if self.byte_offset < 0 or self.byte_length <= 0:
            raise InvalidInputError(
                f"lane {self.lane}: offset must be >= 0 and length > 0, "
                f"got ({self.byte_offset}, {self.byte_length})"
            )
        if not 0 < self.useful_bits <= self.byte_length * 8:
            raise InvalidInputError(
                f"lane {self.lane}: useful_bits {self.useful_bits} outside "
                f"(0, {self.byte_length * 8}]"
            )


@dataclass(frozen=True)
class AccessPhase:
    """One warp-wide load instruction: up to lane_count simultaneous requests."""

    space: str
    requests: tuple[LaneRequest, ...]

    def __post_init__(self):
        if self.space not in (SHARED, GLOBAL):
            raise InvalidInputError(f"unknown address space {self.space!r}")


@dataclass(frozen=True)
class AccessPattern:
    """A sequence of access phases against one linear layout extent."""

    phases: tuple[AccessPhase, ...]
    extent_bytes: int


@dataclass(frozen=True)
class LayoutReport:
    transactions: int
    bank_conflicts: int
    useful_bits: int
    moved_bits: int

    @property
    def utilization(self) -> float:
        return self.useful_bits / self.moved_bits

    def to_dict(self) -> dict:
        return {
            "transactions": self.transactions,
            "bank_conflicts": self.bank_conflicts,
            "useful_bits": self.useful_bits,
            "moved_bits": self.moved_bits,
            "utilization": self.utilization,
        }


def _lane_words(req: LaneRequest, word_bytes: int) -> range:
    first = req.byte_offset // word_bytes
    last = (req.byte_offset + req.byte_length - 1) // word_bytes
    return range(first, last + 1)


def simulate(pattern: AccessPattern, model: MemModel = MemModel()) -> LayoutReport:
    """Run the access pattern through the bank/segment model."""
    transactions = 0
    conflicts = 0
    useful = 0
    moved = 0
    for phase in pattern.phases:
        if len(phase.requests) > model.lane_count:
            raise InvalidInputError(
                f"phase has {len(phase.requests)} lanes, model allows {model.lane_count}"
            )
        for req in phase.requests:
            if req.byte_offset + req.byte_length > pattern.extent_bytes:
                raise BoundsError(
                    f"lane {req.lane} reads [{req.byte_offset}, "
                    f"{req.byte_offset + req.byte_length}) beyond extent "
                    f"{pattern.extent_bytes}"
                )
            useful += req.useful_bits

        if phase.space == GLOBAL:
            segments = set()
            for req in phase.requests:
                first = req.byte_offset // model.transaction_bytes
                last = (req.byte_offset + req.byte_length - 1) // model.transaction_bytes
                segments.update(range(first, last + 1))
            transactions += len(segments)
            moved += len(segments) * model.transaction_bytes * 8
            continue

        wb = model.bank_width_bytes
        # Lanes read whole bank-width words; a byte-tight tail still moves
        # its full word.
        lane_word_lists = [list(_lane_words(req, wb)) for req in phase.requests]
        moved += sum(len(words) for words in lane_word_lists) * model.bank_width_bits
        rounds = max((len(w) for w in lane_word_lists), default=0)
        for r in range(rounds):
            rows_by_bank: dict[int, set[int]] = {}
            for words in lane_word_lists:
                if r < len(words):
                    word = words[r]
                    rows_by_bank.setdefault(word % model.bank_count, set()).add(
                        word // model.bank_count
                    )
            replays = sum(len(rows) - 1 for rows in rows_by_bank.values())
            conflicts += replays
            transactions += 1 + replays
    return LayoutReport(
        transactions=transactions,
        bank_conflicts=conflicts,
        useful_bits=useful,
        moved_bits=moved,
    )


# ---------------------------------------------------------------------------
# pattern generators
# ---------------------------------------------------------------------------


def _phased(space: str, requests: list[LaneRequest], lane_count: int) -> list[AccessPhase]:
    return [
        AccessPhase(space=space, requests=tuple(requests[i : i + lane_count]))
        for i in range(0, len(requests), lane_count)
    ]


def naive_layout_pattern(bits: int, rows: int, cols: int, lane_count: int = 32) -> AccessPattern:
    """Row-major tightly-bit-packed layout, two consecutive elements per lane.

    Lane i's pair starts at bit 2*i*bits, so for widths that do not divide
    the 32-bit word some lanes straddle a word boundary and move two words
    for one pair.
    """
    if bits not in (4, 6, 8, 16):
        raise ConfigError(f"unsupported element width {bits}, expected 4/6/8/16")
    n_elems = rows * cols
    if n_elems < 2:
        raise ConfigError("need at least one element pair")
    requests = []
    for i in range(n_elems // 2):
        bit_lo = 2 * i * bits
        bit_hi = bit_lo + 2 * bits
        lo_byte = bit_lo // 8
        hi_byte = (bit_hi - 1) // 8
        requests.append(
            LaneRequest(
                lane=i % lane_count,
                byte_offset=lo_byte,
                byte_length=hi_byte - lo_byte + 1,
                useful_bits=2 * bits,
            )
        )
    extent = -(-(n_elems * bits) // 32) * 4
    return AccessPattern(
        phases=tuple(_phased(SHARED, requests, lane_count)), extent_bytes=extent
    )


def chunked_layout_pattern(cfg: PackConfig, bits: int, bm: int, bk: int) -> AccessPattern:
    """Lane address map of the chunked bit-packed layout, both load stages.

    The layout [bk/chunk_k, bm/chunk_m, bits, chunk_m, chunk_k] is a dense
    bit array, so the global-to-shared stage (16 bytes per lane) and the
    shared-to-register stage (4 bytes per lane) both walk consecutive
    addresses: lane i of a phase always reads offset i * granularity.
    """
    if bk % cfg.chunk_k or bm % cfg.chunk_m:
        raise ConfigError(
            f"dims (bm={bm}, bk={bk}) must be multiples of the chunk "
            f"({cfg.chunk_m} x {cfg.chunk_k})"
        )
    total_bits = bm * bk * bits
    total_bytes = total_bits // 8
    lanes = 32

    def stage(granularity: int) -> list[AccessPhase]:
        reqs = [
            LaneRequest(
                lane=(off // granularity) % lanes,
                byte_offset=off,
                byte_length=granularity,
                useful_bits=granularity * 8,
            )
            for off in range(0, total_bytes, granularity)
        ]
        return _phased(SHARED if granularity == 4 else GLOBAL, reqs, lanes)

    return AccessPattern(
        phases=tuple(stage(16) + stage(4)), extent_bytes=total_bytes
    )


def golden_fp16_pattern(lane_count: int = 32) -> AccessPattern:
    """Aligned half-precision loads: two 16-bit elements fill each lane's word."""
    reqs = [LaneRequest(lane=i, byte_offset=4 * i, byte_length=4, useful_bits=32) for i in range(lane_count)]
    return AccessPattern(
        phases=(AccessPhase(space=SHARED, requests=tuple(reqs)),),
        extent_bytes=4 * lane_count,
    )


def golden_naive6_pattern(lane_count: int = 32) -> AccessPattern:
    """Each lane pulls one 32-bit word for a 12-bit element pair."""
    reqs = [LaneRequest(lane=i, byte_offset=4 * i, byte_length=2, useful_bits=12) for i in range(lane_count)]
    return AccessPattern(
        phases=(AccessPhase(space=SHARED, requests=tuple(reqs)),),
        extent_bytes=4 * lane_count,
    )


def golden_naive6_straddle_pattern(lane_count: int = 32) -> AccessPattern:
    """Worst case: every lane's 12-bit pair spans a word boundary (two words moved)."""
    reqs = [
        LaneRequest(lane=i, byte_offset=4 * i + 3, byte_length=2, useful_bits=12)
        for i in range(lane_count)
    ]
    return AccessPattern(
        phases=(AccessPhase(space=SHARED, requests=tuple(reqs)),),
        extent_bytes=4 * (lane_count + 1),
    )


#: The three canonical patterns and their exact expected utilizations.
GOLDEN_CASES = (
    ("fp16_aligned", golden_fp16_pattern, 1.0),
    ("naive6", golden_naive6_pattern, 0.375),
    ("naive6_straddle", golden_naive6_straddle_pattern, 0.1875),
)


def golden_reports(model: MemModel = MemModel()) -> list[dict]:
    """Simulate the canonical cases; each entry carries pass/fail vs expected."""
    out = []
    for name, make, expected in GOLDEN_CASES:
        report = simulate(make(), model)
        out.append(
            {
                "name": name,
                "expected_utilization": expected,
                "report": report.to_dict(),
                "ok": report.utilization == expected,
            }
        )
    return out
