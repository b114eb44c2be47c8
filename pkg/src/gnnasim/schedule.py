"""Analytic planning: stage reordering, op counts, tile scheduling cost.

These are closed-form, pure computations the run planner uses to pick a
stage order (feature-first vs aggregate-first), a tile traversal
(column vs row major, serpentine), and to cross-check the simulator's
memory traffic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .model import Aggregator, ModelKind, StageOrder


def dasr_decide(f: int, h: int, aggregator: Aggregator, model_kind: ModelKind) -> StageOrder:
    """Pick the stage order that minimizes aggregate work.

    Reordering is legal only when aggregation is a plain sum and the
    per-edge extraction is linear in the source property (GCN).  Then the
    aggregate stage costs E*H accumulations feature-first and E*F
    aggregate-first, so run feature extraction first when F > H and
    aggregation first when F < H (feature-first on ties).
    """
    if model_kind is not ModelKind.GCN or aggregator is not Aggregator.SUM:
        return StageOrder.FAU
    return StageOrder.AFU if f < h else StageOrder.FAU


def count_ops(n: int, e: int, f: int, h: int, order: StageOrder) -> tuple[int, int]:
    """(multiply-accumulates, aggregate accumulations) for one layer.

    The dense transform always costs N*F*H MACs regardless of order; the
    aggregation accumulates E vectors of the dimensionality it runs at.
    """
    mac = n * f * h
    accum = e * (h if order is StageOrder.FAU else f)
    return mac, accum


@dataclass(frozen=True)
class IoCostReport:
    """Vertex-property word counts for the two tile traversals.

    Counts are in interval-normalized units (multiply by the interval
    size N/Q for physical words).  ``chosen`` is column on ties.
    """

    q: int
    f: int
    h: int
    read_col: int
    write_col: int
    read_row: int
    write_row: int
    chosen: str

    @property
    def total_col(self) -> int:
        return self.read_col + self.write_col

    @property
    def total_row(self) -> int:
        return self.read_row + self.write_row


def io_cost(q: int, f: int, h: int) -> IoCostReport:
    """Exact traversal I/O: reads reuse the interval shared at each
    serpentine turn; column order writes each destination interval once,
    row order flushes partial accumulators after every tile."""
    if q < 1:
        raise ConfigError("q must be >= 1")
    read_col = (q * q - q + 1) * f + q * h
    write_col = q * h
    read_row = q * f + (q * q - q + 1) * h
    write_row = q * q * h
    chosen = "column" if read_col + write_col <= read_row + write_row else "row"
    return IoCostReport(q, f, h, read_col, write_col, read_row, write_row, chosen)


@dataclass(frozen=True)
class TileOrder:
    """A traversal of all QxQ shard coordinates."""

    coords: tuple[tuple[int, int], ...]
    major: str
    s_shape: bool


def tile_order(q: int, major: str = "column", s_shape: bool = True) -> TileOrder:
    """Enumerate shard coordinates (i=source interval, j=destination).

    Column major iterates j outer / i inner; row major the reverse.
    Serpentine mode flips the inner direction on alternate outer steps so
    consecutive tiles share an interval at each turn of the major axis.
    """
    if q < 1:
        raise ConfigError("q must be >= 1")
    if major not in ("column", "row"):
        raise ConfigError(f"unknown tile major {major!r}")
    coords = []
    for outer in range(q):
        inner = range(q)
        if s_shape and outer % 2 == 1:
            inner = range(q - 1, -1, -1)
        for k in inner:
            coords.append((k, outer) if major == "column" else (outer, k))
    return TileOrder(tuple(coords), major, s_shape)


@dataclass(frozen=True)
class MapStrategyReport:
    """Latency/bandwidth/utilization of a dense-transform mapping."""

    strategy: str
    latency_cycles: float
    bandwidth_words: int
    utilization: float


def map_strategy_metrics(
    strategy: str, n: int, f: int, h: int, r: int, c: int
) -> MapStrategyReport:
    """Closed forms for the three output-stationary mappings.

    All three take N*F*H/(R*C) cycles.  Vertex-stationary and
    vertex-feature-stationary mappings broadcast one operand (R*C+1 words
    per cycle) at full utilization; the hybrid mapping streams R+C words
    per cycle and pads the last weight slice, so its utilization is
    (H/C) / ceil(H/C) per weight-split pass.
    """
    if r < 1 or c < 1:
        raise ConfigError("array dims must be >= 1")
    key = strategy.lower()
    if key not in ("vs", "vfs", "hs"):
        raise ConfigError(f"unknown map strategy {strategy!r}")
    latency = n * f * h / (r * c)
    if key in ("vs", "vfs"):
        return MapStrategyReport(key, latency, r * c + 1, 1.0)
    slices = -(-h // c)
    return MapStrategyReport(key, latency, r + c, (h / c) / slices)
