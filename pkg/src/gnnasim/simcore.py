"""End-to-end cycle and traffic simulation of a layer over a tiled graph.

Values never come from the timing model: the functional engine computes
the layer output in canonical order, and this module independently walks
the tile schedule to charge cycles, DRAM traffic, and cache behavior.

Timing composition per non-empty tile: source batches are
feature-extracted one after another while the ring aggregates the
previous batch (software pipeline); each batch then rotates once per
destination window holding edges for it.  The update stage for a
destination interval runs right after the interval's last aggregation.
DRAM reads happen on interval acquisition, writes on release (column
traversal) or after every tile (row traversal), matching the analytic
I/O table; a perfect next-tile prefetcher hides transfer cycles behind
the previous tile's compute.
"""

from __future__ import annotations

import csv
import json
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import schedule as sched
from .errors import CapacityError, ConfigError
from .graph import Graph, TileGrid, grid_partition, interval_index
from .model import (
    Aggregator,
    LayerSpec,
    ModelKind,
    PropertyMatrix,
    StageOrder,
    edge_program,
    forward_layer,
)


@dataclass
class SimConfig:
    """Hardware parameters; defaults follow the reference design point
    (128x16 array, 64KB degree-aware vertex cache, 256GB/s at 1GHz)."""

    rows: int = 128
    cols: int = 16
    rf_words: int = 64
    davc_bytes: int = 65536
    davc_static_fraction: float = 1.0
    davc_line_words: int | None = None  # None: one accumulator vector per line
    davc_enabled: bool = True
    result_bank_bytes: int = 4 * 1024 * 1024
    dram_bandwidth_bytes_per_cycle: int = 256
    dram_latency_cycles: int = 100
    element_bytes: int = 4
    prefetch_enabled: bool = True
    edge_reorganize: bool = True

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("array dims must be >= 1")
        if not 0.0 <= self.davc_static_fraction <= 1.0:
            raise ConfigError("davc_static_fraction must be in [0, 1]")
        if self.element_bytes < 1 or self.dram_bandwidth_bytes_per_cycle < 1:
            raise ConfigError("byte sizes must be >= 1")


@dataclass
class Plan:
    """Resolved schedule for one layer."""

    order: StageOrder
    tiles: sched.TileOrder


@dataclass
class DavcState:
    """Degree-aware vertex cache: a static region pinned to the
    highest-in-degree vertices plus an LRU region over the remainder."""

    lines: int
    static_mask: np.ndarray
    dynamic_capacity: int
    dynamic: OrderedDict = field(default_factory=OrderedDict)
    hits: int = 0
    misses: int = 0


def davc_init(cfg: SimConfig, in_degree: np.ndarray, line_words: int) -> DavcState:
    n = in_degree.shape[0]
    line_bytes = max(1, line_words) * cfg.element_bytes
    lines = cfg.davc_bytes // line_bytes
    static_lines = int(cfg.davc_static_fraction * lines)
    mask = np.zeros(n, dtype=bool)
    if static_lines > 0:
        order = np.lexsort((np.arange(n), -in_degree))  # degree desc, id asc
        mask[order[:min(static_lines, n)]] = True
    return DavcState(lines, mask, max(0, lines - static_lines))


def davc_access(state: DavcState, dst: int) -> bool:
    """One destination lookup; returns True on hit and updates LRU state."""
    if state.static_mask[dst]:
        state.hits += 1
        return True
    if state.dynamic_capacity == 0:
        state.misses += 1
        return False
    if dst in state.dynamic:
        state.dynamic.move_to_end(dst)
        state.hits += 1
        return True
    state.misses += 1
    state.dynamic[dst] = True
    if len(state.dynamic) > state.dynamic_capacity:
        state.dynamic.popitem(last=False)
    return False


def _davc_trace(state: DavcState, dst_stream: np.ndarray) -> None:
    if state.dynamic_capacity == 0:
        hits = int(state.static_mask[dst_stream].sum())
        state.hits += hits
        state.misses += dst_stream.shape[0] - hits
        return
    for dst in dst_stream:
        davc_access(state, int(dst))


@dataclass
class SimStats:
    cycles_feature: int = 0
    cycles_aggregate: int = 0
    cycles_update: int = 0
    cycles_fill: int = 0
    mem_stall_cycles: int = 0
    compute_cycles: int = 0
    cycles_total: int = 0
    dram_read_bytes: int = 0
    dram_write_bytes: int = 0
    analytic_read_words: int = 0
    analytic_write_words: int = 0
    davc_hits: int = 0
    davc_misses: int = 0
    pe_busy_cycles: int = 0
    feature_busy_lanes: int = 0
    utilization: float = 0.0
    feature_utilization: float = 0.0
    edges_consumed: int = 0
    events: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["events"] = dict(self.events)
        return out


def _update_matmuls(layer: LayerSpec) -> list[tuple[int, int]]:
    """(in_dim, out_dim) dense transforms the update stage performs."""
    f, h = layer.f, layer.h
    if layer.kind is ModelKind.GCN:
        return []
    if layer.kind is ModelKind.GS_POOL:
        return [(h + f, h)]
    if layer.kind is ModelKind.RGCN:
        return [(f, h)] * (layer.num_relations + 1)
    if layer.kind is ModelKind.GATED_GCN:
        return [(f, h)]
    mm = [(f, h)] + [(h, h)] * 6
    if f != h:
        mm.append((f, h))
    return mm


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass
class _TileTiming:
    pipeline: int
    feature: int
    aggregate: int
    busy_feature: int
    busy_aggregate: int
    edges: int
    a_first_window_end: int | None  # offset within tile, interval's window 0


def _tile_timing(
    e_src: np.ndarray,
    e_dst: np.ndarray,
    lo_i: int,
    size_i: int,
    lo_j: int,
    layer: LayerSpec,
    order: StageOrder,
    cfg: SimConfig,
    want_first_window: bool,
) -> _TileTiming:
    """Pipeline cycles for one tile; edges must be in (batch, dst, src) order."""
    r, c = cfg.rows, cfg.cols
    f, h = layer.f, layer.h
    batches = _ceil_div(size_i, r)
    batch = (e_src - lo_i) // r
    window = (e_dst - lo_j) // r
    row = e_dst % r
    slot = (e_src - lo_i) % r
    offset = (slot - row) % r

    # rotations per (batch, dst) run, then max per (batch, window)
    group_change = np.empty(e_src.shape[0], dtype=bool)
    group_change[0] = True
    group_change[1:] = (batch[1:] != batch[:-1]) | (e_dst[1:] != e_dst[:-1])
    group_id = np.cumsum(group_change) - 1
    n_groups = int(group_id[-1]) + 1
    if cfg.edge_reorganize:
        # offset-sorted with duplicates round-robined: rotations equal the
        # max multiplicity of one offset within the bank
        key = group_id * r + offset
        uniq_keys, counts = np.unique(key, return_counts=True)
        rot = np.ones(n_groups, dtype=np.int64)
        np.maximum.at(rot, uniq_keys // r, counts)
    else:
        rot = np.ones(n_groups, dtype=np.int64)
        same = ~group_change[1:]
        noninc = offset[1:] <= offset[:-1]
        bumps = np.bincount(group_id[1:][same & noninc], minlength=n_groups)
        rot += bumps

    first_of_group = np.flatnonzero(group_change)
    group_batch = batch[first_of_group]
    group_window = window[first_of_group]
    n_windows = int(group_window.max()) + 1 if n_groups else 0
    bw_rot = np.zeros((batches, n_windows), dtype=np.int64)
    np.maximum.at(bw_rot, (group_batch, group_window), rot)

    feat_per_batch = 0 if order is StageOrder.AFU else f * _ceil_div(h, c)
    agg_per_batch = (bw_rot.sum(axis=1) * r).tolist()

    # software pipeline: batch b+1 features overlap batch b aggregation
    start = [0] * (batches + 1)
    start[0] = feat_per_batch  # fill of the first batch
    for b in range(batches):
        nxt = feat_per_batch if b + 1 < batches else 0
        start[b + 1] = start[b] + max(agg_per_batch[b], nxt)
    pipeline = start[batches]

    a_first = None
    if want_first_window and n_windows > 0:
        for b in range(batches - 1, -1, -1):
            if bw_rot[b, 0] > 0:
                a_first = start[b] + int(bw_rot[b, 0]) * r
                break

    rows_used = [min(r, size_i - b * r) for b in range(batches)]
    busy_feature = 0 if order is StageOrder.AFU else sum(rows_used) * f * h
    busy_aggregate = e_src.shape[0] * min(h, c)
    return _TileTiming(
        pipeline=pipeline,
        feature=feat_per_batch * batches,
        aggregate=int(sum(agg_per_batch)),
        busy_feature=busy_feature,
        busy_aggregate=busy_aggregate,
        edges=int(e_src.shape[0]),
        a_first_window_end=a_first,
    )


def simulate_layer(
    g: Graph,
    tiles: TileGrid,
    layer: LayerSpec,
    plan: Plan,
    cfg: SimConfig,
    props: PropertyMatrix,
) -> tuple[PropertyMatrix, SimStats]:
    """Run one layer, returning the functional output and timing stats.

    The output is exactly ``forward_layer``'s result; the stats come from
    replaying the plan's tile schedule against the cycle and traffic
    models.  Raises ``CapacityError`` when one interval's accumulators
    exceed the result banks.
    """
    out = forward_layer(layer, props, g, plan.order)

    r, c, eb = cfg.rows, cfg.cols, cfg.element_bytes
    f, h = layer.f, layer.h
    acc_dim = f if plan.order is StageOrder.AFU else h
    q = tiles.q
    max_interval = max(iv.size for iv in tiles.intervals)
    if max_interval * acc_dim * eb > cfg.result_bank_bytes:
        raise CapacityError(
            f"interval of {max_interval} vertices x {acc_dim} dims exceeds "
            f"result banks ({cfg.result_bank_bytes} bytes); increase q"
        )

    prog = edge_program(layer, g)
    bounds = tiles.interval_bounds()
    ti = interval_index(bounds, prog.src)
    tj = interval_index(bounds, prog.dst)
    flat = ti * q + tj
    grouped = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[grouped], np.arange(q * q), side="left")
    ends = np.searchsorted(flat[grouped], np.arange(q * q), side="right")

    stats = SimStats()
    davc = None
    if cfg.davc_enabled:
        line_words = cfg.davc_line_words if cfg.davc_line_words else acc_dim
        davc = davc_init(cfg, g.in_degree, line_words)

    nonempty = [
        (i, j)
        for (i, j) in plan.tiles.coords
        if ends[i * q + j] > starts[i * q + j]
    ]
    last_tile_for_interval: dict[int, tuple[int, int]] = {}
    for i, j in nonempty:
        last_tile_for_interval[j] = (i, j)

    upd_mms = _update_matmuls(layer)
    upd_matmul_cycles = sum(d_in * _ceil_div(d_out, c) for d_in, d_out in upd_mms)

    held_src: int | None = None
    held_dst: int | None = None
    clock = 0  # compute clock, cycle 0 = first tile's first feature cycle
    prev_compute = 0
    p00 = a00 = o00 = None

    for i, j in nonempty:
        k = i * q + j
        idx = grouped[starts[k]:ends[k]]
        e_src = prog.src[idx]
        e_dst = prog.dst[idx]
        iv_i, iv_j = tiles.intervals[i], tiles.intervals[j]
        # processing order inside the tile: source batch, then bank (dst), then src
        b_of = (e_src - iv_i.lo) // r
        proc = np.lexsort((e_src, e_dst, b_of))
        e_src, e_dst = e_src[proc], e_dst[proc]

        tile_read = 0
        if i != held_src:
            tile_read += iv_i.size * f * eb
            held_src = i
        if j != held_dst:
            tile_read += iv_j.size * acc_dim * eb
            held_dst = j

        timing = _tile_timing(
            e_src, e_dst, iv_i.lo, iv_i.size, iv_j.lo, layer, plan.order, cfg,
            want_first_window=(j == 0),
        )
        if p00 is None and i == 0 and plan.order is StageOrder.FAU:
            p00 = clock + f - 1
        if j == 0 and timing.a_first_window_end is not None:
            a00 = clock + timing.a_first_window_end - 1

        stats.cycles_feature += timing.feature
        stats.cycles_aggregate += timing.aggregate
        stats.feature_busy_lanes += timing.busy_feature
        stats.pe_busy_cycles += timing.busy_feature + timing.busy_aggregate
        stats.edges_consumed += timing.edges

        if davc is not None:
            _davc_trace(davc, e_dst)

        tile_write = 0
        if plan.tiles.major == "row":
            tile_write = iv_j.size * acc_dim * eb

        clock += timing.pipeline
        prev_compute_next = timing.pipeline

        if last_tile_for_interval.get(j) == (i, j):
            # destination interval complete: AFU feature pass, then update
            d_batches = _ceil_div(iv_j.size, r)
            d_rows = [min(r, iv_j.size - b * r) for b in range(d_batches)]
            extra = 0
            if plan.order is StageOrder.AFU:
                extra = d_batches * f * _ceil_div(h, c)
                stats.cycles_feature += extra
                stats.feature_busy_lanes += sum(d_rows) * f * h
                stats.pe_busy_cycles += sum(d_rows) * f * h
            upd = d_batches * (upd_matmul_cycles + 1)
            stats.cycles_update += upd
            stats.pe_busy_cycles += sum(
                d_in * d_out * sum(d_rows) for d_in, d_out in upd_mms
            ) + sum(d_rows) * min(h, c)
            if j == 0 and o00 is None:
                o00 = clock + extra + upd_matmul_cycles + 1 - 1
            clock += extra + upd
            prev_compute_next += extra + upd
            if plan.tiles.major == "column":
                tile_write += iv_j.size * h * eb

        stats.dram_read_bytes += tile_read
        stats.dram_write_bytes += tile_write
        xfer_bytes = tile_read + tile_write
        if xfer_bytes:
            xfer = _ceil_div(xfer_bytes, cfg.dram_bandwidth_bytes_per_cycle)
            if cfg.prefetch_enabled:
                stats.mem_stall_cycles += max(0, xfer - prev_compute)
            else:
                stats.mem_stall_cycles += cfg.dram_latency_cycles + xfer
        prev_compute = prev_compute_next

    stats.compute_cycles = clock
    stats.cycles_fill = r + c if nonempty else 0
    stats.cycles_total = stats.compute_cycles + stats.cycles_fill + stats.mem_stall_cycles
    if davc is not None:
        stats.davc_hits = davc.hits
        stats.davc_misses = davc.misses
    if stats.cycles_total:
        stats.utilization = stats.pe_busy_cycles / (stats.cycles_total * r * c)
    if stats.cycles_feature:
        stats.feature_utilization = stats.feature_busy_lanes / (
            stats.cycles_feature * r * c
        )
    # closed-form cross-check values, in physical words (exact when q | N
    # and every shard is non-empty); acc_dim generalizes the table to AFU
    per_interval = g.num_vertices // q
    if plan.tiles.major == "column":
        stats.analytic_read_words = ((q * q - q + 1) * f + q * acc_dim) * per_interval
        stats.analytic_write_words = q * h * per_interval
    else:
        stats.analytic_read_words = (q * f + (q * q - q + 1) * acc_dim) * per_interval
        stats.analytic_write_words = q * q * acc_dim * per_interval
    events = {}
    if p00 is not None:
        events["P(0,0)"] = p00
    if a00 is not None:
        events["A(0,0)"] = a00
    if o00 is not None:
        events["O(0,0)"] = o00
    stats.events = events
    return out, stats


def choose_q(n: int, acc_dims: list[int], cfg: SimConfig) -> int:
    """Smallest q whose intervals fit the result banks for every layer."""
    worst = max(acc_dims)
    for q in range(1, n + 1):
        if _ceil_div(n, q) * worst * cfg.element_bytes <= cfg.result_bank_bytes:
            return q
    raise CapacityError(
        f"no q in [1, {n}] fits {worst}-dim accumulators in the result banks"
    )


def resolve_plan(
    layer: LayerSpec,
    q: int,
    order_override: StageOrder | None = None,
    major_override: str | None = None,
    s_shape: bool = True,
) -> Plan:
    """DASR stage order plus adaptive column/row traversal, unless forced."""
    order = order_override or sched.dasr_decide(
        layer.f, layer.h, layer.aggregator, layer.kind
    )
    if major_override:
        major = major_override
    else:
        acc = layer.f if order is StageOrder.AFU else layer.h
        major = sched.io_cost(q, layer.f, acc).chosen
    return Plan(order, sched.tile_order(q, major, s_shape))


def run_report(
    g: Graph,
    layers: list[LayerSpec],
    cfg: SimConfig,
    props: PropertyMatrix,
    *,
    q: int | None = None,
    order_override: StageOrder | None = None,
    major_override: str | None = None,
    s_shape: bool = True,
    sweep: dict[str, list] | None = None,
) -> list[dict]:
    """One report row per (sweep point, layer); deterministic.

    Sweep keys are SimConfig field names or ``q``; the cross product of
    all value lists is executed in lexicographic key order.
    """
    points: list[dict] = [{}]
    if sweep:
        for key in sorted(sweep):
            points = [dict(p, **{key: v}) for p in points for v in sweep[key]]
    rows: list[dict] = []
    for point in points:
        point_cfg = replace(cfg, **{k: v for k, v in point.items() if k != "q"})
        point_q = point.get("q", q)
        if point_q is None:
            acc_dims = []
            for layer in layers:
                order = order_override or sched.dasr_decide(
                    layer.f, layer.h, layer.aggregator, layer.kind
                )
                acc_dims.append(layer.f if order is StageOrder.AFU else layer.h)
            point_q = choose_q(g.num_vertices, acc_dims, point_cfg)
        tiles = grid_partition(g, point_q)
        cur = props
        for li, layer in enumerate(layers):
            plan = resolve_plan(layer, point_q, order_override, major_override, s_shape)
            cur, stats = simulate_layer(g, tiles, layer, plan, point_cfg, cur)
            row = {
                "layer": li,
                "model": layer.kind.value,
                "f": layer.f,
                "h": layer.h,
                "aggregator": layer.aggregator.value,
                "order": plan.order.value,
                "tile_major": plan.tiles.major,
                "s_shape": plan.tiles.s_shape,
                "q": point_q,
                "rows": point_cfg.rows,
                "cols": point_cfg.cols,
                "davc_bytes": point_cfg.davc_bytes,
                "davc_static_fraction": point_cfg.davc_static_fraction,
                "prefetch_enabled": point_cfg.prefetch_enabled,
                "edge_reorganize": point_cfg.edge_reorganize,
            }
            row.update(stats.to_dict())
            hits, misses = stats.davc_hits, stats.davc_misses
            row["davc_hit_rate"] = hits / (hits + misses) if hits + misses else 0.0
            rows.append(row)
    return rows


def write_jsonl(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        open(path, "w").close()
        return
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, dict) else v for k, v in row.items()})
