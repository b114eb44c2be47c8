"""Directed multigraphs in COO form, plus grid tiling into intervals/shards.

Edges are stored as parallel numpy arrays sorted by (dst, src, relation).
That order is the canonical reduction order: every aggregation in the
engine walks edges in it, which is what makes fixed-point results
bit-exact across runs and across tilings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphInputError

# Recursive-quadrant edge generator defaults: heavy upper-left corner
# yields the power-law in-degree skew seen in real graphs.
RMAT_A = 0.57
RMAT_B = 0.19
RMAT_C = 0.19
RMAT_D = 0.05


@dataclass(frozen=True)
class Graph:
    """Immutable directed multigraph. Self-loops and duplicates allowed."""

    num_vertices: int
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray | None = None
    weight: np.ndarray | None = None
    in_degree: np.ndarray = field(default=None)  # type: ignore[assignment]
    out_degree: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def num_relations(self) -> int:
        if self.rel is None:
            return 1
        return int(self.rel.max()) + 1 if self.rel.size else 1

    def edge_list(self) -> list[tuple]:
        """Materialize edges as tuples (src, dst, rel, weight); small graphs only."""
        rel = self.rel if self.rel is not None else [None] * self.num_edges
        w = self.weight if self.weight is not None else [None] * self.num_edges
        return [
            (int(s), int(d), None if r is None else int(r), None if x is None else float(x))
            for s, d, r, x in zip(self.src, self.dst, rel, w)
        ]


def from_edges(
    num_vertices: int,
    src,
    dst,
    rel=None,
    weight=None,
) -> Graph:
    """Build a Graph: validate ids, sort canonically, compute degrees."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if num_vertices <= 0:
        raise GraphInputError("graph must have at least one vertex")
    if src.shape != dst.shape or src.ndim != 1:
        raise GraphInputError("src/dst arrays must be 1-D and equal length")
    if src.size:
        lo = min(src.min(), dst.min())
        hi = max(src.max(), dst.max())
        if lo < 0:
            raise GraphInputError("negative vertex id")
        if hi >= num_vertices:
            raise GraphInputError(
                f"vertex id {int(hi)} out of range for num_vertices={num_vertices}"
            )
    rel_arr = None if rel is None else np.asarray(rel, dtype=np.int64)
    w_arr = None if weight is None else np.asarray(weight, dtype=np.float64)
    if rel_arr is not None and rel_arr.size and rel_arr.min() < 0:
        raise GraphInputError("negative relation id")

    keys = [src, dst] if rel_arr is None else [rel_arr, src, dst]
    order = np.lexsort(keys)  # last key is primary -> (dst, src, rel)
    src = src[order]
    dst = dst[order]
    if rel_arr is not None:
        rel_arr = rel_arr[order]
    if w_arr is not None:
        w_arr = w_arr[order]

    in_deg = np.bincount(dst, minlength=num_vertices).astype(np.int64)
    out_deg = np.bincount(src, minlength=num_vertices).astype(np.int64)
    return Graph(num_vertices, src, dst, rel_arr, w_arr, in_deg, out_deg)


def load_edge_list(path, num_vertices: int | None = None) -> Graph:
    """Load whitespace-separated COO text: ``src dst [relation] [weight]``.

    Lines starting with ``#`` and blank lines are ignored.  Column count
    must be consistent across the file.  When ``num_vertices`` is None it
    is inferred as max id + 1.
    """
    srcs: list[int] = []
    dsts: list[int] = []
    rels: list[int] = []
    weights: list[float] = []
    ncols = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) < 2 or len(parts) > 4:
                raise GraphInputError(f"{path}: malformed line {lineno}: {text!r}")
            if ncols is None:
                ncols = len(parts)
            elif len(parts) != ncols:
                raise GraphInputError(
                    f"{path}: line {lineno} has {len(parts)} columns, expected {ncols}"
                )
            try:
                s = int(parts[0])
                d = int(parts[1])
                if len(parts) >= 3:
                    rels.append(int(parts[2]))
                if len(parts) == 4:
                    weights.append(float(parts[3]))
            except ValueError as exc:
                raise GraphInputError(
                    f"{path}: malformed line {lineno}: {text!r}"
                ) from exc
            if s < 0 or d < 0:
                raise GraphInputError(f"{path}: negative id at line {lineno}")
            srcs.append(s)
            dsts.append(d)
    if not srcs:
        raise GraphInputError(f"{path}: no edges found")
    n = num_vertices
    if n is None:
        n = int(max(max(srcs), max(dsts))) + 1
    try:
        return from_edges(
            n,
            srcs,
            dsts,
            rels if rels else None,
            weights if weights else None,
        )
    except GraphInputError as exc:
        raise GraphInputError(f"{path}: {exc}") from exc


def generate_synthetic(n: int, e: int, seed: int) -> Graph:
    """Recursive-quadrant random graph with power-law in-degree skew.

    Draws (src, dst) pairs by descending a 2**bits square, picking a
    quadrant per level with probabilities (0.57, 0.19, 0.19, 0.05).
    Duplicate (src, dst) pairs are discarded and redrawn so the edge
    count is exact; self-loops are kept.  Deterministic for fixed seed.
    """
    if n < 2:
        raise GraphInputError("synthetic graph needs n >= 2")
    if e < 1:
        raise GraphInputError("synthetic graph needs e >= 1")
    if e > n * n:
        raise GraphInputError(f"cannot place {e} distinct edges in an {n}x{n} grid")
    rng = np.random.default_rng(seed)
    bits = max(1, int(np.ceil(np.log2(n))))
    cum = np.cumsum([RMAT_A, RMAT_B, RMAT_C, RMAT_D])
    seen: set[int] = set()
    srcs: list[int] = []
    dsts: list[int] = []
    while len(srcs) < e:
        m = max(1024, 2 * (e - len(srcs)))
        u = rng.random((m, bits))
        quad = np.searchsorted(cum, u, side="right")  # 0..3 per level
        sbits = (quad >> 1) & 1
        dbits = quad & 1
        weights_pow2 = 1 << np.arange(bits - 1, -1, -1, dtype=np.int64)
        cand_s = sbits @ weights_pow2
        cand_d = dbits @ weights_pow2
        valid = (cand_s < n) & (cand_d < n)
        for s, d in zip(cand_s[valid], cand_d[valid]):
            key = int(s) * n + int(d)
            if key in seen:
                continue
            seen.add(key)
            srcs.append(int(s))
            dsts.append(int(d))
            if len(srcs) == e:
                break
    return from_edges(n, srcs, dsts)


@dataclass(frozen=True)
class Interval:
    """Contiguous vertex-id range [lo, hi), one of Q partition blocks."""

    index: int
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo


@dataclass(frozen=True)
class TileGrid:
    """Q intervals and the QxQ edge shards they induce.

    ``shards[i][j]`` holds indices into the graph's canonical edge arrays
    for edges with src in interval i and dst in interval j, preserving
    canonical order.
    """

    q: int
    intervals: tuple[Interval, ...]
    shards: tuple[tuple[np.ndarray, ...], ...]

    def shard(self, i: int, j: int) -> np.ndarray:
        return self.shards[i][j]

    def interval_bounds(self) -> np.ndarray:
        """Interval lower bounds plus final hi, for searchsorted lookups."""
        lows = [iv.lo for iv in self.intervals]
        lows.append(self.intervals[-1].hi)
        return np.asarray(lows, dtype=np.int64)


def make_intervals(num_vertices: int, q: int) -> tuple[Interval, ...]:
    base = num_vertices // q
    extra = num_vertices % q
    out = []
    lo = 0
    for i in range(q):
        hi = lo + base + (1 if i < extra else 0)
        out.append(Interval(i, lo, hi))
        lo = hi
    return tuple(out)


def interval_index(bounds: np.ndarray, vertex_ids: np.ndarray) -> np.ndarray:
    """Map vertex ids to interval indices given interval_bounds()."""
    return np.searchsorted(bounds, vertex_ids, side="right") - 1


def grid_partition(g: Graph, q: int) -> TileGrid:
    """Partition vertices into Q contiguous intervals and edges into QxQ shards."""
    if q < 1:
        raise GraphInputError("partition count q must be >= 1")
    if q > g.num_vertices:
        raise GraphInputError(
            f"partition count q={q} exceeds vertex count {g.num_vertices}"
        )
    intervals = make_intervals(g.num_vertices, q)
    bounds = np.asarray([iv.lo for iv in intervals] + [g.num_vertices], dtype=np.int64)
    si = interval_index(bounds, g.src)
    di = interval_index(bounds, g.dst)
    flat = si * q + di
    shards: list[list[np.ndarray]] = [[None] * q for _ in range(q)]  # type: ignore[list-item]
    order = np.argsort(flat, kind="stable")  # canonical order kept within shards
    sorted_flat = flat[order]
    starts = np.searchsorted(sorted_flat, np.arange(q * q, dtype=np.int64), side="left")
    ends = np.searchsorted(sorted_flat, np.arange(q * q, dtype=np.int64), side="right")
    for i in range(q):
        for j in range(q):
            k = i * q + j
            idx = order[starts[k]:ends[k]]
            shards[i][j] = np.sort(idx)
    return TileGrid(q, intervals, tuple(tuple(row) for row in shards))
