"""Functional semantics of the three-stage edge-centric layer engine.

A layer runs as feature extraction (per-vertex or per-edge transform),
aggregate (per-destination reduction along edges), and update (per-vertex
finalization).  Five model kinds are supported: GCN, GS-Pool, R-GCN,
Gated-GCN, and GRN.  Everything runs either in float64 or in saturating
Q16.16 fixed point; fixed-point reductions always walk the canonical
(dst, src) edge order, so outputs are bit-identical across runs.

``dense_oracle`` recomputes a layer with dense adjacency matrices and
plain loops; it shares no reduction machinery with the edge-centric path
and is the reference the engine is validated against.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import fixed32 as fx
from .errors import ConfigError, GraphInputError
from .graph import Graph

ORACLE_MAX_VERTICES = 4096


class ModelKind(enum.Enum):
    GCN = "gcn"
    GS_POOL = "gs-pool"
    RGCN = "r-gcn"
    GATED_GCN = "gated-gcn"
    GRN = "grn"


class Aggregator(enum.Enum):
    SUM = "sum"
    MAX = "max"
    MEAN = "mean"


class StageOrder(enum.Enum):
    """FAU = feature extraction, aggregate, update. AFU swaps the first two."""

    FAU = "fau"
    AFU = "afu"


# Default aggregator per model kind; GS-Pool may be configured to MEAN.
DEFAULT_AGGREGATOR = {
    ModelKind.GCN: Aggregator.SUM,
    ModelKind.GS_POOL: Aggregator.MAX,
    ModelKind.RGCN: Aggregator.SUM,
    ModelKind.GATED_GCN: Aggregator.SUM,
    ModelKind.GRN: Aggregator.SUM,
}


@dataclass
class PropertyMatrix:
    """N x D vertex properties; float64 or raw Q16.16 int32."""

    data: np.ndarray
    fixed: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ConfigError("property matrix must be 2-D")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_float(cls, values, fixed: bool = False) -> "PropertyMatrix":
        values = np.asarray(values, dtype=np.float64)
        if fixed:
            return cls(fx.encode(values), True)
        return cls(values, False)

    @classmethod
    def zeros(cls, rows: int, cols: int, fixed: bool = False) -> "PropertyMatrix":
        dtype = np.int32 if fixed else np.float64
        return cls(np.zeros((rows, cols), dtype=dtype), fixed)

    def to_float(self) -> np.ndarray:
        return fx.decode(self.data) if self.fixed else np.array(self.data, dtype=np.float64)


@dataclass
class GruWeights:
    """Gate parameters for the recurrent update; all H x H (biases H)."""

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray


@dataclass
class WeightSet:
    """Learned parameters for one layer.

    w_feature is the main F x H transform (for R-GCN a stack of per-relation
    matrices, with w_self as the separate self-connection weight).  w_pool /
    b_pool are the GS-Pool pre-aggregation transform, w_update its concat
    weight ((H+F) x H).  w_h / w_c are the Gated-GCN gate weights (F x F)
    and w_update its output transform (F x H).  gru carries the GRN gate
    weights; w_state projects the previous hidden state to H when F != H.
    Row-vector convention throughout: properties multiply weights on the
    right (X @ W).
    """

    w_feature: np.ndarray | None = None
    w_relations: np.ndarray | None = None  # (R, F, H) stack, R-GCN only
    w_self: np.ndarray | None = None
    w_pool: np.ndarray | None = None
    b_pool: np.ndarray | None = None
    w_update: np.ndarray | None = None
    w_h: np.ndarray | None = None
    w_c: np.ndarray | None = None
    bias: np.ndarray | None = None
    gru: GruWeights | None = None
    w_state: np.ndarray | None = None


@dataclass
class LayerSpec:
    """One GNN layer: model kind, dims, aggregator, weights."""

    kind: ModelKind
    f: int
    h: int
    weights: WeightSet
    aggregator: Aggregator | None = None
    num_relations: int = 1

    def __post_init__(self):
        if self.aggregator is None:
            self.aggregator = DEFAULT_AGGREGATOR[self.kind]
        allowed = {DEFAULT_AGGREGATOR[self.kind]}
        if self.kind is ModelKind.GS_POOL:
            allowed.add(Aggregator.MEAN)
        if self.aggregator not in allowed:
            raise ConfigError(
                f"{self.kind.value} does not support aggregator {self.aggregator.value}"
            )
        if self.kind is ModelKind.RGCN and self.num_relations < 1:
            raise ConfigError("r-gcn needs num_relations >= 1")
        _check_shapes(self)


def _shape(name, arr, expect):
    if arr is None:
        raise ConfigError(f"missing weight {name}")
    if tuple(arr.shape) != expect:
        raise ConfigError(f"weight {name} has shape {arr.shape}, expected {expect}")


def _check_shapes(layer: "LayerSpec") -> None:
    w = layer.weights
    f, h = layer.f, layer.h
    kind = layer.kind
    if kind is ModelKind.GCN:
        _shape("w_feature", w.w_feature, (f, h))
    elif kind is ModelKind.GS_POOL:
        _shape("w_pool", w.w_pool, (f, h))
        _shape("b_pool", w.b_pool, (h,))
        _shape("w_update", w.w_update, (h + f, h))
    elif kind is ModelKind.RGCN:
        _shape("w_relations", w.w_relations, (layer.num_relations, f, h))
        _shape("w_self", w.w_self, (f, h))
    elif kind is ModelKind.GATED_GCN:
        _shape("w_h", w.w_h, (f, f))
        _shape("w_c", w.w_c, (f, f))
        _shape("w_update", w.w_update, (f, h))
    elif kind is ModelKind.GRN:
        _shape("w_feature", w.w_feature, (f, h))
        g = w.gru
        if g is None:
            raise ConfigError("missing gru gate weights")
        for name in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h"):
            _shape(f"gru.{name}", getattr(g, name), (h, h))
        for name in ("b_z", "b_r", "b_h"):
            _shape(f"gru.{name}", getattr(g, name), (h,))
        if f != h:
            _shape("w_state", w.w_state, (f, h))
    if w.bias is not None and w.bias.shape != (h,):
        raise ConfigError(f"bias has shape {w.bias.shape}, expected {(h,)}")


def seeded_weights(
    kind: ModelKind, f: int, h: int, seed: int, num_relations: int = 1
) -> WeightSet:
    """Deterministic uniform weights in +/-1/sqrt(F), for runs without weight files."""
    rng = np.random.default_rng(seed)

    def mat(rows, cols, dim=None):
        bound = 1.0 / np.sqrt(dim if dim is not None else rows)
        return rng.uniform(-bound, bound, size=(rows, cols))

    def vec(n):
        return rng.uniform(-0.1, 0.1, size=n)

    if kind is ModelKind.GCN:
        return WeightSet(w_feature=mat(f, h))
    if kind is ModelKind.GS_POOL:
        return WeightSet(w_pool=mat(f, h), b_pool=vec(h), w_update=mat(h + f, h))
    if kind is ModelKind.RGCN:
        rel = np.stack([mat(f, h) for _ in range(num_relations)])
        return WeightSet(w_relations=rel, w_self=mat(f, h))
    if kind is ModelKind.GATED_GCN:
        return WeightSet(w_h=mat(f, f), w_c=mat(f, f), w_update=mat(f, h))
    gru = GruWeights(
        w_z=mat(h, h), u_z=mat(h, h), b_z=vec(h),
        w_r=mat(h, h), u_r=mat(h, h), b_r=vec(h),
        w_h=mat(h, h), u_h=mat(h, h), b_h=vec(h),
    )
    return WeightSet(
        w_feature=mat(f, h),
        gru=gru,
        w_state=None if f == h else mat(f, h),
    )


# ---------------------------------------------------------------------------
# dtype-dispatching primitives
# ---------------------------------------------------------------------------


def _matmul(x: np.ndarray, w: np.ndarray, fixed: bool) -> np.ndarray:
    if fixed:
        return fx.sat_matmul(x, fx.encode(w))
    return x @ w


def _add_bias(x: np.ndarray, b: np.ndarray | None, fixed: bool) -> np.ndarray:
    if b is None:
        return x
    if fixed:
        return fx.sat_add(x, np.broadcast_to(fx.encode(b), x.shape))
    return x + b


def _relu(x: np.ndarray, fixed: bool) -> np.ndarray:
    return fx.relu(x) if fixed else np.maximum(x, 0.0)


def _sigmoid(x: np.ndarray, fixed: bool) -> np.ndarray:
    return fx.sigmoid(x) if fixed else 1.0 / (1.0 + np.exp(-x))


def _tanh(x: np.ndarray, fixed: bool) -> np.ndarray:
    return fx.tanh(x) if fixed else np.tanh(x)


def _scale_rows(values: np.ndarray, coef: np.ndarray, fixed: bool) -> np.ndarray:
    if fixed:
        return fx.sat_mul(values, fx.encode(coef)[:, None])
    return values * coef[:, None]


def _ewise_mul(a: np.ndarray, b: np.ndarray, fixed: bool) -> np.ndarray:
    return fx.sat_mul(a, b) if fixed else a * b


def _segment_starts(dst_sorted: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-destination segment starts over edges sorted by dst."""
    starts = np.searchsorted(dst_sorted, np.arange(n, dtype=np.int64), side="left")
    return starts, np.append(starts, dst_sorted.shape[0])


def _segment_sum(values: np.ndarray, dst_sorted: np.ndarray, n: int, fixed: bool) -> np.ndarray:
    starts, bounds = _segment_starts(dst_sorted, n)
    if fixed:
        return fx.sat_segment_sum(values, starts, n)
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    present = np.flatnonzero(np.diff(bounds) > 0)
    if present.size:
        sums = np.add.reduceat(values, starts[present], axis=0)
        out[present] = sums
    return out


def _segment_max(
    values: np.ndarray, dst_sorted: np.ndarray, init: np.ndarray, fixed: bool
) -> np.ndarray:
    n = init.shape[0]
    starts, bounds = _segment_starts(dst_sorted, n)
    out = np.array(init, copy=True)
    present = np.flatnonzero(np.diff(bounds) > 0)
    if present.size:
        maxes = np.maximum.reduceat(values, starts[present], axis=0)
        out[present] = np.maximum(out[present], maxes)
    return out


# ---------------------------------------------------------------------------
# edge preparation
# ---------------------------------------------------------------------------


@dataclass
class EdgeProgram:
    """Edges as the aggregate stage consumes them, in canonical order.

    For GCN this includes one implicit self-loop per vertex; ``coef`` holds
    the per-edge normalization factor (None means 1).  ``rel`` is set for
    R-GCN only.
    """

    src: np.ndarray
    dst: np.ndarray
    coef: np.ndarray | None = None
    rel: np.ndarray | None = None

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])


def gcn_edge_norm(g: Graph) -> EdgeProgram:
    """Laplacian-style normalization with implicit self-loops.

    Adds one self-loop per vertex and returns, per edge (s -> d), the
    coefficient 1/sqrt((out_deg(s)+1) * (in_deg(d)+1)), i.e. degrees of
    the self-loop-augmented adjacency.
    """
    n = g.num_vertices
    loop = np.arange(n, dtype=np.int64)
    src = np.concatenate([g.src, loop])
    dst = np.concatenate([g.dst, loop])
    order = np.lexsort([src, dst])
    src = src[order]
    dst = dst[order]
    d_out = (g.out_degree + 1).astype(np.float64)
    d_in = (g.in_degree + 1).astype(np.float64)
    coef = 1.0 / np.sqrt(d_out[src] * d_in[dst])
    return EdgeProgram(src, dst, coef)


def rgcn_edge_norm(g: Graph, num_relations: int) -> EdgeProgram:
    """Per-edge coefficient 1/|in-neighbors of dst under the edge's relation|."""
    rel = g.rel
    if rel is None:
        rel = np.zeros(g.num_edges, dtype=np.int64)
    if rel.size and rel.max() >= num_relations:
        raise GraphInputError(
            f"edge relation {int(rel.max())} out of range for {num_relations} relations"
        )
    counts = np.zeros((g.num_vertices, num_relations), dtype=np.int64)
    np.add.at(counts, (g.dst, rel), 1)
    coef = 1.0 / counts[g.dst, rel]
    return EdgeProgram(g.src.copy(), g.dst.copy(), coef, rel.copy())


def edge_program(layer: LayerSpec, g: Graph) -> EdgeProgram:
    """The canonical edge stream a layer aggregates over."""
    if layer.kind is ModelKind.GCN:
        return gcn_edge_norm(g)
    if layer.kind is ModelKind.RGCN:
        return rgcn_edge_norm(g, layer.num_relations)
    return EdgeProgram(g.src.copy(), g.dst.copy())


# ---------------------------------------------------------------------------
# the three stages
# ---------------------------------------------------------------------------


@dataclass
class Messages:
    """Feature-extraction output, one logical message per program edge.

    Either ``vertex_values`` (indexed by edge src, scaled by ``program.coef``
    at aggregation) or explicit per-edge ``edge_values``.  ``max_init`` seeds
    max-aggregation with each destination's own extracted feature.
    """

    program: EdgeProgram
    vertex_values: np.ndarray | None = None
    edge_values: np.ndarray | None = None
    max_init: np.ndarray | None = None

    def gathered(self, fixed: bool) -> np.ndarray:
        """Per-edge message values in canonical order."""
        if self.edge_values is not None:
            return self.edge_values
        vals = self.vertex_values[self.program.src]
        if self.program.coef is not None:
            vals = _scale_rows(vals, self.program.coef, fixed)
        return vals


def feature_extraction(
    layer: LayerSpec, props: PropertyMatrix, g: Graph, order: StageOrder = StageOrder.FAU
) -> Messages:
    """Stage one: condense properties into messages.

    GCN under FAU transforms each vertex by w_feature (normalization is
    applied at aggregation); under AFU the raw property passes through and
    the transform runs after aggregation.  GS-Pool applies its pooling
    transform per vertex; R-GCN and GRN pass properties through (R-GCN
    scaled per edge by 1/c at aggregation); Gated-GCN computes per-edge
    gated messages from both endpoints.
    """
    if props.cols != layer.f:
        raise ConfigError(f"properties have {props.cols} dims, layer expects {layer.f}")
    x = props.data
    fixed = props.fixed
    prog = edge_program(layer, g)
    kind = layer.kind
    w = layer.weights
    if kind is ModelKind.GCN:
        if order is StageOrder.AFU:
            return Messages(prog, vertex_values=x)
        return Messages(prog, vertex_values=_matmul(x, w.w_feature, fixed))
    if kind is ModelKind.GS_POOL:
        pooled = _relu(
            _add_bias(_matmul(x, w.w_pool, fixed), w.b_pool, fixed), fixed
        )
        return Messages(prog, vertex_values=pooled, max_init=pooled)
    if kind is ModelKind.GATED_GCN:
        gate_dst = _matmul(x, w.w_h, fixed)
        gate_src = _matmul(x, w.w_c, fixed)
        gate = _sigmoid(
            fx.sat_add(gate_dst[prog.dst], gate_src[prog.src])
            if fixed
            else gate_dst[prog.dst] + gate_src[prog.src],
            fixed,
        )
        return Messages(prog, edge_values=_ewise_mul(gate, x[prog.src], fixed))
    # R-GCN and GRN: identity pass-through of the source property.
    return Messages(prog, vertex_values=x)


def aggregate(layer: LayerSpec, messages: Messages, g: Graph):
    """Stage two: reduce messages per destination.

    Sum and mean start from zero; vertices without incoming edges keep the
    identity (mean divides by in-degree at the end, degree 0 gives 0).
    Max starts from the destination's own extracted feature.  R-GCN
    returns one matrix per relation.
    """
    carrier = (
        messages.edge_values if messages.edge_values is not None else messages.vertex_values
    )
    fixed = carrier.dtype == np.int32
    prog = messages.program
    n = g.num_vertices
    if layer.kind is ModelKind.RGCN:
        per_rel = []
        for r in range(layer.num_relations):
            mask = prog.rel == r
            sub = EdgeProgram(prog.src[mask], prog.dst[mask], prog.coef[mask])
            sub_msgs = Messages(sub, vertex_values=messages.vertex_values)
            per_rel.append(_segment_sum(sub_msgs.gathered(fixed), sub.dst, n, fixed))
        return per_rel
    values = messages.gathered(fixed)
    if layer.aggregator is Aggregator.MAX:
        return _segment_max(values, prog.dst, messages.max_init, fixed)
    sums = _segment_sum(values, prog.dst, n, fixed)
    if layer.aggregator is Aggregator.MEAN:
        deg = np.bincount(prog.dst, minlength=n).astype(np.int64)
        if fixed:
            out = np.zeros_like(sums)
            nz = deg > 0
            out[nz] = fx.div_round(sums[nz], deg[nz, None])
            return out
        out = np.zeros_like(sums)
        nz = deg > 0
        out[nz] = sums[nz] / deg[nz, None]
        return out
    return sums


def update(layer: LayerSpec, aggregated, props: PropertyMatrix) -> PropertyMatrix:
    """Stage three: per-vertex finalization to the next-layer properties."""
    fixed = props.fixed
    x = props.data
    w = layer.weights
    kind = layer.kind
    if kind is ModelKind.GCN:
        out = _relu(_add_bias(aggregated, w.bias, fixed), fixed)
    elif kind is ModelKind.GS_POOL:
        cat = np.concatenate([aggregated, x], axis=1)
        out = _relu(
            _add_bias(_matmul(cat, w.w_update, fixed), w.bias, fixed), fixed
        )
    elif kind is ModelKind.RGCN:
        acc = _matmul(x, w.w_self, fixed)
        for r, agg_r in enumerate(aggregated):
            term = _matmul(agg_r, w.w_relations[r], fixed)
            acc = fx.sat_add(acc, term) if fixed else acc + term
        out = _relu(_add_bias(acc, w.bias, fixed), fixed)
    elif kind is ModelKind.GATED_GCN:
        out = _relu(
            _add_bias(_matmul(aggregated, w.w_update, fixed), w.bias, fixed), fixed
        )
    elif kind is ModelKind.GRN:
        xin = _matmul(aggregated, w.w_feature, fixed)
        hidden = x if layer.f == layer.h else _matmul(x, w.w_state, fixed)
        out = gru_cell(hidden, xin, w.gru, fixed)
    else:  # pragma: no cover
        raise ConfigError(f"unknown model kind {kind}")
    return PropertyMatrix(out, fixed)


def gru_cell(h: np.ndarray, x: np.ndarray, weights: GruWeights, fixed: bool = False) -> np.ndarray:
    """Standard gated recurrent cell; h and x are (N, H) raw arrays.

    z = sig(xWz + hUz + bz), r = sig(xWr + hUr + br),
    cand = tanh(xWh + (r*h)Uh + bh), out = (1-z)*h + z*cand.
    """
    if h.shape != x.shape:
        raise ConfigError(f"gru inputs disagree: h {h.shape} vs x {x.shape}")

    def lin(a, wa, b, wb, bias):
        t1 = _matmul(a, wa, fixed)
        t2 = _matmul(b, wb, fixed)
        s = fx.sat_add(t1, t2) if fixed else t1 + t2
        return _add_bias(s, bias, fixed)

    z = _sigmoid(lin(x, weights.w_z, h, weights.u_z, weights.b_z), fixed)
    r = _sigmoid(lin(x, weights.w_r, h, weights.u_r, weights.b_r), fixed)
    rh = _ewise_mul(r, h, fixed)
    cand = _tanh(lin(x, weights.w_h, rh, weights.u_h, weights.b_h), fixed)
    if fixed:
        one = fx.encode(1.0)
        keep = fx.sat_mul(fx.sat_add(np.broadcast_to(one, z.shape), -z), h)
        take = fx.sat_mul(z, cand)
        return fx.sat_add(keep, take)
    return (1.0 - z) * h + z * cand


def stage_order_legal(layer: LayerSpec, order: StageOrder) -> bool:
    """AFU needs a sum aggregator and extraction linear in the source property."""
    if order is StageOrder.FAU:
        return True
    return layer.kind is ModelKind.GCN and layer.aggregator is Aggregator.SUM


def forward_layer(
    layer: LayerSpec,
    props: PropertyMatrix,
    g: Graph,
    order: StageOrder = StageOrder.FAU,
) -> PropertyMatrix:
    """Run one layer end to end under the given stage order."""
    if not stage_order_legal(layer, order):
        raise ConfigError(
            f"stage order {order.value} is not valid for {layer.kind.value} "
            f"with {layer.aggregator.value} aggregation"
        )
    if props.rows != g.num_vertices:
        raise ConfigError("property matrix row count does not match graph")
    msgs = feature_extraction(layer, props, g, order)
    agg = aggregate(layer, msgs, g)
    if layer.kind is ModelKind.GCN and order is StageOrder.AFU:
        agg = _matmul(agg, layer.weights.w_feature, props.fixed)
    return update(layer, agg, props)


# ---------------------------------------------------------------------------
# dense reference implementation
# ---------------------------------------------------------------------------


def _dense_adjacency(g: Graph) -> np.ndarray:
    """a[d, s] = multiplicity of edge s -> d."""
    a = np.zeros((g.num_vertices, g.num_vertices), dtype=np.float64)
    np.add.at(a, (g.dst, g.src), 1.0)
    return a


def dense_oracle(layer: LayerSpec, props: PropertyMatrix, g: Graph) -> PropertyMatrix:
    """Float64 reference via dense adjacency and plain loops.

    Independent of the edge-centric path: no shared reduction code.
    Usable only up to ORACLE_MAX_VERTICES vertices.
    """
    n = g.num_vertices
    if n > ORACLE_MAX_VERTICES:
        raise ConfigError(f"dense oracle limited to {ORACLE_MAX_VERTICES} vertices")
    x = props.to_float()
    w = layer.weights
    kind = layer.kind
    a = _dense_adjacency(g)
    if kind is ModelKind.GCN:
        a_tilde = a + np.eye(n)
        d_in = a_tilde.sum(axis=1)  # incoming multiplicity per destination
        d_out = a_tilde.sum(axis=0)
        norm = a_tilde / np.sqrt(np.outer(d_in, d_out))
        return PropertyMatrix(np.maximum(norm @ x @ w.w_feature, 0.0))
    if kind is ModelKind.GS_POOL:
        pooled = np.maximum(x @ w.w_pool + w.b_pool, 0.0)
        agg = np.zeros((n, layer.h))
        for d in range(n):
            if layer.aggregator is Aggregator.MAX:
                best = pooled[d].copy()
                for s in range(n):
                    for _ in range(int(a[d, s])):
                        best = np.maximum(best, pooled[s])
                agg[d] = best
            else:  # mean
                deg = a[d].sum()
                if deg > 0:
                    agg[d] = (a[d] @ pooled) / deg
        return PropertyMatrix(np.maximum(np.concatenate([agg, x], axis=1) @ w.w_update, 0.0))
    if kind is ModelKind.RGCN:
        rel = g.rel if g.rel is not None else np.zeros(g.num_edges, dtype=np.int64)
        acc = x @ w.w_self
        for r in range(layer.num_relations):
            a_r = np.zeros((n, n))
            sel = rel == r
            np.add.at(a_r, (g.dst[sel], g.src[sel]), 1.0)
            c = a_r.sum(axis=1)
            agg_r = np.zeros((n, layer.f))
            for d in range(n):
                if c[d] > 0:
                    agg_r[d] = (a_r[d] @ x) / c[d]
            acc = acc + agg_r @ w.w_relations[r]
        return PropertyMatrix(np.maximum(acc, 0.0))
    if kind is ModelKind.GATED_GCN:
        agg = np.zeros((n, layer.f))
        for d in range(n):
            for s in range(n):
                mult = int(a[d, s])
                if mult == 0:
                    continue
                gate = 1.0 / (1.0 + np.exp(-(x[d] @ w.w_h + x[s] @ w.w_c)))
                agg[d] += mult * gate * x[s]
        return PropertyMatrix(np.maximum(agg @ w.w_update, 0.0))
    # GRN
    agg = a @ x
    xin = agg @ w.w_feature
    hidden = x if layer.f == layer.h else x @ w.w_state
    gw = w.gru
    out = np.zeros((n, layer.h))
    for v in range(n):
        z = 1.0 / (1.0 + np.exp(-(xin[v] @ gw.w_z + hidden[v] @ gw.u_z + gw.b_z)))
        r = 1.0 / (1.0 + np.exp(-(xin[v] @ gw.w_r + hidden[v] @ gw.u_r + gw.b_r)))
        cand = np.tanh(xin[v] @ gw.w_h + (r * hidden[v]) @ gw.u_h + gw.b_h)
        out[v] = (1.0 - z) * hidden[v] + z * cand
    return PropertyMatrix(out)


# ---------------------------------------------------------------------------
# weight file I/O
# ---------------------------------------------------------------------------

WEIGHT_MAGIC = b"WMX1"


def save_weight_matrix(path, matrix: np.ndarray, binary: bool = True) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if binary:
        with open(path, "wb") as fh:
            fh.write(WEIGHT_MAGIC)
            fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
            fh.write(matrix.astype("<f4").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
            for row in matrix:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_weight_matrix(path) -> np.ndarray:
    """Load a weight matrix: binary (magic, rows, cols, f32 LE) or text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == WEIGHT_MAGIC:
            rows, cols = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
            if data.size != rows * cols:
                raise GraphInputError(f"{path}: truncated weight file")
            return data.astype(np.float64).reshape(rows, cols)
    tokens = open(path, "r", encoding="utf-8").read().split()
    if len(tokens) < 2:
        raise GraphInputError(f"{path}: not a weight file")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
    except ValueError as exc:
        raise GraphInputError(f"{path}: not a weight file") from exc
    if len(values) != rows * cols:
        raise GraphInputError(
            f"{path}: expected {rows * cols} values, found {len(values)}"
        )
    return np.asarray(values, dtype=np.float64).reshape(rows, cols)
