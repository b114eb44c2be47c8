"""Command-line front end: graph generation, validation, analysis, runs, sweeps.

Exit codes: 0 success, 1 usage error, 2 input/config error, 3 internal
invariant failure.  The default RNG seed is 0, overridable by the
ENGN_SEED environment variable and then by --seed.  Reports embed the
fully resolved configuration so any run can be reproduced bit-exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import dataflow  # noqa: F401  (re-exported for interactive use)
from . import schedule as sched
from . import simcore
from .errors import SimError
from .graph import Graph, generate_synthetic, grid_partition, load_edge_list
from .model import (
    Aggregator,
    LayerSpec,
    ModelKind,
    PropertyMatrix,
    StageOrder,
    load_weight_matrix,
    seeded_weights,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_seed() -> int:
    env = os.environ.get("ENGN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise SimError(f"ENGN_SEED must be an integer, got {env!r}") from exc
    return 0


def _parse_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise SimError(f"{path}: line {lineno}: expected key=value")
                key, value = text.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise SimError(f"cannot read config file {path}: {exc}") from exc
    return out


def _parse_dims(spec: str) -> list[tuple[int, int]]:
    dims = []
    for part in spec.replace(",", " ").split():
        if ":" not in part:
            raise _UsageError(f"dims must look like F:H, got {part!r}")
        f_s, h_s = part.split(":", 1)
        dims.append((int(f_s), int(h_s)))
    return dims


def _parse_synthetic(spec: str) -> tuple[int, int, int | None]:
    fields = dict(kv.split("=", 1) for kv in spec.split(",") if "=" in kv)
    try:
        n = int(fields["n"])
        e = int(fields["e"])
    except KeyError as exc:
        raise _UsageError(f"--synthetic needs n=..,e=..[,seed=..], got {spec!r}") from exc
    seed = int(fields["seed"]) if "seed" in fields else None
    return n, e, seed


def _atomic_write(path, writer) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-report-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_layers(args, seed: int) -> list[LayerSpec]:
    kind = ModelKind(args.model)
    dims = _parse_dims(args.dims)
    aggregator = Aggregator(args.aggregator) if args.aggregator else None
    weight_paths = args.weights.split(",") if getattr(args, "weights", None) else []
    layers = []
    for li, (f, h) in enumerate(dims):
        weights = seeded_weights(kind, f, h, seed + 1000 + li, args.num_relations)
        if li < len(weight_paths) and weight_paths[li]:
            if not os.path.exists(weight_paths[li]):
                raise SimError(f"weight file not found: {weight_paths[li]}")
            w = load_weight_matrix(weight_paths[li])
            if w.shape != (f, h):
                raise SimError(
                    f"weight file {weight_paths[li]} has shape {w.shape}, "
                    f"layer {li} expects {(f, h)}"
                )
            if kind in (ModelKind.GCN, ModelKind.GRN):
                weights.w_feature = w
            elif kind is ModelKind.GATED_GCN:
                weights.w_update = w
            elif kind is ModelKind.GS_POOL:
                weights.w_pool = w
            else:
                weights.w_self = w
        layers.append(
            LayerSpec(kind, f, h, weights, aggregator, num_relations=args.num_relations)
        )
    return layers


def _load_graph(args, seed: int) -> Graph:
    if getattr(args, "graph", None):
        if not os.path.exists(args.graph):
            raise SimError(f"graph file not found: {args.graph}")
        return load_edge_list(args.graph, args.num_vertices)
    if getattr(args, "synthetic", None):
        n, e, s = _parse_synthetic(args.synthetic)
        return generate_synthetic(n, e, s if s is not None else seed)
    raise _UsageError("provide --graph PATH or --synthetic n=..,e=..")


def _sim_config(args) -> simcore.SimConfig:
    davc_fraction = args.rho if args.rho is not None else 1.0
    return simcore.SimConfig(
        rows=args.rows,
        cols=args.cols,
        davc_bytes=args.davc_bytes,
        davc_static_fraction=davc_fraction,
        davc_enabled=not args.no_davc,
        result_bank_bytes=args.result_bank_bytes,
        dram_bandwidth_bytes_per_cycle=args.dram_bandwidth,
        prefetch_enabled=not args.no_prefetch,
        edge_reorganize=not args.no_reorganize,
    )


def _add_run_flags(p: _Parser, sweep_mode: bool = False) -> None:
    def listy(kind):
        return str if sweep_mode else kind

    p.add_argument("--graph", help="edge-list file (src dst [rel] [weight])")
    p.add_argument("--synthetic", help="synthetic graph spec n=..,e=..[,seed=..]")
    p.add_argument("--num-vertices", type=int, default=None)
    p.add_argument("--model", default="gcn",
                   choices=[k.value for k in ModelKind])
    p.add_argument("--dims", default="16:16",
                   help="layer dims as F:H pairs, e.g. '1433:16 16:7'")
    p.add_argument("--aggregator", default=None,
                   choices=[a.value for a in Aggregator])
    p.add_argument("--num-relations", type=int, default=1)
    p.add_argument("--weights", default=None,
                   help="comma-separated weight files, one per layer")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fixed", action="store_true", default=True,
                   help="run in 32-bit fixed point (default)")
    p.add_argument("--float", dest="fixed", action="store_false",
                   help="run the float64 reference datapath")
    p.add_argument("--rows", type=int, default=128)
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--q", type=int, default=None,
                   help="partition count (default: smallest fitting the result banks)")
    p.add_argument("--order", default=None, choices=["fau", "afu"],
                   help="force a stage order instead of the dimension-aware choice")
    p.add_argument("--tile-major", default=None, choices=["column", "row"],
                   help="force tile traversal instead of the adaptive choice")
    p.add_argument("--no-s-shape", action="store_true")
    p.add_argument("--davc-bytes", type=listy(int), default=65536 if not sweep_mode else "65536")
    p.add_argument("--rho", type=listy(float), default=None,
                   help="fraction of the vertex cache pinned to high-degree vertices")
    p.add_argument("--no-davc", action="store_true")
    p.add_argument("--no-prefetch", action="store_true")
    p.add_argument("--no-reorganize", action="store_true")
    p.add_argument("--result-bank-bytes", type=int, default=4 * 1024 * 1024)
    p.add_argument("--dram-bandwidth", type=int, default=256)
    p.add_argument("--out", default=None, help="report basename (.jsonl/.csv appended)")
    p.add_argument("--config", default=None, help="flat key=value config file")


def _merge_config_file(args, parser: _Parser, argv: list[str]) -> None:
    """Config file values fill in flags the command line left at default."""
    if not args.config:
        return
    overrides = _parse_config_file(args.config)
    given = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in overrides.items():
        if key in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)


def _report(rows: list[dict], out_base: str | None) -> None:
    if out_base:
        _atomic_write(out_base + ".jsonl", lambda p: simcore.write_jsonl(p, rows))
        _atomic_write(out_base + ".csv", lambda p: simcore.write_csv(p, rows))
    cols = [
        ("layer", 5), ("model", 9), ("order", 5), ("tile_major", 10), ("q", 3),
        ("cycles_total", 12), ("dram_read_bytes", 15), ("dram_write_bytes", 16),
        ("utilization", 11), ("davc_hit_rate", 13),
    ]
    print("  ".join(name.ljust(w) for name, w in cols))
    for row in rows:
        cells = []
        for name, w in cols:
            v = row.get(name, "")
            if isinstance(v, float):
                v = f"{v:.4f}"
            cells.append(str(v).ljust(w))
        print("  ".join(cells))


def _run_common(args, sweep: dict[str, list] | None) -> list[dict]:
    seed = args.seed if args.seed is not None else _default_seed()
    g = _load_graph(args, seed)
    layers = _build_layers(args, seed)
    rng = np.random.default_rng(seed)
    props = PropertyMatrix.from_float(
        rng.uniform(-1.0, 1.0, size=(g.num_vertices, layers[0].f)), fixed=args.fixed
    )
    for prev, nxt in zip(layers, layers[1:]):
        if prev.h != nxt.f:
            raise SimError(
                f"layer dims do not chain: {prev.f}:{prev.h} then {nxt.f}:{nxt.h}"
            )
    cfg = _sim_config(args)
    order = StageOrder(args.order) if args.order else None
    rows = simcore.run_report(
        g,
        layers,
        cfg,
        props,
        q=args.q,
        order_override=order,
        major_override=args.tile_major,
        s_shape=not args.no_s_shape,
        sweep=sweep,
    )
    resolved = {
        "seed": seed,
        "fixed_point": args.fixed,
        "graph": getattr(args, "graph", None) or getattr(args, "synthetic", None),
        "dims": args.dims,
        "s_shape": not args.no_s_shape,
    }
    for row in rows:
        row.update({f"config_{k}": v for k, v in resolved.items()})
    return rows


def cmd_run(args) -> int:
    rows = _run_common(args, sweep=None)
    _report(rows, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sweep: dict[str, list] = {}
    if isinstance(args.davc_bytes, str) and "," in args.davc_bytes:
        sweep["davc_bytes"] = [int(v) for v in args.davc_bytes.split(",")]
    else:
        args.davc_bytes = int(args.davc_bytes)
    if args.rho is not None:
        text = str(args.rho)
        if "," in text:
            sweep["davc_static_fraction"] = [float(v) for v in text.split(",")]
            args.rho = None
        else:
            args.rho = float(text)
    for extra in args.param or []:
        if "=" not in extra:
            raise _UsageError(f"sweep parameters look like key=v1,v2,... got {extra!r}")
        key, values = extra.split("=", 1)
        key = key.replace("-", "_")
        caster = float if key == "davc_static_fraction" else int
        sweep[key] = [caster(v) for v in values.split(",")]
    rows = _run_common(args, sweep=sweep or None)
    _report(rows, args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = {}
    if args.q is not None:
        io = sched.io_cost(args.q, args.f, args.h)
        out["io_cost"] = {
            "q": io.q, "f": io.f, "h": io.h,
            "read_col": io.read_col, "write_col": io.write_col,
            "read_row": io.read_row, "write_row": io.write_row,
            "total_col": io.total_col, "total_row": io.total_row,
            "chosen": io.chosen,
        }
        order = sched.dasr_decide(args.f, args.h, Aggregator.SUM, ModelKind.GCN)
        out["stage_order"] = order.value
    if args.map:
        rep = sched.map_strategy_metrics(args.map, args.n, args.f, args.h, args.r, args.c)
        out["map_strategy"] = {
            "strategy": rep.strategy,
            "latency_cycles": rep.latency_cycles,
            "bandwidth_words": rep.bandwidth_words,
            "utilization": rep.utilization,
        }
    if not out:
        raise _UsageError("analyze needs --q (I/O cost) and/or --map (map strategy)")
    for key, value in out.items():
        print(json.dumps({key: value}, sort_keys=True))
    return EXIT_OK


def cmd_gen_graph(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    g = generate_synthetic(args.n, args.e, seed)
    lines = [f"# synthetic n={args.n} e={args.e} seed={seed}"]
    lines += [f"{int(s)} {int(d)}" for s, d in zip(g.src, g.dst)]

    def writer(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    _atomic_write(args.out, writer)
    print(f"wrote {g.num_edges} edges over {g.num_vertices} vertices to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    g = load_edge_list(args.path, args.num_vertices)
    # structural invariants; violations are internal errors, not input errors
    assert int(g.in_degree.sum()) == g.num_edges
    assert int(g.out_degree.sum()) == g.num_edges
    order = np.lexsort(
        [g.src, g.dst] if g.rel is None else [g.rel, g.src, g.dst]
    )
    assert (order == np.arange(g.num_edges)).all(), "edges not canonically sorted"
    if args.q:
        tiles = grid_partition(g, args.q)
        total = sum(
            tiles.shard(i, j).shape[0] for i in range(args.q) for j in range(args.q)
        )
        assert total == g.num_edges, "shards do not cover the edge list"
    print(f"OK: {g.num_vertices} vertices, {g.num_edges} edges")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="gnnasim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a layer stack on a graph")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a cross-product of config points")
    _add_run_flags(p_sweep, sweep_mode=True)
    p_sweep.add_argument("--param", action="append",
                         help="extra sweep axis key=v1,v2,...")
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="print analytic I/O and mapping reports")
    p_an.add_argument("--q", type=int, default=None)
    p_an.add_argument("--f", type=int, default=16)
    p_an.add_argument("--h", type=int, default=16)
    p_an.add_argument("--map", default=None, choices=["vs", "vfs", "hs"])
    p_an.add_argument("--n", type=int, default=128)
    p_an.add_argument("--r", type=int, default=128)
    p_an.add_argument("--c", type=int, default=16)
    p_an.set_defaults(func=cmd_analyze)

    p_gen = sub.add_parser("gen-graph", help="write a synthetic power-law edge list")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--e", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_graph)

    p_val = sub.add_parser("validate", help="load a graph and check invariants")
    p_val.add_argument("path")
    p_val.add_argument("--num-vertices", type=int, default=None)
    p_val.add_argument("--q", type=int, default=None)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            _merge_config_file(args, parser, argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
