"""Functional and cycle-level simulator for a ring-reduce GNN accelerator."""

from .graph import Graph, Interval, TileGrid, generate_synthetic, grid_partition, load_edge_list
from .model import (
    Aggregator,
    LayerSpec,
    ModelKind,
    PropertyMatrix,
    StageOrder,
    WeightSet,
    dense_oracle,
    forward_layer,
    gcn_edge_norm,
    gru_cell,
    seeded_weights,
)
from .schedule import dasr_decide, count_ops, io_cost, map_strategy_metrics, tile_order
from .simcore import Plan, SimConfig, SimStats, run_report, simulate_layer

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "Graph",
    "Interval",
    "LayerSpec",
    "ModelKind",
    "Plan",
    "PropertyMatrix",
    "SimConfig",
    "SimStats",
    "StageOrder",
    "TileGrid",
    "WeightSet",
    "count_ops",
    "dasr_decide",
    "dense_oracle",
    "forward_layer",
    "gcn_edge_norm",
    "generate_synthetic",
    "grid_partition",
    "gru_cell",
    "io_cost",
    "load_edge_list",
    "map_strategy_metrics",
    "run_report",
    "seeded_weights",
    "simulate_layer",
    "tile_order",
]
