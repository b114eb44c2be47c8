"""Spatial schedules inside the PE array.

The aggregate stage circulates one batch of source-vertex features around
a ring of R PE rows; row k owns destination k of the current window
(assignment by dst mod R) and consumes its queued edges strictly in
order, one per cycle, whenever the arriving feature matches the queue
head.  Sources circulate in whole rotations of R cycles, so a window
costs R times the number of rotations its worst bank needs.  Reordering
each bank by ring-arrival offset removes head-of-line stalls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError

Edge = tuple[int, int]


@dataclass(frozen=True)
class RingSchedule:
    """Northward ring of length r: row k sees source slot (k + t) mod r at cycle t."""

    r: int

    def arrival(self, row: int, t: int) -> int:
        return (row + t) % self.r


@dataclass
class EdgeBankLayout:
    """Per-row edge queues for one destination window of <= r vertices."""

    r: int
    banks: list[list[Edge]]


@dataclass(frozen=True)
class WeightPartition:
    """Column slices of a weight matrix, each at most c columns wide."""

    h: int
    c: int
    parts: tuple[np.ndarray, ...]


def split_weights(matrix: np.ndarray, c: int) -> WeightPartition:
    matrix = np.asarray(matrix)
    if c < 1:
        raise ConfigError("column count must be >= 1")
    h = matrix.shape[1]
    parts = tuple(matrix[:, k:k + c] for k in range(0, h, c)) if h else (matrix,)
    return WeightPartition(h, c, parts)


def hash_edges(tile_batch_edges: Sequence[Edge], r: int) -> EdgeBankLayout:
    """Distribute edges into r banks by destination id modulo r.

    Relative order within each bank is preserved.  Within one aligned
    destination window every bank ends up serving a single destination.
    """
    if r < 1:
        raise ConfigError("row count must be >= 1")
    banks: list[list[Edge]] = [[] for _ in range(r)]
    for edge in tile_batch_edges:
        banks[edge[1] % r].append(edge)
    return EdgeBankLayout(r, banks)


def flatten(layout: EdgeBankLayout) -> list[Edge]:
    out: list[Edge] = []
    for bank in layout.banks:
        out.extend(bank)
    return out


def _slot(src_slot, vertex: int) -> int:
    if callable(src_slot):
        return src_slot(vertex)
    return src_slot[vertex]


def reorganize_bank(
    bank: Sequence[Edge], ring: RingSchedule, src_slot: Mapping[int, int]
) -> list[Edge]:
    """Reorder a bank's edges by ring-arrival offset (stable).

    Row k sees slot s at offsets (s - k) mod r; consuming edges in offset
    order lets a whole bank drain in a single rotation when its sources
    are distinct.  Duplicate edges (equal offsets) are round-robined
    across rotations instead of queued back to back, so the reordered
    bank always needs exactly max-offset-multiplicity rotations, which no
    ordering can beat.
    """
    bank = list(bank)
    if not bank:
        return bank
    row = bank[0][1] % ring.r
    for edge in bank:
        if edge[1] % ring.r != row:
            raise ConfigError("bank mixes rows; hash edges first")
    try:
        offsets = [(_slot(src_slot, e[0]) - row) % ring.r for e in bank]
    except (KeyError, IndexError) as exc:
        raise ConfigError(f"edge source not in current batch: {exc}") from exc
    seen: dict[int, int] = {}
    ranks = []
    for o in offsets:
        ranks.append(seen.get(o, 0))
        seen[o] = ranks[-1] + 1
    order = sorted(range(len(bank)), key=lambda i: (ranks[i], offsets[i]))
    return [bank[i] for i in order]


def reorganize_layout(
    layout: EdgeBankLayout, ring: RingSchedule, src_slot
) -> EdgeBankLayout:
    return EdgeBankLayout(
        layout.r,
        [reorganize_bank(b, ring, src_slot) for b in layout.banks],
    )


def bank_rotations(offsets: Sequence[int]) -> int:
    """Rotations needed by one bank consuming edges in order.

    The consumable offset advances strictly within a rotation; any
    non-increasing step waits for the next rotation.
    """
    rotations = 1
    pos = -1
    for o in offsets:
        if o > pos:
            pos = o
        else:
            rotations += 1
            pos = o
    return rotations


def aggregate_cycles(
    layout: EdgeBankLayout,
    ring: RingSchedule,
    src_slot,
    reorganized: bool = False,
) -> int:
    """Cycles the ring occupies to drain all banks of one window.

    Each bank consumes strictly in queue order: at cycle t, bank k may
    consume its head edge iff the head's source slot equals
    (k + t) mod r.  Sources circulate in complete rotations, so the stage
    ends when the rotation containing the last consumption completes;
    the count is always a multiple of r and at least the longest bank.
    With ``reorganized`` the banks are offset-sorted first.
    """
    if reorganized:
        layout = reorganize_layout(layout, ring, src_slot)
    worst = 0
    for k, bank in enumerate(layout.banks):
        if not bank:
            continue
        offsets = [(_slot(src_slot, e[0]) - k % ring.r) % ring.r for e in bank]
        worst = max(worst, bank_rotations(offsets))
    return worst * ring.r


def feature_cycles(f: int, h: int, c: int, batches: int = 1) -> int:
    """Steady-state dense-transform cycles: one input dim per cycle per
    weight slice, ceil(h/c) slices, per source batch.  Pipeline fill is
    charged separately, once per layer."""
    if f < 1 or h < 1 or c < 1:
        raise ConfigError("dims must be >= 1")
    return batches * f * -(-h // c)
