"""Saturating Q16.16 fixed-point arithmetic.

All on-chip datapaths use 32-bit signed fixed point with 16 fractional
bits.  Additions saturate symmetrically at +/-(2**15 - 2**-16); multiplies
use a 64-bit intermediate, round to nearest with ties to even, then
saturate.  Reductions (matmul accumulation, per-destination sums) apply
the saturating add at every step, in a fixed operand order, so results
are bit-identical across runs.

Vector helpers operate on raw int32 arrays; the scalar ``Fixed32``
wrapper exists for tests and small hand computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAC_BITS = 16
SCALE = 1 << FRAC_BITS
HALF = 1 << (FRAC_BITS - 1)
RAW_MAX = (1 << 31) - 1
RAW_MIN = -RAW_MAX  # symmetric saturation
MAX_VALUE = RAW_MAX / SCALE
MIN_VALUE = RAW_MIN / SCALE


def encode(values) -> np.ndarray:
    """Quantize floats to raw Q16.16 (round half to even, saturate)."""
    raw = np.rint(np.asarray(values, dtype=np.float64) * SCALE)
    raw = np.clip(raw, RAW_MIN, RAW_MAX)
    return raw.astype(np.int32)


def decode(raw) -> np.ndarray:
    """Raw Q16.16 back to float64. Exact (no rounding)."""
    return np.asarray(raw, dtype=np.float64) / SCALE


def sat_add(a, b) -> np.ndarray:
    s = np.asarray(a, np.int64) + np.asarray(b, np.int64)
    return np.clip(s, RAW_MIN, RAW_MAX).astype(np.int32)


def _round_shift(p: np.ndarray) -> np.ndarray:
    # p is an int64 product with 32 fractional bits; drop 16 with
    # round-to-nearest-even.  >> floors, which is what the remainder
    # test below expects for negative values too.
    q = p >> FRAC_BITS
    r = p & (SCALE - 1)
    q = q + np.where((r > HALF) | ((r == HALF) & ((q & 1) == 1)), 1, 0)
    return q


def sat_mul(a, b) -> np.ndarray:
    p = np.asarray(a, np.int64) * np.asarray(b, np.int64)
    return np.clip(_round_shift(p), RAW_MIN, RAW_MAX).astype(np.int32)


def sat_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N,F) @ (F,H) in raw Q16.16.

    Products are rounded individually; the accumulator saturates after
    every add, walking k = 0..F-1 in order.  This is the canonical
    reduction order the whole engine relies on for reproducibility.
    """
    a = np.asarray(a, np.int64)
    b = np.asarray(b, np.int64)
    n, f = a.shape
    f2, h = b.shape
    if f != f2:
        raise ValueError(f"shape mismatch for fixed matmul: {a.shape} @ {b.shape}")
    acc = np.zeros((n, h), dtype=np.int64)
    for k in range(f):
        p = _round_shift(a[:, k, None] * b[None, k, :])
        acc = np.clip(acc + p, RAW_MIN, RAW_MAX)
    return acc.astype(np.int32)


def sat_segment_sum(values: np.ndarray, starts: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum consecutive row segments of ``values`` with per-add saturation.

    ``starts`` holds one row index per segment (ascending); segment i covers
    rows [starts[i], starts[i+1]).  Rows must already be in canonical order.
    The fast path computes exact 64-bit prefix sums and only falls back to
    the sequential saturating loop for segments whose running sum ever
    leaves the representable range (identical result, just slower).
    """
    values = np.asarray(values)
    out = np.zeros((n_segments, values.shape[1]), dtype=np.int32)
    if values.shape[0] == 0 or n_segments == 0:
        return out
    starts = np.asarray(starts, dtype=np.int64)
    bounds = np.append(starts, values.shape[0])
    lengths = np.diff(bounds)
    v64 = values.astype(np.int64)
    cs = np.cumsum(v64, axis=0)
    safe = np.minimum(starts, values.shape[0] - 1)  # empty tail segments
    base = np.repeat(cs[safe] - v64[safe], lengths, axis=0)
    running = cs - base
    ok = np.ones(n_segments, dtype=bool)
    bad_rows = (running > RAW_MAX) | (running < RAW_MIN)
    if bad_rows.any():
        seg_of_row = np.repeat(np.arange(n_segments), lengths)
        ok[np.unique(seg_of_row[bad_rows.any(axis=1)])] = False
    ends = bounds[1:]
    nonempty = lengths > 0
    totals = np.zeros((n_segments, values.shape[1]), dtype=np.int64)
    totals[nonempty] = cs[ends[nonempty] - 1] - (cs[safe[nonempty]] - v64[safe[nonempty]])
    out[ok] = np.clip(totals[ok], RAW_MIN, RAW_MAX).astype(np.int32)
    for s in np.flatnonzero(~ok):
        acc = np.zeros(values.shape[1], dtype=np.int64)
        for row in range(bounds[s], bounds[s + 1]):
            acc = np.clip(acc + v64[row], RAW_MIN, RAW_MAX)
        out[s] = acc.astype(np.int32)
    return out


def div_round(raw, divisor) -> np.ndarray:
    """Divide raw values by positive integers, round half to even."""
    raw = np.asarray(raw, np.int64)
    divisor = np.asarray(divisor, np.int64)
    q, r = np.divmod(raw, divisor)  # floor division, 0 <= r < divisor
    twice = 2 * r
    q = q + np.where((twice > divisor) | ((twice == divisor) & ((q & 1) == 1)), 1, 0)
    return np.clip(q, RAW_MIN, RAW_MAX).astype(np.int32)


def relu(raw) -> np.ndarray:
    return np.maximum(np.asarray(raw, np.int32), 0)


def sigmoid(raw) -> np.ndarray:
    # Activation units evaluate sigmoid/tanh at full precision and
    # re-quantize the result; only the output rounding is modeled.
    return encode(1.0 / (1.0 + np.exp(-decode(raw))))


def tanh(raw) -> np.ndarray:
    return encode(np.tanh(decode(raw)))


@dataclass(frozen=True)
class Fixed32:
    """One Q16.16 value, stored as its raw signed 32-bit integer."""

    raw: int

    @classmethod
    def from_float(cls, x: float) -> "Fixed32":
        return cls(int(encode(x)))

    def to_float(self) -> float:
        return self.raw / SCALE

    def __add__(self, other: "Fixed32") -> "Fixed32":
        return Fixed32(int(sat_add(self.raw, other.raw)))

    def __sub__(self, other: "Fixed32") -> "Fixed32":
        return Fixed32(int(sat_add(self.raw, -other.raw)))

    def __mul__(self, other: "Fixed32") -> "Fixed32":
        return Fixed32(int(sat_mul(self.raw, other.raw)))
