"""RQMC randomizations.

Random shift modulo one (optionally followed by the baker's transform),
digital shift, random linear ("matrix") scramble plus digital shift, and
nested uniform scrambling.  Each leaves every individual point uniformly
distributed on ``[0, 1)^d`` while keeping the structure of the input set.

All randomness comes from :mod:`qmc_uq.rng` keyed by
``(seed, replicate_index, dimension, role)``.  The ``*_batch`` helpers
produce many replicates at once and agree bit-for-bit with the
one-replicate functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .pointgen import PRECISION, NetGenerators, PointSet, _net_ints, ints_to_unit, unit_to_ints

KINDS = ("shift", "shift_baker", "digital_shift", "matrix_scramble_shift", "nested_scramble")
ALIASES = {
    "nested": "nested_scramble",
    "matrix": "matrix_scramble_shift",
    "baker": "shift_baker",
    "digital": "digital_shift",
}
_ONE_MINUS = 1.0 - 2.0**-53
_TAIL_LEVEL = 1 << 20


def canonical_kind(kind: str) -> str:
    kind = ALIASES.get(kind, kind)
    if kind not in KINDS and kind != "iid":
        raise ValueError(f"unknown randomizer {kind!r}; choose from {KINDS + ('iid',)}")
    return kind


@dataclass(frozen=True)
class RandomizerSpec:
    """Which randomization to apply and the key material that fixes it."""

    kind: str
    seed: int
    replicate_index: int = 0
    precision_bits: int = PRECISION

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if not 0 <= self.precision_bits <= PRECISION:
            raise ValueError(f"precision_bits must be in 0..{PRECISION}")
        if self.replicate_index < 0:
            raise ValueError("replicate_index must be nonnegative")


def _keys(seed: int, replicates, d: int, role: int) -> np.ndarray:
    """Keys of shape ``(B, 1, d)`` for replicate indices ``replicates``."""
    reps = np.atleast_1d(np.asarray(replicates, dtype=np.uint64))
    dims = np.arange(d, dtype=np.uint64)
    return rng.derive_key(seed, reps[:, None, None], dims[None, None, :], role)


def _wrap(points: np.ndarray, ps: PointSet, spec: RandomizerSpec, **extra) -> PointSet:
    meta = {
        "source": ps.construction,
        "kind": spec.kind,
        "seed": spec.seed,
        "replicate_index": spec.replicate_index,
        "precision_bits": spec.precision_bits,
        **extra,
    }
    for key in ("m", "bits", "generators"):
        if key in ps.meta:
            meta[key] = ps.meta[key]
    return PointSet(points, "randomized", ps.base, meta)


# -- random shift -------------------------------------------------------------


def baker(x: np.ndarray) -> np.ndarray:
    """Tent map ``1 - |2x - 1|``; the value 1.0 is pulled back to ``1 - 2**-53``."""
    y = 1.0 - np.abs(2.0 * x - 1.0)
    return np.minimum(y, _ONE_MINUS)


def shift_mod1(points: np.ndarray, shift: np.ndarray, use_baker: bool = False) -> np.ndarray:
    y = np.asarray(points, dtype=np.float64) + shift
    y = y - np.floor(y)
    y = np.where(y >= 1.0, 0.0, y)
    return baker(y) if use_baker else y


def random_shift_batch(points: np.ndarray, seed: int, replicates, use_baker: bool = False) -> np.ndarray:
    keys = _keys(seed, replicates, points.shape[1], rng.ROLE_SHIFT)
    return shift_mod1(points[None], rng.uniform(keys, 0), use_baker)


def random_shift(ps: PointSet, spec: RandomizerSpec) -> PointSet:
    """Shift every point by one ``U ~ U[0,1)^d`` modulo 1 (plus baker if requested)."""
    if spec.kind not in ("shift", "shift_baker"):
        raise ValueError(f"random_shift needs kind shift or shift_baker, got {spec.kind!r}")
    out = random_shift_batch(ps.points, spec.seed, [spec.replicate_index], spec.kind == "shift_baker")
    return _wrap(out[0], ps, spec)


# -- digital shift --------------------------------------------------------------


def _digital_shift_ints(keys: np.ndarray, precision: int) -> np.ndarray:
    if precision == 0:
        return np.zeros(keys.shape, dtype=np.uint64)
    bits = rng.counter_bits(keys, 0) >> np.uint64(64 - precision)
    return bits << np.uint64(PRECISION - precision)


def _as_ints(ps_points: np.ndarray) -> np.ndarray:
    if ps_points.max() >= 1.0:
        raise ValueError("digital randomizations need coordinates in [0, 1)")
    return unit_to_ints(ps_points)


def digital_shift_batch(points: np.ndarray, seed: int, replicates, precision: int = PRECISION) -> np.ndarray:
    x = _as_ints(points)
    keys = _keys(seed, replicates, points.shape[1], rng.ROLE_DIGITAL_SHIFT)
    return ints_to_unit(x[None] ^ _digital_shift_ints(keys, precision))


def xor_shift(ps: PointSet, shift: np.ndarray) -> np.ndarray:
    """XOR each coordinate's binary digits with a fixed per-dimension shift in ``[0, 1)``."""
    return ints_to_unit(_as_ints(ps.points) ^ unit_to_ints(np.asarray(shift, dtype=np.float64)))


def digital_shift(ps: PointSet, spec: RandomizerSpec) -> PointSet:
    """Digital (XOR) shift by one random digit vector per dimension."""
    out = digital_shift_batch(ps.points, spec.seed, [spec.replicate_index], spec.precision_bits)
    return _wrap(out[0], ps, spec)


# -- matrix scramble --------------------------------------------------------------


def _lower_rows(keys: np.ndarray, precision: int) -> np.ndarray:
    """Rows of random unit lower-triangular matrices as top-aligned bit masks.

    Returns shape ``keys.shape + (precision,)``; row ``r`` has a 1 on the
    diagonal and random bits strictly left of it.
    """
    r = np.arange(precision, dtype=np.uint64)
    top = np.uint64(PRECISION)
    below = ((np.uint64(1) << r) - np.uint64(1)) << (top - r)
    diag = np.uint64(1) << (top - np.uint64(1) - r)
    bits = rng.counter_bits(keys[..., None], r)
    return (bits & below) | diag


def scramble_columns(cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Left-multiply generator columns ``(..., d, m)`` by matrices with rows ``(..., d, P)`` over GF(2)."""
    out = np.zeros(np.broadcast_shapes(cols.shape[:-1], rows.shape[:-1]) + cols.shape[-1:], dtype=np.uint64)
    for r in range(rows.shape[-1]):
        parity = np.bitwise_count(rows[..., r, None] & cols) & np.uint8(1)
        out |= parity.astype(np.uint64) << np.uint64(PRECISION - 1 - r)
    return out


def _generators_of(obj) -> NetGenerators:
    if isinstance(obj, NetGenerators):
        return obj
    if isinstance(obj, PointSet) and isinstance(obj.meta.get("generators"), NetGenerators):
        return obj.meta["generators"]
    raise TypeError("matrix_scramble_shift needs NetGenerators or a digital-net PointSet")


def matrix_scramble_batch(gen: NetGenerators, seed: int, replicates, precision: int = PRECISION) -> np.ndarray:
    if gen.m > precision:
        raise ValueError("precision_bits must be at least the number of net bits")
    keys = _keys(seed, replicates, gen.d, rng.ROLE_MATRIX)[:, 0, :]
    rows = _lower_rows(keys, precision)
    cols = scramble_columns(gen.columns()[None], rows)
    x = _net_ints(cols, 1 << gen.m)
    shift_keys = _keys(seed, replicates, gen.d, rng.ROLE_DIGITAL_SHIFT)
    return ints_to_unit(x ^ _digital_shift_ints(shift_keys, precision))


def matrix_scramble_shift(gen: NetGenerators | PointSet, spec: RandomizerSpec) -> PointSet:
    """Replace each ``C_j`` by ``L_j C_j`` (random unit lower-triangular ``L_j``), then digitally shift."""
    gen = _generators_of(gen)
    out = matrix_scramble_batch(gen, spec.seed, [spec.replicate_index], spec.precision_bits)
    source = PointSet(np.zeros((1 << gen.m, gen.d)), "digital_net", 2, {"m": gen.m, "bits": gen.m, "generators": gen})
    return _wrap(out[0], source, spec)


# -- nested uniform scramble ----------------------------------------------------------


def significant_bits(x: np.ndarray) -> np.ndarray:
    """Per column, the position of the last nonzero binary digit among 53."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        low = x & (~x + np.uint64(1))
    tz = np.where(x == 0, PRECISION, np.bitwise_count(low - np.uint64(1)).astype(np.int64))
    return (PRECISION - tz).max(axis=0)


def _nested_ints(x: np.ndarray, keys: np.ndarray, precision: int, bits: np.ndarray) -> np.ndarray:
    """Nested scramble of integer coordinates ``x (n, d)`` for keys ``(B, 1, d)``.

    Digit ``q`` is flipped by a keyed hash of ``(q, digits 0..q-1)``.  Once a
    column has no nonzero digits left (position ``bits[j]`` onwards) every
    remaining flip depends on the same prefix, so the remaining digits are
    drawn at once from a single hash of that prefix.
    """
    B, d = keys.shape[0], x.shape[1]
    out = np.zeros((B,) + x.shape, dtype=np.uint64)
    one = np.uint64(1)
    depth = int(min(precision, bits.max())) if bits.size else 0
    for q in range(depth):
        active = bits > q
        shift = np.uint64(PRECISION - q)
        prefix = x >> shift if q else np.zeros_like(x)
        level_key = rng.mix64(keys ^ rng.mix64(np.uint64(q) + rng._GAMMA))
        flip = rng.counter_bits(level_key, prefix[None]) >> np.uint64(63)
        digit = (x >> (shift - one)) & one
        out |= np.where(active, (digit ^ flip) << (shift - one), np.uint64(0))
    # tail digits: positions bits[j]..precision-1 of every column
    for j in range(d):
        b = int(min(bits[j], precision))
        width = precision - b
        if width <= 0:
            continue
        prefix = x[:, j] >> np.uint64(PRECISION - b) if b else np.zeros(x.shape[0], dtype=np.uint64)
        tail_key = rng.mix64(keys[:, :, j] ^ rng.mix64(np.uint64(_TAIL_LEVEL) + rng._GAMMA))
        tail = rng.counter_bits(tail_key, prefix[None, :]) >> np.uint64(64 - width)
        out[:, :, j] |= tail << np.uint64(PRECISION - precision)
    if precision < PRECISION:
        out |= (x & np.uint64((1 << (PRECISION - precision)) - 1))[None]
    return out


def nested_scramble_batch(points: np.ndarray, seed: int, replicates, precision: int = PRECISION) -> np.ndarray:
    x = _as_ints(points)
    keys = _keys(seed, replicates, points.shape[1], rng.ROLE_NESTED)
    return ints_to_unit(_nested_ints(x, keys, precision, significant_bits(x)))


def nested_scramble(ps: PointSet, spec: RandomizerSpec) -> PointSet:
    """Nested uniform scramble in base 2, realized lazily by keyed hashing."""
    out = nested_scramble_batch(ps.points, spec.seed, [spec.replicate_index], spec.precision_bits)
    return _wrap(out[0], ps, spec)


# -- dispatch ---------------------------------------------------------------------------


def iid_batch(n: int, d: int, seed: int, replicates) -> np.ndarray:
    """Plain Monte Carlo points, shape ``(B, n, d)``."""
    keys = _keys(seed, replicates, d, rng.ROLE_IID)
    return rng.uniform(keys, np.arange(n, dtype=np.uint64)[None, :, None])


def randomize_batch(ps: PointSet, kind: str, seed: int, replicates, precision: int = PRECISION) -> np.ndarray:
    """Randomized copies of ``ps`` for each replicate index, shape ``(B, n, d)``."""
    kind = canonical_kind(kind)
    if kind in ("shift", "shift_baker"):
        return random_shift_batch(ps.points, seed, replicates, kind == "shift_baker")
    if kind == "digital_shift":
        return digital_shift_batch(ps.points, seed, replicates, precision)
    if kind == "matrix_scramble_shift":
        return matrix_scramble_batch(_generators_of(ps), seed, replicates, precision)
    if kind == "nested_scramble":
        return nested_scramble_batch(ps.points, seed, replicates, precision)
    return iid_batch(ps.n, ps.d, seed, replicates)


def randomize(ps: PointSet, spec: RandomizerSpec) -> PointSet:
    if spec.kind in ("shift", "shift_baker"):
        return random_shift(ps, spec)
    if spec.kind == "digital_shift":
        return digital_shift(ps, spec)
    if spec.kind == "matrix_scramble_shift":
        return matrix_scramble_shift(ps, spec)
    if spec.kind == "nested_scramble":
        return nested_scramble(ps, spec)
    out = iid_batch(ps.n, ps.d, spec.seed, [spec.replicate_index])
    return _wrap(out[0], ps, spec)
