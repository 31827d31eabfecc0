"""Deterministic low-discrepancy point sets on [0, 1]^d.

Constructions: van der Corput / Halton / Hammersley, base-2 digital nets
from generator matrices (Sobol' and permutation-matrix nets), rank-1
lattices and tensor products.  Digital constructions are computed exactly
in integers and then divided by ``2**m``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .errors import DirectionTableError

PRECISION = 53
MAX_POINTS = 1 << 32
DIRECTIONS_ENV = "QMC_UQ_DIRECTIONS"
_BUNDLED_DIRECTIONS = "sobol_directions_512.txt"

CONSTRUCTIONS = (
    "halton",
    "hammersley",
    "digital_net",
    "lattice",
    "tensor_product",
    "explicit",
    "randomized",
)


@dataclass(frozen=True, eq=False)
class PointSet:
    """An immutable ``n x d`` array of points with provenance.

    Coordinates live in ``[0, 1)``.  A coordinate exactly equal to 1.0 is
    accepted only when ``closed=True``; the shift-flip construction and a
    few textbook 1-D sets (``{i/n : i = 1..n}``) need it.  Boxes are always
    half-open, so such coordinates are never counted in ``[0, a)``.
    """

    points: np.ndarray
    construction: str = "explicit"
    base: int | None = None
    meta: Mapping = field(default_factory=dict)
    closed: bool = False

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty n x d array, got shape {pts.shape}")
        if self.construction not in CONSTRUCTIONS:
            raise ValueError(f"unknown construction {self.construction!r}")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0:
            raise ValueError("coordinates must be finite and nonnegative")
        top = pts.max()
        if top > 1.0 or (top == 1.0 and not self.closed):
            raise ValueError("coordinates must lie in [0, 1); pass closed=True to allow exactly 1.0")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "meta", dict(self.meta))
        if self.construction == "digital_net" and "m" in self.meta:
            if pts.shape[0] != 1 << int(self.meta["m"]):
                raise ValueError("digital net must have n = 2**m points")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"PointSet(n={self.n}, d={self.d}, construction={self.construction!r})"


@dataclass(frozen=True, eq=False)
class NetGenerators:
    """Base-2 generator matrices, one ``m x m`` bit matrix per dimension.

    ``matrices[j][r, k]`` maps digit ``k`` of the index (least significant
    first) to output digit ``r`` (weight ``2**-(r+1)``).
    """

    matrices: np.ndarray

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=np.uint8)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[0] < 1:
            raise ValueError("need at least one generator matrix")
        if mats.shape[1] != mats.shape[2]:
            raise ValueError(f"generator matrices must be square, got {mats.shape[1:]}")
        if mats.shape[1] > PRECISION:
            raise ValueError(f"at most {PRECISION} bits supported")
        if np.any(mats > 1):
            raise ValueError("generator matrix entries must be 0 or 1")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def d(self) -> int:
        return self.matrices.shape[0]

    @property
    def m(self) -> int:
        return self.matrices.shape[1]

    @property
    def is_permutation(self) -> bool:
        mats = self.matrices.astype(np.int64)
        return bool(np.all(mats.sum(axis=1) == 1) and np.all(mats.sum(axis=2) == 1))

    def columns(self, precision: int = PRECISION) -> np.ndarray:
        """Columns as top-aligned ``precision``-bit integers, shape ``(d, m)``."""
        if self.m > precision:
            raise ValueError("precision smaller than the number of net bits")
        weights = np.array([1 << (precision - 1 - r) for r in range(self.m)], dtype=np.uint64)
        cols = (self.matrices.astype(np.uint64) * weights[None, :, None]).sum(axis=1, dtype=np.uint64)
        return cols.astype(np.uint64)


@dataclass(frozen=True)
class LatticeSpec:
    """Rank-1 lattice with modulus ``n`` and generating vector ``z``."""

    n: int
    z: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(int(v) for v in self.z))
        if self.n < 1:
            raise ValueError("lattice needs n >= 1")
        if not self.z:
            raise ValueError("generating vector is empty")
        if self.n > 1 and any(v < 1 or v > self.n - 1 for v in self.z):
            raise ValueError(f"generating vector entries must lie in 1..{self.n - 1}")


def radical_inverse(i: int, b: int = 2) -> float:
    """Digit reversal of ``i`` in base ``b`` about the radix point.

    >>> radical_inverse(6, 2)
    0.375
    """
    if i < 0 or b < 2:
        raise ValueError("need i >= 0 and b >= 2")
    num, den = 0, 1
    while i:
        i, digit = divmod(i, b)
        num = num * b + digit
        den *= b
    return num / den


def _radical_inverse_array(idx: np.ndarray, b: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).copy()
    if b == 2:
        # exact: reverse the bits into a 53-bit integer
        out = np.zeros(idx.shape, dtype=np.uint64)
        bit = 0
        while np.any(idx):
            out |= (idx & 1).astype(np.uint64) << np.uint64(PRECISION - 1 - bit)
            idx >>= 1
            bit += 1
        return out.astype(np.float64) * 2.0**-PRECISION
    out = np.zeros(idx.shape, dtype=np.float64)
    scale = 1.0 / b
    while np.any(idx):
        idx, digit = np.divmod(idx, b)
        out += digit * scale
        scale /= b
    return out


def _check_count(n: int) -> None:
    if n > MAX_POINTS:
        raise OverflowError(f"{n} points exceeds the supported maximum {MAX_POINTS}")


def first_primes(k: int) -> list[int]:
    primes: list[int] = []
    c = 2
    while len(primes) < k:
        if all(c % p for p in primes if p * p <= c):
            primes.append(c)
        c += 1
    return primes


def halton(n: int, d: int, bases: Sequence[int] | None = None, start: int = 0) -> PointSet:
    """First ``n`` Halton points from index ``start`` (origin included at 0)."""
    _check_count(n)
    bases = list(bases) if bases is not None else first_primes(d)
    if len(bases) != d:
        raise ValueError("need one base per dimension")
    idx = np.arange(start, start + n)
    pts = np.column_stack([_radical_inverse_array(idx, b) for b in bases])
    return PointSet(pts, "halton", None, {"bases": bases, "start": start})


def hammersley_2d(m: int, b: int = 2) -> PointSet:
    """The ``b**m``-point Hammersley set ``(i/n, radical_inverse(i, b))``."""
    if m < 0 or b < 2:
        raise ValueError("need m >= 0 and b >= 2")
    if m * math.log2(b) > math.log2(MAX_POINTS):
        raise OverflowError(f"b**m = {b}**{m} points is not representable")
    n = b**m
    idx = np.arange(n)
    pts = np.column_stack([idx / n, _radical_inverse_array(idx, b)])
    meta = {"m": m}
    if b == 2:
        meta["bits"] = m
    return PointSet(pts, "hammersley", b, meta)


def _net_ints(cols: np.ndarray, n: int) -> np.ndarray:
    """Integer coordinates ``(n, d)`` for top-aligned generator columns ``(..., d, m)``."""
    idx = np.arange(n, dtype=np.uint64)
    out = np.zeros(cols.shape[:-2] + (n, cols.shape[-2]), dtype=np.uint64)
    for k in range(cols.shape[-1]):
        bit = ((idx >> np.uint64(k)) & np.uint64(1)).astype(bool)
        out[..., bit, :] ^= cols[..., None, :, k]
    return out


def ints_to_unit(x: np.ndarray, precision: int = PRECISION) -> np.ndarray:
    return x.astype(np.float64) * 2.0**-precision


def unit_to_ints(x: np.ndarray, precision: int = PRECISION) -> np.ndarray:
    """Truncate coordinates in ``[0, 1)`` to ``precision``-bit integers."""
    return np.floor(np.asarray(x, dtype=np.float64) * 2.0**precision).astype(np.uint64)


def digital_net(gen: NetGenerators) -> PointSet:
    """Base-2 digital net: digits of point ``i`` are ``C_j @ digits(i) mod 2``."""
    n = 1 << gen.m
    pts = ints_to_unit(_net_ints(gen.columns(), n))
    return PointSet(pts, "digital_net", 2, {"m": gen.m, "bits": gen.m, "generators": gen})


def permutation_net(perms: Sequence[Sequence[int]]) -> NetGenerators:
    """Generator matrices that are permutation matrices.

    ``perms[j][k]`` is the output digit receiving index digit ``k``.
    """
    perms = [list(p) for p in perms]
    m = len(perms[0]) if perms else 0
    mats = np.zeros((len(perms), m, m), dtype=np.uint8)
    for j, p in enumerate(perms):
        if sorted(p) != list(range(m)):
            raise ValueError(f"row {j} is not a permutation of 0..{m - 1}")
        for k, r in enumerate(p):
            mats[j, r, k] = 1
    return NetGenerators(mats)


def hammersley_generators(m: int) -> NetGenerators:
    """Digit-reversal and identity matrices; their net is ``hammersley_2d(m, 2)``."""
    return permutation_net([list(range(m - 1, -1, -1)), list(range(m))])


# -- Sobol' -----------------------------------------------------------------


@dataclass(frozen=True)
class DirectionTable:
    """Parsed direction numbers (columns d, s, a, m_i).  Row ``j`` describes dimension ``j + 2``."""

    rows: tuple
    source: str

    @property
    def max_dim(self) -> int:
        return len(self.rows) + 1


def parse_directions(text: str, source: str = "<string>") -> DirectionTable:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields or not fields[0].lstrip("-").isdigit():
            continue
        vals = [int(v) for v in fields]
        dim, s, a, ms = vals[0], vals[1], vals[2], vals[3:]
        if dim != len(rows) + 2:
            raise ValueError(f"{source}:{lineno}: expected dimension {len(rows) + 2}, got {dim}")
        if len(ms) != s:
            raise ValueError(f"{source}:{lineno}: expected {s} direction numbers, got {len(ms)}")
        rows.append((s, a, tuple(ms)))
    return DirectionTable(tuple(rows), source)


@lru_cache(maxsize=8)
def _load_directions(path: str | None) -> DirectionTable:
    if path is None:
        text = resources.files("qmc_uq").joinpath("data", _BUNDLED_DIRECTIONS).read_text()
        return parse_directions(text, _BUNDLED_DIRECTIONS)
    with open(path) as fh:
        return parse_directions(fh.read(), path)


def load_directions(path: str | None = None) -> DirectionTable:
    """Load a direction table: explicit path, then ``$QMC_UQ_DIRECTIONS``, then bundled."""
    return _load_directions(path or os.environ.get(DIRECTIONS_ENV) or None)


def _direction_ints(s: int, a: int, ms: Sequence[int], m: int) -> list[int]:
    mk = list(ms[:m])
    for k in range(s, m):
        new = mk[k - s] ^ (mk[k - s] << s)
        for i in range(1, s):
            if (a >> (s - 1 - i)) & 1:
                new ^= mk[k - i] << i
        mk.append(new)
    return mk


def sobol_generators(d: int, m: int, directions: DirectionTable | None = None) -> NetGenerators:
    """Sobol' generator matrices for ``d`` dimensions and ``m`` bits."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    if m > PRECISION:
        raise ValueError(f"at most {PRECISION} bits supported")
    table = directions if directions is not None else load_directions()
    if d > table.max_dim:
        raise DirectionTableError(
            f"direction table {table.source} covers {table.max_dim} dimensions; dimension {table.max_dim + 1} is missing",
            table.max_dim + 1,
        )
    mats = np.zeros((d, m, m), dtype=np.uint8)
    for j in range(d):
        mk = [1] * m if j == 0 else _direction_ints(*table.rows[j - 1], m)
        for k, v in enumerate(mk):
            # v_k = m_k / 2**(k+1): column k holds the k+1 binary digits of m_k
            for r in range(k + 1):
                mats[j, r, k] = (v >> (k - r)) & 1
    return NetGenerators(mats)


def sobol_net(d: int, m: int, directions: DirectionTable | None = None) -> PointSet:
    """First ``2**m`` Sobol' points in natural (not Gray-code) order."""
    return digital_net(sobol_generators(d, m, directions))


# -- lattices ---------------------------------------------------------------


def rank1_lattice(spec: LatticeSpec, d: int | None = None) -> PointSet:
    """Points ``(i * z mod n) / n`` for ``i = 0..n-1``."""
    if d is not None and d != len(spec.z):
        raise ValueError(f"generating vector has {len(spec.z)} entries, expected {d}")
    _check_count(spec.n)
    i = np.arange(spec.n, dtype=np.int64)[:, None]
    z = np.asarray(spec.z, dtype=np.int64)[None, :]
    pts = ((i * z) % spec.n) / spec.n
    return PointSet(pts, "lattice", None, {"n": spec.n, "z": list(spec.z)})


def _korobov_merit(n: int, z: np.ndarray, weights: np.ndarray) -> float:
    x = (np.arange(n)[:, None] * z[None, :] % n) / n
    b2 = x * x - x + 1.0 / 6.0
    return float(np.mean(np.prod(1.0 + weights * 2.0 * np.pi**2 * b2, axis=1)) - 1.0)


@lru_cache(maxsize=64)
def korobov_vector(n: int, d: int, max_candidates: int = 1024) -> tuple:
    """Korobov generating vector ``(1, a, a**2, ...) mod n`` minimizing P_2.

    Product weights ``1/j`` are used.  At most ``max_candidates`` multipliers
    coprime to ``n`` are scanned (evenly spaced when there are more).
    """
    if n < 2:
        return (1,) * d if n > 1 else tuple([0] * d)
    cands = np.array([a for a in range(1, n) if math.gcd(a, n) == 1], dtype=np.int64)
    if len(cands) > max_candidates:
        cands = cands[np.linspace(0, len(cands) - 1, max_candidates).astype(int)]
    weights = 1.0 / np.arange(1, d + 1)
    best, best_z = math.inf, None
    for a in cands:
        z = np.array([pow(int(a), j, n) for j in range(d)], dtype=np.int64)
        if np.any(z == 0):
            continue
        merit = _korobov_merit(n, z, weights)
        if merit < best:
            best, best_z = merit, z
    return tuple(int(v) for v in best_z)


# -- tensor products ----------------------------------------------------------


def tensor_product(a: PointSet, b: PointSet) -> PointSet:
    """All concatenated pairs ``(x, y)`` for ``x`` in ``a`` and ``y`` in ``b``."""
    _check_count(a.n * b.n)
    left = np.repeat(a.points, b.n, axis=0)
    right = np.tile(b.points, (a.n, 1))
    meta = {"factors": [a.construction, b.construction], "shape": [a.n, b.n]}
    return PointSet(np.hstack([left, right]), "tensor_product", None, meta, closed=a.closed or b.closed)
