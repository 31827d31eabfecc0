"""Guaranteed brackets for integrals.

Each bracket holds with certainty provided the integrand really has the
property it declares: monotone (endpoint rules), convex (midpoint vs
trapezoid, tensor and simplex versions) or completely monotone (averages
over reflected NNLD / NPLD point sets).  Methods refuse integrands that do
not declare the property they rely on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .discrepancy import DEFAULT_BUDGET, npld_witness, nnld_witness
from .errors import AssumptionError, VerificationError
from .integrands import IntegrandDescriptor
from .pointgen import PointSet, hammersley_2d, tensor_product

MAX_EVALS = 10**7
ASSUMPTIONS = ("monotone_1d", "convex_1d", "convex_product", "convex_simplex", "completely_monotone")


@dataclass(frozen=True)
class Certificate:
    lower: float
    upper: float
    estimate: float
    n_evals: int
    assumption: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.assumption not in ASSUMPTIONS:
            raise ValueError(f"unknown assumption {self.assumption!r}")
        if not self.lower <= self.upper:
            raise ValueError(f"certificate has lower {self.lower!r} > upper {self.upper!r}")
        if not self.lower <= self.estimate <= self.upper:
            raise ValueError("estimate must lie inside the bracket")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def simpson(self) -> float | None:
        return self.meta.get("simpson")

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "estimate": self.estimate,
            "width": self.width,
            "n_evals": self.n_evals,
            "assumption": self.assumption,
            "guarantee": "certain",
            "meta": self.meta,
        }


def _eval(f: IntegrandDescriptor, x: np.ndarray) -> np.ndarray:
    return f(np.asarray(x, dtype=np.float64))


def _ordered(lower: float, upper: float) -> tuple[float, float]:
    # affine integrands make both rules exact; rounding may then flip them
    if lower > upper:
        if lower - upper > 1e-12 * max(1.0, abs(lower)):
            raise AssumptionError("lower rule exceeds upper rule; the declared property is wrong")
        lower, upper = upper, lower
    return lower, upper


def _one_dim(f: IntegrandDescriptor) -> None:
    if f.d != 1:
        raise ValueError(f"one-dimensional bracket applied to a {f.d}-dimensional integrand")


def bracket_endpoint(f: IntegrandDescriptor, n: int) -> Certificate:
    """Left and right endpoint rules for a nondecreasing ``f`` on [0, 1]."""
    f.require("monotone_1d")
    _one_dim(f)
    if n < 1:
        raise ValueError("n must be >= 1")
    y = _eval(f, (np.arange(n + 1) / n)[:, None])
    lower, upper = _ordered(float(np.mean(y[:-1])), float(np.mean(y[1:])))
    return Certificate(lower, upper, 0.5 * (lower + upper), n + 1, "monotone_1d", {"n": n})


def bracket_mid_trap(f: IntegrandDescriptor, n: int) -> Certificate:
    """Midpoint (lower) and trapezoid (upper) rules for convex ``f``; estimate is Simpson."""
    f.require("convex")
    _one_dim(f)
    if n < 1:
        raise ValueError("n must be >= 1")
    mid = _eval(f, ((np.arange(n) + 0.5) / n)[:, None])
    nodes = _eval(f, (np.arange(n + 1) / n)[:, None])
    lower = float(np.mean(mid))
    upper = float((0.5 * nodes[0] + nodes[1:-1].sum() + 0.5 * nodes[-1]) / n)
    lower, upper = _ordered(lower, upper)
    simpson = (2.0 * lower + upper) / 3.0
    simpson = min(max(simpson, lower), upper)
    return Certificate(lower, upper, simpson, 2 * n + 1, "convex_1d", {"n": n, "simpson": simpson})


def bracket_product_convex(f: IntegrandDescriptor, m: int, d: int | None = None, max_evals: int = MAX_EVALS) -> Certificate:
    """Tensor midpoint (Jensen) and tensor trapezoid (corner secant) bounds on ``m**d`` boxes."""
    d = f.d if d is None else d
    if d != f.d:
        raise ValueError(f"integrand has dimension {f.d}, not {d}")
    if not (f.has("jointly_convex") or (d == 1 and f.has("convex"))):
        raise AssumptionError(f"integrand {f.name!r} does not declare ['jointly_convex']")
    if m < 1:
        raise ValueError("m must be >= 1")
    n_evals = (m + 1) ** d + m**d
    if n_evals > max_evals:
        raise ValueError(f"{n_evals} evaluations exceed the budget {max_evals}")
    centers = (np.arange(m) + 0.5) / m
    nodes = np.arange(m + 1) / m
    w = np.full(m + 1, 1.0 / m)
    w[[0, -1]] = 0.5 / m

    def grid(axis):
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    lower = float(np.mean(_eval(f, grid(centers))))
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w)
    upper = float(np.sum(weights.ravel() * _eval(f, grid(nodes))))
    lower, upper = _ordered(lower, upper)
    return Certificate(lower, upper, 0.5 * (lower + upper), n_evals, "convex_product", {"m": m, "d": d})


# -- simplices --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimplexSpec:
    """A d-simplex given by ``d + 1`` vertices; ``volume`` is computed when omitted."""

    vertices: np.ndarray
    volume: float | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] + 1:
            raise ValueError(f"need d + 1 vertices in R^d, got shape {v.shape}")
        d = v.shape[1]
        vol = abs(float(np.linalg.det(v[1:] - v[0]))) / math.factorial(d)
        if vol <= 1e-15:
            raise ValueError("degenerate simplex (zero volume)")
        if self.volume is not None and abs(self.volume - vol) > 1e-12 * vol:
            raise ValueError(f"declared volume {self.volume} differs from computed {vol}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "volume", vol)

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def kuhn_triangulate(d: int) -> list[SimplexSpec]:
    """The ``d!`` simplices ``{x : x_p(1) >= ... >= x_p(d)}`` partitioning [0, 1]^d."""
    if not 1 <= d <= 6:
        raise ValueError("kuhn_triangulate supports 1 <= d <= 6")
    out = []
    for perm in itertools.permutations(range(d)):
        verts = [np.zeros(d)]
        for axis in perm:
            nxt = verts[-1].copy()
            nxt[axis] = 1.0
            verts.append(nxt)
        out.append(SimplexSpec(np.array(verts)))
    return out


def _require_convex(f: IntegrandDescriptor) -> None:
    if not (f.has("jointly_convex") or (f.d == 1 and f.has("convex"))):
        raise AssumptionError(f"integrand {f.name!r} does not declare ['jointly_convex']")


def bracket_simplex(f: IntegrandDescriptor, s: SimplexSpec) -> Certificate:
    """Centroid value and vertex average bracket the volume-normalized integral over ``s``."""
    _require_convex(f)
    if s.d != f.d:
        raise ValueError(f"simplex has dimension {s.d}, integrand {f.d}")
    lower = float(_eval(f, s.centroid[None])[0])
    upper = float(np.mean(_eval(f, s.vertices)))
    return Certificate(lower, upper, 0.5 * (lower + upper), s.d + 2, "convex_simplex", {"volume": s.volume})


def bracket_simplices(f: IntegrandDescriptor, simplices: list[SimplexSpec]) -> Certificate:
    """Volume-weighted simplex brackets over a partition, reusing shared vertices.

    The result brackets the integral over the union divided by its volume.
    Only vertices that coincide exactly are shared.
    """
    _require_convex(f)
    verts = np.concatenate([s.vertices for s in simplices])
    uniq, inverse = np.unique(verts, axis=0, return_inverse=True)
    vert_vals = _eval(f, uniq)[inverse.ravel()].reshape(len(simplices), -1)
    cent_vals = _eval(f, np.array([s.centroid for s in simplices]))
    vols = np.array([s.volume for s in simplices])
    total = vols.sum()
    lower = float(np.dot(vols, cent_vals) / total)
    upper = float(np.dot(vols, vert_vals.mean(axis=1)) / total)
    n_evals = len(uniq) + len(simplices)
    return Certificate(lower, upper, 0.5 * (lower + upper), n_evals, "convex_simplex",
                       {"simplices": len(simplices), "volume": float(total)})


def bracket_kuhn(f: IntegrandDescriptor) -> Certificate:
    """Simplex bracket for the integral over [0, 1]^d using the Kuhn triangulation."""
    return bracket_simplices(f, kuhn_triangulate(f.d))


# -- complete monotonicity --------------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityEvidence:
    passed: bool
    trials: int
    violations: int
    min_alternating_sum: float
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.passed


def alternating_sum(f: IntegrandDescriptor, x, z, u) -> float:
    """``sum over v in u of (-1)**|u - v| f(x_{-v} : z_v)`` for one pair ``x <= z``."""
    x, z = np.asarray(x, float), np.asarray(z, float)
    u = sorted(u)
    pts, signs = [], []
    for r in range(len(u) + 1):
        for v in itertools.combinations(u, r):
            p = x.copy()
            p[list(v)] = z[list(v)]
            pts.append(p)
            signs.append((-1) ** (len(u) - r))
    return float(np.dot(signs, _eval(f, np.array(pts))))


def is_completely_monotone_sample(f: IntegrandDescriptor, trials: int = 1000, seed: int = 0, tol: float = 1e-12) -> MonotonicityEvidence:
    """Randomized search for a negative alternating difference (evidence, not proof)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = f.d
    if d > 16:
        raise ValueError("complete-monotonicity sampling supports d <= 16")
    key = rng.derive_key(seed, rng.ROLE_MONOTONE)
    t = np.arange(trials, dtype=np.uint64)[:, None]
    j = np.arange(d, dtype=np.uint64)[None, :]
    a = rng.uniform(key, t * np.uint64(3 * d) + j)
    b = rng.uniform(key, t * np.uint64(3 * d) + np.uint64(d) + j)
    x, z = np.minimum(a, b), np.maximum(a, b)
    u_mask = 1 + rng.randint(key, t[:, 0] * np.uint64(3 * d) + np.uint64(2 * d), (1 << d) - 1)
    masks = np.arange(1 << d)
    sel = ((masks[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)  # (2^d, d)
    pts = np.where(sel[None], z[:, None, :], x[:, None, :])
    vals = _eval(f, pts)  # (trials, 2^d)
    subset = (masks[None, :] & ~u_mask[:, None]) == 0
    popu = np.array([bin(int(m)).count("1") for m in u_mask])
    popv = np.array([bin(int(m)).count("1") for m in masks])
    signs = np.where((popu[:, None] - popv[None, :]) % 2 == 0, 1.0, -1.0)
    sums = np.sum(np.where(subset, signs * vals, 0.0), axis=1)
    bad = sums < -tol
    witness = None
    if bad.any():
        k = int(np.argmin(sums))
        witness = {
            "x": x[k].tolist(),
            "z": z[k].tolist(),
            "u": [i for i in range(d) if (u_mask[k] >> i) & 1],
            "value": float(sums[k]),
        }
    return MonotonicityEvidence(not bad.any(), trials, int(bad.sum()), float(sums.min()), witness)


def shift_flip(ps: PointSet, n: int | None = None) -> PointSet:
    """``(x1 + 1/n, 1 - x2)`` applied to a 2-D set whose first coordinates are ``k/n``.

    Coordinates equal to 1.0 are kept exactly (the result is a closed set);
    boxes ``[0, a)`` never count them.
    """
    if ps.d != 2:
        raise ValueError(f"shift_flip needs a 2-D point set, got d={ps.d}")
    n = ps.n if n is None else n
    k = ps.points[:, 0] * n
    if np.any(np.abs(k - np.round(k)) > 1e-9) or np.any(np.round(k) > n - 1):
        raise ValueError("first coordinates must lie in {0, 1/n, ..., (n-1)/n}")
    out = np.column_stack([(np.round(k) + 1.0) / n, 1.0 - ps.points[:, 1]])
    meta = {"source": ps.construction, "transform": "shift_flip", "ones": int(np.sum(out == 1.0))}
    return PointSet(out, "explicit", ps.base, meta, closed=True)


def _tensor_all(parts: list[PointSet]) -> PointSet:
    out = parts[0]
    for p in parts[1:]:
        out = tensor_product(out, p)
    return out


def nnld_construction(d: int, m: int) -> PointSet:
    """Tensor product of 2-D Hammersley sets on ``2**m`` points (plus a 1-D left-endpoint factor for odd d)."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    parts = [hammersley_2d(m, 2) for _ in range(d // 2)]
    if d % 2:
        parts.append(PointSet(np.arange(2**m) / 2**m, "explicit", 2))
    return _tensor_all(parts)


def npld_construction(d: int, m: int) -> PointSet:
    """Tensor product of shift-flipped Hammersley sets (plus ``{i/n : i = 1..n}`` for odd d)."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    parts = [shift_flip(hammersley_2d(m, 2)) for _ in range(d // 2)]
    if d % 2:
        parts.append(PointSet(np.arange(1, 2**m + 1) / 2**m, "explicit", 2, closed=True))
    return _tensor_all(parts)


def _outside_half_open(ps: PointSet) -> bool:
    pts = ps.points
    off = np.any(pts >= 1.0, axis=1) & ~np.all(pts == 1.0, axis=1)
    return bool(off.any())


def bracket_completely_monotone(
    f: IntegrandDescriptor,
    nnld_ps: PointSet,
    npld_ps: PointSet,
    verify: bool = True,
    budget: int = DEFAULT_BUDGET,
) -> Certificate:
    """Bracket from reflected NNLD and NPLD point sets for completely monotone ``f``.

    ``upper = mean f(1 - q)`` over ``q`` in the NNLD set and
    ``lower = mean f(1 - p)`` over ``p`` in the NPLD set.  With
    ``verify=False`` the two sign properties are trusted.
    """
    f.require("completely_monotone")
    if nnld_ps.d != f.d or npld_ps.d != f.d:
        raise ValueError("point sets and integrand must share the dimension")
    caveat = _outside_half_open(npld_ps)
    if caveat and not f.has("cm_absolutely_continuous"):
        raise AssumptionError(
            "NPLD points leave [0,1)^d other than at the all-ones corner; the lower bound then "
            "needs an absolutely continuous measure (declare 'cm_absolutely_continuous')"
        )
    if verify:
        bad = nnld_witness(nnld_ps, budget)
        if bad is not None:
            raise VerificationError(f"NNLD fails at corner {bad[0]} (delta = {bad[1]:.3g})", bad[0])
        bad = npld_witness(npld_ps, budget)
        if bad is not None:
            raise VerificationError(f"NPLD fails at corner {bad[0]} (delta = {bad[1]:.3g})", bad[0])
    upper = float(np.mean(_eval(f, 1.0 - nnld_ps.points)))
    lower = float(np.mean(_eval(f, 1.0 - npld_ps.points)))
    meta = {
        "n_nnld": nnld_ps.n,
        "n_npld": npld_ps.n,
        "verified": verify,
        "npld_outside_half_open": caveat,
    }
    if caveat:
        meta["caveat"] = "lower bound relies on an absolutely continuous measure"
    return Certificate(lower, upper, 0.5 * (lower + upper), nnld_ps.n + npld_ps.n, "completely_monotone", meta)
