"""Local discrepancy, exact star discrepancy and NNLD/NPLD checks.

The local discrepancy of a point set at ``a`` is the fraction of points in
the half-open box ``[0, a)`` minus its volume.  It is piecewise constant in
each coordinate with jumps at point coordinates, so its supremum and
infimum are attained (as limits) on a finite grid of corners built from the
point coordinates.  Counting points below every corner is done with one
d-dimensional cumulative sum over a rank histogram, which keeps exact
enumeration cheap at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BudgetExceededError
from .pointgen import PointSet

DEFAULT_BUDGET = 10**8
DEFAULT_TOL = 1e-12
_BLOCK = 1 << 22


@dataclass(frozen=True)
class DiscrepancyReport:
    d_star: float
    argmax: tuple
    nnld: bool
    npld: bool
    grid_size: int
    sup_delta: float
    inf_delta: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["argmax"] = [float(v) for v in self.argmax]
        return out


def local_discrepancy(ps: PointSet, a) -> float | np.ndarray:
    """``#{i : x_i in [0, a)} / n - prod(a)``; ``a`` may be one corner or an array of corners."""
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    corners = np.atleast_2d(a)
    if corners.shape[-1] != ps.d:
        raise ValueError(f"corner has dimension {corners.shape[-1]}, point set has {ps.d}")
    if np.any(corners < 0) or np.any(corners > 1):
        raise ValueError("corners must lie in [0, 1]^d")
    inside = np.all(ps.points[None, :, :] < corners[:, None, :], axis=2)
    delta = inside.mean(axis=1) - np.prod(corners, axis=1)
    return float(delta[0]) if single else delta


class _Counter:
    """Dominance counts of a point set on arbitrary per-axis grids."""

    def __init__(self, points: np.ndarray):
        self.n, self.d = points.shape
        self.uniq = [np.unique(points[:, j]) for j in range(self.d)]
        ranks = tuple(np.searchsorted(u, points[:, j]) for j, u in enumerate(self.uniq))
        hist = np.zeros(tuple(len(u) for u in self.uniq), dtype=np.int64)
        np.add.at(hist, ranks, 1)
        for axis in range(self.d):
            hist = np.cumsum(hist, axis=axis)
        # prefix[i_1, ..., i_d] = #points whose rank is < i_j in every axis
        self.prefix = np.pad(hist, [(1, 0)] * self.d)

    def strict_index(self, j: int, grid: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.uniq[j], grid, side="left")

    def closed_index(self, j: int, grid: np.ndarray) -> np.ndarray:
        # coordinates equal to 1.0 never enter a box [0, a) with a <= 1
        idx = np.searchsorted(self.uniq[j], grid, side="right")
        return np.where(grid >= 1.0, self.strict_index(j, grid), idx)


def _grids(ps: PointSet):
    coords = [np.unique(ps.points[:, j]) for j in range(ps.d)]
    inf_grid = [np.union1d(c, [1.0]) for c in coords]
    sup_grid = [np.union1d(c[c < 1.0], [0.0, 1.0]) for c in coords]
    return inf_grid, sup_grid


def required_budget(ps: PointSet) -> int:
    """Corner-point pairs a naive enumeration of the deduplicated grid would visit."""
    inf_grid, sup_grid = _grids(ps)
    return ps.n * max(math.prod(len(g) for g in inf_grid), math.prod(len(g) for g in sup_grid))


def _check_budget(ps: PointSet, budget: int) -> None:
    need = required_budget(ps)
    if need > budget:
        raise BudgetExceededError(f"exact enumeration needs {need} corner-point pairs; budget is {budget}", need)


def _extreme(counter: _Counter, grids, indexer, sign: int):
    """Max of ``sign * delta`` over the grid, with its corner."""
    n = counter.n
    idx = [indexer(j, g) for j, g in enumerate(grids)]
    rest = math.prod(len(g) for g in grids[1:])
    step = max(1, _BLOCK // max(rest, 1))
    best, best_at = -np.inf, None
    for start in range(0, len(grids[0]), step):
        sl = slice(start, start + step)
        counts = counter.prefix[np.ix_(idx[0][sl], *idx[1:])] / n
        vol = grids[0][sl]
        for g in grids[1:]:
            vol = np.multiply.outer(vol, g)
        val = sign * (counts - vol)
        k = int(np.argmax(val))
        if val.flat[k] > best:
            best = float(val.flat[k])
            pos = np.unravel_index(k, val.shape)
            best_at = (grids[0][sl][pos[0]],) + tuple(g[p] for g, p in zip(grids[1:], pos[1:]))
    return sign * best, tuple(float(v) for v in best_at)


def delta_extremes(ps: PointSet, budget: int = DEFAULT_BUDGET):
    """``(sup delta, its corner, inf delta, its corner)`` over ``a`` in ``[0, 1]^d``."""
    _check_budget(ps, budget)
    counter = _Counter(ps.points)
    inf_grid, sup_grid = _grids(ps)
    sup, sup_at = _extreme(counter, sup_grid, counter.closed_index, 1)
    inf, inf_at = _extreme(counter, inf_grid, counter.strict_index, -1)
    return sup, sup_at, inf, inf_at


def star_discrepancy_exact(ps: PointSet, budget: int = DEFAULT_BUDGET, tol: float = DEFAULT_TOL) -> DiscrepancyReport:
    """Exact ``sup_a |delta(a)|`` by corner-grid enumeration."""
    sup, sup_at, inf, inf_at = delta_extremes(ps, budget)
    d_star, at = (sup, sup_at) if sup >= -inf else (-inf, inf_at)
    inf_grid, sup_grid = _grids(ps)
    return DiscrepancyReport(
        d_star=max(d_star, 0.0),
        argmax=at,
        nnld=inf >= -tol,
        npld=sup <= tol,
        grid_size=math.prod(len(g) for g in inf_grid) + math.prod(len(g) for g in sup_grid),
        sup_delta=sup,
        inf_delta=inf,
    )


def nnld_witness(ps: PointSet, budget: int = DEFAULT_BUDGET, tol: float = DEFAULT_TOL):
    """``None`` if ``ps`` has NNLD, else ``(corner, delta)`` with ``delta < -tol``."""
    _check_budget(ps, budget)
    counter = _Counter(ps.points)
    inf_grid, _ = _grids(ps)
    inf, at = _extreme(counter, inf_grid, counter.strict_index, -1)
    return None if inf >= -tol else (at, inf)


def npld_witness(ps: PointSet, budget: int = DEFAULT_BUDGET, tol: float = DEFAULT_TOL):
    """``None`` if ``ps`` has NPLD, else ``(corner, delta)`` with ``delta > tol``."""
    _check_budget(ps, budget)
    counter = _Counter(ps.points)
    _, sup_grid = _grids(ps)
    sup, at = _extreme(counter, sup_grid, counter.closed_index, 1)
    return None if sup <= tol else (at, sup)


def verify_nnld(ps: PointSet, budget: int = DEFAULT_BUDGET, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``delta(a) >= 0`` for every ``a`` (up to ``tol``)."""
    return nnld_witness(ps, budget, tol) is None


def verify_npld(ps: PointSet, budget: int = DEFAULT_BUDGET, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``delta(a) <= 0`` for every ``a`` (up to ``tol``)."""
    return npld_witness(ps, budget, tol) is None
