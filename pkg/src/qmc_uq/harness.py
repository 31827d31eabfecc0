"""Coverage studies, convergence-rate fits and kurtosis growth tables.

Each coverage cell runs ``T`` independent trials.  A trial draws ``R`` fresh
randomizations (replicate indices ``t*R .. t*R + R - 1`` under the cell key),
so trials never share replicates.  Every interval method of a cell is
evaluated on the same trial pools.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, rng
from .errors import PreconditionError
from .integrands import IntegrandDescriptor, fixture
from .pointgen import PointSet
from .randomize import KINDS, canonical_kind
from .uq import (
    DEFAULT_B,
    base_points,
    bootstrap_keys,
    bootstrap_t_bounds,
    default_construction,
    hoeffding_halfwidth,
    median_rank,
    percentile_bounds,
    replicate_values,
)

METHODS = ("student", "normal", "percentile", "boot-t", "median", "chebyshev", "hoeffding")
METHOD_ALIASES = {"bootstrap_t": "boot-t", "boot_t": "boot-t", "t": "student", "student_t": "student"}
RANDOMIZERS = KINDS + ("iid",)
_BOOT_CHUNK = 50


def binomial_threshold(T: int, p: float = 0.94, tail: float = 0.04) -> int:
    """Smallest covered count that is not a confirmed failure.

    A cell fails when ``covered < threshold``, where ``threshold - 1`` is the
    largest ``k`` with ``P(Binom(T, p) <= k) <= tail``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    cdf = stats.binom.cdf(np.arange(T + 1), T, p)
    ok = np.flatnonzero(cdf <= tail)
    return int(ok[-1]) + 1 if ok.size else 0


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown interval method {name!r}; expected one of {METHODS}")
    return name


@dataclass(frozen=True)
class CoverageCell:
    integrand: str
    d: int
    n: int
    R: int
    randomizer: str
    params: tuple = ()

    def descriptor(self) -> IntegrandDescriptor:
        return fixture(self.integrand, self.d, **dict(self.params))


@dataclass(frozen=True)
class CoverageRow:
    integrand: str
    d: int
    n: int
    R: int
    randomizer: str
    method: str
    alpha: float
    T: int
    covered: int
    coverage: float
    threshold: int
    verdict: str
    mean_width: float
    width_sd: float

    def __post_init__(self):
        if not 0 <= self.covered <= self.T:
            raise ValueError("covered must lie in [0, T]")
        expected = "confirmed_failure" if self.covered < self.threshold else "ok"
        if self.verdict != expected:
            raise ValueError(f"verdict {self.verdict!r} disagrees with the binomial rule")


@dataclass(frozen=True)
class RateRow:
    integrand: str
    randomizer: str
    n_grid: tuple
    rmse: tuple
    slope: float
    intercept: float
    excluded_smallest: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.n_grid) - int(self.excluded_smallest) < 4:
            raise ValueError("a rate fit needs at least 4 n values")
        if not math.isfinite(self.slope):
            raise ValueError("fitted slope is not finite")


@dataclass(frozen=True)
class StudyGrid:
    cells: tuple
    methods: tuple
    alphas: tuple = (0.05,)
    B: int = DEFAULT_B

    @classmethod
    def from_config(cls, cfg: dict) -> "StudyGrid":
        """Expand ``integrands x d x n x R x randomizers`` from a mapping.

        Recognized keys: ``integrands``, ``d``, ``n``, ``R``, ``randomizers``,
        ``methods``, ``alpha`` (number or list), ``B`` and ``params`` (per
        integrand name).
        """
        known = {"integrands", "d", "n", "R", "randomizers", "methods", "alpha", "B", "params", "T", "seed", "threads"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        integrands = list(cfg.get("integrands", ["smooth_product", "product_cdf"]))
        ds = list(cfg.get("d", [2, 4, 8]))
        ns = list(cfg.get("n", [2**k for k in range(6, 13)]))
        Rs = list(cfg.get("R", [5, 10, 20, 30]))
        kinds = [canonical_kind(k) for k in cfg.get("randomizers", list(KINDS))]
        methods = tuple(canonical_method(m) for m in cfg.get("methods", ["student", "percentile", "boot-t", "median"]))
        alpha = cfg.get("alpha", 0.05)
        alphas = tuple(alpha) if isinstance(alpha, (list, tuple)) else (alpha,)
        params = cfg.get("params", {})
        cells = []
        for name, d, n, R, kind in itertools.product(integrands, ds, ns, Rs, kinds):
            p = tuple(sorted(params.get(name, {}).items()))
            cells.append(CoverageCell(name, int(d), int(n), int(R), kind, p))
        return cls(tuple(cells), methods, alphas, int(cfg.get("B", DEFAULT_B)))


def _cell_seed(seed: int, index: int) -> int:
    return int(rng.derive_key(seed, index, 0xC0))


def points_for(kind: str, d: int, n: int, construction: str = "auto") -> PointSet:
    """Base points for a randomizer; plain Monte Carlo only needs the shape."""
    if kind == "iid":
        return PointSet(np.zeros((n, d)))
    return base_points(default_construction(kind) if construction == "auto" else construction, d, n)


def trial_pools(cell: CoverageCell, T: int, seed: int) -> np.ndarray:
    """Replicate values ``(T, R)`` for one cell."""
    f = cell.descriptor()
    kind = canonical_kind(cell.randomizer)
    ps = points_for(kind, f.d, cell.n)
    return replicate_values(f, ps, kind, seed, np.arange(T * cell.R)).reshape(T, cell.R)


def interval_bounds(method: str, values: np.ndarray, alpha: float, *, B: int, seed: int,
                    sigma: float | None = None, n: int = 1) -> tuple[np.ndarray, np.ndarray] | None:
    """Vectorized interval endpoints for trial pools ``values (T, R)``; ``None`` if not applicable."""
    T, R = values.shape
    mean = values.mean(axis=1)
    if method in ("student", "normal"):
        if R < 2:
            return None
        q = stats.t.ppf(1 - alpha / 2, R - 1) if method == "student" else stats.norm.ppf(1 - alpha / 2)
        half = q * np.std(values, axis=1, ddof=1) / math.sqrt(R)
        return mean - half, mean + half
    if method == "chebyshev":
        if sigma is None:
            return None
        half = sigma / math.sqrt(alpha * n * R)
        return mean - half, mean + half
    if method == "hoeffding":
        half = hoeffding_halfwidth(n * R, alpha)
        return mean - half, mean + half
    if method == "median":
        r = median_rank(R, alpha)
        if r == 0:
            return None
        s = np.sort(values, axis=1)
        return s[:, r - 1], s[:, R - r]
    if method in ("percentile", "boot-t"):
        if R < (2 if method == "percentile" else 3):
            return None
        lo, hi = np.empty(T), np.empty(T)
        keys = bootstrap_keys(seed, np.arange(T))
        for start in range(0, T, _BOOT_CHUNK):
            sl = slice(start, start + _BOOT_CHUNK)
            if method == "percentile":
                lo[sl], hi[sl] = percentile_bounds(values[sl], alpha, B, keys[sl])
            else:
                lo[sl], hi[sl], _ = bootstrap_t_bounds(values[sl], alpha, B, keys[sl])
        return lo, hi
    raise ValueError(f"unknown method {method!r}")


def _applicable(method: str, f: IntegrandDescriptor) -> bool:
    if method == "chebyshev":
        return f.sigma is not None
    if method == "hoeffding":
        return f.has("bounded01")
    return True


def run_cell(cell: CoverageCell, grid: StudyGrid, T: int, seed: int) -> tuple[list[CoverageRow], list[dict]]:
    f = cell.descriptor()
    values = trial_pools(cell, T, seed)
    threshold = binomial_threshold(T)
    rows, skipped = [], []
    for method in grid.methods:
        for alpha in grid.alphas:
            bounds = None
            if _applicable(method, f):
                bounds = interval_bounds(method, values, alpha, B=grid.B, seed=seed, sigma=f.sigma, n=cell.n)
            if bounds is None:
                skipped.append({**asdict(cell), "method": method, "alpha": alpha, "reason": "not applicable"})
                continue
            lo, hi = bounds
            covered = int(np.sum((lo <= f.exact_mean) & (f.exact_mean <= hi)))
            width = hi - lo
            rows.append(CoverageRow(
                cell.integrand, cell.d, cell.n, cell.R, cell.randomizer, method, alpha, T, covered,
                covered / T, threshold, "confirmed_failure" if covered < threshold else "ok",
                float(width.mean()), float(width.std(ddof=1)) if T > 1 else 0.0,
            ))
    return rows, skipped


def coverage_study(grid: StudyGrid, T: int, seed: int, threads: int | None = None):
    """Run every cell; rows come back in grid order whatever the thread count.

    Returns ``(rows, skipped)`` where ``skipped`` lists method/cell pairs that
    do not apply (for example the median interval at too small an ``R``).
    """
    if T < 100:
        raise PreconditionError(f"coverage studies need T >= 100 trials, got {T}")
    jobs = [(cell, _cell_seed(seed, i)) for i, cell in enumerate(grid.cells)]
    workers = max(1, threads or 1)
    if workers == 1:
        results = [run_cell(c, grid, T, s) for c, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: run_cell(job[0], grid, T, job[1]), jobs))
    rows = [r for res in results for r in res[0]]
    skipped = [s for res in results for s in res[1]]
    return rows, skipped


# -- convergence rates -----------------------------------------------------------------


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, np.ndarray]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), y - (slope * x + intercept)


def fit_rate(n_grid, rmse) -> tuple[float, float, bool]:
    """Least-squares slope of ``log2 rmse`` on ``log2 n``.

    The smallest ``n`` is dropped when its residual from the fit to the
    other points exceeds three times that fit's residual sd.
    """
    x, y = np.log2(np.asarray(n_grid, float)), np.log2(np.asarray(rmse, float))
    if x.size < 4:
        raise PreconditionError("a rate fit needs at least 4 n values")
    if not np.all(np.isfinite(y)):
        raise ValueError("RMSE values must be positive")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if x.size >= 5:
        slope, intercept, resid = _fit(x[1:], y[1:])
        sd = float(np.sqrt(np.sum(resid**2) / (x.size - 3)))
        if abs(y[0] - (slope * x[0] + intercept)) > 3 * sd:
            return slope, intercept, True
    slope, intercept, _ = _fit(x, y)
    return slope, intercept, False


def rate_study(integrand: IntegrandDescriptor, randomizer: str, n_grid, R_per_n: int, seed: int,
               construction: str = "auto") -> RateRow:
    """RMSE against the exact mean from ``R_per_n`` independent replicates at each ``n``."""
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4:
        raise PreconditionError("rate studies need at least 4 n values")
    ratios = {n_grid[i + 1] / n_grid[i] for i in range(len(n_grid) - 1)}
    if len(ratios) != 1 or ratios.pop() <= 1:
        raise PreconditionError("n_grid must be an increasing geometric sequence")
    kind = canonical_kind(randomizer)
    rmse = []
    for i, n in enumerate(n_grid):
        ps = points_for(kind, integrand.d, n, construction)
        vals = replicate_values(integrand, ps, kind, int(rng.derive_key(seed, i, 0xA7)), np.arange(R_per_n))
        rmse.append(float(np.sqrt(np.mean((vals - integrand.exact_mean) ** 2))))
    slope, intercept, excluded = fit_rate(n_grid, rmse)
    return RateRow(integrand.name, kind, tuple(n_grid), tuple(rmse), slope, intercept, excluded,
                   {"R_per_n": R_per_n, "seed": seed})


def kurtosis_growth(integrand: IntegrandDescriptor, randomizer: str, n_grid, pool_size: int, seed: int,
                    construction: str = "auto") -> list[dict]:
    """Sample skewness and excess kurtosis of the ``n``-point estimate over ``pool_size`` randomizations."""
    if pool_size < 1000:
        raise PreconditionError("kurtosis estimates need pool_size >= 1000")
    kind = canonical_kind(randomizer)
    out = []
    for i, n in enumerate(int(v) for v in n_grid):
        ps = points_for(kind, integrand.d, n, construction)
        vals = replicate_values(integrand, ps, kind, int(rng.derive_key(seed, i, 0xB3)), np.arange(pool_size))
        dev = vals - vals.mean()
        m2 = float(np.mean(dev**2))
        row = {"n": n, "variance": float(np.var(vals, ddof=1)), "skewness": None, "kurtosis": None}
        if m2 > 1e-300 and m2 > (1e-15 * abs(vals.mean())) ** 2:
            row["skewness"] = float(np.mean(dev**3) / m2**1.5)
            row["kurtosis"] = float(np.mean(dev**4) / m2**2 - 3.0)
        out.append(row)
    return out


# -- serialization ---------------------------------------------------------------------


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (tuple, list)):
        return ";".join(fmt(v) for v in x)
    return str(x)


def rows_to_csv(rows, header_comment: str | None = None) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    names = [f.name for f in fields(rows[0]) if f.name != "meta"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([fmt(getattr(r, k)) for k in names])
    return buf.getvalue()


def coverage_summary(rows: list[CoverageRow], skipped: list[dict]) -> dict:
    failures = [asdict(r) for r in rows if r.verdict == "confirmed_failure"]
    by_method: dict[str, dict] = {}
    for r in rows:
        m = by_method.setdefault(r.method, {"cells": 0, "failures": 0, "mean_coverage": 0.0})
        m["cells"] += 1
        m["failures"] += r.verdict == "confirmed_failure"
        m["mean_coverage"] += r.coverage
    for m in by_method.values():
        m["mean_coverage"] /= m["cells"]
    return {
        "cells": len(rows),
        "confirmed_failures": len(failures),
        "failures": failures,
        "by_method": by_method,
        "skipped": skipped,
        "trial_design": "replicates drawn independently per trial (no subsampling of a shared pool)",
    }


def manifest(subcommand: str, flags: dict, seed, wall_time: float | None = None) -> dict:
    out = {"subcommand": subcommand, "flags": flags, "seed": seed, "version": __version__}
    if wall_time is not None:
        out["wall_time_s"] = wall_time
    return out


def write_study(out_dir, rows, skipped, seed, flags: dict, started: float) -> dict:
    """Write ``coverage.csv``, ``summary.json`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "coverage.csv").write_text(rows_to_csv(rows, f"manifest=manifest.json seed={seed} version={__version__}"))
    summary = coverage_summary(rows, skipped)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    man = manifest("coverage", flags, seed, time.time() - started)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, default=_json_default) + "\n")
    return summary


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
