"""Replicate-based estimates and confidence intervals.

Every interval carries a guarantee class:

``certain``
    holds with probability one (brackets; see :mod:`qmc_uq.certify`)
``exact_finite_sample``
    coverage at least the nominal level for every sample size
``asymptotic``
    nominal coverage only in the limit of many replicates
``heuristic``
    no coverage statement at all
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import rng
from .errors import AssumptionError, AttainabilityError, InsufficientReplicatesError, PreconditionError
from .integrands import IntegrandDescriptor
from .pointgen import LatticeSpec, PointSet, korobov_vector, rank1_lattice, sobol_net
from .randomize import canonical_kind, randomize_batch

GUARANTEES = ("certain", "exact_finite_sample", "asymptotic", "heuristic")
BERRY_ESSEEN_C = 0.4748
DEFAULT_B = 1000
_CHUNK = 1 << 22  # points * dims materialized at once


@dataclass(frozen=True, eq=False)
class ReplicatePool:
    """Independent replicate estimates ``values`` from ``n`` points each."""

    values: np.ndarray
    n: int = 1
    method: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise PreconditionError("a pool needs R >= 1 replicates")
        if not np.all(np.isfinite(v)):
            raise ValueError("replicate values must be finite")
        if self.n < 1:
            raise PreconditionError("n must be >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "method", dict(self.method))

    @property
    def R(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    def summary(self) -> dict:
        out = {"R": self.R, "n": self.n, "mean": self.mean, "method": self.method}
        out["sd"] = float(np.std(self.values, ddof=1)) if self.R >= 2 else None
        return out


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    level: float
    method: str
    guarantee: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.guarantee not in GUARANTEES:
            raise ValueError(f"unknown guarantee {self.guarantee!r}")
        if not self.lo <= self.hi:
            raise ValueError(f"interval has lo {self.lo!r} > hi {self.hi!r}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "method": self.method,
            "guarantee": self.guarantee,
            "meta": self.meta,
        }


@dataclass(frozen=True)
class MomentDiagnostics:
    mean: float
    variance: float
    skewness: float | None
    kurtosis: float | None
    R: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "skewness": self.skewness,
                "kurtosis": self.kurtosis, "R": self.R}


def _values(pool) -> np.ndarray:
    return pool.values if isinstance(pool, ReplicatePool) else np.asarray(pool, dtype=np.float64).ravel()


def _need(R: int, k: int, what: str) -> None:
    if R < k:
        raise InsufficientReplicatesError(f"{what} requires R >= {k} replicates, got R = {R}")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")


# -- replicate generation --------------------------------------------------------------


def _log2(n: int) -> int:
    m = n.bit_length() - 1
    if n < 1 or 1 << m != n:
        raise PreconditionError(f"Sobol' points need n to be a power of two, got {n}")
    return m


def base_points(construction: str, d: int, n: int) -> PointSet:
    """Unrandomized ``sobol`` (n = 2^m) or Korobov ``lattice`` points."""
    if construction == "sobol":
        return sobol_net(d, _log2(n))
    if construction == "lattice":
        return rank1_lattice(LatticeSpec(n, korobov_vector(n, d)))
    raise ValueError(f"unknown construction {construction!r} (expected sobol or lattice)")


def default_construction(kind: str) -> str:
    """Lattices for the shift randomizers, Sobol' nets for the digital ones."""
    return "lattice" if canonical_kind(kind) in ("shift", "shift_baker") else "sobol"


def replicate_values(integrand: IntegrandDescriptor, ps: PointSet, kind: str, seed: int, indices) -> np.ndarray:
    """Equal-weight estimates from randomized copies of ``ps`` with the given replicate indices."""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
    step = max(1, _CHUNK // (ps.n * ps.d))
    out = np.empty(indices.size)
    for start in range(0, indices.size, step):
        idx = indices[start:start + step]
        pts = randomize_batch(ps, kind, seed, idx)
        out[start:start + idx.size] = np.mean(integrand(pts), axis=-1)
    return out


def rqmc_replicates(integrand: IntegrandDescriptor, pointspec, kind: str, n: int, R: int, seed: int) -> ReplicatePool:
    """``R`` independent randomizations of an ``n``-point rule, each averaged.

    ``pointspec`` is a :class:`PointSet`, ``"sobol"``, ``"lattice"`` or
    ``"auto"`` (pick by randomizer).  ``kind="iid"`` gives plain Monte Carlo.
    """
    if n < 1 or R < 1:
        raise PreconditionError("n and R must be >= 1")
    kind = canonical_kind(kind)
    if isinstance(pointspec, PointSet):
        ps = pointspec
        if ps.n != n or ps.d != integrand.d:
            raise ValueError(f"point set is {ps.n} x {ps.d}, expected {n} x {integrand.d}")
        construction = ps.construction
    else:
        construction = default_construction(kind) if pointspec in (None, "auto") else pointspec
        if kind == "iid":
            ps = PointSet(np.zeros((n, integrand.d)))
            construction = "iid"
        else:
            ps = base_points(construction, integrand.d, n)
    values = replicate_values(integrand, ps, kind, seed, np.arange(R))
    return ReplicatePool(values, n, {"points": construction, "randomizer": kind, "seed": seed, "d": integrand.d})


# -- moment-based intervals ------------------------------------------------------------


def pool_variance(pool) -> float:
    """Unbiased sample variance (divisor ``R - 1``)."""
    v = _values(pool)
    _need(v.size, 2, "the replicate variance")
    return float(np.var(v, ddof=1))


def _symmetric(pool, alpha: float, quantile: float, method: str, guarantee: str, **meta) -> Interval:
    v = _values(pool)
    mean = float(np.mean(v))
    half = quantile * math.sqrt(pool_variance(v) / v.size)
    return Interval(mean - half, mean + half, 1.0 - alpha, method, guarantee, {"quantile": quantile, **meta})


def ci_student(pool, alpha: float = 0.05) -> Interval:
    """``mean +- t_{R-1} s / sqrt(R)``; exact only for Gaussian replicates."""
    _check_alpha(alpha)
    R = _values(pool).size
    _need(R, 2, "the Student interval")
    return _symmetric(pool, alpha, float(stats.t.ppf(1 - alpha / 2, R - 1)), "student", "asymptotic", df=R - 1)


def ci_normal(pool, alpha: float = 0.05) -> Interval:
    _check_alpha(alpha)
    _need(_values(pool).size, 2, "the normal interval")
    return _symmetric(pool, alpha, float(stats.norm.ppf(1 - alpha / 2)), "normal", "asymptotic")


def ci_chebyshev(mean: float, sigma: float, count: int, alpha: float = 0.05) -> Interval:
    """Chebyshev interval ``mean +- sigma / sqrt(alpha * count)`` for a known ``sigma``."""
    _check_alpha(alpha)
    if sigma < 0 or count < 1:
        raise PreconditionError("need sigma >= 0 and count >= 1")
    lam = 1.0 / math.sqrt(alpha)
    half = lam * sigma / math.sqrt(count)
    return Interval(mean - half, mean + half, 1.0 - alpha, "chebyshev", "exact_finite_sample", {"lambda": lam})


def hoeffding_halfwidth(n: int, alpha: float, sharp: bool = False) -> float:
    """Half-width solving ``2 exp(-c t^2 / n) = alpha`` for the sum, divided by ``n``.

    The default ``c = 1`` is the more conservative form; ``sharp`` uses the
    textbook ``c = 2``.
    """
    c = 2.0 if sharp else 1.0
    return math.sqrt(n * math.log(2.0 / alpha) / c) / n


def ci_hoeffding(mean: float, n: int, alpha: float = 0.05, integrand: IntegrandDescriptor | None = None,
                 sharp: bool = False) -> Interval:
    """Hoeffding interval for the average of ``n`` independent values in [0, 1]."""
    _check_alpha(alpha)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if integrand is not None and not integrand.has("bounded01"):
        raise AssumptionError(f"integrand {integrand.name!r} does not declare ['bounded01']")
    half = hoeffding_halfwidth(n, alpha, sharp)
    return Interval(mean - half, mean + half, 1.0 - alpha, "hoeffding_sharp" if sharp else "hoeffding",
                    "exact_finite_sample", {"n": n})


# -- bootstrap -------------------------------------------------------------------------


def _order_index(q: float, B: int) -> int:
    """0-based position of the ``ceil(q B)``-th order statistic, clamped to ``[1, B]``."""
    return min(max(math.ceil(q * B - 1e-9), 1), B) - 1


def _resample(values: np.ndarray, key, B: int, attempt: int = 0, rows=None) -> np.ndarray:
    """Bootstrap resamples ``(..., B, R)`` with draw ``(b, i)`` at counter ``(attempt, b, i)``."""
    R = values.shape[-1]
    b = np.arange(B, dtype=np.uint64) if rows is None else np.asarray(rows, dtype=np.uint64)
    ctr = (np.uint64(attempt) * np.uint64(B) + b[:, None]) * np.uint64(R) + np.arange(R, dtype=np.uint64)[None, :]
    key = np.asarray(key, dtype=np.uint64)
    idx = rng.randint(key.reshape(key.shape + (1, 1)), ctr, R).astype(np.intp)
    return np.take_along_axis(values[..., None, :], idx, axis=-1) if values.ndim > 1 else values[idx]


def bootstrap_keys(seed: int, trials=None):
    """Resampling keys: one for a single pool, or one per trial index."""
    if trials is None:
        return rng.derive_key(seed, rng.ROLE_BOOTSTRAP)
    return rng.derive_key(seed, np.asarray(trials, dtype=np.uint64), rng.ROLE_BOOTSTRAP)


def percentile_bounds(values: np.ndarray, alpha: float, B: int, keys) -> tuple[np.ndarray, np.ndarray]:
    """Percentile limits for pools ``values (T, R)`` with one key per row."""
    means = np.sort(_resample(values, keys, B).mean(axis=-1), axis=-1)
    return means[..., _order_index(alpha / 2, B)], means[..., _order_index(1 - alpha / 2, B)]


def bootstrap_percentile(pool, alpha: float = 0.05, B: int = DEFAULT_B, seed: int = 0) -> Interval:
    """Empirical ``alpha/2`` and ``1 - alpha/2`` quantiles of resampled means."""
    _check_alpha(alpha)
    v = _values(pool)
    _need(v.size, 2, "the percentile bootstrap")
    if B < 100:
        raise PreconditionError(f"the percentile bootstrap needs B >= 100, got {B}")
    lo, hi = percentile_bounds(v[None], alpha, B, bootstrap_keys(seed)[None])
    return Interval(float(lo[0]), float(hi[0]), 1.0 - alpha, "percentile", "asymptotic", {"B": B, "seed": seed})


def _t_stats(res: np.ndarray, mean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    R = res.shape[-1]
    s = np.std(res, axis=-1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = math.sqrt(R) * (res.mean(axis=-1) - mean[..., None]) / s
    return t, s


def bootstrap_t_bounds(values: np.ndarray, alpha: float, B: int, keys, max_attempts: int = 10):
    """Bootstrap-t limits for pools ``values (T, R)``; returns ``(lo, hi, dropped)``.

    Resamples whose standard deviation is zero are redrawn up to
    ``max_attempts - 1`` times and then dropped.
    """
    T, R = values.shape
    mean = values.mean(axis=-1)
    s = np.std(values, axis=-1, ddof=1)
    t, s_star = _t_stats(_resample(values, keys, B), mean)
    for attempt in range(1, max_attempts):
        bad = s_star == 0
        if not bad.any():
            break
        for row in np.flatnonzero(bad.any(axis=1)):
            if s[row] == 0:
                continue
            cols = np.flatnonzero(bad[row])
            res = _resample(values[row], keys[row], B, attempt, rows=cols)
            t[row, cols], s_star[row, cols] = _t_stats(res, mean[row:row + 1])
    valid = s_star > 0
    dropped = B - valid.sum(axis=1)
    lo, hi = mean.copy(), mean.copy()
    for row in range(T):
        if s[row] == 0:
            continue
        ts = np.sort(t[row][valid[row]])
        if ts.size == 0:
            raise InsufficientReplicatesError("every bootstrap resample had zero spread")
        k = ts.size
        scale = s[row] / math.sqrt(R)
        lo[row] = mean[row] - ts[_order_index(1 - alpha / 2, k)] * scale
        hi[row] = mean[row] - ts[_order_index(alpha / 2, k)] * scale
    return lo, hi, dropped


def bootstrap_t(pool, alpha: float = 0.05, B: int = DEFAULT_B, seed: int = 0) -> Interval:
    """Studentized bootstrap with ``t* = sqrt(R) (mean* - mean) / s*``."""
    _check_alpha(alpha)
    v = _values(pool)
    _need(v.size, 3, "the bootstrap-t interval")
    if B < 1:
        raise PreconditionError("B must be >= 1")
    meta = {"B": B, "seed": seed}
    if B < 100:
        warnings.warn(f"bootstrap-t with only B = {B} resamples", stacklevel=2)
        meta["warning"] = "low B"
    if np.all(v == v[0]):
        warnings.warn("constant pool: bootstrap-t statistic undefined, returning a zero-width interval", stacklevel=2)
        meta["warning"] = "constant pool"
        return Interval(float(v[0]), float(v[0]), 1.0 - alpha, "bootstrap_t", "asymptotic", meta)
    lo, hi, dropped = bootstrap_t_bounds(v[None], alpha, B, bootstrap_keys(seed)[None])
    meta["dropped"] = int(dropped[0])
    return Interval(float(lo[0]), float(hi[0]), 1.0 - alpha, "bootstrap_t", "asymptotic", meta)


# -- diagnostics -----------------------------------------------------------------------


def moments(pool) -> MomentDiagnostics:
    """Mean, unbiased variance and moment-ratio skewness / excess kurtosis.

    Skewness needs ``R >= 3`` and kurtosis ``R >= 4``; both are ``None`` when
    the pool has no spread.
    """
    v = _values(pool)
    _need(v.size, 3, "moment diagnostics")
    dev = v - v.mean()
    m2 = float(np.mean(dev**2))
    skew = kurt = None
    if m2 > 0:
        skew = float(np.mean(dev**3) / m2**1.5)
        if v.size >= 4:
            kurt = float(np.mean(dev**4) / m2**2 - 3.0)
    return MomentDiagnostics(float(v.mean()), float(np.var(v, ddof=1)), skew, kurt, v.size)


def berry_esseen_bound(rho: float, sigma: float, n: int) -> float:
    """``C rho / (sigma^3 sqrt(n))`` with ``C = 0.4748``."""
    if sigma <= 0:
        raise PreconditionError("sigma must be positive")
    if rho < 0 or n < 1:
        raise PreconditionError("need rho >= 0 and n >= 1")
    return BERRY_ESSEEN_C * rho / (sigma**3 * math.sqrt(n))


_COVERAGE_TERMS = {
    "normal": (0.14, -2.12, -3.35),
    "student_t": (0.14, -2.12, 0.0),
    "percentile": (-0.72, -0.37, -3.35),
    "bootstrap_t": (-2.84, 4.25, 0.0),
}


def hall_coverage_error(method: str, gamma: float, kappa: float, n: int, alpha: float = 0.05) -> float:
    """Leading ``O(1/n)`` term of the two-sided coverage error; the ``O(1/n^2)`` rest is dropped."""
    if method not in _COVERAGE_TERMS:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(_COVERAGE_TERMS)}")
    a, b, c = _COVERAGE_TERMS[method]
    z = stats.norm.ppf(1 - alpha / 2)
    return float((2.0 / n) * stats.norm.pdf(z) * (a * kappa + b * gamma**2 + c))


# -- quasi-standard error --------------------------------------------------------------


def quasi_standard_error(integrand: IntegrandDescriptor, base_points, d: int, R: int) -> tuple[float, float]:
    """Split each ``d R``-dimensional point into ``R`` blocks of ``d``; return ``(mean, QSE)``."""
    pts = base_points.points if isinstance(base_points, PointSet) else np.asarray(base_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != d * R:
        raise ValueError(f"base points have dimension {pts.shape[-1]}, need d * R = {d * R}")
    if integrand.d != d:
        raise ValueError(f"integrand has dimension {integrand.d}, not {d}")
    _need(R, 2, "the quasi-standard error")
    blocks = pts.reshape(pts.shape[0], R, d).transpose(1, 0, 2)
    est = np.mean(integrand(blocks), axis=1)
    mean = float(est.mean())
    return mean, float(math.sqrt(np.sum((est - mean) ** 2) / (R * (R - 1))))


# -- medians ---------------------------------------------------------------------------


def median_of_means(pool) -> float:
    return float(np.median(_values(pool)))


def median_tail(R: int, r: int) -> Fraction:
    """``P(median < r-th order statistic) = sum_{l < r} C(R, l) / 2^R``."""
    return Fraction(sum(math.comb(R, k) for k in range(r)), 2**R)


def median_rank(R: int, alpha: float) -> int:
    """Largest ``r`` with ``2 P(median < r-th order statistic) <= alpha``; 0 if none."""
    r = 0
    while r + 1 <= (R + 1) // 2 and 2 * median_tail(R, r + 1) <= alpha:
        r += 1
    return r


def ci_median_order_stat(pool, alpha: float = 0.05) -> Interval:
    """Distribution-free interval for the median of the replicate distribution.

    The target is the median, which need not equal the mean being integrated.
    """
    _check_alpha(alpha)
    v = np.sort(_values(pool))
    R = v.size
    r = median_rank(R, alpha)
    if r == 0:
        best = float(2 * median_tail(R, 1)) if R >= 1 else 1.0
        raise AttainabilityError(
            f"R = {R} replicates cannot reach two-sided level alpha = {alpha}; smallest attainable is {best:.6g}",
            best,
        )
    attained = float(2 * median_tail(R, r))
    meta = {"r": r, "attained_alpha": attained, "target": "median", "note": "covers the replicate median, not the mean"}
    return Interval(float(v[r - 1]), float(v[R - r]), 1.0 - attained, "median", "exact_finite_sample", meta)


def primes_between(lo: int, hi: int) -> list[int]:
    """Primes in ``[lo, hi]`` by trial division."""
    def is_prime(p):
        if p < 2:
            return False
        if p % 2 == 0:
            return p == 2
        return all(p % q for q in range(3, math.isqrt(p) + 1, 2))

    return [p for p in range(max(lo, 2), hi + 1) if is_prime(p)]


def random_prime_lattice_median(integrand: IntegrandDescriptor, d: int, n: int, R: int, seed: int) -> float:
    """Median over ``R`` rank-1 lattice rules with random prime size and random generator."""
    if n < 2 or R < 1:
        raise PreconditionError("need n >= 2 and R >= 1")
    if integrand.d != d:
        raise ValueError(f"integrand has dimension {integrand.d}, not {d}")
    primes = primes_between(n // 2 + 1, n)
    if not primes:
        raise PreconditionError(f"no prime in [{n // 2 + 1}, {n}]")
    key = rng.derive_key(seed, rng.ROLE_LATTICE)
    est = []
    for r in range(R):
        base = np.uint64(r * (d + 1))
        p = primes[int(rng.randint(key, base, len(primes)))]
        z = 1 + rng.randint(key, base + np.uint64(1) + np.arange(d, dtype=np.uint64), p - 1)
        pts = rank1_lattice(LatticeSpec(p, tuple(int(v) for v in z)), d).points
        est.append(float(np.mean(integrand(pts))))
    return float(np.median(est))
