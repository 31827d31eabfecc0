"""Test integrands on [0, 1]^d with known means and declared properties.

Properties gate which bracket and interval methods may be applied; they
are declared, never inferred.  Recognized tags:

``bounded01``        values in [0, 1]
``monotone``         nondecreasing in every coordinate
``monotone_1d``      d = 1 and nondecreasing
``convex``           d = 1 and convex
``jointly_convex``   convex on [0, 1]^d
``completely_monotone``  all alternating mixed differences nonnegative
``cm_absolutely_continuous``  the measure in ``f(0) + lambda nu([0, x])`` has a density
``additive``, ``smooth``, ``periodic``, ``discontinuous``
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AssumptionError

PROPERTIES = frozenset(
    {
        "bounded01",
        "monotone",
        "monotone_1d",
        "convex",
        "jointly_convex",
        "completely_monotone",
        "cm_absolutely_continuous",
        "additive",
        "smooth",
        "periodic",
        "discontinuous",
    }
)


class EvalCounter:
    """Thread-safe running count of function evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, k: int) -> None:
        with self._lock:
            self._count += k

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


@dataclass(frozen=True, eq=False)
class IntegrandDescriptor:
    """An integrand with its exact mean and declared structure.

    ``func`` maps an array of shape ``(..., d)`` to shape ``(...)`` and must
    be pure.  ``sigma`` is the exact standard deviation of ``f(U)`` when known.
    """

    name: str
    d: int
    func: Callable[[np.ndarray], np.ndarray]
    exact_mean: float | None = None
    properties: frozenset = frozenset()
    bounds: tuple | None = None
    sigma: float | None = None
    params: dict = field(default_factory=dict)
    notes: str = ""
    counter: EvalCounter = field(default_factory=EvalCounter, repr=False)

    def __post_init__(self):
        props = frozenset(self.properties)
        unknown = props - PROPERTIES
        if unknown:
            raise ValueError(f"unknown properties {sorted(unknown)}")
        object.__setattr__(self, "properties", props)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"{self.name} expects dimension {self.d}, got {x.shape[-1]}")
        y = np.asarray(self.func(x), dtype=np.float64)
        self.counter.add(int(np.prod(x.shape[:-1])))
        return y

    def has(self, *props: str) -> bool:
        return set(props) <= self.properties

    def require(self, *props: str) -> None:
        missing = set(props) - self.properties
        if missing:
            raise AssumptionError(f"integrand {self.name!r} does not declare {sorted(missing)}")

    @property
    def n_evals(self) -> int:
        return self.counter.count

    def summary(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "exact_mean": self.exact_mean,
            "sigma": self.sigma,
            "properties": sorted(self.properties),
            "bounds": list(self.bounds) if self.bounds else None,
            "params": self.params,
        }


def declare(func: Callable, d: int, *properties: str, exact_mean=None, name: str = "user", **kwargs) -> IntegrandDescriptor:
    """Wrap a vectorized callable with explicitly declared properties."""
    return IntegrandDescriptor(name, d, func, exact_mean, frozenset(properties), **kwargs)


def scalar_function(func: Callable[[float], float], *properties: str, exact_mean=None, name: str = "user") -> IntegrandDescriptor:
    """Declare a 1-D function of a scalar (``x -> f(x)``) on [0, 1]."""
    return declare(lambda x: np.vectorize(func, otypes=[float])(x[..., 0]), 1, *properties, exact_mean=exact_mean, name=name)


# -- fixtures --------------------------------------------------------------------


def _product_cdf(d: int) -> IntegrandDescriptor:
    props = {"bounded01", "monotone", "smooth", "completely_monotone", "cm_absolutely_continuous"}
    if d == 1:
        props |= {"monotone_1d", "convex", "jointly_convex"}
    return IntegrandDescriptor(
        "product_cdf", d, lambda x: np.prod(x, axis=-1), 2.0**-d, frozenset(props),
        bounds=(0.0, 1.0), sigma=math.sqrt(3.0**-d - 4.0**-d),
        notes="CDF of the uniform distribution on [0,1]^d",
    )


def _additive(d: int) -> IntegrandDescriptor:
    props = {"bounded01", "monotone", "smooth", "additive", "jointly_convex", "completely_monotone"}
    if d == 1:
        props |= {"monotone_1d", "convex", "cm_absolutely_continuous"}
    return IntegrandDescriptor(
        "additive", d, lambda x: np.mean(x, axis=-1), 0.5, frozenset(props),
        bounds=(0.0, 1.0), sigma=math.sqrt(1.0 / (12.0 * d)),
    )


def _smooth_product(d: int, c: float = 1.0) -> IntegrandDescriptor:
    props = {"smooth"}
    if 0.0 <= c <= 2.0:
        props |= {"monotone", "completely_monotone"}
        if c == 2.0 or d == 1:
            props.add("cm_absolutely_continuous")
    if d == 1:
        props |= {"convex", "jointly_convex"}
        if c >= 0:
            props.add("monotone_1d")
    lo, hi = 1.0 - abs(c) / 2.0, 1.0 + abs(c) / 2.0
    return IntegrandDescriptor(
        "smooth_product", d, lambda x: np.prod(1.0 + c * (x - 0.5), axis=-1), 1.0, frozenset(props),
        bounds=(lo**d, hi**d) if lo >= 0 else None,
        sigma=math.sqrt((1.0 + c * c / 12.0) ** d - 1.0),
        params={"c": c},
    )


def _indicator(d: int, a=0.7) -> IntegrandDescriptor:
    a_vec = np.broadcast_to(np.asarray(a, dtype=np.float64), (d,)).copy()
    if np.any(a_vec < 0) or np.any(a_vec > 1):
        raise ValueError("box corner must lie in [0, 1]^d")
    p = float(np.prod(a_vec))
    return IntegrandDescriptor(
        "indicator", d, lambda x: np.all(x <= a_vec, axis=-1).astype(np.float64), p,
        frozenset({"bounded01", "discontinuous"}), bounds=(0.0, 1.0), sigma=math.sqrt(p * (1.0 - p)),
        params={"a": a_vec.tolist()},
    )


def _unfriendly(d: int, c: float = 1.0) -> IntegrandDescriptor:
    half = abs(c) * 0.5**d
    return IntegrandDescriptor(
        "unfriendly_product", d, lambda x: c * np.prod(x - 0.5, axis=-1), 0.0, frozenset({"smooth"}),
        bounds=(-half, half), sigma=abs(c) * 12.0 ** (-d / 2.0), params={"c": c},
        notes="all variance in the top-order ANOVA term",
    )


def _exp1d(d: int = 1) -> IntegrandDescriptor:
    if d != 1:
        raise ValueError("exp1d is one-dimensional")
    e = math.e
    props = {"smooth", "monotone", "monotone_1d", "convex", "jointly_convex", "completely_monotone", "cm_absolutely_continuous"}
    return IntegrandDescriptor(
        "exp1d", 1, lambda x: np.exp(x[..., 0]), e - 1.0, frozenset(props),
        bounds=(1.0, e), sigma=math.sqrt((e * e - 1.0) / 2.0 - (e - 1.0) ** 2),
    )


def _sum_squares(d: int) -> IntegrandDescriptor:
    props = {"bounded01", "monotone", "smooth", "additive", "jointly_convex", "completely_monotone"}
    if d == 1:
        props |= {"monotone_1d", "convex", "cm_absolutely_continuous"}
    # Var(x^2) = 1/5 - 1/9 = 4/45
    return IntegrandDescriptor(
        "sum_squares", d, lambda x: np.mean(x * x, axis=-1), 1.0 / 3.0, frozenset(props),
        bounds=(0.0, 1.0), sigma=math.sqrt(4.0 / 45.0 / d),
    )


def _exp_sum(d: int) -> IntegrandDescriptor:
    props = {"smooth", "monotone", "jointly_convex", "completely_monotone"}
    if d == 1:
        props |= {"monotone_1d", "convex", "cm_absolutely_continuous"}
    one = d * (math.exp(1.0 / d) - 1.0)
    two = (d / 2.0) * (math.exp(2.0 / d) - 1.0)
    return IntegrandDescriptor(
        "exp_sum", d, lambda x: np.exp(np.mean(x, axis=-1)), one**d, frozenset(props),
        bounds=(1.0, math.e), sigma=math.sqrt(two**d - one ** (2 * d)),
    )


def _periodic_product(d: int, c: float = 0.5) -> IntegrandDescriptor:
    return IntegrandDescriptor(
        "periodic_product", d, lambda x: np.prod(1.0 + c * np.sin(2.0 * np.pi * x), axis=-1), 1.0,
        frozenset({"smooth", "periodic"}), bounds=(0.0, (1.0 + abs(c)) ** d) if abs(c) <= 1 else None,
        sigma=math.sqrt((1.0 + c * c / 2.0) ** d - 1.0), params={"c": c},
    )


def _constant(d: int, value: float = 1.0) -> IntegrandDescriptor:
    props = {"smooth", "monotone", "jointly_convex", "completely_monotone", "cm_absolutely_continuous", "additive"}
    if 0.0 <= value <= 1.0:
        props.add("bounded01")
    if d == 1:
        props |= {"monotone_1d", "convex"}
    return IntegrandDescriptor(
        "constant", d, lambda x: np.full(x.shape[:-1], float(value)), float(value), frozenset(props),
        bounds=(value, value), sigma=0.0, params={"value": value},
    )


FIXTURES: dict[str, Callable[..., IntegrandDescriptor]] = {
    "product_cdf": _product_cdf,
    "additive": _additive,
    "smooth_product": _smooth_product,
    "indicator": _indicator,
    "unfriendly_product": _unfriendly,
    "exp1d": _exp1d,
    "sum_squares": _sum_squares,
    "exp_sum": _exp_sum,
    "periodic_product": _periodic_product,
    "constant": _constant,
}
FIXED_DIMENSION = {"exp1d": 1}


def fixture(name: str, d: int | None = None, **params) -> IntegrandDescriptor:
    """Build a registered fixture in dimension ``d``."""
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown integrand {name!r}; known: {sorted(FIXTURES)}") from None
    if d is None:
        d = FIXED_DIMENSION.get(name, 2)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return factory(d, **params)


def mesh_mean(f: IntegrandDescriptor, per_axis: int) -> float:
    """Tensor midpoint-rule average on a ``per_axis ** d`` grid (the dense-mesh oracle)."""
    g = (np.arange(per_axis) + 0.5) / per_axis
    total, count = 0.0, 0
    grids = np.meshgrid(*([g] * (f.d - 1)), indexing="ij") if f.d > 1 else []
    rest = np.stack([a.ravel() for a in grids], axis=-1) if grids else np.zeros((1, 0))
    for x0 in g:
        pts = np.hstack([np.full((rest.shape[0], 1), x0), rest])
        total += float(np.sum(f.func(pts)))
        count += pts.shape[0]
    return total / count


def weighted_norm_g(c: float, d: int, eta: float) -> float:
    """Norm of ``c * prod(x_j - 1/2)`` in the unanchored space with weights ``j**-eta``.

    Its square is ``c**2 * (d!)**eta``; the norm ``|c| * (d!)**(eta/2)`` is returned.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    log_norm = 0.5 * eta * math.lgamma(d + 1)
    if log_norm > math.log(np.finfo(float).max) - max(0.0, math.log(abs(c) or 1.0)):
        raise OverflowError(f"(d!)**(eta/2) overflows for d={d}, eta={eta}")
    if abs(eta) < 700 and d <= 20:
        return abs(c) * float(math.factorial(d)) ** (eta / 2.0)
    return abs(c) * math.exp(log_norm)
