"""Keyed counter-based random bits.

Every random quantity in the package is a pure function of a key and a
counter: ``bits = splitmix64(key + (counter + 1) * golden)``.  Keys are
derived by hashing a master seed together with integer labels such as the
replicate index, the dimension and a role tag, so replicates never share
state and can be generated in any order (or in parallel) with bit-identical
results.

All helpers broadcast over numpy arrays of keys and counters.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53

# role tags, one per independent use of randomness
ROLE_SHIFT = 1
ROLE_DIGITAL_SHIFT = 2
ROLE_MATRIX = 3
ROLE_NESTED = 4
ROLE_IID = 5
ROLE_BOOTSTRAP = 6
ROLE_LATTICE = 7
ROLE_MONOTONE = 8
ROLE_QSE = 9


def _u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(np.uint64, copy=False)
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & MASK64, dtype=np.uint64)
    return np.asarray([int(v) & MASK64 for v in x], dtype=np.uint64)


def mix64(z) -> np.ndarray:
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = _u64(z)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(seed, *parts) -> np.ndarray:
    """Hash a master seed and integer labels into a 64-bit key.

    ``parts`` may be ints or integer arrays; the result broadcasts.
    """
    key = mix64(_u64(seed) ^ np.uint64(0x5851F42D4C957F2D))
    with np.errstate(over="ignore"):
        for p in parts:
            key = mix64(key ^ mix64(_u64(p) + _GAMMA))
    return key


def counter_bits(key, counter) -> np.ndarray:
    """Return 64 random bits for ``(key, counter)``."""
    with np.errstate(over="ignore"):
        return mix64(_u64(key) + (_u64(counter) + np.uint64(1)) * _GAMMA)


def uniform(key, counter) -> np.ndarray:
    """Uniform draws on the 53-bit grid ``{k / 2**53}`` in ``[0, 1)``."""
    return (counter_bits(key, counter) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def randint(key, counter, high: int) -> np.ndarray:
    """Integers in ``[0, high)`` via the multiply-shift reduction of 32 bits."""
    if high < 1 or high > 1 << 32:
        raise ValueError(f"high must be in [1, 2**32], got {high}")
    hi32 = counter_bits(key, counter) >> np.uint64(32)
    with np.errstate(over="ignore"):
        return ((hi32 * np.uint64(high)) >> np.uint64(32)).astype(np.int64)
