"""Counter-based instruction randomness.

Instruction ``i`` at site ``x`` is a pure function of ``(seed, x, i)``: a
64-bit word obtained by chaining the splitmix64 finalizer over the three
keys.  Nothing is stored, so re-reading an instruction always gives the same
answer and stacks are effectively infinite.

The same jitted functions are used by the pure-Python drivers and by the
Monte Carlo kernels, so both read identical instruction stacks.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SITE_KEY = np.uint64(0xD1B54A32D192ED03)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def instruction_word(seed, x, i):
    h = mix64(seed ^ _GOLDEN)
    h = mix64(h + (np.uint64(x) + np.uint64(1)) * _SITE_KEY)
    return mix64(h + (np.uint64(i) + np.uint64(1)) * _GOLDEN)


@njit(cache=True, inline="always")
def instruction_uniform(seed, x, i):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(instruction_word(seed, x, i) >> np.uint64(11)) * _INV_2_53


@njit(cache=True, inline="always")
def ss_outcome_index(u, p):
    """Map a uniform to an index into the SS outcome table order."""
    q = 1.0 - p
    c = p * p
    if u < c:
        return 0
    c += p * q
    if u < c:
        return 1
    c += p * q
    if u < c:
        return 2
    c += 0.5 * q * q
    if u < c:
        return 3
    c += 0.25 * q * q
    if u < c:
        return 4
    return 5


@njit(cache=True, inline="always")
def arw_instruction_index(u, lam):
    """0 = sleep, 1 = clockwise step, 2 = counterclockwise step."""
    sleep = lam / (1.0 + lam)
    if u < sleep:
        return 0
    if u < sleep + 0.5 / (1.0 + lam):
        return 1
    return 2


def as_seed(seed: int) -> np.uint64:
    """Reduce an arbitrary Python integer to a 64-bit seed."""
    return np.uint64(int(seed) & _MASK64)


def uniform(seed: int, x: int, i: int) -> float:
    return float(instruction_uniform(as_seed(seed), np.int64(x), np.int64(i)))
