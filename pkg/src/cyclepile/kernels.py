"""Compiled Monte Carlo kernels.

Site arrays are ``int64``; in ARW arrays a sleeping particle is ``-1``.
The SS and ARW stabilizers topple from a worklist instead of following a
fixed prescription.  By the abelian property the odometer (hence T) is the
same as for any other legal stabilizing order on the same instruction field,
and the test-suite checks this against the reference drivers in
:mod:`cyclepile.field`.

The coupled kernel follows the two-toppling chain-step prescription exactly,
because the chain-step count and the stopping time depend on the order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .errors import CapExceededError, CouplingViolationError
from .field import InstructionField, Stabilization, default_cap
from .ring import SLEEP, ArwConfig, SandpileConfig

ASLEEP = -1


@njit(cache=True)
def ss_stabilize_kernel(counts, seed, p, cap):
    """Stabilize SS counts in place. Returns ``(T, odometer, capped)``."""
    n = counts.shape[0]
    odo = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    queued = np.zeros(n, np.bool_)
    top = 0
    for x in range(n):
        if counts[x] >= 2:
            stack[top] = x
            top += 1
            queued[x] = True
    total = 0
    while top > 0:
        x = stack[top - 1]
        if counts[x] < 2:
            top -= 1
            queued[x] = False
            continue
        if total >= cap:
            return total, odo, True
        u = rng.instruction_uniform(seed, x, odo[x])
        odo[x] += 1
        total += 1
        k = rng.ss_outcome_index(u, p)
        if k == 0:
            continue
        if k == 1:
            rm, rp = 1, 0
        elif k == 2:
            rm, rp = 0, 1
        elif k == 3:
            rm, rp = 1, 1
        elif k == 4:
            rm, rp = 2, 0
        else:
            rm, rp = 0, 2
        left = x - 1 if x > 0 else n - 1
        right = x + 1 if x < n - 1 else 0
        counts[x] -= rm + rp
        counts[left] += rm
        counts[right] += rp
        if counts[left] >= 2 and not queued[left]:
            stack[top] = left
            top += 1
            queued[left] = True
        if counts[right] >= 2 and not queued[right]:
            stack[top] = right
            top += 1
            queued[right] = True
    return total, odo, False


@njit(cache=True, inline="always")
def _arw_topple(vals, x, k, n):
    """Apply ARW instruction ``k`` at active site ``x``; returns the landing site or -1."""
    if k == 0:
        if vals[x] == 1:
            vals[x] = ASLEEP
        return -1
    if k == 1:
        y = x - 1 if x > 0 else n - 1
    else:
        y = x + 1 if x < n - 1 else 0
    vals[x] -= 1
    if vals[y] == ASLEEP:
        vals[y] = 2
    else:
        vals[y] += 1
    return y


@njit(cache=True)
def arw_stabilize_kernel(vals, seed, lam, cap):
    """Stabilize ARW values in place until all particles sleep. Returns ``(T, odometer, capped)``."""
    n = vals.shape[0]
    odo = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    queued = np.zeros(n, np.bool_)
    top = 0
    for x in range(n):
        if vals[x] >= 1:
            stack[top] = x
            top += 1
            queued[x] = True
    total = 0
    while top > 0:
        x = stack[top - 1]
        if vals[x] < 1:
            top -= 1
            queued[x] = False
            continue
        if total >= cap:
            return total, odo, True
        u = rng.instruction_uniform(seed, x, odo[x])
        odo[x] += 1
        total += 1
        y = _arw_topple(vals, x, rng.arw_instruction_index(u, lam), n)
        if y >= 0 and not queued[y]:
            stack[top] = y
            top += 1
            queued[y] = True
    return total, odo, False


@njit(cache=True)
def coupled_kernel(vals, seed, lam, cap):
    """Run the ARW chain under the two-toppling prescription with an SS shadow.

    Returns ``(t_minus_1, chain_steps, v, u_bar, u, capped, violation)``;
    ``t_minus_1`` is -1 if the cap stopped the run before the hitting time.
    """
    n = vals.shape[0]
    u = np.zeros(n, np.int64)
    v = np.zeros(n, np.int64)
    u_bar = np.zeros(n, np.int64)
    shadow = np.empty(n, np.int64)
    all_ones = True
    for x in range(n):
        shadow[x] = 1 if vals[x] == ASLEEP else vals[x]
        if shadow[x] != 1:
            all_ones = False
    t_minus_1 = 0 if all_ones else -1
    steps = 0
    total = 0
    while True:
        two = -1
        active = -1
        for x in range(n):
            if vals[x] >= 1:
                if active < 0:
                    active = x
                if vals[x] >= 2:
                    two = x
                    break
        if active < 0:
            break
        if total >= cap:
            return t_minus_1, steps, v, u_bar, u, True, False
        steps += 1
        if two >= 0:
            x = two
            k1 = rng.arw_instruction_index(rng.instruction_uniform(seed, x, u[x]), lam)
            u[x] += 1
            _arw_topple(vals, x, k1, n)
            k2 = rng.arw_instruction_index(rng.instruction_uniform(seed, x, u[x]), lam)
            u[x] += 1
            _arw_topple(vals, x, k2, n)
            total += 2
            if t_minus_1 < 0:
                sx = -1
                for y in range(n):
                    if shadow[y] >= 2:
                        sx = y
                        break
                if sx != x:
                    return t_minus_1, steps, v, u_bar, u, False, True
                rm = (k1 == 1) + (k2 == 1)
                rp = (k1 == 2) + (k2 == 2)
                shadow[sx] -= rm + rp
                shadow[sx - 1 if sx > 0 else n - 1] += rm
                shadow[sx + 1 if sx < n - 1 else 0] += rp
                v[sx] += 1
                done = True
                for y in range(n):
                    c = 1 if vals[y] == ASLEEP else vals[y]
                    if c != shadow[y]:
                        return t_minus_1, steps, v, u_bar, u, False, True
                    if c != 1:
                        done = False
                if done:
                    t_minus_1 = steps
                    u_bar[:] = u
        else:
            if t_minus_1 < 0:
                return t_minus_1, steps, v, u_bar, u, False, True
            x = active
            k = rng.arw_instruction_index(rng.instruction_uniform(seed, x, u[x]), lam)
            u[x] += 1
            _arw_topple(vals, x, k, n)
            total += 1
            for y in range(n):
                if vals[y] >= 1:
                    k = rng.arw_instruction_index(rng.instruction_uniform(seed, y, u[y]), lam)
                    u[y] += 1
                    _arw_topple(vals, y, k, n)
                    total += 1
                    break
    return t_minus_1, steps, v, u_bar, u, False, False


def arw_to_array(eta: ArwConfig) -> np.ndarray:
    return np.array([ASLEEP if v is SLEEP else v for v in eta.values], dtype=np.int64)


def array_to_arw(vals: np.ndarray) -> ArwConfig:
    return ArwConfig(tuple(SLEEP if v == ASLEEP else int(v) for v in vals))


def ss_run(counts, seed: int, p: float, cap: int):
    """Low-level entry: ``(final counts, T, odometer, capped)`` without raising."""
    work = np.array(counts, dtype=np.int64)
    total, odo, capped = ss_stabilize_kernel(work, rng.as_seed(seed), float(p), np.int64(cap))
    return work, int(total), odo, bool(capped)


def arw_run(vals, seed: int, lam: float, cap: int):
    work = np.array(vals, dtype=np.int64)
    total, odo, capped = arw_stabilize_kernel(work, rng.as_seed(seed), float(lam), np.int64(cap))
    return work, int(total), odo, bool(capped)


def stabilize_ss_fast(s0: SandpileConfig, field: InstructionField, cap: int | None = None) -> Stabilization:
    """Compiled counterpart of :func:`cyclepile.field.stabilize_ss`."""
    cap = default_cap(s0.n) if cap is None else cap
    final, total, odo, capped = ss_run(s0.counts, field.seed, field.p, cap)
    odometer = tuple(int(c) for c in odo)
    if capped:
        raise CapExceededError(cap, odometer)
    return Stabilization(SandpileConfig(tuple(int(c) for c in final)), odometer, total)


def stabilize_arw_fast(eta0: ArwConfig, field: InstructionField, cap: int | None = None) -> Stabilization:
    """Compiled counterpart of :func:`cyclepile.field.stabilize_arw`."""
    cap = default_cap(eta0.n) if cap is None else cap
    final, total, odo, capped = arw_run(arw_to_array(eta0), field.seed, field.lam, cap)
    odometer = tuple(int(c) for c in odo)
    if capped:
        raise CapExceededError(cap, odometer)
    return Stabilization(array_to_arw(final), odometer, total)


@dataclass(frozen=True)
class CoupledArrays:
    t_minus_1: int
    chain_steps: int
    v: np.ndarray
    u_bar: np.ndarray
    u: np.ndarray
    capped: bool
    final: np.ndarray


def coupled_run_arrays(vals, seed: int, lam: float, cap: int) -> CoupledArrays:
    work = np.array(vals, dtype=np.int64)
    tm1, steps, v, u_bar, u, capped, violation = coupled_kernel(
        work, rng.as_seed(seed), float(lam), np.int64(cap)
    )
    if violation:
        raise CouplingViolationError(f"shadow SS chain diverged at chain step {steps} (seed {seed})")
    return CoupledArrays(int(tm1), int(steps), v, u_bar, u, bool(capped), work)
