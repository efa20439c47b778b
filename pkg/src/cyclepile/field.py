"""Sitewise representation: instruction fields, odometers and toppling drivers.

All randomness of a run lives in an :class:`InstructionField`.  Each time
site ``x`` topples it consumes the next unread instruction of its stack,
i.e. instruction ``(x, v(x))`` where ``v`` is the odometer so far.  The
drivers here are plain Python and favour clarity; :mod:`cyclepile.kernels`
holds the compiled equivalents used for large sweeps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO

import numpy as np

from . import rng
from .errors import CapExceededError
from .ring import (
    ARW_INSTRUCTIONS,
    SS_OUTCOMES,
    ArwConfig,
    ArwInstruction,
    SandpileConfig,
    SsOutcome,
    apply_arw_topple,
    apply_ss_topple,
)

Odometer = tuple[int, ...]


def default_cap(n: int) -> int:
    """64 n^3 topplings: generous for the fast phase, flags slow-phase runs."""
    return 64 * n**3


@dataclass(frozen=True)
class InstructionField:
    """Lazily generated per-site instruction stacks.

    Give either the lazy parameter ``p`` (SS) or the sleep rate ``lam``
    (ARW); the other is derived through ``p = lam / (1 + lam)``.
    """

    seed: int
    n: int
    p: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("ring needs at least 2 sites")
        if self.p is None and self.lam is None:
            raise ValueError("need p or lam")
        if self.p is not None and not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.p is None:
            object.__setattr__(self, "p", self.lam / (1 + self.lam))
        elif self.lam is None:
            object.__setattr__(self, "lam", self.p / (1 - self.p))

    @property
    def seed64(self) -> np.uint64:
        return rng.as_seed(self.seed)

    def ss(self, x: int, i: int) -> SsOutcome:
        return draw_ss_instruction(self, x, i)

    def arw(self, x: int, i: int) -> ArwInstruction:
        return draw_arw_instruction(self, x, i)


def _check_site(field: InstructionField, x: int, i: int):
    if not 0 <= x < field.n:
        raise IndexError(f"site {x} outside Z_{field.n}")
    if i < 0:
        raise IndexError(f"negative instruction index {i}")


def draw_ss_instruction(field: InstructionField, x: int, i: int) -> SsOutcome:
    _check_site(field, x, i)
    u = rng.instruction_uniform(field.seed64, np.int64(x), np.int64(i))
    return SS_OUTCOMES[rng.ss_outcome_index(u, float(field.p))]


def draw_arw_instruction(field: InstructionField, x: int, i: int) -> ArwInstruction:
    _check_site(field, x, i)
    u = rng.instruction_uniform(field.seed64, np.int64(x), np.int64(i))
    return ARW_INSTRUCTIONS[rng.arw_instruction_index(u, float(field.lam))]


class Policy(enum.Enum):
    """Rule choosing the next unstable site to topple."""

    MIN = "min"
    MAX = "max"
    RANDOM = "random"


@dataclass(frozen=True)
class Stabilization:
    final: SandpileConfig | ArwConfig
    odometer: Odometer
    sequence_length: int
    stabilized: bool = True

    @property
    def total(self) -> int:
        return sum(self.odometer)


def _model_ops(config):
    if isinstance(config, ArwConfig):
        return ArwConfig.active_sites, apply_arw_topple, draw_arw_instruction
    if isinstance(config, SandpileConfig):
        return SandpileConfig.unstable_sites, apply_ss_topple, draw_ss_instruction
    raise TypeError(f"unsupported configuration type {type(config).__name__}")


def _chooser(policy: Policy, policy_seed: int) -> Callable[[list[int]], int]:
    policy = Policy(policy)
    if policy is Policy.MIN:
        return lambda sites: sites[0]
    if policy is Policy.MAX:
        return lambda sites: sites[-1]
    gen = np.random.default_rng(policy_seed)
    return lambda sites: sites[int(gen.integers(len(sites)))]


def _token(instr) -> str:
    if isinstance(instr, SsOutcome):
        return f"{instr.rho_minus}/{instr.rho_plus}"
    return str(instr)


def run_legal(
    config,
    field: InstructionField,
    policy: Policy = Policy.MIN,
    max_steps: int | None = None,
    *,
    policy_seed: int = 0,
    trace: TextIO | None = None,
) -> Stabilization:
    """Topple policy-selected unstable sites until stable or ``max_steps`` topplings.

    Works for both models; ARW stops only once every particle sleeps.
    The returned ``stabilized`` flag tells whether the run finished.
    """
    if config.n != field.n:
        raise ValueError(f"configuration has {config.n} sites, field has {field.n}")
    unstable, topple, draw = _model_ops(config)
    choose = _chooser(policy, policy_seed)
    odometer = [0] * config.n
    steps = 0
    while True:
        sites = unstable(config)
        if not sites:
            return Stabilization(config, tuple(odometer), steps, True)
        if max_steps is not None and steps >= max_steps:
            return Stabilization(config, tuple(odometer), steps, False)
        x = choose(sites)
        instr = draw(field, x, odometer[x])
        config = topple(config, x, instr)
        odometer[x] += 1
        steps += 1
        if trace is not None:
            trace.write(f"{steps},{x},{_token(instr)},{config}\n")


def _stabilize(config, field, policy, cap, policy_seed, trace) -> Stabilization:
    cap = default_cap(config.n) if cap is None else cap
    if cap <= 0:
        raise ValueError("cap must be positive")
    result = run_legal(config, field, policy, cap, policy_seed=policy_seed, trace=trace)
    if not result.stabilized:
        raise CapExceededError(cap, result.odometer)
    return result


def stabilize_ss(
    s0: SandpileConfig,
    field: InstructionField,
    policy: Policy = Policy.MIN,
    cap: int | None = None,
    *,
    policy_seed: int = 0,
    trace: TextIO | None = None,
) -> Stabilization:
    """Stabilize an SS configuration; ``sequence_length`` is T_SS.

    Raises :class:`CapExceededError` (carrying the partial odometer) after
    ``cap`` topplings.
    """
    if not isinstance(s0, SandpileConfig):
        raise TypeError("stabilize_ss expects a SandpileConfig")
    return _stabilize(s0, field, policy, cap, policy_seed, trace)


def stabilize_arw(
    eta0: ArwConfig,
    field: InstructionField,
    policy: Policy = Policy.MIN,
    cap: int | None = None,
    *,
    policy_seed: int = 0,
    trace: TextIO | None = None,
) -> Stabilization:
    """Stabilize an ARW configuration (every particle asleep); ``sequence_length`` is T_ARW."""
    if not isinstance(eta0, ArwConfig):
        raise TypeError("stabilize_arw expects an ArwConfig")
    return _stabilize(eta0, field, policy, cap, policy_seed, trace)


@dataclass(frozen=True)
class AbelianCheck:
    agree: bool
    odometers: list[Odometer]
    finals: list


def verify_abelian(
    s0,
    field: InstructionField,
    policies: Sequence[Policy] = (Policy.MIN, Policy.MAX, Policy.RANDOM),
    cap: int | None = None,
    *,
    policy_seed: int = 0,
) -> AbelianCheck:
    """Stabilize ``s0`` under every policy against the same field and compare odometers."""
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    runs = [_stabilize(s0, field, pol, cap, policy_seed, None) for pol in policies]
    odometers = [r.odometer for r in runs]
    finals = [r.final for r in runs]
    agree = all(o == odometers[0] for o in odometers) and all(f == finals[0] for f in finals)
    return AbelianCheck(agree, odometers, finals)


@dataclass(frozen=True)
class LeastActionCheck:
    dominated: bool
    prefix_odometer: Odometer
    full_odometer: Odometer
    prefix_length: int


def verify_least_action(
    s0,
    field: InstructionField,
    prefix_policy: Policy = Policy.RANDOM,
    cap: int | None = None,
    *,
    prefix_length: int | None = None,
    full_policy: Policy = Policy.MIN,
    policy_seed: int = 0,
) -> LeastActionCheck:
    """Compare a truncated legal run against a full stabilizing run on the same field.

    When ``prefix_length`` is omitted it is drawn uniformly from
    ``0 .. T`` (``T`` the full-run length) using ``policy_seed``.
    """
    full = _stabilize(s0, field, full_policy, cap, policy_seed, None)
    if prefix_length is None:
        gen = np.random.default_rng([policy_seed, 0x5EED])
        prefix_length = int(gen.integers(full.sequence_length + 1))
    prefix = run_legal(s0, field, prefix_policy, prefix_length, policy_seed=policy_seed + 1)
    dominated = all(a <= b for a, b in zip(prefix.odometer, full.odometer))
    return LeastActionCheck(dominated, prefix.odometer, full.odometer, prefix.sequence_length)

