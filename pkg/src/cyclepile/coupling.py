"""Coupling SS to ARW through the two-toppling chain prescription.

One chain step is two ARW topplings.  While some site holds two or more
particles, both topplings hit the least such site; the pair of instructions
used there determines an SS outcome, and applying it to the SS shadow keeps
``project(eta_t) == s_t`` until the ARW chain first reaches a state with one
particle per site (chain step ``T_{-1}``).  Afterwards the ARW chain keeps
going until every particle sleeps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CapExceededError, CouplingViolationError, IllegalStateError
from .field import InstructionField, Odometer, default_cap
from .kernels import arw_to_array, array_to_arw, coupled_run_arrays
from .ring import (
    ArwConfig,
    ArwInstruction,
    SsOutcome,
    apply_arw_topple,
    apply_ss_topple,
    classify,
    project,
)


@dataclass(frozen=True)
class ToppleRecord:
    site: int
    index: int
    instruction: ArwInstruction


@dataclass(frozen=True)
class ChainStep:
    eta: ArwConfig
    topples: tuple[ToppleRecord, ...]
    cursors: tuple[int, ...]
    paired: bool


def arw_chain_step(eta: ArwConfig, field: InstructionField, cursors) -> ChainStep:
    """Advance the ARW chain by one step (one or two topplings).

    ``cursors[x]`` is the index of the next unread instruction at ``x``;
    the returned cursors are advanced past whatever was consumed.
    """
    info = classify(eta)
    if info.arw_stable:
        raise IllegalStateError(f"{eta} is ARW-stable; no chain step exists")
    cursors = list(cursors)
    records = []

    def topple(config, x):
        instr = field.arw(x, cursors[x])
        records.append(ToppleRecord(x, cursors[x], instr))
        cursors[x] += 1
        return apply_arw_topple(config, x, instr)

    if info.min_two_site is not None:
        x = info.min_two_site
        eta = topple(eta, x)
        # at least one particle stayed behind and it is still active
        eta = topple(eta, x)
        paired = True
    else:
        eta = topple(eta, info.min_active_site)
        nxt = classify(eta).min_active_site
        if nxt is not None:
            eta = topple(eta, nxt)
        paired = False
    return ChainStep(eta, tuple(records), tuple(cursors), paired)


def derive_ss_outcome(first: ArwInstruction, second: ArwInstruction) -> SsOutcome:
    pair = (ArwInstruction(first), ArwInstruction(second))
    return SsOutcome(pair.count(ArwInstruction.STEP_CW), pair.count(ArwInstruction.STEP_CCW))


@dataclass(frozen=True)
class CoupledRun:
    v: Odometer
    u_bar: Odometer
    u: Odometer
    t_minus_1: int
    chain_steps: int
    final: ArwConfig

    @property
    def t_ss(self) -> int:
        return sum(self.v)

    @property
    def t_arw(self) -> int:
        return sum(self.u)

    @property
    def max_odometer(self) -> int:
        return max(self.u)


def check_coupled_identities(run: CoupledRun) -> None:
    """Raise :class:`CouplingViolationError` unless ``v = ceil(u_bar/2)`` and ``u_bar <= u`` sitewise."""
    for x, (v, ub, u) in enumerate(zip(run.v, run.u_bar, run.u)):
        if v != -(-ub // 2):
            raise CouplingViolationError(f"site {x}: v={v} but ceil(u_bar/2)={-(-ub // 2)}")
        if ub != 2 * v:
            raise CouplingViolationError(f"site {x}: u_bar={ub} is not 2*v={2 * v}")
        if ub > u:
            raise CouplingViolationError(f"site {x}: u_bar={ub} exceeds u={u}")


def run_coupled(eta0: ArwConfig, field: InstructionField, cap: int | None = None) -> CoupledRun:
    """Run the coupled ARW/SS pair to full ARW stabilization (reference implementation).

    The SS side starts from ``project(eta0)``.  ``cap`` bounds the number of
    ARW topplings.
    """
    n = eta0.n
    cap = default_cap(n) if cap is None else cap
    eta = eta0
    s = project(eta0)
    cursors = (0,) * n
    v = [0] * n
    steps = 0
    t_minus_1 = 0 if classify(eta).counts_all_ones else None
    u_bar = cursors if t_minus_1 == 0 else None
    while not eta.is_stable:
        if sum(cursors) >= cap:
            raise CapExceededError(cap, cursors)
        step = arw_chain_step(eta, field, cursors)
        steps += 1
        if t_minus_1 is None:
            x = classify(s).min_two_site
            sites = {r.site for r in step.topples}
            if not step.paired or sites != {x}:
                raise CouplingViolationError(f"chain step {steps} did not pair topplings at site {x}")
            first, second = (r.instruction for r in step.topples)
            s = apply_ss_topple(s, x, derive_ss_outcome(first, second))
            v[x] += 1
            if project(step.eta) != s:
                raise CouplingViolationError(f"step {steps}: |eta|={project(step.eta)} but s={s}")
            if s.is_stable:
                t_minus_1 = steps
                u_bar = step.cursors
        eta, cursors = step.eta, step.cursors
    run = CoupledRun(tuple(v), tuple(u_bar), tuple(cursors), t_minus_1, steps, eta)
    check_coupled_identities(run)
    return run


def run_coupled_fast(eta0: ArwConfig, field: InstructionField, cap: int | None = None) -> CoupledRun:
    """Compiled counterpart of :func:`run_coupled`."""
    cap = default_cap(eta0.n) if cap is None else cap
    res = coupled_run_arrays(arw_to_array(eta0), field.seed, field.lam, cap)
    if res.capped:
        raise CapExceededError(cap, tuple(int(c) for c in res.u))
    run = CoupledRun(
        tuple(int(c) for c in res.v),
        tuple(int(c) for c in res.u_bar),
        tuple(int(c) for c in res.u),
        res.t_minus_1,
        res.chain_steps,
        array_to_arw(res.final),
    )
    check_coupled_identities(run)
    return run


@dataclass(frozen=True)
class ArwStabilization:
    final: ArwConfig
    odometer: Odometer
    chain_steps: int


def stabilize_arw_full(eta0: ArwConfig, field: InstructionField, cap: int | None = None) -> ArwStabilization:
    """Stabilize ARW by repeated chain steps of the prescription."""
    if not field.lam > 0:
        raise ValueError("ARW stabilization needs lam > 0")
    cap = default_cap(eta0.n) if cap is None else cap
    eta, cursors, steps = eta0, (0,) * eta0.n, 0
    while not eta.is_stable:
        if sum(cursors) >= cap:
            raise CapExceededError(cap, cursors)
        step = arw_chain_step(eta, field, cursors)
        eta, cursors = step.eta, step.cursors
        steps += 1
    return ArwStabilization(eta, cursors, steps)
