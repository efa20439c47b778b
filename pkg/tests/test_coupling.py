import math
from collections import Counter, defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclepile.coupling import (
    CoupledRun,
    arw_chain_step,
    check_coupled_identities,
    derive_ss_outcome,
    run_coupled,
    run_coupled_fast,
    stabilize_arw_full,
)
from cyclepile.errors import CapExceededError, CouplingViolationError, IllegalStateError
from cyclepile.exact import arw_chain_step_law, enumerate_states
from cyclepile.field import InstructionField
from cyclepile.kernels import coupled_run_arrays, ss_run
from cyclepile.ring import SLEEP as S, ArwConfig, ArwInstruction, SsOutcome, arw_instruction_probabilities

SL, CW, CCW = ArwInstruction.SLEEP, ArwInstruction.STEP_CW, ArwInstruction.STEP_CCW


class ScriptedField:
    """Instruction field with fixed instructions at chosen (site, index) pairs."""

    def __init__(self, script, default=SL):
        self.script = script
        self.default = default

    def arw(self, x, i):
        return self.script.get((x, i), self.default)


class SequenceField:
    """Hands out instructions in reading order, whatever the site."""

    def __init__(self, instructions):
        self.pending = list(instructions)

    def arw(self, x, i):
        return self.pending.pop(0)


@pytest.mark.parametrize(
    "first, second, expected",
    [
        (SL, SL, (0, 0)),
        (CW, SL, (1, 0)),
        (SL, CW, (1, 0)),
        (CCW, SL, (0, 1)),
        (SL, CCW, (0, 1)),
        (CW, CCW, (1, 1)),
        (CCW, CW, (1, 1)),
        (CW, CW, (2, 0)),
        (CCW, CCW, (0, 2)),
    ],
)
def test_derive_ss_outcome(first, second, expected):
    assert derive_ss_outcome(first, second) == SsOutcome(*expected)


def test_chain_step_pair_at_pile():
    field = ScriptedField({(0, 0): CW, (0, 1): CCW})
    step = arw_chain_step(ArwConfig((3, 0, 0)), field, (0, 0, 0))
    assert step.eta == ArwConfig((1, 1, 1))
    assert [(r.site, r.instruction) for r in step.topples] == [(0, CW), (0, CCW)]
    assert step.cursors == (2, 0, 0) and step.paired
    # a failed sleep second leaves the state after the first toppling
    field1 = ScriptedField({(0, 0): CW})
    half = arw_chain_step(ArwConfig((3, 0, 0)), field1, (0, 0, 0))
    assert half.eta == ArwConfig((2, 0, 1))


def test_chain_step_else_branch():
    field = ScriptedField({}, default=SL)
    step = arw_chain_step(ArwConfig((1, 1, S)), field, (0, 0, 0))
    assert [r.site for r in step.topples] == [0, 1]
    assert step.eta == ArwConfig((S, S, S)) and not step.paired


def test_chain_step_double_failed_sleep():
    step = arw_chain_step(ArwConfig((2, 0, S)), ScriptedField({}), (0, 0, 0))
    assert step.eta == ArwConfig((2, 0, S))
    assert len(step.topples) == 2


def test_chain_step_single_toppling_when_last_active_sleeps():
    step = arw_chain_step(ArwConfig((S, 1, S)), ScriptedField({}), (4, 0, 1))
    assert len(step.topples) == 1 and step.eta == ArwConfig.asleep(3)
    assert step.cursors == (4, 1, 1)


def test_chain_step_rejects_stable():
    with pytest.raises(IllegalStateError):
        arw_chain_step(ArwConfig.asleep(3), ScriptedField({}), (0, 0, 0))


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("lam", [Fraction(1), Fraction(7, 3)])
def test_chain_step_reproduces_exact_law(n, lam):
    probs = arw_instruction_probabilities(lam)
    for eta in enumerate_states(n, "arw"):
        if eta.is_stable:
            continue
        law = defaultdict(Fraction)
        for first, q1 in probs.items():
            for second, q2 in probs.items():
                step = arw_chain_step(eta, SequenceField([first, second]), (0,) * n)
                law[step.eta] += q1 * q2
        assert dict(law) == arw_chain_step_law(eta, lam), eta


def test_run_coupled_all_active_start():
    run = run_coupled(ArwConfig.all_active(5), InstructionField(3, 5, lam=2.0))
    assert run.t_minus_1 == 0 and run.u_bar == (0,) * 5 and run.v == (0,) * 5
    assert run.t_arw == sum(run.u) >= 5


def test_run_coupled_forced_trace():
    field = ScriptedField({(0, 0): CW, (0, 1): CCW})
    run = run_coupled(ArwConfig((3, 0, 0)), field)
    assert run.t_minus_1 == 1
    assert run.u_bar == (2, 0, 0) and run.v == (1, 0, 0)
    assert run.u == (3, 1, 1)
    assert run.final == ArwConfig.asleep(3)


def test_identity_checker_catches_violations():
    good = CoupledRun((1, 0), (2, 0), (3, 1), 1, 3, ArwConfig.asleep(2))
    check_coupled_identities(good)
    with pytest.raises(CouplingViolationError):
        check_coupled_identities(CoupledRun((1, 0), (2, 0), (1, 1), 1, 3, ArwConfig.asleep(2)))
    with pytest.raises(CouplingViolationError):
        check_coupled_identities(CoupledRun((2, 0), (2, 0), (3, 1), 1, 3, ArwConfig.asleep(2)))


@st.composite
def starts(draw, min_n=3, max_n=10):
    n = draw(st.integers(min_n, max_n))
    sites = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    counts = np.bincount(sites, minlength=n).tolist()
    sleepy = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return ArwConfig(tuple(S if c == 1 and z else c for c, z in zip(counts, sleepy)))


@settings(max_examples=150, deadline=None)
@given(starts(), st.integers(0, 2**64 - 1), st.sampled_from(["1", "3", "log"]))
def test_reference_and_compiled_coupling_agree(eta0, seed, lam_kind):
    lam = math.log(eta0.n) if lam_kind == "log" else float(lam_kind)
    field = InstructionField(seed, eta0.n, lam=lam)
    ref = run_coupled(eta0, field)
    fast = run_coupled_fast(eta0, field)
    assert ref == fast
    assert all(v == -(-ub // 2) and ub <= u for v, ub, u in zip(ref.v, ref.u_bar, ref.u))
    assert ref.t_arw >= 2 * ref.t_ss >= 2 * ref.t_ss - eta0.n
    assert ref.final == ArwConfig.asleep(eta0.n)


@settings(max_examples=60, deadline=None)
@given(starts(max_n=8), st.integers(0, 2**64 - 1))
def test_full_odometer_matches_prescription_run(eta0, seed):
    field = InstructionField(seed, eta0.n, lam=1.5)
    full = stabilize_arw_full(eta0, field)
    coupled = run_coupled(eta0, field)
    assert full.odometer == coupled.u and full.chain_steps == coupled.chain_steps


def test_stabilize_arw_full_trivial_and_errors():
    res = stabilize_arw_full(ArwConfig.asleep(4), InstructionField(0, 4, lam=1.0))
    assert res.odometer == (0,) * 4 and res.chain_steps == 0
    with pytest.raises(CapExceededError):
        stabilize_arw_full(ArwConfig.point(12), InstructionField(0, 12, lam=1.0), cap=10)
    with pytest.raises(CapExceededError):
        run_coupled_fast(ArwConfig.point(12), InstructionField(0, 12, lam=1.0), cap=10)


def test_high_sleep_rate_modal_outcome():
    lam, runs = 100.0, 10**4
    hits = sum(
        stabilize_arw_full(ArwConfig.all_active(3), InstructionField(seed, 3, lam=lam)).odometer == (1, 1, 1)
        for seed in range(runs)
    )
    exact = (lam / (1 + lam)) ** 3
    se = math.sqrt(exact * (1 - exact) / runs)
    assert abs(hits / runs - exact) < 3 * se


def total_variation(a: Counter, b: Counter, na: int, nb: int) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a[k] / na - b[k] / nb) for k in keys)


def test_coupled_v0_matches_independent_ss_in_law():
    lam, samples, n = 1.0, 10**5, 3
    start = np.array([3, 0, 0])
    coupled = Counter(int(coupled_run_arrays(start, seed, lam, 10**6).v[0]) for seed in range(samples))
    p = lam / (1 + lam)
    independent = Counter(int(ss_run(start, seed, p, 10**6)[2][0]) for seed in range(samples, 2 * samples))
    assert total_variation(coupled, independent, samples, samples) < 0.02
