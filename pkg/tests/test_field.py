import io
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import cyclepile.field as field_mod
from cyclepile.errors import CapExceededError
from cyclepile.field import (
    InstructionField,
    Policy,
    run_legal,
    stabilize_arw,
    stabilize_ss,
    verify_abelian,
    verify_least_action,
)
from cyclepile.ring import (
    ARW_INSTRUCTIONS,
    SS_OUTCOMES,
    ArwConfig,
    SandpileConfig,
    arw_instruction_probabilities,
    ss_outcome_probabilities,
)


def frequencies(draw, field, count, sites=10):
    per_site = count // sites
    return Counter(draw(field, x, i) for x in range(sites) for i in range(per_site)), per_site * sites


def assert_within_3se(counts, total, probs):
    for key, q in probs.items():
        se = math.sqrt(q * (1 - q) / total)
        assert abs(counts[key] / total - q) < 3 * se, (key, counts[key] / total, q)


def test_field_parameters():
    f = InstructionField(1, 5, lam=3.0)
    assert f.p == pytest.approx(0.75)
    g = InstructionField(1, 5, p=0.75)
    assert g.lam == pytest.approx(3.0)
    with pytest.raises(ValueError):
        InstructionField(1, 5, p=1.0)
    with pytest.raises(ValueError):
        InstructionField(1, 5, lam=0.0)
    with pytest.raises(ValueError):
        InstructionField(1, 5)


def test_instructions_are_pure_functions_of_seed_site_index():
    f = InstructionField(12345, 7, p=0.5)
    first = [f.ss(x, i) for x in range(7) for i in range(50)]
    again = [InstructionField(12345, 7, p=0.5).ss(x, i) for x in range(7) for i in range(50)]
    assert first == again
    other = [InstructionField(12346, 7, p=0.5).ss(x, i) for x in range(7) for i in range(50)]
    assert first != other
    with pytest.raises(IndexError):
        f.ss(7, 0)
    with pytest.raises(IndexError):
        f.arw(0, -1)


def test_seed_reduction_is_64_bit():
    assert InstructionField(-1, 3, p=0.5).ss(0, 0) == InstructionField(2**64 - 1, 3, p=0.5).ss(0, 0)


def test_ss_draw_frequencies_p07():
    f = InstructionField(2024, 10, p=0.7)
    counts, total = frequencies(field_mod.draw_ss_instruction, f, 10**6)
    assert total == 10**6
    assert_within_3se(counts, total, ss_outcome_probabilities(0.7))


def test_arw_draw_frequencies_lam3():
    f = InstructionField(77, 10, lam=3.0)
    counts, total = frequencies(field_mod.draw_arw_instruction, f, 10**6)
    probs = arw_instruction_probabilities(3.0)
    assert [probs[i] for i in ARW_INSTRUCTIONS] == pytest.approx([0.75, 0.125, 0.125])
    assert_within_3se(counts, total, probs)


def test_ss_near_one_is_mostly_null():
    probs = ss_outcome_probabilities(Fraction(99, 100))
    assert probs[SS_OUTCOMES[0]] == Fraction(9801, 10000)
    assert ss_outcome_probabilities(Fraction(999, 1000))[SS_OUTCOMES[0]] > probs[SS_OUTCOMES[0]]


def test_lambda_log_n():
    n = math.exp(2)
    assert arw_instruction_probabilities(math.log(n))[ARW_INSTRUCTIONS[0]] == pytest.approx(2 / 3)


# --- stabilization ----------------------------------------------------------------

def test_stable_start_needs_no_topplings():
    res = stabilize_ss(SandpileConfig.ones(6), InstructionField(0, 6, p=0.5))
    assert res.final == SandpileConfig.ones(6)
    assert res.odometer == (0,) * 6 and res.sequence_length == 0


@pytest.mark.parametrize("seed", range(20))
def test_point_start_n3(seed):
    res = stabilize_ss(SandpileConfig((3, 0, 0)), InstructionField(seed, 3, p=0.5))
    assert res.final == SandpileConfig.ones(3)
    assert res.sequence_length == sum(res.odometer) >= 1


def test_cap_exceeded_carries_partial_odometer():
    with pytest.raises(CapExceededError) as info:
        stabilize_ss(SandpileConfig.point(10), InstructionField(1, 10, p=0.5), cap=5)
    assert sum(info.value.odometer) == 5 and info.value.cap == 5


def test_arw_stabilizes_to_all_asleep():
    res = stabilize_arw(ArwConfig.point(6), InstructionField(3, 6, lam=2.0))
    assert res.final == ArwConfig.asleep(6)


def test_determinism_and_trace():
    f = InstructionField(99, 6, p=0.4)
    out1, out2 = io.StringIO(), io.StringIO()
    a = stabilize_ss(SandpileConfig.point(6), f, Policy.RANDOM, policy_seed=5, trace=out1)
    b = stabilize_ss(SandpileConfig.point(6), f, Policy.RANDOM, policy_seed=5, trace=out2)
    assert a == b and out1.getvalue() == out2.getvalue()
    lines = out1.getvalue().splitlines()
    assert len(lines) == a.sequence_length
    step, site, instr, *config = lines[-1].split(",")
    assert int(step) == a.sequence_length and ",".join(config) == "1,1,1,1,1,1"


@pytest.mark.parametrize("model", ["ss", "arw"])
def test_instruction_consumption_bookkeeping(monkeypatch, model):
    reads = []
    name = "draw_ss_instruction" if model == "ss" else "draw_arw_instruction"
    original = getattr(field_mod, name)

    def recording(field, x, i):
        reads.append((x, i))
        return original(field, x, i)

    monkeypatch.setattr(field_mod, name, recording)
    f = InstructionField(8, 7, lam=1.5)
    start = SandpileConfig.point(7) if model == "ss" else ArwConfig.point(7)
    res = field_mod.run_legal(start, f, Policy.MAX)
    assert len(reads) == res.sequence_length == sum(res.odometer)
    for x in range(7):
        assert sorted(i for y, i in reads if y == x) == list(range(res.odometer[x]))


# --- abelian property and least action --------------------------------------------

@st.composite
def ss_configs(draw, min_n=3, max_n=8):
    n = draw(st.integers(min_n, max_n))
    sites = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    return SandpileConfig(tuple(np.bincount(sites, minlength=n).tolist()))


@settings(max_examples=150, deadline=None)
@given(ss_configs(), st.integers(0, 2**63), st.sampled_from([0.2, 0.5, 0.8]), st.integers(0, 1000))
def test_abelian_ss(s0, seed, p, policy_seed):
    check = verify_abelian(s0, InstructionField(seed, s0.n, p=p), policy_seed=policy_seed)
    assert check.agree, check.odometers


@settings(max_examples=100, deadline=None)
@given(ss_configs(max_n=6), st.integers(0, 2**63), st.sampled_from([1.0, 3.0]), st.integers(0, 1000))
def test_abelian_arw(s0, seed, lam, policy_seed):
    check = verify_abelian(ArwConfig.from_counts(s0), InstructionField(seed, s0.n, lam=lam), policy_seed=policy_seed)
    assert check.agree, check.odometers


def test_abelian_stable_start():
    check = verify_abelian(SandpileConfig.ones(5), InstructionField(0, 5, p=0.5), [Policy.MIN, Policy.MAX])
    assert check.agree and check.odometers == [(0,) * 5] * 2


def test_abelian_needs_two_policies():
    with pytest.raises(ValueError):
        verify_abelian(SandpileConfig.ones(3), InstructionField(0, 3, p=0.5), [Policy.MIN])


def test_least_action_trivial_cases():
    s0, f = SandpileConfig.point(5), InstructionField(4, 5, p=0.5)
    empty = verify_least_action(s0, f, prefix_length=0)
    assert empty.dominated and empty.prefix_odometer == (0,) * 5
    full = stabilize_ss(s0, f).sequence_length
    same = verify_least_action(s0, f, Policy.MIN, prefix_length=full)
    assert same.dominated and same.prefix_odometer == same.full_odometer


@settings(max_examples=150, deadline=None)
@given(ss_configs(), st.integers(0, 2**63), st.integers(0, 10**6), st.booleans())
def test_least_action_random_prefixes(s0, seed, policy_seed, arw):
    start = ArwConfig.from_counts(s0) if arw else s0
    f = InstructionField(seed, s0.n, lam=1.0)
    assert verify_least_action(start, f, policy_seed=policy_seed).dominated


def test_run_legal_truncation():
    f = InstructionField(5, 6, p=0.5)
    part = run_legal(SandpileConfig.point(6), f, Policy.MIN, 3)
    assert part.sequence_length == 3 and not part.stabilized
