"""Exact rational construction and checking of the SS and ARW chains for small n.

Everything here uses :class:`fractions.Fraction` or integers; floats are
rejected on input.  The ARW chain step is re-derived here from the toppling
rules (not by calling :mod:`cyclepile.coupling`), so the two serve as
independent routes to the same transition law.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import StateSpaceTooLargeError
from .ring import (
    SLEEP,
    ArwConfig,
    SandpileConfig,
    apply_arw_topple,
    apply_ss_topple,
    arw_instruction_probabilities,
    classify,
    project,
    ss_outcome_probabilities,
    str_values,
)

MAX_N = 8

Row = dict[int, Fraction]


def as_rational(value) -> Fraction:
    """Accept ints, Fractions and ``"num/den"`` strings; refuse floats."""
    if isinstance(value, float):
        raise TypeError("exact verifier needs a rational parameter, not a float")
    return Fraction(value)


@dataclass(frozen=True)
class StateSpace:
    model: str
    n: int
    states: tuple
    index: dict = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int):
        return self.states[i]


def _compositions(n: int) -> list[tuple[int, ...]]:
    """All ways to put n particles on n sites (stars and bars)."""
    out = []
    slots = 2 * n - 1
    for bars in itertools.combinations(range(slots), n - 1):
        edges = (-1,) + bars + (slots,)
        out.append(tuple(edges[k + 1] - edges[k] - 1 for k in range(n)))
    return sorted(out, reverse=True)


def enumerate_states(n: int, model: str) -> StateSpace:
    """Every SS (``model="ss"``) or ARW (``model="arw"``) configuration on Z_n."""
    if n < 2:
        raise ValueError("ring needs at least 2 sites")
    if n > MAX_N:
        raise StateSpaceTooLargeError(f"n={n} exceeds the enumeration guard n <= {MAX_N}")
    comps = _compositions(n)
    if model == "ss":
        states = tuple(SandpileConfig(c) for c in comps)
    elif model == "arw":
        found = []
        for c in comps:
            ones = [x for x, k in enumerate(c) if k == 1]
            for mask in itertools.product((1, SLEEP), repeat=len(ones)):
                vals = list(c)
                for x, v in zip(ones, mask):
                    vals[x] = v
                found.append(ArwConfig(tuple(vals)))
        states = tuple(found)
    else:
        raise ValueError(f"unknown model {model!r}")
    return StateSpace(model, n, states, {s: i for i, s in enumerate(states)})


class TransitionMatrix:
    """Sparse square matrix of Fractions indexed by a :class:`StateSpace`."""

    def __init__(self, space: StateSpace, rows: Sequence[Row]):
        if len(rows) != len(space):
            raise ValueError("one row per state required")
        self.space = space
        self.rows = [{j: Fraction(q) for j, q in row.items() if q != 0} for row in rows]

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        return self.rows[i].get(j, Fraction(0))

    def prob(self, a, b) -> Fraction:
        """Transition probability between two states given as configurations."""
        return self[self.space.index[a], self.space.index[b]]

    def row_of(self, state) -> dict:
        return {self.space.states[j]: q for j, q in self.rows[self.space.index[state]].items()}

    def is_stochastic(self) -> bool:
        return all(sum(row.values()) == 1 and all(q > 0 for q in row.values()) for row in self.rows)

    def absorbing_states(self) -> list:
        return [self.space.states[i] for i, row in enumerate(self.rows) if row.get(i) == 1]

    def to_dense(self) -> list[list[Fraction]]:
        size = len(self.rows)
        return [[row.get(j, Fraction(0)) for j in range(size)] for row in self.rows]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.space.states == other.space.states and self.rows == other.rows

    def __repr__(self) -> str:
        return f"TransitionMatrix({self.space.model}, n={self.space.n}, size={len(self.rows)})"


def arw_chain_step_law(eta: ArwConfig, lam) -> dict[ArwConfig, Fraction]:
    """Exact distribution of the next chain state (two-toppling prescription).

    The odd sub-step re-topples the same site after a 2-or-more toppling and
    otherwise goes to the least site still holding an active particle, if any.
    """
    if eta.is_stable:
        return {eta: Fraction(1)}
    probs = arw_instruction_probabilities(as_rational(lam))
    out: dict[ArwConfig, Fraction] = defaultdict(Fraction)
    info = classify(eta)
    for first, q1 in probs.items():
        if info.min_two_site is not None:
            x = info.min_two_site
            mid = apply_arw_topple(eta, x, first)
            nxt = x
        else:
            mid = apply_arw_topple(eta, info.min_active_site, first)
            nxt = classify(mid).min_active_site
            if nxt is None:
                out[mid] += q1
                continue
        for second, q2 in probs.items():
            out[apply_arw_topple(mid, nxt, second)] += q1 * q2
    return dict(out)


def ss_step_law(s: SandpileConfig, p) -> dict[SandpileConfig, Fraction]:
    """Exact law of one SS toppling at the least unstable site."""
    if s.is_stable:
        return {s: Fraction(1)}
    x = classify(s).min_two_site
    out: dict[SandpileConfig, Fraction] = defaultdict(Fraction)
    for outcome, q in ss_outcome_probabilities(as_rational(p)).items():
        out[apply_ss_topple(s, x, outcome)] += q
    return dict(out)


@dataclass(frozen=True)
class Chains:
    lam: Fraction
    p: Fraction
    H: StateSpace
    S: StateSpace
    P_H: TransitionMatrix
    P_S: TransitionMatrix


def build_matrices(n: int, lam) -> Chains:
    """ARW chain-step matrix ``P_H`` and SS matrix ``P_S`` with ``p = lam/(1+lam)``."""
    lam = as_rational(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    p = lam / (1 + lam)
    H = enumerate_states(n, "arw")
    S = enumerate_states(n, "ss")
    P_H = TransitionMatrix(
        H, [{H.index[b]: q for b, q in arw_chain_step_law(a, lam).items()} for a in H.states]
    )
    P_S = TransitionMatrix(S, [{S.index[b]: q for b, q in ss_step_law(a, p).items()} for a in S.states])
    return Chains(lam, p, H, S, P_H, P_S)


@dataclass(frozen=True)
class Partition:
    """Assignment of each state of a fine space to a cell of a coarse space."""

    fine: StateSpace
    coarse: StateSpace
    cell_of: tuple[int, ...]
    special: int

    def cells(self) -> list[list[int]]:
        members: list[list[int]] = [[] for _ in self.coarse.states]
        for i, c in enumerate(self.cell_of):
            members[c].append(i)
        return members

    def with_moved(self, state_index: int, new_cell: int) -> "Partition":
        """Copy with one state reassigned (used for negative controls)."""
        cell_of = list(self.cell_of)
        cell_of[state_index] = new_cell
        return Partition(self.fine, self.coarse, tuple(cell_of), self.special)


def projection_partition(H: StateSpace, S: StateSpace) -> Partition:
    """Cells ``{eta : |eta| = s}``; the special cell is the all-ones configuration."""
    cell_of = tuple(S.index[project(eta)] for eta in H.states)
    special = S.index[SandpileConfig.ones(S.n)]
    part = Partition(H, S, cell_of, special)
    assert all(part.cells()), "every SS configuration must have an ARW preimage"
    return part


def aggregate_row(row: Row, partition: Partition) -> Row:
    out: Row = defaultdict(Fraction)
    for j, q in row.items():
        out[partition.cell_of[j]] += q
    return {c: q for c, q in out.items() if q != 0}


def quotient_from_representatives(P_H: TransitionMatrix, partition: Partition) -> TransitionMatrix:
    """Quotient using the first member of each cell; the special cell is absorbing."""
    rows = []
    for c, members in enumerate(partition.cells()):
        if c == partition.special:
            rows.append({c: Fraction(1)})
        else:
            rows.append(aggregate_row(P_H.rows[members[0]], partition))
    return TransitionMatrix(partition.coarse, rows)


@dataclass(frozen=True)
class Compatibility:
    compatible: bool
    quotient: TransitionMatrix | None
    counterexample: tuple | None = None


def check_markov_compatibility(P_H: TransitionMatrix, partition: Partition, special_cell: int | None = None) -> Compatibility:
    """Check lumpability off the special cell and build the quotient matrix.

    On failure ``counterexample`` is ``(eta1, eta2, target_cell, p1, p2)``.
    """
    special = partition.special if special_cell is None else special_cell
    for c, members in enumerate(partition.cells()):
        if c == special or not members:
            continue
        ref = aggregate_row(P_H.rows[members[0]], partition)
        for other in members[1:]:
            agg = aggregate_row(P_H.rows[other], partition)
            if agg != ref:
                target = next(j for j in set(ref) | set(agg) if ref.get(j, 0) != agg.get(j, 0))
                example = (
                    P_H.space.states[members[0]],
                    P_H.space.states[other],
                    partition.coarse.states[target],
                    ref.get(target, Fraction(0)),
                    agg.get(target, Fraction(0)),
                )
                return Compatibility(False, None, example)
    if special != partition.special:
        partition = Partition(partition.fine, partition.coarse, partition.cell_of, special)
    return Compatibility(True, quotient_from_representatives(P_H, partition))


def _push(dist: Row, rows: Sequence[Row]) -> Row:
    out: Row = defaultdict(Fraction)
    for i, mass in dist.items():
        for j, q in rows[i].items():
            out[j] += mass * q
    return dict(out)


@dataclass(frozen=True)
class StoppedLawCheck:
    equal: bool
    horizon: int
    first_mismatch: int | None = None


def check_stopped_projection(
    P_H: TransitionMatrix,
    partition: Partition,
    eta0: ArwConfig,
    horizon: int | None = None,
    quotient: TransitionMatrix | None = None,
) -> StoppedLawCheck:
    """Compare the projected stopped ARW chain with the quotient chain, exactly.

    Both start from the cell of ``eta0``; the ARW chain is frozen once it
    enters the special cell.  ``quotient`` defaults to the representative
    quotient of ``partition``.  ``horizon`` defaults to twice the number of
    cells.
    """
    horizon = 2 * len(partition.coarse) if horizon is None else horizon
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if quotient is None:
        quotient = quotient_from_representatives(P_H, partition)
    stopped = [
        {i: Fraction(1)} if partition.cell_of[i] == partition.special else row
        for i, row in enumerate(P_H.rows)
    ]
    start = P_H.space.index[eta0]
    fine: Row = {start: Fraction(1)}
    coarse: Row = {partition.cell_of[start]: Fraction(1)}
    for t in range(horizon + 1):
        lumped: Row = defaultdict(Fraction)
        for i, mass in fine.items():
            lumped[partition.cell_of[i]] += mass
        if {c: q for c, q in lumped.items() if q} != {c: q for c, q in coarse.items() if q}:
            return StoppedLawCheck(False, horizon, t)
        if t < horizon:
            fine = _push(fine, stopped)
            coarse = _push(coarse, quotient.rows)
    return StoppedLawCheck(True, horizon)


@dataclass(frozen=True)
class AbsorptionLaw:
    """Exact hitting-time law ``Pr[T = t]`` for ``t <= horizon``.

    Stored as integer numerators over powers of a common denominator, which
    keeps long horizons cheap; use :meth:`pmf` for exact values.
    """

    numerators: tuple[int, ...]
    base: int
    tail_numerator: int

    @property
    def horizon(self) -> int:
        return len(self.numerators) - 1

    def pmf(self, t: int) -> Fraction:
        if t > self.horizon:
            raise IndexError(f"t={t} beyond horizon {self.horizon}")
        return Fraction(self.numerators[t], self.base**t)

    @property
    def tail(self) -> Fraction:
        """Probability that T exceeds the horizon."""
        return Fraction(self.tail_numerator, self.base**self.horizon)

    def probabilities(self, upto: int | None = None) -> list[Fraction]:
        upto = self.horizon if upto is None else min(upto, self.horizon)
        return [self.pmf(t) for t in range(upto + 1)]

    def to_floats(self) -> list[float]:
        """Correctly rounded float view for comparisons with sampled data."""
        out = []
        denom = 1
        for num in self.numerators:
            out.append(num / denom)
            denom *= self.base
        return out


def absorption_distribution(P: TransitionMatrix, absorbing: Iterable, start, horizon: int) -> AbsorptionLaw:
    """Exact law of the first hitting time of ``absorbing`` from ``start``.

    ``absorbing`` and ``start`` are configurations of ``P``'s state space.
    """
    idx = P.space.index
    targets = {idx[a] for a in absorbing}
    for a in targets:
        if P.rows[a].get(a) != 1:
            raise ValueError(f"state {P.space.states[a]} is not absorbing")
    base = math.lcm(*(q.denominator for row in P.rows for q in row.values()))
    scaled = [{j: int(q * base) for j, q in row.items()} for row in P.rows]
    s = idx[start]
    if s in targets:
        return AbsorptionLaw((1,) + (0,) * horizon, base, 0)
    numerators = [0]
    mass: dict[int, int] = {s: 1}
    for _ in range(horizon):
        nxt: dict[int, int] = defaultdict(int)
        for i, w in mass.items():
            for j, q in scaled[i].items():
                nxt[j] += w * q
        numerators.append(sum(nxt.pop(a, 0) for a in targets))
        mass = nxt
    return AbsorptionLaw(tuple(numerators), base, sum(mass.values()))


@dataclass
class CheckLine:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    n: int
    lam: Fraction
    checks: list[CheckLine] = field(default_factory=list)
    sizes: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckLine(name, bool(passed), detail))

    def render(self) -> str:
        lines = [f"exact verification n={self.n} lambda={self.lam} p={self.lam / (1 + self.lam)}"]
        lines += [f"  |{k}| = {v}" for k, v in self.sizes.items()]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{status}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        lines.append("OVERALL " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def verify_suite(n: int, lam, horizon: int | None = None) -> VerificationReport:
    """Run every exact check for one ``(n, lam)`` and collect a report."""
    chains = build_matrices(n, lam)
    H, S = chains.H, chains.S
    part = projection_partition(H, S)
    report = VerificationReport(n, chains.lam)
    report.sizes = {
        "S": len(S),
        "H": len(H),
        "H_-1": len(part.cells()[part.special]),
    }
    report.add("|S| = C(2n-1, n-1)", len(S) == math.comb(2 * n - 1, n - 1))
    report.add("|H_-1| = 2^n", len(part.cells()[part.special]) == 2**n)
    report.add("P_H row-stochastic", chains.P_H.is_stochastic())
    report.add("P_S row-stochastic", chains.P_S.is_stochastic())
    ss_abs = chains.P_S.absorbing_states()
    report.add("SS absorbing state is unique all-ones", ss_abs == [SandpileConfig.ones(n)], ", ".join(map(str, ss_abs)))
    arw_abs = chains.P_H.absorbing_states()
    report.add("ARW absorbing state is unique all-asleep", arw_abs == [ArwConfig.asleep(n)], ", ".join(map(str, arw_abs)))
    compat = check_markov_compatibility(chains.P_H, part)
    detail = ""
    if not compat.compatible:
        e1, e2, tgt, q1, q2 = compat.counterexample
        detail = f"{e1} -> cell {tgt}: {q1} vs {e2}: {q2}"
    report.add("projection partition Markov-compatible off H_-1", compat.compatible, detail)
    if compat.compatible:
        q = compat.quotient
        report.add("quotient row-stochastic", q.is_stochastic())
        report.add("quotient H_-1 row is identity", q.rows[part.special] == {part.special: Fraction(1)})
        mismatch = [
            str(S.states[i]) for i in range(len(S)) if q.rows[i] != chains.P_S.rows[i]
        ]
        report.add("quotient equals P_S (p = lam/(1+lam))", not mismatch, ", ".join(mismatch[:5]))
        eta0 = ArwConfig.point(n)
        res = check_stopped_projection(chains.P_H, part, eta0, horizon, quotient=q)
        report.add(
            f"stopped projected law equals quotient law from {str_values(eta0.values)} to t={res.horizon}",
            res.equal,
            "" if res.equal else f"first mismatch at t={res.first_mismatch}",
        )
    return report
