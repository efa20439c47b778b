"""Configurations and toppling operators for SS and ARW on the cycle Z_n.

Sites are labelled ``0 .. n-1`` counterclockwise.  A clockwise step from
``x`` lands on ``x - 1 (mod n)``, a counterclockwise step on ``x + 1 (mod n)``.

ARW site values live in ``N_s = {0, s, 1, 2, ...}`` where ``s`` (:data:`SLEEP`)
is a single sleeping particle.  Integers ``k >= 1`` are ``k`` active particles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import IllegalToppleError, UndefinedOperationError


class _SleepSymbol:
    """The sleep symbol of N_s, ordered ``0 < s < 1 < 2 < ...`` with ``|s| = 1``."""

    __slots__ = ()
    _instance: "_SleepSymbol | None" = None

    def __new__(cls) -> "_SleepSymbol":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "s"

    def __abs__(self) -> int:
        return 1

    def __reduce__(self) -> str:
        return "SLEEP"

    def __lt__(self, other):
        if other is self:
            return False
        if isinstance(other, int):
            return other >= 1
        return NotImplemented

    def __le__(self, other):
        if other is self:
            return True
        if isinstance(other, int):
            return other >= 1
        return NotImplemented

    def __gt__(self, other):
        if other is self:
            return False
        if isinstance(other, int):
            return other <= 0
        return NotImplemented

    def __ge__(self, other):
        if other is self:
            return True
        if isinstance(other, int):
            return other <= 0
        return NotImplemented


SLEEP = _SleepSymbol()

NsValue = Union[int, _SleepSymbol]


def is_sleep(v: NsValue) -> bool:
    return v is SLEEP


class NsAction(enum.Enum):
    TIMES_SLEEP = "times_sleep"
    PLUS_ONE = "plus_one"
    MINUS_ONE = "minus_one"
    PLUS_SLEEP = "plus_sleep"


def ns_apply(v: NsValue, action: NsAction) -> NsValue:
    """Apply one of the N_s operations to a site value.

    ``1*s = s``, ``k*s = k`` for ``k >= 2``, ``k + s = k + 1`` for ``k >= 1``
    (so a particle arriving on a sleeper gives ``s + 1 = 2``), and ordinary
    subtraction on nonnegative integers.  Anything else raises
    :class:`UndefinedOperationError`.
    """
    action = NsAction(action)
    if v is not SLEEP and (not isinstance(v, int) or v < 0):
        raise UndefinedOperationError(f"not an N_s value: {v!r}")

    if action is NsAction.TIMES_SLEEP:
        if v is SLEEP or v == 0:
            raise UndefinedOperationError(f"{v!r} * s is undefined: no active particle to put to sleep")
        return SLEEP if v == 1 else v
    if action is NsAction.PLUS_ONE:
        return 2 if v is SLEEP else v + 1
    if action is NsAction.MINUS_ONE:
        if v is SLEEP:
            raise UndefinedOperationError("s - 1 is undefined: a sleeping particle never topples")
        if v == 0:
            raise UndefinedOperationError("0 - 1 is undefined")
        return v - 1
    # PLUS_SLEEP
    if v is SLEEP or v == 0:
        raise UndefinedOperationError(f"{v!r} + s is undefined")
    return v + 1


def _format_value(v: NsValue) -> str:
    return "s" if v is SLEEP else str(v)


def _parse_value(token: str) -> NsValue:
    token = token.strip()
    if token == "s":
        return SLEEP
    try:
        value = int(token)
    except ValueError:
        raise ValueError(f"bad site value {token!r}") from None
    if value < 0:
        raise ValueError(f"negative site value {token!r}")
    return value


@dataclass(frozen=True)
class SandpileConfig:
    """Particle counts per site, summing to the number of sites."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) < 2:
            raise ValueError("ring needs at least 2 sites")
        if any(c < 0 for c in counts):
            raise ValueError(f"negative particle count in {counts}")
        if sum(counts) != len(counts):
            raise ValueError(f"counts {counts} must sum to n={len(counts)}")

    @classmethod
    def point(cls, n: int) -> "SandpileConfig":
        """All ``n`` particles on site 0."""
        return cls((n,) + (0,) * (n - 1))

    @classmethod
    def ones(cls, n: int) -> "SandpileConfig":
        return cls((1,) * n)

    @classmethod
    def parse(cls, text: str) -> "SandpileConfig":
        values = [_parse_value(t) for t in text.split(",")]
        if any(v is SLEEP for v in values):
            raise ValueError("sleep symbol not allowed in an SS configuration")
        return cls(tuple(values))

    @property
    def n(self) -> int:
        return len(self.counts)

    def __len__(self) -> int:
        return len(self.counts)

    def __getitem__(self, x: int) -> int:
        return self.counts[x]

    def __iter__(self):
        return iter(self.counts)

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.counts)

    @property
    def is_stable(self) -> bool:
        return all(c <= 1 for c in self.counts)

    def unstable_sites(self) -> list[int]:
        return [x for x, c in enumerate(self.counts) if c >= 2]


@dataclass(frozen=True)
class ArwConfig:
    """ARW site values in N_s whose magnitudes sum to the number of sites."""

    values: tuple[NsValue, ...]

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 2:
            raise ValueError("ring needs at least 2 sites")
        for v in values:
            if v is not SLEEP and (not isinstance(v, int) or v < 0):
                raise ValueError(f"not an N_s value: {v!r}")
        if sum(abs(v) for v in values) != len(values):
            raise ValueError(f"|values| of {str_values(values)} must sum to n={len(values)}")

    @classmethod
    def point(cls, n: int) -> "ArwConfig":
        """All ``n`` particles active on site 0."""
        return cls((n,) + (0,) * (n - 1))

    @classmethod
    def all_active(cls, n: int) -> "ArwConfig":
        return cls((1,) * n)

    @classmethod
    def asleep(cls, n: int) -> "ArwConfig":
        return cls((SLEEP,) * n)

    @classmethod
    def from_counts(cls, s: SandpileConfig) -> "ArwConfig":
        """Same counts with every particle active."""
        return cls(s.counts)

    @classmethod
    def parse(cls, text: str) -> "ArwConfig":
        return cls(tuple(_parse_value(t) for t in text.split(",")))

    @property
    def n(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, x: int) -> NsValue:
        return self.values[x]

    def __iter__(self):
        return iter(self.values)

    def __str__(self) -> str:
        return str_values(self.values)

    @property
    def is_stable(self) -> bool:
        return all(v is SLEEP for v in self.values)

    def active_sites(self) -> list[int]:
        return [x for x, v in enumerate(self.values) if v >= 1]


def str_values(values: Iterable[NsValue]) -> str:
    """Canonical text rendering, e.g. ``2,0,s``."""
    return ",".join(_format_value(v) for v in values)


def parse_config(text: str, model: str = "arw") -> SandpileConfig | ArwConfig:
    if model == "ss":
        return SandpileConfig.parse(text)
    if model == "arw":
        return ArwConfig.parse(text)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True, order=True)
class SsOutcome:
    """Result of one SS toppling: particles stepping clockwise / counterclockwise."""

    rho_minus: int
    rho_plus: int

    def __post_init__(self):
        if self.rho_minus < 0 or self.rho_plus < 0 or self.rho_minus + self.rho_plus > 2:
            raise ValueError(f"invalid SS outcome ({self.rho_minus},{self.rho_plus})")

    def __str__(self) -> str:
        return f"({self.rho_minus},{self.rho_plus})"


# Row order of the SS toppling table.
SS_OUTCOMES: tuple[SsOutcome, ...] = (
    SsOutcome(0, 0),
    SsOutcome(1, 0),
    SsOutcome(0, 1),
    SsOutcome(1, 1),
    SsOutcome(2, 0),
    SsOutcome(0, 2),
)


class ArwInstruction(enum.IntEnum):
    SLEEP = 0
    STEP_CW = 1
    STEP_CCW = 2

    def __str__(self) -> str:
        return {0: "sleep", 1: "cw", 2: "ccw"}[int(self)]


ARW_INSTRUCTIONS: tuple[ArwInstruction, ...] = tuple(ArwInstruction)


def ss_outcome_probabilities(p):
    """Probabilities of :data:`SS_OUTCOMES` for lazy parameter ``p``.

    Arithmetic is generic, so passing a :class:`fractions.Fraction` keeps the
    result exact.
    """
    q = 1 - p
    return {
        SsOutcome(0, 0): p * p,
        SsOutcome(1, 0): p * q,
        SsOutcome(0, 1): p * q,
        SsOutcome(1, 1): q * q / 2,
        SsOutcome(2, 0): q * q / 4,
        SsOutcome(0, 2): q * q / 4,
    }


def arw_instruction_probabilities(lam):
    """Sleep with ``lam/(1+lam)``, each step direction with ``1/(2(1+lam))``."""
    return {
        ArwInstruction.SLEEP: lam / (1 + lam),
        ArwInstruction.STEP_CW: 1 / (2 * (1 + lam)),
        ArwInstruction.STEP_CCW: 1 / (2 * (1 + lam)),
    }


def apply_ss_topple(s: SandpileConfig, x: int, out: SsOutcome) -> SandpileConfig:
    n = s.n
    if not 0 <= x < n:
        raise IndexError(f"site {x} outside Z_{n}")
    if s.counts[x] < 2:
        raise IllegalToppleError(f"site {x} of {s} is stable (count {s.counts[x]})")
    counts = list(s.counts)
    counts[x] -= out.rho_minus + out.rho_plus
    counts[(x - 1) % n] += out.rho_minus
    counts[(x + 1) % n] += out.rho_plus
    result = SandpileConfig(tuple(counts))
    assert sum(result.counts) == n
    return result


def apply_arw_topple(eta: ArwConfig, x: int, instr: ArwInstruction) -> ArwConfig:
    n = eta.n
    if not 0 <= x < n:
        raise IndexError(f"site {x} outside Z_{n}")
    v = eta.values[x]
    if not v >= 1:
        raise IllegalToppleError(f"site {x} of {eta} has no active particle ({_format_value(v)})")
    values = list(eta.values)
    instr = ArwInstruction(instr)
    if instr is ArwInstruction.SLEEP:
        values[x] = ns_apply(v, NsAction.TIMES_SLEEP)
    else:
        y = (x - 1) % n if instr is ArwInstruction.STEP_CW else (x + 1) % n
        values[x] = ns_apply(v, NsAction.MINUS_ONE)
        values[y] = ns_apply(values[y], NsAction.PLUS_ONE)
    result = ArwConfig(tuple(values))
    assert sum(abs(w) for w in result.values) == n
    return result


def project(eta: ArwConfig) -> SandpileConfig:
    """Forget particle states: ``counts[x] = |eta[x]|``."""
    return SandpileConfig(tuple(abs(v) for v in eta.values))


@dataclass(frozen=True)
class Classification:
    min_two_site: int | None
    min_active_site: int | None
    ss_stable: bool
    arw_stable: bool
    counts_all_ones: bool


def classify(config: SandpileConfig | ArwConfig) -> Classification:
    """Summarize which sites the toppling prescriptions would pick.

    For a :class:`SandpileConfig` there are no particle states, so
    ``min_active_site`` is ``None`` and ``arw_stable`` is ``False``.
    """
    if isinstance(config, ArwConfig):
        counts = [abs(v) for v in config.values]
        active = [x for x, v in enumerate(config.values) if v >= 1]
        min_active = active[0] if active else None
        arw_stable = not active
    else:
        counts = list(config.counts)
        min_active = None
        arw_stable = False
    two = [x for x, c in enumerate(counts) if c >= 2]
    min_two = two[0] if two else None
    all_ones = all(c == 1 for c in counts)
    # with n particles on n sites, no 2-site forces every count to be 1
    assert (min_two is None) == all_ones
    return Classification(
        min_two_site=min_two,
        min_active_site=min_active,
        ss_stable=min_two is None,
        arw_stable=arw_stable,
        counts_all_ones=all_ones,
    )
