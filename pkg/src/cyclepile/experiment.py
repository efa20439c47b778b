"""Monte Carlo sweeps of stabilization time, log-log fits and CSV/SVG output."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, InvalidSpecError
from .field import default_cap
from .kernels import arw_run, coupled_run_arrays, ss_run

log = logging.getLogger(__name__)

CSV_HEADER = ("n", "schedule", "p", "lambda", "trial", "seed", "T", "capped")
MODELS = ("ss", "arw", "coupled")
INITS = ("point", "uniform")


@dataclass(frozen=True)
class Schedule:
    """How the lazy parameter (equivalently the sleep rate) depends on n.

    ``kind`` is ``"constant"`` (give ``p`` or ``lam``), ``"log"``
    (``lam = log n``, ``p = log n / (1 + log n)``) or ``"table"`` (explicit
    ``n -> p`` mapping).
    """

    kind: str
    p: float | None = None
    lam: float | None = None
    table: dict[int, float] | None = None

    @classmethod
    def from_obj(cls, obj) -> "Schedule":
        if isinstance(obj, Schedule):
            return obj
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls("constant", p=float(obj))
        if isinstance(obj, str):
            if obj == "log":
                return cls("log")
            try:
                return cls("constant", p=float(obj))
            except ValueError:
                raise InvalidSpecError(f"unknown schedule {obj!r}") from None
        if isinstance(obj, dict):
            kind = obj.get("kind", "constant")
            if kind == "table":
                table = {int(k): float(v) for k, v in obj["table"].items()}
                return cls("table", table=table)
            if kind == "log":
                return cls("log")
            if kind == "constant":
                p = obj.get("p")
                lam = obj.get("lambda", obj.get("lam"))
                if (p is None) == (lam is None):
                    raise InvalidSpecError("constant schedule needs exactly one of p, lambda")
                return cls("constant", p=None if p is None else float(p), lam=None if lam is None else float(lam))
            raise InvalidSpecError(f"unknown schedule kind {kind!r}")
        raise InvalidSpecError(f"cannot read schedule from {obj!r}")

    @property
    def label(self) -> str:
        if self.kind == "log":
            return "log"
        if self.kind == "table":
            return "table"
        return f"p={self.p:g}" if self.p is not None else f"lambda={self.lam:g}"

    def params(self, n: int) -> tuple[float, float]:
        """``(p, lam)`` at ring size ``n``."""
        if self.kind == "log":
            lam = math.log(n)
            return lam / (1 + lam), lam
        if self.kind == "table":
            if n not in self.table:
                raise InvalidSpecError(f"schedule table has no entry for n={n}")
            p = self.table[n]
        elif self.p is not None:
            p = self.p
        else:
            return self.lam / (1 + self.lam), self.lam
        if not 0 < p < 1:
            raise InvalidSpecError(f"p={p} at n={n} outside (0, 1)")
        return p, p / (1 - p)


@dataclass(frozen=True)
class ExperimentSpec:
    n_grid: tuple[int, ...] = (16, 32, 64, 128, 256)
    schedules: tuple[Schedule, ...] = (Schedule("constant", p=0.5),)
    trials: int = 200
    master_seed: int = 0
    init: str = "point"
    model: str = "ss"
    cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "schedules", tuple(Schedule.from_obj(s) for s in self.schedules))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise InvalidSpecError("trials must be >= 1")
        if not self.n_grid:
            raise InvalidSpecError("empty n_grid")
        if any(n < 2 for n in self.n_grid):
            raise InvalidSpecError("ring sizes must be >= 2")
        if not self.schedules:
            raise InvalidSpecError("no schedule given")
        if self.model not in MODELS:
            raise InvalidSpecError(f"model must be one of {MODELS}")
        if self.init not in INITS:
            raise InvalidSpecError(f"init must be one of {INITS}")
        if self.cap is not None and self.cap <= 0:
            raise InvalidSpecError("cap must be positive")
        labels = [s.label for s in self.schedules]
        if len(set(labels)) != len(labels):
            raise InvalidSpecError(f"duplicate schedules {labels}")
        for sched in self.schedules:
            for n in self.n_grid:
                sched.params(n)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        known = {"n_grid", "schedule", "schedules", "trials", "master_seed", "init", "model", "cap"}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpecError(f"unknown config keys {sorted(unknown)}")
        if "schedule" in d and "schedules" in d:
            raise InvalidSpecError("give either schedule or schedules")
        if "schedule" in d:
            d["schedules"] = [d.pop("schedule")]
        if "schedules" in d:
            d["schedules"] = tuple(d["schedules"])
        if "n_grid" in d:
            d["n_grid"] = tuple(d["n_grid"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpecError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def cap_for(self, n: int) -> int:
        return default_cap(n) if self.cap is None else self.cap


@dataclass(frozen=True)
class RunRecord:
    n: int
    schedule: str
    p: float
    lam: float
    trial: int
    seed: int
    T: int
    capped: bool


def trial_seed(master_seed: int, n: int, trial: int) -> int:
    """Per-trial instruction-field seed; a pure function of its arguments."""
    ss = np.random.SeedSequence([int(master_seed), int(n), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def initial_counts(n: int, init: str, master_seed: int, trial: int) -> np.ndarray:
    if init == "point":
        counts = np.zeros(n, dtype=np.int64)
        counts[0] = n
        return counts
    gen = np.random.default_rng([int(master_seed), int(n), int(trial), 1])
    return np.bincount(gen.integers(n, size=n), minlength=n).astype(np.int64)


def run_trial(model: str, n: int, p: float, lam: float, init: str, master_seed: int, trial: int, cap: int, label: str) -> RunRecord:
    seed = trial_seed(master_seed, n, trial)
    counts = initial_counts(n, init, master_seed, trial)
    if model == "ss":
        _, T, _, capped = ss_run(counts, seed, p, cap)
    elif model == "arw":
        _, T, _, capped = arw_run(counts, seed, lam, cap)
    else:
        res = coupled_run_arrays(counts, seed, lam, cap)
        T, capped = int(res.v.sum()), res.capped
    return RunRecord(n, label, p, lam, trial, seed, int(T), bool(capped))


def _run_block(args) -> list[RunRecord]:
    model, n, p, lam, init, master_seed, trials, cap, label = args
    return [run_trial(model, n, p, lam, init, master_seed, t, cap, label) for t in trials]


def awake_rate_proxy(schedule: Schedule, n_grid: Iterable[int]) -> dict[int, float]:
    """``log(n) * (1 - p(n))`` per grid point; values >= 2 fall outside the fast-phase condition."""
    return {n: math.log(n) * (1 - schedule.params(n)[0]) for n in n_grid}


def run_experiment(spec: ExperimentSpec, workers: int = 1, block: int = 25) -> list[RunRecord]:
    """Run every (schedule, n, trial) of ``spec``.

    Work is split into blocks of trials; results come back in a fixed order
    and each trial's randomness depends only on ``(master_seed, n, trial)``,
    so output does not depend on ``workers``.
    """
    spec.validate()
    jobs = []
    for sched in spec.schedules:
        if spec.model in ("ss", "coupled"):
            bad = {n: round(v, 3) for n, v in awake_rate_proxy(sched, spec.n_grid).items() if v >= 2}
            if bad:
                log.warning("schedule %s: log(n)(1-p) >= 2 at %s; slow-phase runs may hit the cap", sched.label, bad)
        for n in spec.n_grid:
            p, lam = sched.params(n)
            for start in range(0, spec.trials, block):
                trials = range(start, min(start + block, spec.trials))
                jobs.append((spec.model, n, p, lam, spec.init, spec.master_seed, trials, spec.cap_for(n), sched.label))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_block, jobs))
    else:
        blocks = [_run_block(job) for job in jobs]
    records = [r for b in blocks for r in b]
    capped = sum(r.capped for r in records)
    if capped:
        log.warning("%d of %d runs hit the cap", capped, len(records))
    for label, bad in monotone_violations(records).items():
        log.warning("schedule %s: mean T decreases between n=%s", label, bad)
    return records


def mean_times(records: Iterable[RunRecord]) -> dict[str, dict[int, float]]:
    """Mean uncapped T per schedule and n."""
    sums: dict[str, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        if not r.capped:
            sums[r.schedule][r.n].append(r.T)
    return {lab: {n: float(np.mean(ts)) for n, ts in sorted(by_n.items())} for lab, by_n in sums.items()}


def monotone_violations(records: Iterable[RunRecord]) -> dict[str, list[tuple[int, int]]]:
    out = {}
    for label, means in mean_times(records).items():
        ns = list(means)
        bad = [(a, b) for a, b in zip(ns, ns[1:]) if means[b] < means[a]]
        if bad:
            out[label] = bad
    return out


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[int, float], ...] = field(default=())


def _fit(points: Sequence[tuple[int, float]]) -> FitResult:
    if len(points) < 3:
        raise InsufficientDataError(f"need >= 3 ring sizes with uncapped runs, got {len(points)}")
    if any(m <= 0 for _, m in points):
        raise InsufficientDataError("mean stabilization time must be positive for a log-log fit")
    x = np.log([n for n, _ in points])
    y = np.log([m for _, m in points])
    res = stats.linregress(x, y)
    return FitResult(float(res.slope), float(res.intercept), float(res.rvalue**2), tuple(points))


def fit_loglog(records: Iterable[RunRecord]) -> FitResult:
    """OLS of ``log(mean T)`` on ``log n`` over one schedule's records."""
    means = mean_times(records)
    if len(means) > 1:
        raise ValueError(f"records span several schedules {sorted(means)}; use fit_by_schedule")
    if not means:
        raise InsufficientDataError("no uncapped records")
    (by_n,) = means.values()
    return _fit(list(by_n.items()))


def fit_by_schedule(records: Iterable[RunRecord]) -> dict[str, FitResult]:
    return {label: _fit(list(by_n.items())) for label, by_n in mean_times(records).items()}


def write_csv(records: Iterable[RunRecord], path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in records:
                w.writerow([r.n, r.schedule, repr(r.p), repr(r.lam), r.trial, r.seed, r.T, int(r.capped)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list[RunRecord]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise InvalidSpecError(f"{path}: unexpected header {header}")
            return [
                RunRecord(int(n), sched, float(p), float(lam), int(t), int(seed), int(T), capped == "1")
                for n, sched, p, lam, t, seed, T, capped in reader
            ]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def write_svg(records: Sequence[RunRecord], fits: dict[str, FitResult], path) -> None:
    """Log-log scatter of mean T per schedule with the fitted lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = mean_times(records)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    colors = ["tab:blue", "tab:red", "tab:green", "tab:purple", "tab:orange"]
    for k, (label, by_n) in enumerate(sorted(means.items())):
        color = colors[k % len(colors)]
        ns = np.array(list(by_n), dtype=float)
        ax.scatter(ns, list(by_n.values()), color=color, label=label, zorder=3)
        fit = fits.get(label)
        if fit is not None:
            grid = np.geomspace(ns.min(), ns.max(), 50)
            ax.plot(grid, np.exp(fit.intercept) * grid**fit.slope, color=color,
                    label=f"{label} fit, slope {fit.slope:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mean stabilization time")
    if means:
        ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def emit_outputs(records: Sequence[RunRecord], fits: dict[str, FitResult] | None = None, *, csv_path=None, svg_path=None) -> list[Path]:
    """Write the records CSV and/or the SVG plot; returns the paths written."""
    written = []
    if csv_path is not None:
        write_csv(records, csv_path)
        written.append(Path(csv_path))
    if svg_path is not None:
        if fits is None:
            fits = {}
            for label, by_n in mean_times(records).items():
                if len(by_n) >= 3:
                    fits[label] = _fit(list(by_n.items()))
        write_svg(records, fits, svg_path)
        written.append(Path(svg_path))
    return written
