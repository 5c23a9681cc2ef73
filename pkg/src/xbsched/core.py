"""Domain types for extra-board (XB) days-off scheduling.

Conventions used throughout the package:

* days are 0-based indices into the horizon; day 0 is a Sunday;
* weekdays are 1..7 with 1 = Sunday and 7 = Saturday;
* patterns are 0..6 in the order Sun-Mon, Mon-Tue, ..., Fri-Sat, Sat-Sun;
* money and probabilities are :class:`fractions.Fraction` so that objective
  terms and the duty-count identity can be checked exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1

WEEKDAY_NAMES = ("Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat")
PATTERN_NAMES = ("Sun-Mon", "Mon-Tue", "Tue-Wed", "Wed-Thu", "Thu-Fri", "Fri-Sat", "Sat-Sun")
NUM_PATTERNS = 7

REGULAR_HOURS = 8
MAX_WORK_HOURS = 10
MAX_PAUSE_HOURS = 3
MAX_SPAN_HOURS = 12
REGULAR_RATE = Fraction(1)
OVERTIME_RATE = Fraction(3, 2)
PAUSE_RATE = Fraction(1, 2)

# Denominator cap used when a float has to become a Fraction.
FLOAT_DENOMINATOR = 10**6


def as_fraction(value: Any) -> Fraction:
    """Convert ints, strings, Fractions and floats to a Fraction.

    Floats are snapped with ``limit_denominator(10**6)`` so that ``0.022``
    becomes ``11/500`` rather than its binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    return Fraction(float(value)).limit_denominator(FLOAT_DENOMINATOR)


def lcm_of_denominators(values: Iterable[Fraction]) -> int:
    out = 1
    for v in values:
        out = math.lcm(out, v.denominator)
    return out


def largest_remainder(values: Sequence[Any]) -> np.ndarray:
    """Round non-negative values to integers whose total is round-half-up(sum).

    Floors every entry, then hands the missing units to the largest fractional
    parts; equal parts go to the lower index.  Arithmetic is exact.
    """
    fr = [Fraction(v) for v in values]
    if any(v < 0 for v in fr):
        raise ValueError("largest_remainder needs non-negative values")
    floors = [math.floor(v) for v in fr]
    target = math.floor(sum(fr, Fraction(0)) + Fraction(1, 2))
    missing = target - sum(floors)
    order = sorted(range(len(fr)), key=lambda i: (-(fr[i] - floors[i]), i))
    for i in order[:missing]:
        floors[i] += 1
    return np.array(floors, dtype=np.int64)


class InfeasibleInstanceError(ValueError):
    """The known-demand constraints cannot be met by any pattern assignment."""


class InfeasibleFirstStageError(ValueError):
    """A first-stage assignment leaves a negative duty capacity on some day."""


# ---------------------------------------------------------------------------
# horizon and patterns


@dataclass(frozen=True)
class Horizon:
    num_days: int
    periods_per_day: int = 24

    def __post_init__(self):
        if self.num_days <= 0 or self.num_days % 7:
            raise ValueError(f"num_days must be a positive multiple of 7, got {self.num_days}")
        if self.periods_per_day < 1:
            raise ValueError("periods_per_day must be >= 1")

    @property
    def num_weeks(self) -> int:
        return self.num_days // 7

    def day_of_week(self, day: int) -> int:
        """Weekday (1 = Sunday) of 0-based horizon day ``day``."""
        return day % 7 + 1

    @property
    def weekdays(self) -> np.ndarray:
        return np.arange(self.num_days) % 7 + 1


@dataclass(frozen=True, eq=False)
class DaysOffPattern:
    id: int
    off_days_of_week: tuple[int, int]
    r: np.ndarray  # 1 = work
    b: np.ndarray  # 1 = off

    @property
    def name(self) -> str:
        return PATTERN_NAMES[self.id]

    def off_days(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.b)]


def build_pattern_catalog(horizon: Horizon) -> list[DaysOffPattern]:
    """The 7 two-consecutive-days-off patterns, Sun-Mon first, Sat-Sun last.

    A day is off when its weekday belongs to the pattern's pair, so Sat-Sun in
    a Sunday-start horizon is off on the first day and on every Sat/Sun after.
    """
    weekdays = horizon.weekdays
    patterns = []
    for p in range(NUM_PATTERNS):
        pair = (p + 1, (p + 1) % 7 + 1)
        b = np.isin(weekdays, pair).astype(np.int8)
        b.setflags(write=False)
        r = (1 - b).astype(np.int8)
        r.setflags(write=False)
        patterns.append(DaysOffPattern(p, pair, r, b))
    return patterns


# ---------------------------------------------------------------------------
# duties


def duty_cost(work_hours: int, pause_hours: int) -> Fraction:
    """Pay-based cost: 8 regular hours, overtime at 1.5, unpaid pause at 0.5."""
    if not REGULAR_HOURS <= work_hours <= MAX_WORK_HOURS:
        raise ValueError(f"work_hours must be in [8, 10], got {work_hours}")
    if not 0 <= pause_hours <= MAX_PAUSE_HOURS:
        raise ValueError(f"pause_hours must be in [0, 3], got {pause_hours}")
    overtime = max(0, work_hours - REGULAR_HOURS)
    return REGULAR_HOURS * REGULAR_RATE + overtime * OVERTIME_RATE + pause_hours * PAUSE_RATE


@dataclass(frozen=True, eq=False)
class Duty:
    id: int
    a: np.ndarray
    work_hours: int
    pause_hours: int
    span_hours: int
    cost: Fraction
    start: int = 0

    @property
    def overtime_hours(self) -> int:
        return max(0, self.work_hours - REGULAR_HOURS)

    @property
    def paid_hours(self) -> int:
        return REGULAR_HOURS + self.overtime_hours

    def label(self) -> str:
        return f"s{self.start:02d}w{self.work_hours}p{self.pause_hours}"


@dataclass(frozen=True)
class DutyGenConfig:
    """Enumeration rule for the hourly duty catalog.

    Every (start, work, pause) triple is kept when the span fits ``max_span``
    and the cost stays within ``max_cost``.  The pause sits in the middle of
    the duty with ``work // 2`` hours before it.  With ``wrap`` the day is
    treated as circular, so late starts cover early periods.
    """

    start_hours: tuple[int, ...] = tuple(range(24))
    work_hours: tuple[int, ...] = (8, 9, 10)
    pause_hours: tuple[int, ...] = (0, 1, 2, 3)
    max_span: int = MAX_SPAN_HOURS
    max_cost: Fraction = Fraction(11)
    wrap: bool = True
    periods_per_day: int = 24

    @classmethod
    def from_dict(cls, d: dict) -> "DutyGenConfig":
        d = dict(d)
        for key in ("start_hours", "work_hours", "pause_hours"):
            if key in d:
                d[key] = tuple(int(v) for v in d[key])
        if "max_cost" in d:
            d["max_cost"] = as_fraction(d["max_cost"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "start_hours": list(self.start_hours),
            "work_hours": list(self.work_hours),
            "pause_hours": list(self.pause_hours),
            "max_span": self.max_span,
            "max_cost": str(self.max_cost),
            "wrap": self.wrap,
            "periods_per_day": self.periods_per_day,
        }


def build_duty_catalog(config: DutyGenConfig | None = None) -> list[Duty]:
    config = config or DutyGenConfig()
    T = config.periods_per_day
    if T != 24:
        raise ValueError("the duty catalog needs hourly periods (periods_per_day=24)")
    duties: list[Duty] = []
    for start in config.start_hours:
        for work in config.work_hours:
            for pause in config.pause_hours:
                span = work + pause
                if span > config.max_span:
                    continue
                cost = duty_cost(work, pause)
                if cost > config.max_cost:
                    continue
                if not config.wrap and start + span > T:
                    continue
                before = work // 2 if pause else work
                hours = [start + h for h in range(before)]
                hours += [start + before + pause + h for h in range(work - before)]
                a = np.zeros(T, dtype=np.int8)
                a[np.array(hours) % T] = 1
                a.setflags(write=False)
                duties.append(Duty(len(duties), a, work, pause, span, cost, start))
    if not duties:
        raise ValueError("duty configuration produced an empty catalog")
    return duties


def coverage_matrix(duties: Sequence[Duty]) -> np.ndarray:
    """|T| x |W| matrix with a[t, w] = 1 if duty w works in period t."""
    return np.column_stack([d.a for d in duties]).astype(np.int64)


# ---------------------------------------------------------------------------
# scenarios, preferences, absences, costs


@dataclass(frozen=True, eq=False)
class DailyScenario:
    day: int
    demand: np.ndarray
    probability: Fraction


@dataclass(frozen=True, eq=False)
class PreferenceProfile:
    scores: np.ndarray  # (|E|, 7), scores[e, p] in 1..7, 7 = most preferred

    @property
    def num_employees(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True, eq=False)
class AbsenceModel:
    """Both absence variants: per-employee ``q_pref`` and per-day ``q_uniform``."""

    q_pref: tuple[tuple[Fraction, ...], ...]  # [e][j]
    q_uniform: tuple[Fraction, ...]  # [j]

    def matrix(self, mode: str, num_employees: int | None = None) -> list[list[Fraction]]:
        """q as an |E| x |J| Fraction matrix for ``mode`` in {'with', 'without'}."""
        if mode == "with":
            return [list(row) for row in self.q_pref]
        if mode == "without":
            n = len(self.q_pref) if num_employees is None else num_employees
            return [list(self.q_uniform) for _ in range(n)]
        raise ValueError(f"unknown preference mode {mode!r}")


@dataclass(frozen=True)
class CostCoefficients:
    c1: Fraction = Fraction(10)
    c3: Fraction = Fraction(3, 4)
    epsilon: Fraction = Fraction(1, 10**15)

    def __post_init__(self):
        for name in ("c1", "c3", "epsilon"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))


@dataclass(frozen=True)
class FirstStageSolution:
    assignment: tuple[int, ...]  # employee -> pattern id

    def x_matrix(self, num_patterns: int = NUM_PATTERNS) -> np.ndarray:
        x = np.zeros((num_patterns, len(self.assignment)), dtype=np.int64)
        x[list(self.assignment), np.arange(len(self.assignment))] = 1
        return x

    def to_dict(self) -> dict:
        return {"assignment": list(self.assignment)}

    @classmethod
    def from_dict(cls, d: dict) -> "FirstStageSolution":
        return cls(tuple(int(p) for p in d["assignment"]))


@dataclass
class SecondStageSolution:
    """Duty counts, understaffing and overstaffing per (day, scenario)."""

    v: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    y: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    z: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# instance


@dataclass(eq=False)
class Instance:
    horizon: Horizon
    patterns: list[DaysOffPattern]
    duties: list[Duty]
    num_employees: int
    known_demand: np.ndarray
    scenarios: list[list[DailyScenario]]
    preferences: PreferenceProfile
    absence: AbsenceModel
    costs: CostCoefficients = field(default_factory=CostCoefficients)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_days(self) -> int:
        return self.horizon.num_days

    @property
    def num_periods(self) -> int:
        return self.horizon.periods_per_day

    def r_matrix(self) -> np.ndarray:
        return np.array([p.r for p in self.patterns], dtype=np.int64)

    def b_matrix(self) -> np.ndarray:
        return np.array([p.b for p in self.patterns], dtype=np.int64)

    def scenario_counts(self) -> list[int]:
        return [len(s) for s in self.scenarios]

    def replace(self, **changes) -> "Instance":
        fields = dict(self.__dict__)
        fields.update(changes)
        return Instance(**fields)


# ---------------------------------------------------------------------------
# duty-count identity (the ceiling form of the two duty-count bounds)


def expected_absences(instance: Instance, first_stage: FirstStageSolution, day: int, mode: str = "with") -> Fraction:
    """Sum over working employees of their absence probability on ``day``."""
    q = instance.absence.matrix(mode, instance.num_employees)
    total = Fraction(0)
    for e, p in enumerate(first_stage.assignment):
        if instance.patterns[p].r[day]:
            total += q[e][day]
    return total


def employees_off(instance: Instance, first_stage: FirstStageSolution, day: int) -> int:
    return sum(int(instance.patterns[p].b[day]) for p in first_stage.assignment)


def duty_capacity(instance: Instance, first_stage: FirstStageSolution, day: int, mode: str = "with") -> int:
    """Number of duties available for unknown absences on ``day``.

    |E| - o_j - (#off) - ceil(expected XB absences).  May be negative; callers
    decide whether that is an error.
    """
    absent = math.ceil(expected_absences(instance, first_stage, day, mode))
    return (instance.num_employees - int(instance.known_demand[day])
            - employees_off(instance, first_stage, day) - absent)


def expected_present(instance: Instance, first_stage: FirstStageSolution, day: int, mode: str = "with") -> Fraction:
    q = instance.absence.matrix(mode, instance.num_employees)
    total = Fraction(0)
    for e, p in enumerate(first_stage.assignment):
        if instance.patterns[p].r[day]:
            total += 1 - q[e][day]
    return total


def known_demand_violations(instance: Instance, first_stage: FirstStageSolution, mode: str = "with") -> list[tuple[int, Fraction, int]]:
    """Days where expected present workers fall short of o_j: (day, present, o_j)."""
    out = []
    for j in range(instance.num_days):
        present = expected_present(instance, first_stage, j, mode)
        if present < int(instance.known_demand[j]):
            out.append((j, present, int(instance.known_demand[j])))
    return out


def social_welfare(instance: Instance, first_stage: FirstStageSolution) -> Fraction:
    """Mean preference score of the assigned patterns."""
    scores = instance.preferences.scores
    total = sum(int(scores[e, p]) for e, p in enumerate(first_stage.assignment))
    return Fraction(total, len(first_stage.assignment))


# ---------------------------------------------------------------------------
# validation


def validate_instance(instance: Instance) -> list[str]:
    """Every broken invariant as a human-readable message; empty when valid."""
    out: list[str] = []
    H = instance.horizon
    J, T = H.num_days, H.periods_per_day
    E = instance.num_employees

    if len(instance.patterns) != NUM_PATTERNS:
        out.append(f"patterns: expected {NUM_PATTERNS} patterns, got {len(instance.patterns)}")
    for p in instance.patterns:
        r, b = np.asarray(p.r), np.asarray(p.b)
        if r.shape != (J,) or b.shape != (J,):
            out.append(f"patterns[{p.id}]: r/b must have length {J}")
            continue
        if np.any(r + b != 1):
            out.append(f"patterns[{p.id}]: r + b != 1 on some day")
        d1, d2 = p.off_days_of_week
        if d2 != d1 % 7 + 1:
            out.append(f"patterns[{p.id}]: off days {p.off_days_of_week} are not consecutive")
        for w in range(H.num_weeks):
            week = b[7 * w:7 * w + 7]
            if int(week.sum()) != 2:
                out.append(f"patterns[{p.id}]: week {w} has {int(week.sum())} off days, expected 2")
        if not np.array_equal(b, np.isin(H.weekdays, p.off_days_of_week).astype(b.dtype)):
            out.append(f"patterns[{p.id}]: off days differ across weeks")

    if not instance.duties:
        out.append("duties: empty duty set")
    for d in instance.duties:
        a = np.asarray(d.a)
        if a.shape != (T,):
            out.append(f"duties[{d.id}]: coverage length {a.shape} != {T}")
            continue
        if np.any((a != 0) & (a != 1)):
            out.append(f"duties[{d.id}]: coverage is not binary")
        if not Fraction(8) <= d.cost <= Fraction(11):
            out.append(f"duties[{d.id}]: cost {d.cost} outside [8, 11]")
        if T == 24:
            if not REGULAR_HOURS <= d.work_hours <= MAX_WORK_HOURS:
                out.append(f"duties[{d.id}]: work_hours {d.work_hours} outside [8, 10]")
            if d.span_hours > MAX_SPAN_HOURS:
                out.append(f"duties[{d.id}]: span {d.span_hours} exceeds 12")
            if int(a.sum()) != d.work_hours:
                out.append(f"duties[{d.id}]: coverage sums to {int(a.sum())}, work_hours is {d.work_hours}")

    o = np.asarray(instance.known_demand)
    if o.shape != (J,):
        out.append(f"known_demand: length {o.shape} != {J}")
    elif np.any(o < 0):
        out.append("known_demand: negative entries")

    if len(instance.scenarios) != J:
        out.append(f"scenarios: {len(instance.scenarios)} days, expected {J}")
    for j, day in enumerate(instance.scenarios):
        if not day:
            out.append(f"scenarios: day {j} has no scenario")
            continue
        total = sum((s.probability for s in day), Fraction(0))
        if total != 1:
            out.append(f"scenarios: probabilities of day {j} sum to {total}, expected 1")
        for k, s in enumerate(day):
            dem = np.asarray(s.demand)
            if dem.shape != (T,):
                out.append(f"scenarios: day {j} scenario {k} demand length {dem.shape} != {T}")
            elif np.any(dem < 0):
                out.append(f"scenarios: day {j} scenario {k} has negative demand")
            if not 0 < s.probability <= 1:
                out.append(f"scenarios: day {j} scenario {k} probability {s.probability} outside (0, 1]")

    scores = np.asarray(instance.preferences.scores)
    if scores.shape != (E, NUM_PATTERNS):
        out.append(f"preferences: shape {scores.shape} != ({E}, {NUM_PATTERNS})")
    else:
        for e in range(E):
            if sorted(scores[e].tolist()) != list(range(1, 8)):
                out.append(f"preferences: row {e} {scores[e].tolist()} is not a permutation of 1..7")

    q = instance.absence.q_pref
    if len(q) != E or any(len(row) != J for row in q):
        out.append(f"absence: q_pref must be {E} x {J}")
    else:
        for e, row in enumerate(q):
            for j, v in enumerate(row):
                if not 0 <= v < 1:
                    out.append(f"absence: q_pref[{e}][{j}] = {v} outside [0, 1)")
    if len(instance.absence.q_uniform) != J:
        out.append(f"absence: q_uniform must have length {J}")
    else:
        for j, v in enumerate(instance.absence.q_uniform):
            if not 0 <= v < 1:
                out.append(f"absence: q_uniform[{j}] = {v} outside [0, 1)")

    c = instance.costs
    if not c.c1 > 0:
        out.append(f"costs: c1 = {c.c1} must be > 0")
    if c.c3 < 0:
        out.append(f"costs: c3 = {c.c3} must be >= 0")
    if not 0 < c.epsilon < 1:
        out.append(f"costs: epsilon = {c.epsilon} must be in (0, 1)")
    if E < 1:
        out.append("num_employees: must be >= 1")
    return out


# ---------------------------------------------------------------------------
# serialization


def _frac(v: Fraction) -> list[int]:
    return [v.numerator, v.denominator]


def instance_to_dict(instance: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": instance.seed,
        "horizon": {"num_days": instance.horizon.num_days,
                    "periods_per_day": instance.horizon.periods_per_day},
        "num_employees": instance.num_employees,
        "patterns": [{"id": p.id, "name": p.name, "off_days_of_week": list(p.off_days_of_week),
                      "r": p.r.tolist(), "b": p.b.tolist()} for p in instance.patterns],
        "duties": [{"id": d.id, "start": d.start, "work_hours": d.work_hours,
                    "pause_hours": d.pause_hours, "span_hours": d.span_hours,
                    "cost": _frac(d.cost), "a": np.asarray(d.a).tolist()} for d in instance.duties],
        "known_demand": np.asarray(instance.known_demand).tolist(),
        "scenarios": [[{"demand": np.asarray(s.demand).tolist(), "probability": _frac(s.probability)}
                       for s in day] for day in instance.scenarios],
        "preferences": np.asarray(instance.preferences.scores).tolist(),
        "absence": {"q_pref": [[_frac(v) for v in row] for row in instance.absence.q_pref],
                    "q_uniform": [_frac(v) for v in instance.absence.q_uniform]},
        "costs": {"c1": _frac(instance.costs.c1), "c3": _frac(instance.costs.c3),
                  "epsilon": _frac(instance.costs.epsilon)},
        "meta": instance.meta,
    }


def instance_from_dict(d: dict) -> Instance:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported instance schema_version {version!r}")
    horizon = Horizon(**d["horizon"])
    patterns = []
    for p in d["patterns"]:
        r = np.array(p["r"], dtype=np.int8)
        b = np.array(p["b"], dtype=np.int8)
        r.setflags(write=False)
        b.setflags(write=False)
        patterns.append(DaysOffPattern(int(p["id"]), tuple(p["off_days_of_week"]), r, b))
    duties = []
    for w in d["duties"]:
        a = np.array(w["a"], dtype=np.int8)
        a.setflags(write=False)
        duties.append(Duty(int(w["id"]), a, int(w["work_hours"]), int(w["pause_hours"]),
                           int(w["span_hours"]), as_fraction(w["cost"]), int(w.get("start", 0))))
    scenarios = [[DailyScenario(j, np.array(s["demand"], dtype=np.int64), as_fraction(s["probability"]))
                  for s in day] for j, day in enumerate(d["scenarios"])]
    absence = AbsenceModel(
        tuple(tuple(as_fraction(v) for v in row) for row in d["absence"]["q_pref"]),
        tuple(as_fraction(v) for v in d["absence"]["q_uniform"]),
    )
    costs = CostCoefficients(**{k: as_fraction(v) for k, v in d["costs"].items()})
    return Instance(
        horizon=horizon,
        patterns=patterns,
        duties=duties,
        num_employees=int(d["num_employees"]),
        known_demand=np.array(d["known_demand"], dtype=np.int64),
        scenarios=scenarios,
        preferences=PreferenceProfile(np.array(d["preferences"], dtype=np.int64)),
        absence=absence,
        costs=costs,
        seed=d.get("seed"),
        meta=d.get("meta", {}),
    )


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def dump_instance(instance: Instance) -> str:
    return canonical_json(instance_to_dict(instance))


def load_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_instance(instance))


def read_instance(path) -> Instance:
    with open(path) as fh:
        return load_instance(fh.read())
