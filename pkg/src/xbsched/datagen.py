"""Synthetic instance generator.

Daily unknown-absence demand is a sampled total duration spread over the day
by a sampled shape.  Preferences are rankings of the 7 patterns drawn from a
Mallows distribution around a weekend-first modal ranking.  Per-employee
absence probabilities sit on a 7-point grid between the Tukey whiskers of
(synthetic) historical absence rates: the more an employee wants a weekday
off, the more likely they are absent when working it.

All randomness flows through named substreams ``(seed, purpose, day, index)``
so every piece can be regenerated independently of generation order.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .core import (NUM_PATTERNS, AbsenceModel, CostCoefficients, DailyScenario, Duty, DutyGenConfig,
                   Horizon, Instance, PreferenceProfile, as_fraction, build_duty_catalog,
                   build_pattern_catalog, config_hash, largest_remainder)

# modal ranking in pattern order Sun-Mon, Mon-Tue, ..., Sat-Sun
MODAL_RANKING = (6, 1, 2, 3, 4, 5, 7)
MODAL_WEIGHT = Fraction(159, 1678)


def substream(seed: int, purpose: str, *ids: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(purpose.encode()), *(int(i) for i in ids)])


# ---------------------------------------------------------------------------
# durations

FAMILIES = ("lognormal", "gamma", "truncnorm", "point")


@dataclass(frozen=True)
class DurationModel:
    """Daily total unknown-absence hours, one parameter tuple per weekday.

    lognormal: (mu, sigma) of log-hours; gamma: (shape, scale);
    truncnorm: (mean, sd) truncated at 0; point: (value,).
    """

    family: str = "lognormal"
    params_by_weekday: tuple[tuple[float, ...], ...] = ((math.log(30.0), 0.35),) * 7

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown duration family {self.family!r}")
        if len(self.params_by_weekday) != 7:
            raise ValueError("need parameters for 7 weekdays")

    @classmethod
    def lognormal_medians(cls, medians: Sequence[float], sigma: float = 0.35) -> "DurationModel":
        return cls("lognormal", tuple((math.log(m), sigma) for m in medians))

    def to_dict(self) -> dict:
        return {"family": self.family, "params_by_weekday": [list(p) for p in self.params_by_weekday]}

    @classmethod
    def from_dict(cls, d: dict) -> "DurationModel":
        return cls(d.get("family", "lognormal"), tuple(tuple(float(v) for v in p) for p in d["params_by_weekday"]))


def sample_durations(model: DurationModel, weekday: int, l: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= weekday <= 7:
        raise ValueError("weekday must be in 1..7")
    p = model.params_by_weekday[weekday - 1]
    if model.family == "lognormal":
        out = rng.lognormal(p[0], p[1], size=l)
    elif model.family == "gamma":
        out = rng.gamma(p[0], p[1], size=l)
    elif model.family == "truncnorm":
        a = (0.0 - p[0]) / p[1]
        out = stats.truncnorm.rvs(a, np.inf, loc=p[0], scale=p[1], size=l, random_state=rng)
    else:
        out = np.full(l, float(p[0]))
    return np.maximum(np.asarray(out, dtype=float), 0.0)


# ---------------------------------------------------------------------------
# shapes


def template_shape(weekday: int, periods: int = 24) -> np.ndarray:
    """Baseline daily profile: morning and evening rush peaks on weekdays, one broad midday hump on weekends."""
    hours = (np.arange(periods) + 0.5) * 24.0 / periods
    base = np.full(periods, 0.15)
    if weekday in (1, 7):
        prof = base + np.exp(-0.5 * ((hours - 13.0) / 4.0) ** 2)
    else:
        prof = base + np.exp(-0.5 * ((hours - 7.5) / 1.8) ** 2) + 0.9 * np.exp(-0.5 * ((hours - 16.5) / 2.2) ** 2)
    prof[(hours < 4.0)] *= 0.4
    return prof / prof.sum()


@dataclass(frozen=True)
class ShapeLibrary:
    """Dirichlet perturbations of the weekday templates."""

    concentration: float = 60.0
    periods_per_day: int = 24

    def sample(self, weekday: int, k: int, rng: np.random.Generator) -> np.ndarray:
        alpha = self.concentration * self.periods_per_day * template_shape(weekday, self.periods_per_day)
        shapes = rng.dirichlet(alpha, size=k)
        return shapes / shapes.sum(axis=1, keepdims=True)


def integerize_demand(duration: float, shape: np.ndarray) -> np.ndarray:
    return largest_remainder([max(0.0, duration * float(s)) for s in shape])


def assemble_scenarios(durations: Sequence[float], shapes: Sequence[np.ndarray], day: int = 0) -> list[DailyScenario]:
    """Every (duration, shape) pair as an equally likely scenario."""
    n = len(durations) * len(shapes)
    prob = Fraction(1, n)
    out = []
    for dur in durations:
        for shp in shapes:
            dem = integerize_demand(float(dur), np.asarray(shp, dtype=float))
            dem.setflags(write=False)
            out.append(DailyScenario(day, dem, prob))
    return out


# ---------------------------------------------------------------------------
# preferences


def kendall_distance(a: Sequence[int], b: Sequence[int]) -> int:
    n = len(a)
    return sum(1 for i in range(n) for j in range(i + 1, n) if (a[i] - a[j]) * (b[i] - b[j]) < 0)


def mallows_theta(mode_weight: Fraction | float, n: int = NUM_PATTERNS) -> float:
    """Dispersion at which the modal ranking has probability ``mode_weight``."""
    target = float(mode_weight)
    if not 1.0 / math.factorial(n) < target < 1.0:
        raise ValueError("mode weight must lie strictly between uniform and 1")

    def mode_prob(theta):
        z = 1.0
        for i in range(1, n + 1):
            z *= (1 - math.exp(-i * theta)) / (1 - math.exp(-theta))
        return 1.0 / z

    lo, hi = 1e-9, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mode_prob(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ranking_distribution(modal: Sequence[int] = MODAL_RANKING,
                         mode_weight: Fraction | float = MODAL_WEIGHT) -> list[tuple[tuple[int, ...], float]]:
    """Mallows weights over all 5040 rankings (score vectors in pattern order)."""
    theta = mallows_theta(mode_weight, len(modal))
    rankings = list(itertools.permutations(range(1, len(modal) + 1)))
    w = np.array([math.exp(-theta * kendall_distance(r, modal)) for r in rankings])
    w /= w.sum()
    return list(zip(rankings, w.tolist()))


def sample_preferences(distribution: Sequence[tuple[Sequence[int], float]], num_employees: int,
                       rng: np.random.Generator) -> PreferenceProfile:
    if not distribution:
        raise ValueError("empty ranking distribution")
    weights = np.array([w for _, w in distribution], dtype=float)
    weights = weights / weights.sum()
    picks = rng.choice(len(distribution), size=num_employees, p=weights)
    scores = np.array([list(distribution[i][0]) for i in picks], dtype=np.int64).reshape(num_employees, -1)
    scores.setflags(write=False)
    return PreferenceProfile(scores)


def day_of_week_scores(ranking: Sequence[int]) -> np.ndarray:
    """Score of each weekday (Sun..Sat): sum of the ranks of the two patterns containing it."""
    r = list(ranking)
    out = np.zeros(7, dtype=np.int64)
    for p in range(NUM_PATTERNS):
        out[p] += r[p]
        out[(p + 1) % 7] += r[p]
    return out


def rank_weekdays(scores: Sequence[int]) -> np.ndarray:
    """Position of each weekday in ascending score order; ties follow Sun..Sat."""
    order = sorted(range(7), key=lambda d: (scores[d], d))
    n = np.zeros(7, dtype=np.int64)
    for pos, d in enumerate(order):
        n[d] = pos + 1
    return n


# ---------------------------------------------------------------------------
# absence probabilities


def tukey_whiskers(samples: Sequence) -> tuple[Fraction, Fraction]:
    """Lowest and highest samples within 1.5 IQR of the type-7 quartiles (exact)."""
    xs = sorted(as_fraction(v) for v in samples)
    n = len(xs)
    if n < 4:
        raise ValueError("need at least 4 samples per weekday")

    def quantile(p: Fraction) -> Fraction:
        h = (n - 1) * p
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        return xs[lo] + (h - lo) * (xs[hi] - xs[lo])

    q1, q3 = quantile(Fraction(1, 4)), quantile(Fraction(3, 4))
    iqr = q3 - q1
    low = min(v for v in xs if v >= q1 - Fraction(3, 2) * iqr)
    high = max(v for v in xs if v <= q3 + Fraction(3, 2) * iqr)
    return low, high


@dataclass(frozen=True)
class AbsenceRateGrid:
    low: tuple[Fraction, ...]
    high: tuple[Fraction, ...]

    def value(self, weekday: int, n: int) -> Fraction:
        i = weekday - 1
        return self.low[i] + (n - 1) * (self.high[i] - self.low[i]) / 6

    def row(self, weekday: int) -> list[Fraction]:
        return [self.value(weekday, n) for n in range(1, 8)]

    @property
    def spread(self) -> Fraction:
        return min(h - l for l, h in zip(self.low, self.high))

    @classmethod
    def from_whiskers(cls, whiskers: Sequence[tuple]) -> "AbsenceRateGrid":
        return cls(tuple(as_fraction(w[0]) for w in whiskers), tuple(as_fraction(w[1]) for w in whiskers))


def build_absence_grid(historical_rates_by_weekday: Sequence[Sequence]) -> AbsenceRateGrid:
    if len(historical_rates_by_weekday) != 7:
        raise ValueError("need historical rates for 7 weekdays")
    return AbsenceRateGrid.from_whiskers([tukey_whiskers(r) for r in historical_rates_by_weekday])


def assign_absence_probabilities(grid: AbsenceRateGrid, preferences: PreferenceProfile,
                                 horizon: Horizon) -> tuple[tuple[Fraction, ...], ...]:
    rows = []
    weekdays = horizon.weekdays
    for e in range(preferences.num_employees):
        n = rank_weekdays(day_of_week_scores(preferences.scores[e]))
        rows.append(tuple(grid.value(int(d), int(n[d - 1])) for d in weekdays))
    return tuple(rows)


def uniform_absence_probabilities(historical_rates_by_weekday: Sequence[Sequence], horizon: Horizon) -> tuple[Fraction, ...]:
    means = [sum((as_fraction(v) for v in rates), Fraction(0)) / len(rates) for rates in historical_rates_by_weekday]
    return tuple(means[int(d) - 1] for d in horizon.weekdays)


@dataclass(frozen=True)
class AbsenceHistoryConfig:
    """Synthetic weekly absence-rate history: normal per weekday, clipped and rounded."""

    means: tuple[float, ...] = (0.085, 0.095, 0.09, 0.09, 0.095, 0.1, 0.085)
    sds: tuple[float, ...] = (0.025,) * 7
    samples: int = 52
    decimals: int = 3
    clip: tuple[float, float] = (0.001, 0.6)

    def to_dict(self) -> dict:
        return {"means": list(self.means), "sds": list(self.sds), "samples": self.samples,
                "decimals": self.decimals, "clip": list(self.clip)}

    @classmethod
    def from_dict(cls, d: dict) -> "AbsenceHistoryConfig":
        base = cls()
        return cls(tuple(d.get("means", base.means)), tuple(d.get("sds", base.sds)),
                   int(d.get("samples", base.samples)), int(d.get("decimals", base.decimals)),
                   tuple(d.get("clip", base.clip)))


def synthetic_absence_history(cfg: AbsenceHistoryConfig, seed: int) -> list[list[Fraction]]:
    out = []
    for i in range(7):
        rng = substream(seed, "absence-history", i)
        raw = np.clip(rng.normal(cfg.means[i], cfg.sds[i], size=cfg.samples), *cfg.clip)
        out.append([Fraction(round(float(v) * 10**cfg.decimals), 10**cfg.decimals) for v in raw])
    return out


# ---------------------------------------------------------------------------
# instance generation


@dataclass(frozen=True)
class GeneratorConfig:
    name: str = "custom"
    num_employees: int = 10
    num_days: int = 14
    periods_per_day: int = 24
    l: int = 10
    k: int = 10
    seed: int = 0
    duration: DurationModel = field(default_factory=DurationModel)
    shape_concentration: float = 60.0
    known_demand_means: tuple[float, ...] = (1.5, 2.5, 2.5, 2.5, 2.5, 2.5, 1.5)
    history: AbsenceHistoryConfig = field(default_factory=AbsenceHistoryConfig)
    costs: CostCoefficients = field(default_factory=CostCoefficients)
    duties: DutyGenConfig = field(default_factory=DutyGenConfig)
    modal_ranking: tuple[int, ...] = MODAL_RANKING
    mode_weight: Fraction = MODAL_WEIGHT

    def __post_init__(self):
        if self.l < 1 or self.k < 1:
            raise ValueError("l and k must be >= 1")
        if self.num_employees < 1:
            raise ValueError("num_employees must be >= 1")
        if len(self.known_demand_means) != 7:
            raise ValueError("known_demand_means needs 7 weekday values")
        object.__setattr__(self, "mode_weight", as_fraction(self.mode_weight))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_employees": self.num_employees,
            "num_days": self.num_days,
            "periods_per_day": self.periods_per_day,
            "l": self.l,
            "k": self.k,
            "seed": self.seed,
            "duration": self.duration.to_dict(),
            "shape_concentration": self.shape_concentration,
            "known_demand_means": list(self.known_demand_means),
            "history": self.history.to_dict(),
            "costs": {"c1": str(self.costs.c1), "c3": str(self.costs.c3), "epsilon": str(self.costs.epsilon)},
            "duties": self.duties.to_dict(),
            "modal_ranking": list(self.modal_ranking),
            "mode_weight": str(self.mode_weight),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        kw = {}
        for key in ("name", "num_employees", "num_days", "periods_per_day", "l", "k", "seed", "shape_concentration"):
            if key in d:
                kw[key] = d.pop(key)
        if "duration" in d:
            kw["duration"] = DurationModel.from_dict(d.pop("duration"))
        if "known_demand_means" in d:
            kw["known_demand_means"] = tuple(float(v) for v in d.pop("known_demand_means"))
        if "history" in d:
            kw["history"] = AbsenceHistoryConfig.from_dict(d.pop("history"))
        if "costs" in d:
            kw["costs"] = CostCoefficients(**{k: as_fraction(v) for k, v in d.pop("costs").items()})
        if "duties" in d:
            kw["duties"] = DutyGenConfig.from_dict(d.pop("duties"))
        if "modal_ranking" in d:
            kw["modal_ranking"] = tuple(int(v) for v in d.pop("modal_ranking"))
        if "mode_weight" in d:
            kw["mode_weight"] = as_fraction(d.pop("mode_weight"))
        if d:
            raise ValueError(f"unknown generator keys: {sorted(d)}")
        return cls(**kw)

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return replace(self, seed=int(seed))


def known_demand_cap(num_employees: int, q_max: Fraction) -> int:
    """Largest o_j that a balanced pattern mix always covers in expectation."""
    working = num_employees - 2 * math.ceil(num_employees / 7)
    return max(0, math.floor((1 - q_max) * working))


def sample_known_demand(cfg: GeneratorConfig, horizon: Horizon, cap: int) -> np.ndarray:
    out = np.zeros(horizon.num_days, dtype=np.int64)
    for j, d in enumerate(horizon.weekdays):
        rng = substream(cfg.seed, "known-demand", j)
        for _ in range(1000):
            v = int(rng.poisson(cfg.known_demand_means[int(d) - 1]))
            if v <= cap:
                break
        else:
            v = cap
        out[j] = v
    out.setflags(write=False)
    return out


def generate_day_scenarios(cfg: GeneratorConfig, horizon: Horizon, day: int) -> list[DailyScenario]:
    weekday = horizon.day_of_week(day)
    durations = sample_durations(cfg.duration, weekday, cfg.l, substream(cfg.seed, "duration", day))
    shapes = ShapeLibrary(cfg.shape_concentration, cfg.periods_per_day).sample(
        weekday, cfg.k, substream(cfg.seed, "shape", day))
    return assemble_scenarios(durations, shapes, day)


def generate_instance(cfg: GeneratorConfig) -> Instance:
    horizon = Horizon(cfg.num_days, cfg.periods_per_day)
    patterns = build_pattern_catalog(horizon)
    duties = build_duty_catalog(replace(cfg.duties, periods_per_day=cfg.periods_per_day))
    history = synthetic_absence_history(cfg.history, cfg.seed)
    grid = build_absence_grid(history)
    prefs = sample_preferences(ranking_distribution(cfg.modal_ranking, cfg.mode_weight), cfg.num_employees,
                               substream(cfg.seed, "preferences"))
    q_pref = assign_absence_probabilities(grid, prefs, horizon)
    q_uni = uniform_absence_probabilities(history, horizon)
    q_max = max([max(grid.high), *q_uni])
    known = sample_known_demand(cfg, horizon, known_demand_cap(cfg.num_employees, q_max))
    scenarios = [generate_day_scenarios(cfg, horizon, j) for j in range(cfg.num_days)]
    cfg_dict = cfg.to_dict()
    meta = {
        "generator": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "whiskers": [[str(l), str(h)] for l, h in zip(grid.low, grid.high)],
    }
    return Instance(horizon, patterns, duties, cfg.num_employees, known, scenarios, prefs,
                    AbsenceModel(q_pref, q_uni), cfg.costs, cfg.seed, meta)


def generate_eval_scenarios(cfg: GeneratorConfig, n: int, seed: int) -> np.ndarray:
    """Held-out demand, shape (n, |J|, |T|): fresh durations and fresh shapes per day."""
    if n < 1:
        raise ValueError("need at least one evaluation scenario")
    horizon = Horizon(cfg.num_days, cfg.periods_per_day)
    lib = ShapeLibrary(cfg.shape_concentration, cfg.periods_per_day)
    out = np.zeros((n, cfg.num_days, cfg.periods_per_day), dtype=np.int64)
    for j in range(cfg.num_days):
        wd = horizon.day_of_week(j)
        durs = sample_durations(cfg.duration, wd, n, substream(seed, "eval-duration", cfg.seed, j))
        shapes = lib.sample(wd, n, substream(seed, "eval-shape", cfg.seed, j))
        for i in range(n):
            out[i, j] = integerize_demand(float(durs[i]), shapes[i])
    return out


def scenarios_csv(instance: Instance) -> str:
    lines = ["day,scenario,period,demand"]
    for j, day in enumerate(instance.scenarios):
        for s, sc in enumerate(day):
            for t, v in enumerate(sc.demand):
                lines.append(f"{j},{s},{t},{int(v)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# tiny random instances (for brute-force cross-checks)


def random_tiny_instance(rng: np.random.Generator, max_employees: int = 4, max_scenarios: int = 2,
                         max_periods: int = 6, max_duties: int = 5, num_days: int = 7) -> Instance:
    """Small random instance with arbitrary duty coverage over few periods."""
    E = int(rng.integers(1, max_employees + 1))
    T = int(rng.integers(2, max_periods + 1))
    W = int(rng.integers(1, max_duties + 1))
    horizon = Horizon(num_days, T)
    patterns = build_pattern_catalog(horizon)
    duties = []
    for w in range(W):
        a = (rng.random(T) < 0.5).astype(np.int8)
        if not a.any():
            a[int(rng.integers(T))] = 1
        a.setflags(write=False)
        cost = Fraction(int(rng.integers(16, 23)), 2)
        duties.append(Duty(w, a, 8, 0, T, cost, 0))
    q = tuple(tuple(Fraction(int(rng.integers(0, 8)), int(rng.integers(10, 21))) for _ in range(num_days))
              for _ in range(E))
    q_uni = tuple(Fraction(int(rng.integers(0, 8)), 20) for _ in range(num_days))
    scores = np.array([rng.permutation(7) + 1 for _ in range(E)], dtype=np.int64)
    scores.setflags(write=False)
    o_top = max(0, (E * 5) // 7 - 1)
    known = rng.integers(0, min(o_top, 1) + 1, num_days).astype(np.int64)
    scenarios = []
    for j in range(num_days):
        S = int(rng.integers(1, max_scenarios + 1))
        weights = rng.integers(1, 4, S)
        probs = [Fraction(int(w), int(weights.sum())) for w in weights]
        scenarios.append([DailyScenario(j, rng.integers(0, 3, T).astype(np.int64), p) for p in probs])
    c3 = [Fraction(0), Fraction(3, 4), Fraction(2)][int(rng.integers(3))]
    return Instance(horizon, patterns, duties, E, known, scenarios, PreferenceProfile(scores),
                    AbsenceModel(q, q_uni), CostCoefficients(Fraction(10), c3), None, {"kind": "tiny"})
