"""Extensive-form MILP of the two-stage days-off problem and its variants.

First stage: binary ``x[p, e]`` assigns days-off pattern ``p`` to employee
``e``.  Second stage, per (day ``j``, scenario ``s``): duty counts ``v[w]``,
understaffing ``y[t]`` and overstaffing ``z[t]``.

Rows, per day ``j`` with ``K_j = |E| - o_j``, ``B_j(x)`` employees off and
``S_j(x) = sum_e q[e, j] * (e works on j)`` expected absent workers:

* one pattern per employee;
* known demand: ``sum_e (1 - q[e, j]) * (e works on j) >= o_j``;
* duty-count cap: ``sum_w v + B_j + S_j <= K_j``;
* duty-count floor: ``sum_w v + B_j + S_j >= K_j - (1 - eps)``;
* demand balance: ``sum_w a[w, t] v[w] + y[t] - z[t] = d[t]``.

For integer ``x`` the cap and floor leave a single integer value for
``sum_w v``, namely ``K_j - B_j - ceil(S_j)``.

The q values are rationals.  Both duty-count rows are multiplied by the least
common denominator ``D_j`` of that day's q values, so their data is integral
and exact.  Every ``S_j`` is then a multiple of ``1/D_j``, and any
``eps <= 1/D_j`` selects the same integer points; the row uses
``max(eps, 1/D_j)``, which keeps the right-hand side an integer after scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (DailyScenario, FirstStageSolution, Instance, InfeasibleFirstStageError,
                   InfeasibleInstanceError, SecondStageSolution, coverage_matrix, duty_capacity,
                   largest_remainder, lcm_of_denominators)
from .milp import EQ, GE, LE, MilpModel
from .milp.model import MAX_ROW_SCALE

PREFERENCE_MODES = ("with", "without")
SCENARIO_MODES = ("full", "expected-value", "single")


@dataclass(frozen=True)
class FormulationConfig:
    preference_mode: str = "with"
    scenario_mode: str = "full"
    # single mode: one scenario index used on every day, or one index per day
    scenario_index: int | tuple[int, ...] | None = None
    epsilon: Fraction | None = None

    def __post_init__(self):
        if self.preference_mode not in PREFERENCE_MODES:
            raise ValueError(f"preference_mode must be one of {PREFERENCE_MODES}")
        if self.scenario_mode not in SCENARIO_MODES:
            raise ValueError(f"scenario_mode must be one of {SCENARIO_MODES}")
        if self.scenario_mode == "single" and self.scenario_index is None:
            raise ValueError("single scenario mode needs scenario_index")


def expected_value_scenario(day_scenarios: Sequence[DailyScenario]) -> DailyScenario:
    """Probability-weighted mean demand of one day, integerized by largest remainder."""
    T = len(day_scenarios[0].demand)
    mean = [sum((s.probability * int(s.demand[t]) for s in day_scenarios), Fraction(0)) for t in range(T)]
    return DailyScenario(day_scenarios[0].day, largest_remainder(mean), Fraction(1))


def effective_scenarios(instance: Instance, config: FormulationConfig) -> list[list[DailyScenario]]:
    if config.scenario_mode == "full":
        return instance.scenarios
    if config.scenario_mode == "expected-value":
        return [[expected_value_scenario(day)] for day in instance.scenarios]
    idx = config.scenario_index
    picks = [idx] * instance.num_days if isinstance(idx, int) else list(idx)
    if len(picks) != instance.num_days:
        raise ValueError("scenario_index needs one entry per day")
    out = []
    for j, k in enumerate(picks):
        if not 0 <= k < len(instance.scenarios[j]):
            raise ValueError(f"scenario index {k} out of range on day {j}")
        s = instance.scenarios[j][k]
        out.append([DailyScenario(j, s.demand, Fraction(1))])
    return out


def welfare_weight(instance: Instance, mode: str) -> Fraction:
    return instance.costs.c3 if mode == "with" else Fraction(0)


@dataclass
class VariableIndex:
    """Column layout: x block (employee-major), then one (y, z, v) block per (day, scenario)."""

    num_patterns: int
    num_employees: int
    num_periods: int
    num_duties: int
    scenario_counts: list[int]
    block_start: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.block_start:
            col = self.num_patterns * self.num_employees
            width = 2 * self.num_periods + self.num_duties
            for count in self.scenario_counts:
                self.block_start.append([col + i * width for i in range(count)])
                col += count * width

    @property
    def block_width(self) -> int:
        return 2 * self.num_periods + self.num_duties

    @property
    def num_vars(self) -> int:
        return self.num_patterns * self.num_employees + sum(self.scenario_counts) * self.block_width

    def x(self, p: int, e: int) -> int:
        return e * self.num_patterns + p

    def y(self, j: int, s: int, t: int) -> int:
        return self.block_start[j][s] + t

    def z(self, j: int, s: int, t: int) -> int:
        return self.block_start[j][s] + self.num_periods + t

    def v(self, j: int, s: int, w: int) -> int:
        return self.block_start[j][s] + 2 * self.num_periods + w

    def decode(self, col: int) -> tuple:
        nx = self.num_patterns * self.num_employees
        if not 0 <= col < self.num_vars:
            raise IndexError(col)
        if col < nx:
            e, p = divmod(col, self.num_patterns)
            return ("x", p, e)
        for j, starts in enumerate(self.block_start):
            if starts and starts[0] <= col < starts[-1] + self.block_width:
                s, off = divmod(col - starts[0], self.block_width)
                T = self.num_periods
                if off < T:
                    return ("y", j, s, off)
                if off < 2 * T:
                    return ("z", j, s, off - T)
                return ("v", j, s, off - 2 * T)
        raise IndexError(col)


def extensive_form_size(num_employees: int, scenario_counts: Sequence[int], num_periods: int,
                        num_duties: int, num_patterns: int = 7) -> tuple[int, int]:
    """Closed-form (variables, rows) of the extensive form."""
    total = sum(scenario_counts)
    nvars = num_patterns * num_employees + total * (2 * num_periods + num_duties)
    nrows = num_employees + len(scenario_counts) + 2 * total + total * num_periods
    return nvars, nrows


# ---------------------------------------------------------------------------
# shared row data


@dataclass
class DayRowData:
    """Integer data of the per-day rows after scaling by ``scale``."""

    scale: int
    # per (pattern, employee) coefficient of x in the known-demand row (scaled)
    present: np.ndarray
    # per (pattern, employee) coefficient of x in the duty-count rows (scaled)
    count: np.ndarray
    count_rhs_hi: int
    count_rhs_lo: int
    exact: bool
    known_rhs: int
    present_scale: int


def day_row_data(instance: Instance, mode: str, epsilon: Fraction | None = None) -> list[DayRowData]:
    q = instance.absence.matrix(mode, instance.num_employees)
    eps = Fraction(instance.costs.epsilon if epsilon is None else epsilon)
    E, P = instance.num_employees, len(instance.patterns)
    R, B = instance.r_matrix(), instance.b_matrix()
    out = []
    for j in range(instance.num_days):
        qs = [q[e][j] for e in range(E)]
        D = lcm_of_denominators(qs)
        eps_j = max(eps, Fraction(1, D))
        K = instance.num_employees - int(instance.known_demand[j])
        lo = Fraction(K) - (1 - eps_j)
        scale = lcm_of_denominators([*(qs), lo])
        exact = scale <= MAX_ROW_SCALE
        present = np.zeros((P, E), dtype=object)
        count = np.zeros((P, E), dtype=object)
        for e in range(E):
            for p in range(P):
                present[p, e] = (1 - qs[e]) * int(R[p, j])
                count[p, e] = int(B[p, j]) + qs[e] * int(R[p, j])
        known_scale = lcm_of_denominators(present.ravel().tolist())
        out.append(DayRowData(
            scale=scale,
            present=present * known_scale,
            count=count * scale,
            count_rhs_hi=K * scale,
            count_rhs_lo=lo * scale,
            exact=exact,
            known_rhs=int(instance.known_demand[j]) * known_scale,
            present_scale=known_scale,
        ))
    return out


def structural_infeasibility(instance: Instance, mode: str = "with") -> list[str]:
    """Necessary conditions for the known-demand rows, checked before any solve.

    Per day: everyone working that day must cover o_j in expectation.  Per
    week: summing the daily rows, each employee contributes at most their best
    pattern's weekly expected presence.
    """
    q = instance.absence.matrix(mode, instance.num_employees)
    E, J = instance.num_employees, instance.num_days
    R = instance.r_matrix()
    out = []
    for j in range(J):
        best = sum((1 - q[e][j] for e in range(E)), Fraction(0))
        if best < int(instance.known_demand[j]):
            out.append(f"day {j}: at most {float(best):.4g} expected workers present, known demand {int(instance.known_demand[j])}")
    for w in range(J // 7):
        days = range(7 * w, 7 * w + 7)
        need = sum(int(instance.known_demand[j]) for j in days)
        cap = Fraction(0)
        for e in range(E):
            cap += max(sum((1 - q[e][j]) * int(R[p, j]) for j in days) for p in range(len(instance.patterns)))
        if cap < need:
            out.append(f"week {w}: at most {float(cap):.4g} expected worker-days present, known demand {need}")
    return out


def _add_first_stage(model: MilpModel, instance: Instance, idx: VariableIndex, mode: str) -> None:
    E, P = instance.num_employees, len(instance.patterns)
    c3 = float(welfare_weight(instance, mode))
    scores = np.asarray(instance.preferences.scores)
    obj = np.array([-c3 * int(scores[e, p]) for e in range(E) for p in range(P)]) if E else np.zeros(0)
    names = [f"x[{p},{e}]" for e in range(E) for p in range(P)]
    model.add_vars(E * P, lb=0, ub=1, integer=True, obj=obj, names=names)
    rows = np.repeat(np.arange(E), P)
    cols = np.arange(E * P)
    model.add_rows(rows, cols, np.ones(E * P), [EQ] * E, np.ones(E),
                   names=[f"assign[{e}]" for e in range(E)])


def _add_known_demand_rows(model: MilpModel, instance: Instance, data: list[DayRowData], idx: VariableIndex) -> None:
    E, P = instance.num_employees, len(instance.patterns)
    for j, d in enumerate(data):
        cols, vals = [], []
        for e in range(E):
            for p in range(P):
                c = d.present[p, e]
                if c:
                    cols.append(idx.x(p, e))
                    vals.append(float(c))
        model.add_rows(np.zeros(len(cols), dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals),
                       [GE], [float(d.known_rhs)], names=[f"known[{j}]"],
                       scale=[d.present_scale], exact=[True])


def _count_row_terms(instance: Instance, d: DayRowData, idx: VariableIndex):
    cols, vals = [], []
    for e in range(instance.num_employees):
        for p in range(len(instance.patterns)):
            c = d.count[p, e]
            if c:
                cols.append(idx.x(p, e))
                vals.append(float(c))
    return np.array(cols, dtype=np.int64), np.array(vals)


def build_extensive_form(instance: Instance, config: FormulationConfig | None = None) -> tuple[MilpModel, VariableIndex]:
    """Deterministic-equivalent MILP for ``instance`` under ``config``.

    Raises :class:`InfeasibleInstanceError` when the known-demand rows cannot
    hold for any assignment.
    """
    config = config or FormulationConfig()
    mode = config.preference_mode
    problems = structural_infeasibility(instance, mode)
    if problems:
        raise InfeasibleInstanceError("; ".join(problems))
    scenarios = effective_scenarios(instance, config)
    T, W = instance.num_periods, len(instance.duties)
    E, P = instance.num_employees, len(instance.patterns)
    idx = VariableIndex(P, E, T, W, [len(s) for s in scenarios])
    model = MilpModel(f"extensive[{mode},{config.scenario_mode}]")
    _add_first_stage(model, instance, idx, mode)
    data = day_row_data(instance, mode, config.epsilon)
    _add_known_demand_rows(model, instance, data, idx)

    A = coverage_matrix(instance.duties)
    c1 = instance.costs.c1
    duty_cost = np.array([float(d.cost) for d in instance.duties])
    a_t, a_w = np.nonzero(A)

    for j, day in enumerate(scenarios):
        d = data[j]
        K = E - int(instance.known_demand[j])
        xcols, xvals = _count_row_terms(instance, d, idx)
        for s, sc in enumerate(day):
            alpha = float(sc.probability)
            base = idx.block_start[j][s]
            dem = np.asarray(sc.demand, dtype=float)
            lb = np.zeros(2 * T + W)
            ub = np.concatenate([dem, np.full(T, float(max(K, 0))), np.full(W, float(max(K, 0)))])
            obj = np.concatenate([np.full(T, alpha * float(c1)), np.zeros(T), alpha * duty_cost])
            names = ([f"y[{j},{s},{t}]" for t in range(T)] + [f"z[{j},{s},{t}]" for t in range(T)]
                     + [f"v[{j},{s},{w}]" for w in range(W)])
            model.add_vars(2 * T + W, lb=lb, ub=ub, integer=True, obj=obj, names=names)
            vcols = base + 2 * T + np.arange(W)
            ccols = np.concatenate([vcols, xcols])
            cvals = np.concatenate([np.full(W, float(d.scale)), xvals])
            model.add_rows(np.zeros(len(ccols), dtype=np.int64), ccols, cvals, [LE], [float(d.count_rhs_hi)],
                           names=[f"cap[{j},{s}]"], scale=[d.scale], exact=[d.exact])
            model.add_rows(np.zeros(len(ccols), dtype=np.int64), ccols, cvals, [GE], [float(d.count_rhs_lo)],
                           names=[f"floor[{j},{s}]"], scale=[d.scale], exact=[d.exact])
            rows = np.concatenate([a_t, np.arange(T), np.arange(T)])
            cols = np.concatenate([base + 2 * T + a_w, base + np.arange(T), base + T + np.arange(T)])
            vals = np.concatenate([np.ones(len(a_t)), np.ones(T), -np.ones(T)])
            model.add_rows(rows, cols, vals, [EQ] * T, dem, names=[f"demand[{j},{s},{t}]" for t in range(T)])
    return model, idx


def extract_solution(x: np.ndarray, idx: VariableIndex) -> tuple[FirstStageSolution, SecondStageSolution]:
    x = np.round(np.asarray(x, dtype=float)).astype(np.int64)
    P, E, T, W = idx.num_patterns, idx.num_employees, idx.num_periods, idx.num_duties
    xm = x[:P * E].reshape(E, P)
    assignment = tuple(int(np.argmax(row)) for row in xm)
    second = SecondStageSolution()
    for j, starts in enumerate(idx.block_start):
        for s, b in enumerate(starts):
            second.y[(j, s)] = x[b:b + T].copy()
            second.z[(j, s)] = x[b + T:b + 2 * T].copy()
            second.v[(j, s)] = x[b + 2 * T:b + 2 * T + W].copy()
    return FirstStageSolution(assignment), second


def build_second_stage(instance: Instance, first_stage: FirstStageSolution, day: int, scenario: int,
                       mode: str = "with", scenarios=None) -> MilpModel:
    """Recourse MILP of one (day, scenario) with the first stage fixed.

    The duty total is fixed to the day's capacity.  Raises
    :class:`InfeasibleFirstStageError` when that capacity is negative.
    """
    scenarios = instance.scenarios if scenarios is None else scenarios
    N = duty_capacity(instance, first_stage, day, mode)
    if N < 0:
        raise InfeasibleFirstStageError(f"day {day}: duty capacity {N} is negative")
    sc = scenarios[day][scenario]
    T, W = instance.num_periods, len(instance.duties)
    A = coverage_matrix(instance.duties)
    m = MilpModel(f"second_stage[{day},{scenario}]")
    dem = np.asarray(sc.demand, dtype=float)
    m.add_vars(T, lb=0, ub=dem, integer=True, obj=float(instance.costs.c1), names=[f"y[{t}]" for t in range(T)])
    m.add_vars(T, lb=0, integer=True, names=[f"z[{t}]" for t in range(T)])
    m.add_vars(W, lb=0, ub=max(N, 0), integer=True, obj=[float(d.cost) for d in instance.duties],
               names=[f"v[{w}]" for w in range(W)])
    a_t, a_w = np.nonzero(A)
    rows = np.concatenate([a_t, np.arange(T), np.arange(T)])
    cols = np.concatenate([2 * T + a_w, np.arange(T), T + np.arange(T)])
    vals = np.concatenate([np.ones(len(a_t)), np.ones(T), -np.ones(T)])
    m.add_rows(rows, cols, vals, [EQ] * T, dem, names=[f"demand[{t}]" for t in range(T)])
    m.add_row((list(range(2 * T, 2 * T + W)), [1] * W), EQ, N, name="capacity")
    return m


def ceiling_identity_check(instance: Instance, first_stage: FirstStageSolution,
                           solution: SecondStageSolution, mode: str = "with") -> bool:
    """True iff every (day, scenario) uses exactly the capacity number of duties."""
    caps = {}
    for (j, s), v in solution.v.items():
        if j not in caps:
            caps[j] = duty_capacity(instance, first_stage, j, mode)
        if int(np.sum(v)) != caps[j]:
            return False
    return True
