"""Second-stage (recourse) solvers and a brute-force first-stage enumerator.

Given a day's demand ``d`` (unknown-absence hours per period) and the number
``N`` of reserve employees available for duties, the recourse picks a multiset
of exactly ``N`` duties minimizing ``c1 * sum_t max(0, d_t - coverage_t) +
sum_w cost_w * v_w``.  Understaffing ``y`` and overstaffing ``z`` follow from
the coverage.

Ties between equal-cost multisets are broken by the smallest sum of
``(duty id + 1) * v_w``; the enumeration method further breaks remaining ties
lexicographically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import Duty, FirstStageSolution, Instance, coverage_matrix, lcm_of_denominators
from .milp import EQ, GE, MilpModel, SolveParams, solve_milp

METHODS = ("milp", "enumeration")
MAX_ENUMERATION = 10**6


@dataclass(frozen=True, eq=False)
class RecourseResult:
    v: np.ndarray
    y: np.ndarray
    z: np.ndarray
    cost: Fraction
    method: str
    overtime_hours: int = 0


def _result(A: np.ndarray, costs: Sequence[Fraction], overtime: np.ndarray, demand: np.ndarray,
            v: np.ndarray, c1: Fraction, method: str) -> RecourseResult:
    cover = A @ v
    gap = demand - cover
    y = np.maximum(gap, 0)
    z = np.maximum(-gap, 0)
    cost = c1 * int(y.sum()) + sum((costs[w] * int(v[w]) for w in np.flatnonzero(v)), Fraction(0))
    return RecourseResult(v, y, z, cost, method, int(overtime @ v))


class RecourseSolver:
    """Recourse solves over one duty catalog, memoized on (demand, N)."""

    def __init__(self, duties: Sequence[Duty], c1, method: str = "milp"):
        if method not in METHODS:
            raise ValueError(f"unknown recourse method {method!r}")
        self.duties = list(duties)
        self.A = coverage_matrix(self.duties)
        self.costs = [d.cost for d in self.duties]
        self.overtime = np.array([d.overtime_hours for d in self.duties], dtype=np.int64)
        self.c1 = Fraction(c1)
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")
        self.method = method
        self._cache: dict[tuple[bytes, int], RecourseResult] = {}
        W = len(self.duties)
        grain = Fraction(1, lcm_of_denominators([self.c1, *self.costs]))
        self._grain = grain
        self._tiebreak = np.arange(1, W + 1, dtype=float) / W

    @property
    def num_duties(self) -> int:
        return len(self.duties)

    def solve(self, demand, capacity: int) -> RecourseResult:
        demand = np.asarray(demand, dtype=np.int64)
        if capacity < 0:
            raise ValueError(f"negative duty capacity {capacity}")
        if demand.shape != (self.A.shape[0],):
            raise ValueError(f"demand has length {demand.shape}, expected {self.A.shape[0]}")
        if np.any(demand < 0):
            raise ValueError("demand must be non-negative")
        key = (demand.tobytes(), int(capacity))
        hit = self._cache.get(key)
        if hit is None:
            hit = self._solve(demand, int(capacity))
            self._cache[key] = hit
        return hit

    def cost(self, demand, capacity: int) -> Fraction:
        return self.solve(demand, capacity).cost

    def _solve(self, demand: np.ndarray, N: int) -> RecourseResult:
        W = self.num_duties
        if N == 0:
            return _result(self.A, self.costs, self.overtime, demand, np.zeros(W, dtype=np.int64), self.c1, self.method)
        if self.method == "enumeration":
            return self._enumerate(demand, N)
        return self._milp(demand, N)

    def _enumerate(self, demand: np.ndarray, N: int) -> RecourseResult:
        W = self.num_duties
        best_key, best_v = None, None
        for combo in itertools.combinations_with_replacement(range(W), N):
            v = np.bincount(combo, minlength=W).astype(np.int64)
            cover = self.A @ v
            short = int(np.maximum(demand - cover, 0).sum())
            cost = self.c1 * short + sum((self.costs[w] for w in combo), Fraction(0))
            key = (cost, sum(w + 1 for w in combo))
            if best_key is None or key < best_key:
                best_key, best_v = key, v
        return _result(self.A, self.costs, self.overtime, demand, best_v, self.c1, "enumeration")

    def _milp(self, demand: np.ndarray, N: int) -> RecourseResult:
        W, T = self.num_duties, self.A.shape[0]
        # each unit of tie-break weight stays below a quarter of the cost grain
        delta = float(self._grain) / (4.0 * (N + 1))
        m = MilpModel("recourse")
        cost = np.array([float(c) for c in self.costs]) + delta * self._tiebreak
        v = m.add_vars(W, lb=0, ub=N, integer=True, obj=cost, prefix="v")
        y = m.add_vars(T, lb=0, obj=float(self.c1), prefix="y")
        rows, cols, vals = [], [], []
        At = self.A
        for t in range(T):
            ws = np.flatnonzero(At[t])
            rows += [t] * (len(ws) + 1)
            cols += list(v[ws]) + [int(y[t])]
            vals += [1.0] * (len(ws) + 1)
        m.add_rows(np.array(rows), np.array(cols), np.array(vals), [GE] * T, demand.astype(float))
        m.add_row((list(v), [1] * W), EQ, N)
        sol = solve_milp(m, SolveParams(gap=0.0, abs_gap=delta / 8, log_every=0),
                         warm_start=self._greedy_start(m, demand, N))
        if sol.status != "optimal":
            raise RuntimeError(f"recourse MILP ended with status {sol.status}")
        vv = np.round(sol.x[:W]).astype(np.int64)
        return _result(self.A, self.costs, self.overtime, demand, vv, self.c1, "milp")

    def _greedy_start(self, model: MilpModel, demand: np.ndarray, N: int):
        """Add duties one at a time, each time the one lowering cost the most."""
        from .milp import Incumbent

        W = self.num_duties
        c1 = float(self.c1)
        cost = np.array([float(c) for c in self.costs])
        v = np.zeros(W, dtype=np.int64)
        residual = demand.astype(np.int64).copy()
        for _ in range(N):
            gain = c1 * (self.A * (residual[:, None] > 0)).sum(axis=0) - cost
            w = int(np.argmax(gain))
            v[w] += 1
            residual = residual - self.A[:, w]
        y = np.maximum(demand - self.A @ v, 0)
        x = np.concatenate([v, y]).astype(float)
        return Incumbent(x, model.objective(x))


def solve_recourse_exact(duties: Sequence[Duty], demand, capacity: int, c1, method: str = "milp") -> RecourseResult:
    """Optimal duty multiset of size ``capacity`` for one day's demand."""
    return RecourseSolver(duties, c1, method).solve(demand, capacity)


# ---------------------------------------------------------------------------
# brute-force first stage


@dataclass
class EnumerationResult:
    assignment: FirstStageSolution | None
    objective: Fraction | None
    table: np.ndarray  # objective per assignment in itertools.product order, nan = infeasible
    feasible_count: int


def _scaled_q(instance: Instance, mode: str):
    """Integer numerators of q * r per (employee, pattern, day) and the day denominators."""
    q = instance.absence.matrix(mode, instance.num_employees)
    J = instance.num_days
    den = [lcm_of_denominators([q[e][j] for e in range(instance.num_employees)]) for j in range(J)]
    r = instance.r_matrix()
    E = instance.num_employees
    big = max(den) * max(E, 1) > 2**60
    qn = np.zeros((E, len(instance.patterns), J), dtype=object if big else np.int64)
    for e in range(E):
        for j in range(J):
            num = int(q[e][j] * den[j])
            qn[e, :, j] = r[:, j] * num
    return qn, np.array(den, dtype=object if big else np.int64)


def expected_recourse_table(instance: Instance, solver: RecourseSolver, scenarios=None) -> list[list[Fraction]]:
    """R[j][n] = sum_s alpha_s * recourse(d_s, n) for n = 0..|E| - o_j."""
    scenarios = instance.scenarios if scenarios is None else scenarios
    table = []
    for j in range(instance.num_days):
        top = instance.num_employees - int(instance.known_demand[j])
        row = []
        for n in range(max(top, -1) + 1):
            row.append(sum((sc.probability * solver.cost(sc.demand, n) for sc in scenarios[j]), Fraction(0)))
        table.append(row)
    return table


def enumerate_first_stage(instance: Instance, mode: str = "with", method: str = "enumeration",
                          chunk: int = 50_000) -> EnumerationResult:
    """Evaluate every assignment of patterns to employees.

    ``mode`` picks the absence model ('with' = per-employee q and the welfare
    term, 'without' = per-day q and no welfare term).  Ties keep the first
    assignment in itertools.product order.
    """
    P, E, J = len(instance.patterns), instance.num_employees, instance.num_days
    total = P ** E
    if total > MAX_ENUMERATION:
        raise ValueError(f"{total} assignments exceed the enumeration limit {MAX_ENUMERATION}")
    solver = RecourseSolver(instance.duties, instance.costs.c1, method)
    R = expected_recourse_table(instance, solver)
    c3 = instance.costs.c3 if mode == "with" else Fraction(0)
    scores = instance.preferences.scores
    scale = lcm_of_denominators([c3] + [v for row in R for v in row])
    Rint = [[int(v * scale) for v in row] for row in R]
    c3int = int(c3 * scale)
    qn, den = _scaled_q(instance, mode)
    B = instance.b_matrix()
    Rmat = instance.r_matrix()
    o = np.asarray(instance.known_demand, dtype=np.int64)
    table = np.full(total, np.nan)
    best_val, best_idx = None, None
    feasible = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = np.empty((len(idx), E), dtype=np.int64)
        rest = idx.copy()
        for e in range(E - 1, -1, -1):
            digits[:, e] = rest % P
            rest //= P
        off = np.zeros((len(idx), J), dtype=np.int64)
        working = np.zeros((len(idx), J), dtype=np.int64)
        qsum = np.zeros((len(idx), J), dtype=qn.dtype)
        welfare = np.zeros(len(idx), dtype=np.int64)
        for e in range(E):
            off += B[digits[:, e]]
            working += Rmat[digits[:, e]]
            qsum = qsum + qn[e][digits[:, e]]
            welfare += scores[e][digits[:, e]]
        # expected present: working - qsum/den >= o  <=>  working*den - qsum >= o*den
        ok = np.all(working * den - qsum >= o * den, axis=1)
        absent = -((-qsum) // den)
        cap = E - o[None, :] - off - absent
        ok &= np.all(cap >= 0, axis=1)
        for i in np.flatnonzero(ok):
            val = sum(Rint[j][int(cap[i, j])] for j in range(J)) - c3int * int(welfare[i])
            table[idx[i]] = val / scale
            feasible += 1
            if best_val is None or val < best_val:
                best_val, best_idx = val, (int(idx[i]), digits[i].copy())
    if best_idx is None:
        return EnumerationResult(None, None, table, 0)
    assignment = FirstStageSolution(tuple(int(p) for p in best_idx[1]))
    return EnumerationResult(assignment, Fraction(best_val, scale), table, feasible)


def first_stage_objective(instance: Instance, first_stage: FirstStageSolution, mode: str = "with",
                          solver: RecourseSolver | None = None, scenarios=None) -> Fraction:
    """Exact objective of a fixed first stage: expected recourse minus welfare term."""
    from .core import duty_capacity, known_demand_violations

    if known_demand_violations(instance, first_stage, mode):
        raise ValueError("first stage violates known-demand coverage")
    solver = solver or RecourseSolver(instance.duties, instance.costs.c1)
    scenarios = instance.scenarios if scenarios is None else scenarios
    total = Fraction(0)
    for j in range(instance.num_days):
        n = duty_capacity(instance, first_stage, j, mode)
        if n < 0:
            raise ValueError(f"negative duty capacity on day {j}")
        for sc in scenarios[j]:
            total += sc.probability * solver.cost(sc.demand, n)
    c3 = instance.costs.c3 if mode == "with" else Fraction(0)
    scores = instance.preferences.scores
    total -= c3 * sum(int(scores[e, p]) for e, p in enumerate(first_stage.assignment))
    return total


__all__ = [
    "METHODS", "EnumerationResult", "RecourseResult", "RecourseSolver",
    "enumerate_first_stage", "expected_recourse_table", "first_stage_objective", "solve_recourse_exact",
]
