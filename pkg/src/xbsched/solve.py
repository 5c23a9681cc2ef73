"""Solve the two-stage problem for its first stage.

Two exact routes:

``extensive``
    the full deterministic-equivalent MILP (first stage plus one recourse
    block per day and scenario) handed to branch-and-bound.  Practical only
    for small instances.

``capacity``
    for integer ``x`` the duty total of day ``j`` is a single integer
    ``n = K_j - B_j(x) - ceil(S_j(x))``, the same in every scenario of that
    day.  The expected recourse cost ``R_j(n)`` is therefore precomputed for
    every ``n = 0..K_j`` with the exact recourse solver, and a binary
    ``lam[j, n]`` selects the day's value of ``n`` inside the same duty-count
    rows.  The optimum equals the extensive form's; the MILP is far smaller
    and its relaxation much tighter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (FirstStageSolution, Instance, InfeasibleInstanceError, SecondStageSolution,
                   duty_capacity, known_demand_violations)
from .formulation import (FormulationConfig, _add_first_stage, _add_known_demand_rows, _count_row_terms,
                          build_extensive_form, ceiling_identity_check, day_row_data,
                          effective_scenarios, extract_solution, structural_infeasibility, welfare_weight,
                          VariableIndex)
from .milp import (EQ, GE, LE, MilpModel, SolveParams, STATUS_INFEASIBLE, STATUS_NO_INCUMBENT,
                   warm_start as make_warm_start)
from .milp import solve_milp
from .recourse import RecourseSolver

METHODS = ("capacity", "extensive")


@dataclass
class SolveResult:
    status: str
    first_stage: FirstStageSolution | None
    objective: Fraction | None
    bound: float
    gap: float
    nodes: int
    wall_time: float
    method: str
    config: FormulationConfig
    second_stage: SecondStageSolution | None = None
    log: list[str] = field(default_factory=list, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.first_stage is not None

    def stats(self) -> dict:
        return {"status": self.status, "objective": None if self.objective is None else float(self.objective),
                "bound": self.bound, "gap": self.gap, "nodes": self.nodes, "method": self.method}


def expected_recourse_by_capacity(instance: Instance, scenarios, solver: RecourseSolver) -> list[list[Fraction]]:
    table = []
    for j in range(instance.num_days):
        K = instance.num_employees - int(instance.known_demand[j])
        table.append([sum((sc.probability * solver.cost(sc.demand, n) for sc in scenarios[j]), Fraction(0))
                      for n in range(K + 1)])
    return table


@dataclass
class CapacityModel:
    model: MilpModel
    index: VariableIndex
    lam: list[np.ndarray]  # lam[j][n] column
    counts: np.ndarray  # employees on each pattern


def build_capacity_model(instance: Instance, config: FormulationConfig,
                         table: list[list[Fraction]]) -> CapacityModel:
    mode = config.preference_mode
    problems = structural_infeasibility(instance, mode)
    if problems:
        raise InfeasibleInstanceError("; ".join(problems))
    E, P = instance.num_employees, len(instance.patterns)
    idx = VariableIndex(P, E, instance.num_periods, len(instance.duties), [0] * instance.num_days)
    model = MilpModel(f"capacity[{mode},{config.scenario_mode}]")
    _add_first_stage(model, instance, idx, mode)
    data = day_row_data(instance, mode, config.epsilon)
    _add_known_demand_rows(model, instance, data, idx)
    counts = model.add_vars(P, lb=0, ub=E, integer=True, names=[f"count[{p}]" for p in range(P)])
    rows = np.concatenate([np.tile(np.arange(P), E), np.arange(P)])
    cols = np.concatenate([np.arange(E * P), counts])
    vals = np.concatenate([np.ones(E * P), -np.ones(P)])
    model.add_rows(rows, cols, vals, [EQ] * P, np.zeros(P), names=[f"count[{p}]" for p in range(P)])
    lam = []
    for j, d in enumerate(data):
        K = len(table[j]) - 1
        cols = model.add_vars(K + 1, lb=0, ub=1, integer=True, obj=[float(v) for v in table[j]],
                              names=[f"lam[{j},{n}]" for n in range(K + 1)])
        lam.append(cols)
        model.add_rows(np.zeros(K + 1, dtype=np.int64), cols, np.ones(K + 1), [EQ], [1.0], names=[f"pick[{j}]"])
        xcols, xvals = _count_row_terms(instance, d, idx)
        ccols = np.concatenate([cols, xcols])
        cvals = np.concatenate([d.scale * np.arange(K + 1, dtype=float), xvals])
        zeros = np.zeros(len(ccols), dtype=np.int64)
        model.add_rows(zeros, ccols, cvals, [LE], [float(d.count_rhs_hi)], names=[f"cap[{j}]"],
                       scale=[d.scale], exact=[d.exact])
        model.add_rows(zeros, ccols, cvals, [GE], [float(d.count_rhs_lo)], names=[f"floor[{j}]"],
                       scale=[d.scale], exact=[d.exact])
    return CapacityModel(model, idx, lam, counts)


def capacity_point(cm: CapacityModel, instance: Instance, first_stage: FirstStageSolution, mode: str) -> np.ndarray:
    """Full column vector of the capacity model for a given assignment."""
    x = np.zeros(cm.model.num_vars)
    for e, p in enumerate(first_stage.assignment):
        x[cm.index.x(p, e)] = 1
        x[cm.counts[p]] += 1
    for j, cols in enumerate(cm.lam):
        n = duty_capacity(instance, first_stage, j, mode)
        if not 0 <= n < len(cols):
            raise ValueError(f"day {j}: capacity {n} outside the table")
        x[cols[n]] = 1
    return x


def second_stage_for(instance: Instance, first_stage: FirstStageSolution, scenarios, solver: RecourseSolver,
                     mode: str) -> SecondStageSolution:
    out = SecondStageSolution()
    for j, day in enumerate(scenarios):
        n = duty_capacity(instance, first_stage, j, mode)
        for s, sc in enumerate(day):
            r = solver.solve(sc.demand, n)
            out.v[(j, s)], out.y[(j, s)], out.z[(j, s)] = r.v, r.y, r.z
    return out


def extensive_point(idx: VariableIndex, first_stage: FirstStageSolution, second: SecondStageSolution) -> np.ndarray:
    """Full column vector of the extensive form for a first and second stage."""
    x = np.zeros(idx.num_vars)
    for e, p in enumerate(first_stage.assignment):
        x[idx.x(p, e)] = 1
    T, W = idx.num_periods, idx.num_duties
    for j, starts in enumerate(idx.block_start):
        for s, b in enumerate(starts):
            x[b:b + T] = second.y[(j, s)]
            x[b + T:b + 2 * T] = second.z[(j, s)]
            x[b + 2 * T:b + 2 * T + W] = second.v[(j, s)]
    return x


class _Completion:
    """Branch-and-bound hooks that complete an assignment with exact recourse.

    Branching fixes one employee's pattern at a time, employees in index
    order, one child per pattern still open.  Two employees with the same
    absence row and (when preferences count) the same score row are
    interchangeable, so the later one only receives patterns with an index no
    smaller than the earlier one's.  Once every pattern is fixed the node's
    subproblem separates into independent recourse problems, which the
    recourse solver answers exactly, so the node is closed without further
    branching.  The same completion turns the rounded LP assignment into a
    candidate incumbent.

    ``node_bound`` relaxes the node to its per-employee sets of open
    patterns: each day independently takes the cheapest expected recourse
    over the duty totals those sets can still produce, and each employee
    its best open score.
    """

    def __init__(self, instance: Instance, idx: VariableIndex, scenarios, solver: RecourseSolver, mode: str,
                 to_point, table, lam=None, counts=None):
        self.lam, self.counts, self.table = lam, counts, table
        self.instance, self.idx, self.scenarios = instance, idx, scenarios
        self.solver, self.mode, self.to_point = solver, mode, to_point
        self.E, self.P = idx.num_employees, idx.num_patterns
        self.nx = self.E * self.P
        self._cache: dict[tuple[int, ...], np.ndarray | None] = {}
        q = instance.absence.matrix(mode, self.E)
        weighted = welfare_weight(instance, mode) != 0
        scores = np.asarray(instance.preferences.scores)
        keys = [(tuple(q[e]), tuple(scores[e]) if weighted else None) for e in range(self.E)]
        self.twin = [max((f for f in range(e) if keys[f] == keys[e]), default=-1) for e in range(self.E)]
        self.weight = welfare_weight(instance, mode)
        self.scores = scores
        self.works = np.array([[bool(pat.r[j]) for j in range(instance.num_days)] for pat in instance.patterns])
        # absence rates on a common integer scale per day
        self.q_scale, self.q_int = [], []
        for j in range(instance.num_days):
            D = math.lcm(*(q[e][j].denominator for e in range(self.E)))
            self.q_scale.append(D)
            self.q_int.append([int(q[e][j] * D) for e in range(self.E)])
        self._bounds: dict[bytes, float] = {}
        # float copies for the local-search heuristic
        self._W = self.works.astype(np.int64)
        big = max(self.q_scale) * (self.E + 1) > 2**60
        self._Q = np.array(self.q_int, dtype=object if big else np.int64).T
        self._D = np.array(self.q_scale, dtype=object if big else np.int64)
        self._K = np.array([len(row) - 1 for row in table], dtype=np.int64)
        self._o = np.asarray(instance.known_demand, dtype=np.int64)
        self._T = np.full((len(table), int(self._K.max()) + 1), np.inf)
        for j, row in enumerate(table):
            self._T[j, :len(row)] = [float(v) for v in row]
        self._S = scores.astype(float)
        self._w = float(self.weight)
        self._improved: dict[tuple[int, ...], tuple[int, ...]] = {}

    def node_bound(self, model: MilpModel, lb: np.ndarray, ub: np.ndarray) -> float:
        fixed, hi = self._state(lb, ub)
        if fixed is None:
            return math.inf
        key = hi.tobytes()
        if self.lam is not None:
            key += (ub[np.concatenate(self.lam)] > 0.5).tobytes()
        if key not in self._bounds:
            self._bounds[key] = self._relaxed_bound(hi, ub)
        return self._bounds[key]

    def _relaxed_bound(self, hi: np.ndarray, ub: np.ndarray) -> float:
        inst = self.instance
        total = -self.weight * sum(int(self.scores[e][hi[e]].max()) for e in range(self.E))
        for j in range(inst.num_days):
            D, qj = self.q_scale[j], self.q_int[j]
            states = {(0, 0)}  # (employees off, scaled expected absences)
            for e in range(self.E):
                on = self.works[hi[e], j]
                step = set()
                if on.any():
                    step |= {(off, s + qj[e]) for off, s in states}
                if not on.all():
                    step |= {(off + 1, s) for off, s in states}
                states = step
            o = int(inst.known_demand[j])
            K = len(self.table[j]) - 1
            best = None
            for off, s in states:
                if (self.E - off) * D - s < o * D:
                    continue
                n = K - off - (-(-s // D))
                if n < 0 or (self.lam is not None and ub[self.lam[j][n]] < 0.5):
                    continue
                if best is None or self.table[j][n] < best:
                    best = self.table[j][n]
            if best is None:
                return math.inf
            total += best
        return float(total)

    def _split_capacity(self, lb, ub, x):
        """Split the day whose duty total is most fractional (or most spread) at its LP mean.

        A spread-out selection always puts weight on both sides of the cut,
        so each child drops part of the parent's support.
        """
        best, pick = 1e-6, None
        for j, cols in enumerate(self.lam):
            w = x[cols]
            mean = float(np.arange(len(cols)) @ w)
            frac = min(mean - math.floor(mean), math.ceil(mean) - mean)
            spread = float(w @ (np.arange(len(cols)) - mean) ** 2)
            score = max(frac, spread)
            if score > best:
                best, pick = score, (j, mean)
        if pick is None:
            return None
        j, mean = pick
        cols = self.lam[j]
        cut = math.floor(mean + 1e-9)
        lo_ub, hi_ub = ub.copy(), ub.copy()
        lo_ub[cols[cut + 1:]] = 0
        hi_ub[cols[:cut + 1]] = 0
        return [(lb, lo_ub), (lb, hi_ub)]

    def _complete(self, first: FirstStageSolution) -> np.ndarray | None:
        if first.assignment not in self._cache:
            self._cache[first.assignment] = self._build(first)
        return self._cache[first.assignment]

    def _build(self, first: FirstStageSolution) -> np.ndarray | None:
        inst = self.instance
        if known_demand_violations(inst, first, self.mode):
            return None
        if any(duty_capacity(inst, first, j, self.mode) < 0 for j in range(inst.num_days)):
            return None
        return self.to_point(first)

    def _move_values(self, assignment: np.ndarray) -> np.ndarray:
        """Table objective (float) of every single-employee change of ``assignment``; inf if infeasible.

        Entry ``[e, p]`` is the assignment with employee ``e`` moved to
        pattern ``p``, so ``[e, assignment[e]]`` is the assignment itself.
        """
        W, Q, D = self._W, self._Q, self._D
        Wa = W[assignment]
        off = (1 - Wa).sum(axis=0)[None, None, :] + Wa[:, None, :] - W[None, :, :]
        s = (Q * Wa).sum(axis=0)[None, None, :] + Q[:, None, :] * (W[None, :, :] - Wa[:, None, :])
        n = self._K - off - (-(-s // D))
        ok = (((self.E - off) * D - s >= self._o * D) & (n >= 0)).all(axis=2)
        days = np.arange(len(D))
        cost = self._T[days, np.clip(n, 0, None).astype(np.int64)].sum(axis=2)
        rows = np.arange(self.E)
        base = self._S[rows, assignment].sum()
        welfare = base - self._S[rows, assignment][:, None] + self._S
        return np.where(ok, cost - self._w * welfare, np.inf)

    def _improve(self, assignment: tuple[int, ...]) -> tuple[int, ...]:
        """Steepest descent over single-employee pattern changes."""
        a = np.array(assignment, dtype=np.int64)
        while True:
            values = self._move_values(a)
            current = values[0, a[0]]
            e, p = np.unravel_index(int(np.argmin(values)), values.shape)
            if not values[e, p] < current - 1e-9:
                return tuple(int(v) for v in a)
            a[e] = p

    def heuristic(self, model: MilpModel, x: np.ndarray) -> np.ndarray | None:
        xm = x[:self.nx].reshape(self.E, self.P)
        start = tuple(int(np.argmax(r)) for r in xm)
        if start not in self._improved:
            self._improved[start] = self._improve(start)
        return self._complete(FirstStageSolution(self._improved[start]))

    def _state(self, lb: np.ndarray, ub: np.ndarray):
        """Per employee: the fixed pattern, -1 if still open, or None if no pattern is left."""
        lo = lb[:self.nx].reshape(self.E, self.P) > 0.5
        hi = ub[:self.nx].reshape(self.E, self.P) > 0.5
        if np.any(lo.sum(axis=1) > 1) or np.any(hi.sum(axis=1) == 0):
            return None, hi
        fixed = np.where(lo.any(axis=1), np.argmax(lo, axis=1),
                         np.where(hi.sum(axis=1) == 1, np.argmax(hi, axis=1), -1))
        return fixed, hi

    def node_solver(self, model: MilpModel, lb: np.ndarray, ub: np.ndarray):
        fixed, _ = self._state(lb, ub)
        if fixed is None:
            return True, None
        if np.any(fixed < 0):
            return False, None
        return True, self._complete(FirstStageSolution(tuple(int(p) for p in fixed)))

    def brancher(self, model: MilpModel, lb: np.ndarray, ub: np.ndarray, x: np.ndarray):
        if self.counts is not None:
            frac = np.abs(x[self.counts] - np.round(x[self.counts]))
            if frac.max() > 1e-6:
                c = int(self.counts[np.argmax(frac)])
                down, up = ub.copy(), lb.copy()
                down[c] = math.floor(x[c])
                up[c] = math.ceil(x[c])
                return [(lb, down), (up, ub)]
        if self.lam is not None:
            split = self._split_capacity(lb, ub, x)
            if split is not None:
                return split
        fixed, hi = self._state(lb, ub)
        if fixed is None or np.all(fixed >= 0):
            return None
        e = int(np.flatnonzero(fixed < 0)[0])
        floor = fixed[self.twin[e]] if self.twin[e] >= 0 else 0
        options = [p for p in np.flatnonzero(hi[e]) if p >= floor]
        options.sort(key=lambda p: -x[e * self.P + p])
        children = []
        for p in options:
            clb, cub = lb.copy(), ub.copy()
            cub[e * self.P:(e + 1) * self.P] = 0
            cub[e * self.P + p] = 1
            clb[e * self.P + p] = 1
            children.append((clb, cub))
        return children


def exact_objective(instance: Instance, first_stage: FirstStageSolution, second: SecondStageSolution,
                    scenarios, mode: str) -> Fraction:
    c1 = instance.costs.c1
    costs = [d.cost for d in instance.duties]
    total = Fraction(0)
    for (j, s), v in second.v.items():
        alpha = scenarios[j][s].probability
        stage = c1 * int(np.sum(second.y[(j, s)])) + sum((costs[w] * int(v[w]) for w in np.flatnonzero(v)), Fraction(0))
        total += alpha * stage
    scores = instance.preferences.scores
    total -= welfare_weight(instance, mode) * sum(int(scores[e, p]) for e, p in enumerate(first_stage.assignment))
    return total


def solve_first_stage(instance: Instance, config: FormulationConfig | None = None,
                      params: SolveParams | None = None, method: str = "capacity",
                      solver: RecourseSolver | None = None,
                      warm: FirstStageSolution | None = None) -> SolveResult:
    """Optimize the first stage under ``config``; the returned objective is exact."""
    config = config or FormulationConfig()
    params = params or SolveParams()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    mode = config.preference_mode
    scenarios = effective_scenarios(instance, config)
    view = instance.replace(scenarios=scenarios)
    solver = solver or RecourseSolver(instance.duties, instance.costs.c1)
    start = time.perf_counter()
    if method == "capacity":
        table = expected_recourse_by_capacity(view, scenarios, solver)
        cm = build_capacity_model(view, config, table)
        ws = None
        if warm is not None and not known_demand_violations(view, warm, mode):
            ws = make_warm_start(cm.model, capacity_point(cm, view, warm, mode))
        hooks = _Completion(view, cm.index, scenarios, solver, mode,
                            lambda first: capacity_point(cm, view, first, mode), table, lam=cm.lam,
                            counts=cm.counts)
        sol = solve_milp(cm.model, params, warm_start=ws, brancher=hooks.brancher,
                         heuristic=hooks.heuristic, node_solver=hooks.node_solver, node_bound=hooks.node_bound)
        idx = cm.index
    else:
        model, idx = build_extensive_form(view, config)
        table = expected_recourse_by_capacity(view, scenarios, solver)
        hooks = _Completion(view, idx, scenarios, solver, mode,
                            lambda first: extensive_point(idx, first, second_stage_for(view, first, scenarios,
                                                                                        solver, mode)), table)
        sol = solve_milp(model, params, brancher=hooks.brancher,
                         heuristic=hooks.heuristic, node_solver=hooks.node_solver, node_bound=hooks.node_bound)
    wall = time.perf_counter() - start
    if not sol.has_incumbent:
        return SolveResult(sol.status, None, None, sol.bound, sol.gap, sol.nodes, wall, method, config, None, sol.log)
    if method == "capacity":
        xm = np.round(sol.x[:idx.num_patterns * idx.num_employees]).reshape(idx.num_employees, idx.num_patterns)
        first = FirstStageSolution(tuple(int(np.argmax(r)) for r in xm))
        second = second_stage_for(view, first, scenarios, solver, mode)
    else:
        first, second = extract_solution(sol.x, idx)
    if not ceiling_identity_check(view, first, second, mode):
        raise RuntimeError("solver returned a second stage that breaks the duty-count identity")
    objective = exact_objective(view, first, second, scenarios, mode)
    return SolveResult(sol.status, first, objective, sol.bound, sol.gap, sol.nodes, wall, method, config,
                       second, sol.log)


__all__ = ["METHODS", "CapacityModel", "SolveResult", "build_capacity_model", "capacity_point",
           "exact_objective", "expected_recourse_by_capacity", "extensive_point", "second_stage_for", "solve_first_stage",
           "STATUS_INFEASIBLE", "STATUS_NO_INCUMBENT"]
