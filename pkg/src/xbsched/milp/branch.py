"""LP-based branch-and-bound.

Nodes are explored best-bound first (ties FIFO); each child reoptimizes
from its parent's final basis.  The branching variable is
the most fractional integer variable; ties go to the lowest index, or to a
seeded permutation of indices when ``SolveParams.seed`` is set.  All decisions
depend only on the model and the parameters, so repeated solves produce the
same node sequence, incumbent and bound trajectory.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import Incumbent, MilpModel
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LPNumericalError, solve_lp

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NO_INCUMBENT = "no_incumbent"


@dataclass(frozen=True)
class SolveParams:
    gap: float = 1e-4
    abs_gap: float = 1e-9
    time_limit: float | None = None
    node_limit: int | None = None
    seed: int | None = None
    int_tol: float = 1e-6
    log_every: int = 100

    def __post_init__(self):
        if self.gap < 0 or self.abs_gap < 0:
            raise ValueError("gap tolerances must be non-negative")


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    bound: float
    gap: float
    nodes: int
    wall_time: float
    log: list[str] = field(default_factory=list, repr=False)
    trajectory: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float | None, bound: float) -> float:
    if incumbent is None or not math.isfinite(incumbent):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-9)


Heuristic = Callable[[MilpModel, np.ndarray], "np.ndarray | None"]
Brancher = Callable[[MilpModel, np.ndarray, np.ndarray, np.ndarray], "list[tuple[np.ndarray, np.ndarray]] | None"]
NodeSolver = Callable[[MilpModel, np.ndarray, np.ndarray], "tuple[bool, np.ndarray | None]"]
NodeBound = Callable[[MilpModel, np.ndarray, np.ndarray], float]


class _Search:
    def __init__(self, model: MilpModel, params: SolveParams, heuristic, incumbent):
        self.model = model
        self.params = params
        self.int_idx = np.flatnonzero(model.integer)
        n = model.num_vars
        if params.seed is None:
            self.tie_rank = np.arange(n)
        else:
            self.tie_rank = np.random.default_rng(params.seed).permutation(n)
        self.heuristic = heuristic
        self.best_x = None
        self.best_obj = math.inf
        self.log: list[str] = []
        self.trajectory: list[tuple[int, float, float]] = []
        self.numerical_trouble = False
        if incumbent is not None:
            self.best_x = np.asarray(incumbent.x, dtype=float).copy()
            self.best_obj = float(incumbent.objective)

    def try_incumbent(self, x: np.ndarray, source: str, nodes: int) -> bool:
        x = np.asarray(x, dtype=float).copy()
        x[self.int_idx] = np.round(x[self.int_idx])
        if self.model.violations(x, 1e-6) or self.model.exact_violations(x):
            return False
        obj = self.model.objective(x)
        if obj < self.best_obj - 1e-12 * (1 + abs(obj)):
            self.best_x, self.best_obj = x, obj
            self.log.append(f"incumbent node={nodes} obj={obj:.10g} source={source}")
            return True
        return False

    def choose_branch(self, x: np.ndarray) -> int | None:
        idx = self.int_idx
        if not len(idx):
            return None
        vals = x[idx]
        frac = np.abs(vals - np.round(vals))
        mask = frac > self.params.int_tol
        if not mask.any():
            return None
        cand = idx[mask]
        score = np.minimum(x[cand] - np.floor(x[cand]), np.ceil(x[cand]) - x[cand])
        best = score.max()
        ties = cand[score >= best - 1e-12]
        return int(ties[np.argmin(self.tie_rank[ties])])


def solve_milp(model: MilpModel, params: SolveParams | None = None, *,
               warm_start: Incumbent | None = None,
               brancher: Brancher | None = None,
               heuristic: Heuristic | None = None,
               node_solver: NodeSolver | None = None,
               node_bound: NodeBound | None = None) -> MilpSolution:
    """Minimize ``model`` by branch-and-bound.

    ``brancher(model, lb, ub, x)`` may replace the default split on the most
    fractional variable: it returns the children's ``(lb, ub)`` pairs, or
    None to fall back to the default.  The children must keep at least one
    optimal point of the node (dropping points that are images of kept ones
    under an objective-preserving symmetry is fine).  ``heuristic`` maps an LP solution to a candidate point that is
    accepted when it is feasible.  ``node_solver(model, lb, ub)`` may close a
    node outright: it returns ``(True, x)`` when ``x`` is an optimal point of
    the node's subproblem (``x`` is None if the subproblem is infeasible) and
    ``(False, None)`` when the node must be branched as usual.
    ``node_bound(model, lb, ub)`` returns a lower bound on the objective of
    every integer point of the node (``inf`` if there is none); the node's
    bound is the larger of it and the LP value, and it is checked before the
    LP so a node can be pruned without solving it.
    """
    params = params or SolveParams()
    start = time.perf_counter()
    search = _Search(model, params, heuristic, warm_start)
    log = search.log
    nodes = 0
    seq = 0
    heap: list = []
    root_lb, root_ub = model.lb.copy(), model.ub.copy()
    heapq.heappush(heap, (-math.inf, seq, root_lb, root_ub, None))
    bound = -math.inf
    limit_hit = False
    unbounded = False

    def abs_tol(obj: float) -> float:
        return params.abs_gap + 1e-9 * abs(obj)

    def record(tag: str) -> None:
        inc = search.best_obj if search.best_x is not None else math.inf
        g = relative_gap(inc if search.best_x is not None else None, bound)
        log.append(f"{tag} node={nodes} bound={bound:.10g} incumbent={inc:.10g} gap={g:.6g}")
        search.trajectory.append((nodes, bound, inc))

    while heap:
        key_bound, _, lb, ub, parent_basis = heap[0]
        bound = max(bound, key_bound) if math.isfinite(key_bound) else bound
        if search.best_x is not None:
            inc = search.best_obj
            if inc - bound <= max(params.gap * max(abs(inc), 1e-9), abs_tol(inc)):
                break
        if params.node_limit is not None and nodes >= params.node_limit:
            limit_hit = True
            break
        if params.time_limit is not None and time.perf_counter() - start > params.time_limit:
            limit_hit = True
            break
        heapq.heappop(heap)
        if search.best_x is not None and key_bound >= search.best_obj - abs_tol(search.best_obj):
            continue
        nodes += 1
        extra = -math.inf
        if node_bound is not None:
            extra = node_bound(model, lb, ub)
            if extra == math.inf:
                continue
            if search.best_x is not None and extra >= search.best_obj - abs_tol(search.best_obj):
                continue
        try:
            lp = solve_lp(model, lb, ub, warm=parent_basis)
        except LPNumericalError as exc:
            search.numerical_trouble = True
            log.append(f"lp-failure node={nodes}: {exc}")
            continue
        if lp.status == INFEASIBLE:
            continue
        if lp.status == UNBOUNDED:
            if nodes == 1:
                unbounded = True
                break
            search.numerical_trouble = True
            continue
        obj = max(lp.objective, extra)
        if nodes == 1:
            bound = obj
            record("root")
        if search.best_x is not None and obj >= search.best_obj - abs_tol(search.best_obj):
            continue
        if node_solver is not None:
            closed, point = node_solver(model, lb, ub)
            if closed:
                if point is not None and search.try_incumbent(point, "node", nodes):
                    record("improve")
                continue
        children = brancher(model, lb, ub, lp.x) if brancher is not None else None
        if children is None:
            j = search.choose_branch(lp.x)
            if j is None:
                if not search.try_incumbent(lp.x, "lp", nodes):
                    search.numerical_trouble = True
                    log.append(f"rejected integral LP point at node={nodes}")
                else:
                    record("improve")
                continue
            v = lp.x[j]
            down_ub = ub.copy()
            down_ub[j] = math.floor(v)
            up_lb = lb.copy()
            up_lb[j] = math.ceil(v)
            children = [(lb, down_ub), (up_lb, ub)]
        if search.heuristic is not None:
            cand = search.heuristic(model, lp.x)
            if cand is not None and search.try_incumbent(cand, "heuristic", nodes):
                record("improve")
        for child_lb, child_ub in children:
            seq += 1
            heapq.heappush(heap, (obj, seq, child_lb, child_ub, lp.basis))
        if params.log_every and nodes % params.log_every == 0:
            record("progress")

    exhausted = not heap and not limit_hit and not unbounded
    if exhausted:
        bound = search.best_obj if search.best_x is not None else math.inf
    elif heap and not unbounded:
        bound = max(bound, min(h[0] for h in heap)) if search.best_x is None else \
            min(search.best_obj, max(bound, min(h[0] for h in heap)))
    wall = time.perf_counter() - start
    if unbounded:
        status = STATUS_UNBOUNDED
        bound = -math.inf
    elif search.best_x is None:
        status = STATUS_INFEASIBLE if exhausted and not search.numerical_trouble else STATUS_NO_INCUMBENT
    else:
        g = relative_gap(search.best_obj, bound)
        closed = g <= params.gap or search.best_obj - bound <= abs_tol(search.best_obj)
        status = STATUS_OPTIMAL if closed and not search.numerical_trouble else STATUS_FEASIBLE
    gap = relative_gap(search.best_obj if search.best_x is not None else None, bound)
    record("final")
    return MilpSolution(status=status, x=search.best_x,
                        objective=search.best_obj if search.best_x is not None else None,
                        bound=bound, gap=gap, nodes=nodes, wall_time=wall,
                        log=log, trajectory=search.trajectory)
