"""Out-of-sample evaluation of first-stage solutions and the VSS / EVPI studies.

A first stage is fixed and scored on a set of horizon-level demand
realizations (array of shape ``(n, |J|, |T|)``); every (scenario, day) pair
gets an exact recourse solve.  Aggregates are equal-weight means over the
scenarios, accumulated as Fractions in scenario order so that the numbers do
not depend on how the work was split across processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (REGULAR_HOURS, DailyScenario, FirstStageSolution, Instance, InfeasibleFirstStageError, duty_capacity,
                   expected_absences, known_demand_violations)
from .formulation import FormulationConfig, welfare_weight
from .milp import SolveParams
from .recourse import RecourseSolver
from .solve import SolveResult, solve_first_stage

CSV_COLUMNS = ("instance", "label", "num_scenarios", "feasible", "cost", "cancelled_service_hours",
               "social_welfare", "xb_absences", "overstaffing_hours", "utilization_rate", "overtime_hours",
               "solve_status", "gap", "solved")
TIMING_COLUMNS = ("instance", "label", "solve_time", "nodes")


@dataclass(frozen=True)
class EvaluationConfig:
    num_eval_scenarios: int = 1000
    seed: int = 0
    # score first stages from the no-preference model under the preference-aware absences
    cross_eval: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.num_eval_scenarios < 1:
            raise ValueError("num_eval_scenarios must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown evaluation keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class ScenarioMetrics:
    """One horizon realization under one first stage (hours are periods)."""

    recourse: Fraction
    welfare_term: Fraction
    cancelled: int
    overstaffed: int
    overtime: int
    covered: int
    paid: int
    xb_absences: int
    welfare_mean: Fraction

    @property
    def cost(self) -> Fraction:
        return self.recourse - self.welfare_term


@dataclass
class EvaluationReport:
    instance: str = ""
    label: str = ""
    num_scenarios: int = 0
    feasible: bool = True
    cost: float = math.nan
    cancelled_service_hours: float = math.nan
    social_welfare: float = math.nan
    xb_absences: float = math.nan
    overstaffing_hours: float = math.nan
    utilization_rate: float = math.nan
    overtime_hours: float = math.nan
    solve_status: str = ""
    gap: float = math.nan
    solved: bool = False
    solve_time: float = math.nan
    nodes: int = 0
    diagnosis: tuple[str, ...] = ()
    first_stage: FirstStageSolution | None = field(default=None, repr=False)
    per_scenario: tuple[ScenarioMetrics, ...] = field(default=(), repr=False)

    @property
    def exact_cost(self) -> Fraction | None:
        if not self.per_scenario:
            return None
        return sum((m.cost for m in self.per_scenario), Fraction(0)) / len(self.per_scenario)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def to_dict(self) -> dict:
        out = self.row()
        out.update(solve_time=self.solve_time, nodes=self.nodes, diagnosis=list(self.diagnosis),
                   first_stage=None if self.first_stage is None else list(self.first_stage.assignment))
        return out


@dataclass(frozen=True)
class Deltas:
    """Percentage improvements of a candidate over a baseline (None = undefined)."""

    cost: float | None
    cancelled_service: float | None
    social_welfare: float | None


def instance_name(instance: Instance) -> str:
    meta = instance.meta or {}
    name = meta.get("generator", {}).get("name") or meta.get("name") or "instance"
    return f"{name}-s{instance.seed}"


# ---------------------------------------------------------------------------
# per-scenario scoring


def _check_first_stage(instance: Instance, first_stage: FirstStageSolution, mode: str,
                       strict: bool = True) -> tuple[list[int], list[str]]:
    """Duty capacity per day and the known-demand diagnosis.

    A negative capacity raises when ``strict``; otherwise it is diagnosed
    and clamped to zero (no reserve staff left for unknown absences).
    """
    if len(first_stage.assignment) != instance.num_employees:
        raise ValueError("first stage does not match the instance's employee count")
    diagnosis = [f"day {j}: expected present {float(present):.4f} < known demand {o}"
                 for j, present, o in known_demand_violations(instance, first_stage, mode)]
    caps = [duty_capacity(instance, first_stage, j, mode) for j in range(instance.num_days)]
    negative = [f"day {j}: duty capacity {n} < 0" for j, n in enumerate(caps) if n < 0]
    if negative and strict:
        raise InfeasibleFirstStageError("; ".join(negative + diagnosis))
    return [max(n, 0) for n in caps], negative + diagnosis


def _score(solver: RecourseSolver, paid: np.ndarray, demand: np.ndarray, caps: Sequence[int],
           base_paid: int, welfare_term: Fraction, welfare_mean: Fraction, xb_abs: int) -> ScenarioMetrics:
    recourse, cancelled, over, overtime, covered, paid_total = Fraction(0), 0, 0, 0, 0, base_paid
    for j, n in enumerate(caps):
        r = solver.solve(demand[j], n)
        recourse += r.cost
        ys = int(r.y.sum())
        cancelled += ys
        over += int(r.z.sum())
        overtime += r.overtime_hours
        covered += int(demand[j].sum()) - ys
        paid_total += int(paid @ r.v)
    return ScenarioMetrics(recourse, welfare_term, cancelled, over, overtime, covered, paid_total, xb_abs,
                           welfare_mean)


def _score_chunk(args) -> list[ScenarioMetrics]:
    duties, c1, demands, caps, base_paid, welfare_term, welfare_mean, xb_abs = args
    solver = RecourseSolver(duties, c1)
    paid = np.array([d.paid_hours for d in duties], dtype=np.int64)
    return [_score(solver, paid, d, caps, base_paid, welfare_term, welfare_mean, xb_abs) for d in demands]


def score_scenarios(instance: Instance, first_stage: FirstStageSolution, eval_scenarios, mode: str = "with",
                    solver: RecourseSolver | None = None, workers: int = 1,
                    strict: bool = True) -> tuple[list[ScenarioMetrics], list[str]]:
    """Per-scenario metrics, in scenario order, plus the known-demand diagnosis."""
    demands = np.asarray(eval_scenarios, dtype=np.int64)
    if demands.ndim != 3 or demands.shape[1:] != (instance.num_days, instance.num_periods):
        raise ValueError(f"eval scenarios must have shape (n, {instance.num_days}, {instance.num_periods})")
    caps, diagnosis = _check_first_stage(instance, first_stage, mode, strict)
    scores = instance.preferences.scores
    welfare = sum(int(scores[e, p]) for e, p in enumerate(first_stage.assignment))
    welfare_term = welfare_weight(instance, mode) * welfare
    welfare_mean = Fraction(welfare, instance.num_employees)
    xb_abs = sum(math.ceil(expected_absences(instance, first_stage, j, mode)) for j in range(instance.num_days))
    base_paid = REGULAR_HOURS * int(np.sum(instance.known_demand))
    if workers > 1 and len(demands) > 1:
        chunks = np.array_split(demands, min(workers, len(demands)))
        jobs = [(instance.duties, instance.costs.c1, c, caps, base_paid, welfare_term, welfare_mean, xb_abs)
                for c in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_score_chunk, jobs))
        metrics = [m for part in parts for m in part]
    else:
        solver = solver or RecourseSolver(instance.duties, instance.costs.c1)
        paid = np.array([d.paid_hours for d in instance.duties], dtype=np.int64)
        metrics = [_score(solver, paid, d, caps, base_paid, welfare_term, welfare_mean, xb_abs)
                   for d in demands]
    return metrics, diagnosis


def aggregate(metrics: Sequence[ScenarioMetrics], **info) -> EvaluationReport:
    """Equal-weight means over scenarios; utilization is total covered over total paid hours."""
    n = len(metrics)
    if n == 0:
        raise ValueError("nothing to aggregate")

    def mean(attr):
        return float(sum((Fraction(getattr(m, attr)) for m in metrics), Fraction(0)) / n)

    paid = sum(m.paid for m in metrics)
    util = Fraction(sum(m.covered for m in metrics), paid) if paid else Fraction(0)
    return EvaluationReport(num_scenarios=n, cost=mean("cost"), cancelled_service_hours=mean("cancelled"),
                            social_welfare=mean("welfare_mean"), xb_absences=mean("xb_absences"),
                            overstaffing_hours=mean("overstaffed"), utilization_rate=float(util),
                            overtime_hours=mean("overtime"), per_scenario=tuple(metrics), **info)


def evaluate_first_stage(instance: Instance, first_stage: FirstStageSolution, eval_scenarios, *,
                         mode: str = "with", strict: bool = True, solver: RecourseSolver | None = None,
                         workers: int = 1, label: str = "", solve: SolveResult | None = None) -> EvaluationReport:
    """Score ``first_stage`` on every evaluation scenario.

    ``mode`` selects the absence model and welfare weight used for scoring
    (the preference-aware one by default, whichever model produced the first
    stage).  Known-demand shortfalls and negative duty capacities raise
    :class:`InfeasibleFirstStageError` when ``strict``; otherwise they are
    listed in ``diagnosis``, negative capacities count as zero, and the
    report is flagged infeasible.
    """
    metrics, diagnosis = score_scenarios(instance, first_stage, eval_scenarios, mode, solver, workers, strict)
    if diagnosis and strict:
        raise InfeasibleFirstStageError("; ".join(diagnosis))
    info = _solve_info(solve)
    return aggregate(metrics, instance=instance_name(instance), label=label, feasible=not diagnosis,
                     diagnosis=tuple(diagnosis), first_stage=first_stage, **info)


def _solve_info(solve: SolveResult | None) -> dict:
    if solve is None:
        return {"solve_status": "given", "gap": 0.0, "solved": True}
    return {"solve_status": solve.status, "gap": float(solve.gap), "solved": solve.has_solution,
            "solve_time": float(solve.wall_time), "nodes": int(solve.nodes)}


def unsolved_report(instance: Instance, label: str, solve: SolveResult) -> EvaluationReport:
    """Placeholder for a solve that ended without an incumbent (metrics stay NaN)."""
    return EvaluationReport(instance=instance_name(instance), label=label, feasible=False,
                            diagnosis=(f"solver status {solve.status}",), **_solve_info(solve))


def training_eval_scenarios(instance: Instance) -> np.ndarray:
    """The training scenarios as horizon realizations: realization s takes scenario s of every day.

    The equal-weight mean over these equals the training expectation, which
    needs the same scenario count on every day and uniform probabilities.
    """
    counts = set(instance.scenario_counts())
    if len(counts) != 1:
        raise ValueError("in-sample evaluation needs the same number of scenarios on every day")
    S = counts.pop()
    for day in instance.scenarios:
        if any(sc.probability != Fraction(1, S) for sc in day):
            raise ValueError("in-sample evaluation needs uniform scenario probabilities")
    return np.array([[instance.scenarios[j][s].demand for j in range(instance.num_days)] for s in range(S)],
                    dtype=np.int64)


# ---------------------------------------------------------------------------
# comparisons


def _as_list(r) -> list[EvaluationReport]:
    return [r] if isinstance(r, EvaluationReport) else list(r)


def percentage_deltas(baseline, candidate) -> Deltas:
    """Improvement of ``candidate`` over ``baseline`` in percent.

    Both arguments are reports or equally long sequences of reports (paired
    by position, same evaluation sets).  Cost and welfare use the mean of the
    per-pair ratios; cancelled service uses the ratio of the means, so pairs
    with zero cancelled service do not break it.  Positive means better:
    lower cost, lower cancelled service, higher welfare.
    """
    a, b = _as_list(baseline), _as_list(candidate)
    if len(a) != len(b) or not a:
        raise ValueError("need equally long, non-empty report lists")
    pairs = list(zip(a, b))
    if any(math.isnan(x.cost) or math.isnan(y.cost) for x, y in pairs):
        return Deltas(None, None, None)

    def mean_ratio(get, sign):
        ratios = []
        for x, y in pairs:
            base = get(x)
            if base == 0:
                return None
            ratios.append(sign * (get(y) - get(x)) / abs(base))
        return 100.0 * sum(ratios) / len(ratios)

    cs_a = sum(x.cancelled_service_hours for x in a) / len(a)
    cs_b = sum(y.cancelled_service_hours for y in b) / len(b)
    cs = None if cs_a == 0 else 100.0 * (cs_a - cs_b) / cs_a
    return Deltas(cost=mean_ratio(lambda r: r.cost, -1.0), cancelled_service=cs,
                  social_welfare=mean_ratio(lambda r: r.social_welfare, 1.0))


@dataclass
class Comparison:
    """Two evaluated solutions on one evaluation set and the candidate's improvement."""

    baseline: EvaluationReport
    candidate: EvaluationReport
    deltas: Deltas
    summed_gap: float
    flips: int = 0

    @property
    def value(self) -> float:
        """Baseline cost minus candidate cost (VSS, or EVPI with the roles swapped)."""
        return self.baseline.cost - self.candidate.cost


def _solve_and_eval(instance, eval_scenarios, config, params, label, eval_mode, solver, workers, method,
                    strict=False):
    res = solve_first_stage(instance, config, params, method=method, solver=solver)
    if not res.has_solution:
        return res, unsolved_report(instance, label, res)
    rep = evaluate_first_stage(instance, res.first_stage, eval_scenarios, mode=eval_mode, strict=strict,
                               solver=solver, workers=workers, label=label, solve=res)
    return res, rep


def compute_vss(instance: Instance, eval_scenarios, params: SolveParams | None = None, *, mode: str = "with",
                eval_mode: str | None = None, method: str = "capacity", workers: int = 1,
                solver: RecourseSolver | None = None) -> Comparison:
    """Stochastic against expected-value first stage on a common evaluation set.

    The baseline is the expected-value solution, the candidate the stochastic
    one, so ``value`` is the VSS and positive deltas favour the stochastic model.
    """
    eval_mode = eval_mode or mode
    solver = solver or RecourseSolver(instance.duties, instance.costs.c1)
    sto_res, sto = _solve_and_eval(instance, eval_scenarios, FormulationConfig(mode, "full"), params,
                                   "stochastic", eval_mode, solver, workers, method)
    det_res, det = _solve_and_eval(instance, eval_scenarios, FormulationConfig(mode, "expected-value"), params,
                                   "expected-value", eval_mode, solver, workers, method)
    return Comparison(det, sto, percentage_deltas(det, sto), _gap_sum(sto_res, det_res))


def _gap_sum(*results: SolveResult) -> float:
    """Sum of absolute optimality gaps (incumbent minus bound)."""
    total = 0.0
    for r in results:
        if r.objective is None or not math.isfinite(r.bound):
            return math.inf
        total += max(0.0, float(r.objective) - r.bound)
    return total


def compute_evpi(instance: Instance, eval_scenarios, params: SolveParams | None = None, *, mode: str = "with",
                 cross_eval: bool = False, method: str = "capacity", workers: int = 1,
                 solver: RecourseSolver | None = None) -> Comparison:
    """Stochastic first stage against per-scenario wait-and-see solutions.

    For every evaluation realization the problem is re-solved knowing that
    realization (one scenario per day).  The stochastic solution is the
    baseline and the wait-and-see average the candidate, so ``value`` is the
    EVPI.  With ``cross_eval`` the wait-and-see problems use the no-preference
    model and are scored under ``mode``; ``flips`` counts realizations where
    the wait-and-see cost exceeds the stochastic one.
    """
    demands = np.asarray(eval_scenarios, dtype=np.int64)
    solver = solver or RecourseSolver(instance.duties, instance.costs.c1)
    sto_res, sto = _solve_and_eval(instance, demands, FormulationConfig(mode, "full"), params,
                                   "stochastic", mode, solver, workers, method)
    ws_mode = "without" if cross_eval else mode
    metrics, results, diagnosis = [], [sto_res], []
    for i, demand in enumerate(demands):
        view = instance.replace(scenarios=[[DailyScenario(j, demand[j], Fraction(1))]
                                           for j in range(instance.num_days)])
        res = solve_first_stage(view, FormulationConfig(ws_mode, "full"), params, method=method, solver=solver)
        results.append(res)
        if not res.has_solution:
            ws = unsolved_report(instance, "wait-and-see", res)
            return Comparison(sto, ws, Deltas(None, None, None), math.inf)
        m, diag = score_scenarios(instance, res.first_stage, demand[None], mode, solver, strict=False)
        metrics.extend(m)
        diagnosis.extend(f"scenario {i}: {d}" for d in diag)
    ws = aggregate(metrics, instance=instance_name(instance), label="wait-and-see", feasible=not diagnosis,
                   diagnosis=tuple(diagnosis), solve_status="per-scenario",
                   gap=max(float(r.gap) for r in results[1:]), solved=True,
                   solve_time=sum(r.wall_time for r in results[1:]), nodes=sum(r.nodes for r in results[1:]))
    flips = 0
    if sto.per_scenario:
        flips = sum(1 for a, b in zip(sto.per_scenario, ws.per_scenario) if b.cost > a.cost)
    return Comparison(sto, ws, percentage_deltas(sto, ws), _gap_sum(*results), flips)


def scenario_count_study(instances: Sequence[Instance], eval_scenarios, params: SolveParams | None = None, *,
                         mode: str = "with", eval_mode: str | None = None, method: str = "capacity",
                         workers: int = 1) -> list[tuple[int, EvaluationReport, Deltas | None]]:
    """Solve each instance (same data, different scenario counts) and score on one evaluation set.

    Returns ``(count, report, deltas vs previous count)`` rows in input order.
    """
    eval_mode = eval_mode or mode
    rows = []
    prev = None
    for inst in instances:
        count = int(sum(inst.scenario_counts()) // max(inst.num_days, 1))
        _, rep = _solve_and_eval(inst, eval_scenarios, FormulationConfig(mode, "full"), params,
                                 f"scenarios={count}", eval_mode, None, workers, method)
        rows.append((count, rep, None if prev is None else percentage_deltas(prev, rep)))
        prev = rep
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def reports_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def timings_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for r in reports:
        w.writerow([_fmt(getattr(r, c)) for c in TIMING_COLUMNS])
    return buf.getvalue()


def reports_json(reports: Sequence[EvaluationReport], **meta) -> str:
    """Deterministic JSON (timings excluded, they go to the timings file)."""
    body = []
    for r in reports:
        d = r.to_dict()
        d.pop("solve_time")
        d["cost"] = None if math.isnan(r.cost) else r.cost
        for k, v in list(d.items()):
            if isinstance(v, float) and math.isnan(v):
                d[k] = None
        body.append(d)
    return json.dumps({**meta, "reports": body}, indent=2, sort_keys=True) + "\n"


def deltas_dict(d: Deltas) -> dict:
    return asdict(d)


def _cell(v, digits=2) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def markdown_reports(reports: Sequence[EvaluationReport]) -> str:
    """Per-instance metrics table, one row per report."""
    head = "| Instance | Model | Cost | C.S. (h.) | S.W. | XB abs. | OVS. (h.) | XB util. rate (%) | OVT. (h.) |"
    lines = [head, "|" + "---|" * 9]
    for r in reports:
        lines.append(f"| {r.instance} | {r.label} | {_cell(r.cost)} | {_cell(r.cancelled_service_hours, 1)} | "
                     f"{_cell(r.social_welfare)} | {_cell(r.xb_absences, 1)} | {_cell(r.overstaffing_hours, 1)} | "
                     f"{_cell(100 * r.utilization_rate, 1)} | {_cell(r.overtime_hours, 1)} |")
    return "\n".join(lines) + "\n"


def markdown_deltas(rows: Sequence[tuple[str, Deltas]], mean: Deltas | None = None) -> str:
    """Improvement table (percent), optionally closed by a Mean row."""
    lines = ["| Instance | Cost (%) | C.S. (%) | S.W. (%) |", "|---|---|---|---|"]
    for name, d in rows:
        lines.append(f"| {name} | {_cell(d.cost)} | {_cell(d.cancelled_service)} | {_cell(d.social_welfare)} |")
    if mean is not None:
        lines.append(f"| Mean | {_cell(mean.cost)} | {_cell(mean.cancelled_service)} | {_cell(mean.social_welfare)} |")
    return "\n".join(lines) + "\n"


__all__ = [
    "CSV_COLUMNS", "TIMING_COLUMNS", "Comparison", "Deltas", "EvaluationConfig", "EvaluationReport",
    "ScenarioMetrics", "aggregate", "compute_evpi", "compute_vss", "deltas_dict", "evaluate_first_stage",
    "instance_name", "markdown_deltas", "markdown_reports", "percentage_deltas", "reports_csv", "reports_json",
    "scenario_count_study", "score_scenarios", "timings_csv", "training_eval_scenarios", "unsolved_report",
]
