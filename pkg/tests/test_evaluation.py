import csv
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xbsched.core import (AbsenceModel, DailyScenario, FirstStageSolution, InfeasibleFirstStageError,
                          PreferenceProfile)
from xbsched.datagen import GeneratorConfig, generate_eval_scenarios, generate_instance, random_tiny_instance
from xbsched.evaluation import (CSV_COLUMNS, EvaluationConfig, EvaluationReport, compute_evpi, compute_vss,
                                evaluate_first_stage, markdown_deltas, markdown_reports, percentage_deltas,
                                reports_csv, reports_json, scenario_count_study, training_eval_scenarios)
from xbsched.formulation import FormulationConfig
from xbsched.milp import SolveParams
from xbsched.recourse import enumerate_first_stage
from xbsched.solve import solve_first_stage


def rep(cost=1.0, cs=1.0, sw=1.0):
    return EvaluationReport(cost=cost, cancelled_service_hours=cs, social_welfare=sw)


def test_identical_reports_zero_deltas():
    d = percentage_deltas(rep(5, 2, 3), rep(5, 2, 3))
    assert (d.cost, d.cancelled_service, d.social_welfare) == (0, 0, 0)


def test_published_mean_arithmetic():
    d = percentage_deltas(rep(cs=38.6, sw=4.34), rep(cs=30.5, sw=5.94))
    assert d.cancelled_service == pytest.approx(20.98, abs=0.01)
    assert d.social_welfare == pytest.approx(36.87, abs=0.01)


def test_cs_uses_ratio_of_means():
    base = [rep(cs=0.0), rep(cs=10.0)]
    cand = [rep(cs=1.0), rep(cs=4.0)]
    # per-pair ratios are undefined for the first pair, the ratio of means is not
    assert percentage_deltas(base, cand).cancelled_service == pytest.approx(100 * (5 - 2.5) / 5)


def test_cost_uses_mean_of_ratios():
    base = [rep(cost=100.0), rep(cost=10.0)]
    cand = [rep(cost=90.0), rep(cost=10.0)]
    assert percentage_deltas(base, cand).cost == pytest.approx(5.0)


def test_zero_baseline_cs_is_undefined():
    assert percentage_deltas(rep(cs=0.0), rep(cs=3.0)).cancelled_service is None


def test_mismatched_lists():
    with pytest.raises(ValueError):
        percentage_deltas([rep()], [rep(), rep()])


def test_eval_config():
    assert EvaluationConfig().num_eval_scenarios == 1000
    with pytest.raises(ValueError):
        EvaluationConfig(num_eval_scenarios=0)
    with pytest.raises(ValueError):
        EvaluationConfig.from_dict({"nope": 1})


def _quiet(inst, E):
    """Zero absence rates and zero known demand."""
    return inst.replace(known_demand=np.zeros(inst.num_days, dtype=np.int64),
                        absence=AbsenceModel(((Fraction(0),) * inst.num_days,) * E, (Fraction(0),) * inst.num_days))


def test_zero_demand_evaluation():
    inst = generate_instance(GeneratorConfig(num_employees=3, num_days=7, l=1, k=1, seed=0))
    inst = _quiet(inst, 3)
    fs = FirstStageSolution((6, 6, 0))
    ev = np.zeros((4, 7, 24), dtype=np.int64)
    r = evaluate_first_stage(inst, fs, ev)
    assert r.cancelled_service_hours == 0 and r.overtime_hours == 0 and r.xb_absences == 0
    working = sum(int(inst.patterns[p].r[j]) for p in fs.assignment for j in range(7))
    cheapest = min(d.cost for d in inst.duties)
    welfare = sum(int(inst.preferences.scores[e, p]) for e, p in enumerate(fs.assignment))
    assert r.exact_cost == working * cheapest - inst.costs.c3 * welfare
    assert r.utilization_rate == 0


def test_single_employee_favorite_welfare():
    inst = generate_instance(GeneratorConfig(num_employees=1, num_days=7, l=1, k=1, seed=2,
                                             known_demand_means=(0.0,) * 7))
    fav = int(np.argmax(inst.preferences.scores[0]))
    r = evaluate_first_stage(inst, FirstStageSolution((fav,)), generate_eval_scenarios(
        GeneratorConfig(num_employees=1, num_days=7, seed=2), 3, 0))
    assert r.social_welfare == 7


def test_metric_bounds():
    inst = generate_instance(GeneratorConfig(num_employees=6, num_days=7, l=2, k=2, seed=3))
    res = solve_first_stage(inst, params=SolveParams(gap=0))
    cfg = GeneratorConfig.from_dict(inst.meta["generator"])
    r = evaluate_first_stage(inst, res.first_stage, generate_eval_scenarios(cfg, 10, 1))
    assert 0 <= r.utilization_rate <= 1
    for v in (r.cancelled_service_hours, r.overstaffing_hours, r.overtime_hours, r.xb_absences):
        assert v >= 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["with", "without"]))
def test_in_sample_replay_matches_enumerator(seed, mode):
    rng = np.random.default_rng(seed)
    inst = random_tiny_instance(rng, max_scenarios=1)
    k = 2
    # same count per day and uniform probabilities so the training set can be replayed
    scen = [[DailyScenario(j, rng.integers(0, 3, inst.num_periods), Fraction(1, k)) for _ in range(k)]
            for j in range(inst.num_days)]
    inst = inst.replace(scenarios=scen)
    enum = enumerate_first_stage(inst, mode)
    if enum.assignment is None:
        return
    ev = training_eval_scenarios(inst)
    r = evaluate_first_stage(inst, enum.assignment, ev, mode=mode)
    # horizon realizations pair scenario s of every day, so the mean is the per-day expectation
    assert r.exact_cost == enum.objective


def test_training_set_needs_uniform_counts():
    inst = random_tiny_instance(np.random.default_rng(0))
    inst = inst.replace(scenarios=[inst.scenarios[0][:1]] + [d + d[:1] for d in inst.scenarios[1:]])
    with pytest.raises(ValueError):
        training_eval_scenarios(inst)


def test_strict_flag():
    inst = generate_instance(GeneratorConfig(num_employees=3, num_days=7, l=1, k=1, seed=0))
    inst = _quiet(inst, 3).replace(known_demand=np.array([2, 0, 0, 0, 0, 0, 0]))
    fs = FirstStageSolution((0, 0, 6))  # everyone off on Sunday
    ev = np.zeros((1, 7, 24), dtype=np.int64)
    with pytest.raises(InfeasibleFirstStageError):
        evaluate_first_stage(inst, fs, ev)
    lenient = evaluate_first_stage(inst, fs, ev, strict=False)
    assert not lenient.feasible and any("duty capacity -2" in d for d in lenient.diagnosis)
    inst = inst.replace(known_demand=np.array([0, 0, 0, 0, 0, 0, 0]))
    assert evaluate_first_stage(inst, fs, ev).feasible


def test_workers_give_identical_reports():
    inst = generate_instance(GeneratorConfig(num_employees=5, num_days=7, l=1, k=1, seed=4))
    fs = FirstStageSolution((0, 1, 2, 3, 4))
    ev = generate_eval_scenarios(GeneratorConfig.from_dict(inst.meta["generator"]), 6, 2)
    a = evaluate_first_stage(inst, fs, ev, strict=False)
    b = evaluate_first_stage(inst, fs, ev, strict=False, workers=2)
    assert reports_csv([a]) == reports_csv([b])


def test_cross_eval_scores_with_preferences():
    inst = generate_instance(GeneratorConfig(num_employees=5, num_days=7, l=1, k=1, seed=5))
    fs = solve_first_stage(inst, FormulationConfig("without"), SolveParams(gap=0)).first_stage
    ev = training_eval_scenarios(inst)
    scored = evaluate_first_stage(inst, fs, ev, strict=False)
    welfare = sum(int(inst.preferences.scores[e, p]) for e, p in enumerate(fs.assignment))
    # cost carries the c3 welfare term, so the no-preference q_j is not what is scored
    assert scored.xb_absences == sum(
        math.ceil(sum(inst.absence.q_pref[e][j] for e, p in enumerate(fs.assignment) if inst.patterns[p].r[j]))
        for j in range(7))
    assert scored.exact_cost == Fraction(scored.exact_cost) and scored.exact_cost < scored.exact_cost + welfare


def test_vss_degenerate_and_in_sample():
    inst = generate_instance(GeneratorConfig(num_employees=5, num_days=7, l=1, k=1, seed=6))
    comp = compute_vss(inst, training_eval_scenarios(inst), SolveParams(gap=0))
    assert comp.value == pytest.approx(0, abs=1e-9)
    assert comp.deltas.cost == pytest.approx(0, abs=1e-9)


def test_evpi_single_scenario_is_zero():
    inst = generate_instance(GeneratorConfig(num_employees=4, num_days=7, l=1, k=1, seed=7))
    comp = compute_evpi(inst, training_eval_scenarios(inst), SolveParams(gap=0))
    assert comp.value == pytest.approx(0, abs=1e-9)
    assert comp.flips == 0


def test_evpi_nonnegative_in_sample():
    inst = generate_instance(GeneratorConfig(num_employees=4, num_days=7, l=2, k=1, seed=8))
    comp = compute_evpi(inst, training_eval_scenarios(inst), SolveParams(gap=0))
    assert comp.value >= -comp.summed_gap - 1e-9
    for a, b in zip(comp.baseline.per_scenario, comp.candidate.per_scenario):
        assert b.cost <= a.cost


def test_scenario_study_same_set_twice():
    inst = generate_instance(GeneratorConfig(num_employees=4, num_days=7, l=2, k=1, seed=9))
    ev = generate_eval_scenarios(GeneratorConfig.from_dict(inst.meta["generator"]), 4, 3)
    rows = scenario_count_study([inst, inst], ev, SolveParams(gap=0))
    d = rows[1][2]
    assert (d.cost, d.social_welfare) == (0, 0)
    assert d.cancelled_service in (0, None)


def test_scenario_study_nested_in_sample():
    base = GeneratorConfig(num_employees=4, num_days=7, l=1, k=1, seed=10)
    small = generate_instance(base)
    big = generate_instance(GeneratorConfig.from_dict({**base.to_dict(), "l": 2, "k": 2}))
    # the generator draws prefixes of the same streams, so the small set is nested in the big one
    for ds, db in zip(small.scenarios, big.scenarios):
        assert any(np.array_equal(ds[0].demand, s.demand) for s in db)
    ev = training_eval_scenarios(big)
    rows = scenario_count_study([small, big], ev, SolveParams(gap=0))
    assert rows[1][1].cost <= rows[0][1].cost + 1e-9


def test_csv_and_json_layout():
    inst = generate_instance(GeneratorConfig(num_employees=3, num_days=7, l=1, k=1, seed=11))
    r = evaluate_first_stage(inst, FirstStageSolution((0, 3, 6)), np.zeros((2, 7, 24), dtype=np.int64),
                             strict=False, label="given")
    text = reports_csv([r])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[0]["label"] == "given"
    doc = json.loads(reports_json([r], seed=11))
    assert doc["seed"] == 11 and doc["reports"][0]["first_stage"] == [0, 3, 6]
    assert "solve_time" not in text
    md = markdown_reports([r])
    assert md.splitlines()[0].startswith("| Instance | Model | Cost | C.S. (h.)")
    assert "| Mean |" in markdown_deltas([("a", percentage_deltas(r, r))], percentage_deltas(r, r))
