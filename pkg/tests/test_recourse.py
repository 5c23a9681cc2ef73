from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xbsched.core import Duty, FirstStageSolution, build_duty_catalog
from xbsched.datagen import random_tiny_instance
from xbsched.recourse import (RecourseSolver, enumerate_first_stage, first_stage_objective,
                              solve_recourse_exact)

from oracles import reference_first_stage, reference_recourse


def duty(i, cover, cost):
    a = np.array(cover, dtype=np.int8)
    return Duty(i, a, 8, 0, len(cover), Fraction(cost))


def test_zero_capacity():
    duties = build_duty_catalog()
    d = np.zeros(24, dtype=np.int64)
    d[0] = 5
    r = solve_recourse_exact(duties, d, 0, 10)
    assert r.cost == 50 and r.y.tolist() == d.tolist() and r.v.sum() == 0


def test_two_period_example():
    r = solve_recourse_exact([duty(0, [1, 1], 8)], [1, 0], 1, 10)
    assert r.v.tolist() == [1] and r.y.tolist() == [0, 0] and r.z.tolist() == [0, 1]
    assert r.cost == 8


def test_forced_duties_on_zero_demand():
    duties = build_duty_catalog()
    r = solve_recourse_exact(duties, np.zeros(24, dtype=np.int64), 3, 10)
    assert r.cost == 24 and r.v.sum() == 3 and r.y.sum() == 0


def test_bad_inputs():
    s = RecourseSolver([duty(0, [1, 1], 8)], 10)
    with pytest.raises(ValueError):
        s.solve([1, 0], -1)
    with pytest.raises(ValueError):
        s.solve([1, 0, 0], 1)
    with pytest.raises(ValueError):
        RecourseSolver([duty(0, [1], 8)], 0)


@st.composite
def recourse_case(draw):
    T = draw(st.integers(1, 6))
    W = draw(st.integers(1, 6))
    cover = [draw(st.lists(st.integers(0, 1), min_size=T, max_size=T)) for _ in range(W)]
    costs = [Fraction(draw(st.integers(16, 22)), 2) for _ in range(W)]
    demand = draw(st.lists(st.integers(0, 3), min_size=T, max_size=T))
    N = draw(st.integers(0, 4))
    c1 = draw(st.sampled_from([Fraction(10), Fraction(3), Fraction(25, 2)]))
    return cover, costs, demand, N, c1


@settings(max_examples=120, deadline=None)
@given(recourse_case())
def test_recourse_matches_multiset_enumeration(case):
    cover, costs, demand, N, c1 = case
    duties = [duty(i, c, k) for i, (c, k) in enumerate(zip(cover, costs))]
    expect = reference_recourse(cover, costs, demand, N, c1)
    for method in ("milp", "enumeration"):
        r = solve_recourse_exact(duties, demand, N, c1, method)
        assert r.cost == expect
        assert int(r.v.sum()) == N
        cov = np.array(cover).T @ r.v if cover else np.zeros(len(demand))
        assert np.array_equal(cov + r.y - r.z, np.array(demand))
        assert np.all(r.y * r.z == 0)


@settings(max_examples=40, deadline=None)
@given(recourse_case())
def test_more_capacity_never_raises_shortage(case):
    cover, costs, demand, N, c1 = case
    s = RecourseSolver([duty(i, c, k) for i, (c, k) in enumerate(zip(cover, costs))], c1)
    assert s.solve(demand, N + 1).y.sum() <= s.solve(demand, N).y.sum()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_recourse_on_real_catalog(seed):
    rng = np.random.default_rng(seed)
    duties = build_duty_catalog()
    demand = rng.integers(0, 3, 24)
    r = RecourseSolver(duties, 10).solve(demand, int(rng.integers(1, 6)))
    assert np.all(r.y * r.z == 0)
    # overtime of the chosen duties is reported in hours
    assert r.overtime_hours == sum(duties[w].overtime_hours * int(r.v[w]) for w in np.flatnonzero(r.v))


def test_ties_are_deterministic():
    duties = [duty(0, [1, 0], 8), duty(1, [1, 0], 8)]
    for method in ("milp", "enumeration"):
        assert solve_recourse_exact(duties, [1, 0], 1, 10, method).v.tolist() == [1, 0]


def test_single_employee_favorite_pattern():
    inst = random_tiny_instance(np.random.default_rng(0), max_employees=1)
    zero = [[type(s)(s.day, np.zeros_like(s.demand), s.probability) for s in day] for day in inst.scenarios]
    q0 = type(inst.absence)(((Fraction(0),) * 7,), (Fraction(0),) * 7)
    inst = inst.replace(num_employees=1, known_demand=np.zeros(7, dtype=np.int64), scenarios=zero, absence=q0,
                        preferences=type(inst.preferences)(np.array([[3, 1, 7, 2, 4, 6, 5]])),
                        costs=type(inst.costs)(c1=10, c3=Fraction(3, 4)))
    res = enumerate_first_stage(inst)
    cheapest = min(d.cost for d in inst.duties)
    # five working days force one duty each on zero demand
    assert res.assignment.assignment == (2,)
    assert res.objective == 5 * cheapest - Fraction(3, 4) * 7


def test_opposite_preferences_both_satisfied():
    inst = random_tiny_instance(np.random.default_rng(1), max_employees=2)
    zero = [[type(s)(s.day, np.zeros_like(s.demand), s.probability) for s in day] for day in inst.scenarios]
    q0 = type(inst.absence)(((Fraction(0),) * 7,) * 2, (Fraction(0),) * 7)
    prefs = np.array([[7, 6, 5, 4, 3, 2, 1], [1, 2, 3, 4, 5, 6, 7]])
    inst = inst.replace(num_employees=2, known_demand=np.zeros(7, dtype=np.int64), scenarios=zero, absence=q0,
                        preferences=type(inst.preferences)(prefs), costs=type(inst.costs)(c1=10, c3=Fraction(2)))
    res = enumerate_first_stage(inst)
    assert res.assignment.assignment == (0, 6)


def test_enumeration_limit():
    inst = random_tiny_instance(np.random.default_rng(2))
    big = inst.replace(num_employees=8)
    with pytest.raises(ValueError):
        enumerate_first_stage(big)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["with", "without"]))
def test_enumerator_matches_reference(seed, mode):
    inst = random_tiny_instance(np.random.default_rng(seed), max_employees=3)
    res = enumerate_first_stage(inst, mode)
    assert res.objective == reference_first_stage(inst, mode)
    if res.assignment is not None:
        assert first_stage_objective(inst, res.assignment, mode) == res.objective


def test_first_stage_objective_rejects_uncovered():
    inst = random_tiny_instance(np.random.default_rng(3), max_employees=1)
    inst = inst.replace(num_employees=1, known_demand=np.full(7, 2, dtype=np.int64))
    with pytest.raises(ValueError):
        first_stage_objective(inst, FirstStageSolution((0,)))
