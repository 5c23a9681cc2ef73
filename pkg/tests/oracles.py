"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


def tableau_simplex(c, A, senses, b, ub=None, tol=1e-9, max_iter=20000):
    """Two-phase dense tableau simplex with Bland's rule.

    Solves min c.x s.t. A_i x (<=|==|>=) b_i, 0 <= x <= ub.  Finite upper
    bounds become explicit rows.  Returns (status, objective, x).
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = len(c)
    rows = [list(r) for r in A]
    sen = list(senses)
    rhs = list(b)
    if ub is not None:
        for j, u in enumerate(ub):
            if math.isfinite(u):
                r = [0.0] * n
                r[j] = 1.0
                rows.append(r)
                sen.append("<=")
                rhs.append(u)
    m = len(rows)
    R = np.array(rows, float).reshape(m, n)
    rhs = np.array(rhs, float)
    sen = np.array(sen)
    neg = rhs < 0
    R[neg] *= -1
    rhs[neg] *= -1
    flip = {"<=": ">=", ">=": "<=", "==": "=="}
    sen = np.array([flip[s] if f else s for s, f in zip(sen, neg)])
    n_slack = int(np.sum(sen != "=="))
    n_art = int(np.sum(sen != "<="))
    width = n + n_slack + n_art
    T = np.zeros((m, width + 1))
    T[:, :n] = R
    T[:, -1] = rhs
    basis = []
    si, ai = n, n + n_slack
    art_cols = []
    for i in range(m):
        if sen[i] == "<=":
            T[i, si] = 1
            basis.append(si)
            si += 1
        elif sen[i] == ">=":
            T[i, si] = -1
            si += 1
            T[i, ai] = 1
            basis.append(ai)
            art_cols.append(ai)
            ai += 1
        else:
            T[i, ai] = 1
            basis.append(ai)
            art_cols.append(ai)
            ai += 1

    def run(cost, allowed):
        for _ in range(max_iter):
            cb = cost[basis]
            red = cost[:width] - cb @ T[:, :width]
            enter = None
            for j in range(width):
                if allowed[j] and red[j] < -tol:
                    enter = j
                    break
            if enter is None:
                return "optimal"
            col = T[:, enter]
            best, leave = math.inf, None
            for i in range(m):
                if col[i] > tol:
                    ratio = T[i, -1] / col[i]
                    if ratio < best - 1e-12 or (abs(ratio - best) <= 1e-12 and basis[i] < basis[leave]):
                        best, leave = ratio, i
            if leave is None:
                return "unbounded"
            T[leave] /= T[leave, enter]
            for i in range(m):
                if i != leave and T[i, enter] != 0:
                    T[i] -= T[i, enter] * T[leave]
            basis[leave] = enter
        raise RuntimeError("oracle iteration limit")

    allowed = np.ones(width, bool)
    if art_cols:
        cost1 = np.zeros(width)
        cost1[art_cols] = 1
        run(cost1, allowed)
        if sum(T[i, -1] for i in range(m) if basis[i] in art_cols) > 1e-7:
            return "infeasible", None, None
        # pivot remaining zero-level artificials out where possible
        for i in range(m):
            if basis[i] in art_cols:
                for j in range(n + n_slack):
                    if abs(T[i, j]) > tol:
                        T[i] /= T[i, j]
                        for k in range(m):
                            if k != i and T[k, j] != 0:
                                T[k] -= T[k, j] * T[i]
                        basis[i] = j
                        break
        allowed[art_cols] = False
    cost2 = np.zeros(width)
    cost2[:n] = c
    status = run(cost2, allowed)
    if status == "unbounded":
        return "unbounded", None, None
    x = np.zeros(width)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return "optimal", float(c @ x[:n]), x[:n]


def brute_force_milp(c, A, senses, b, lb, ub):
    """Enumerate every integer point in a small box (all variables integer)."""
    best, arg = math.inf, None
    ranges = [range(int(l), int(u) + 1) for l, u in zip(lb, ub)]
    A = np.asarray(A, float)
    c = np.asarray(c, float)
    for point in itertools.product(*ranges):
        x = np.array(point, float)
        ax = A @ x
        ok = True
        for v, s, r in zip(ax, senses, b):
            if (s == "<=" and v > r + 1e-9) or (s == ">=" and v < r - 1e-9) or (s == "==" and abs(v - r) > 1e-9):
                ok = False
                break
        if ok:
            val = float(c @ x)
            if val < best - 1e-12:
                best, arg = val, x
    return best, arg


def reference_recourse(coverage, costs, demand, n, c1):
    """Cheapest multiset of exactly n duties; coverage is a list of 0/1 rows per duty."""
    from fractions import Fraction

    best = None
    for combo in itertools.combinations_with_replacement(range(len(coverage)), n):
        cover = [0] * len(demand)
        for w in combo:
            for t, a in enumerate(coverage[w]):
                cover[t] += a
        short = sum(max(0, int(d) - c) for d, c in zip(demand, cover))
        cost = Fraction(c1) * short + sum((Fraction(costs[w]) for w in combo), Fraction(0))
        if best is None or cost < best:
            best = cost
    return best


def reference_first_stage(instance, mode="with"):
    """Best objective over all 7^|E| assignments, recomputed from raw instance fields.

    Follows the model's definition directly: known-demand coverage in
    expectation, duty count |E| - o - off - ceil(expected absences), expected
    recourse per day, minus c3 times the summed preference scores.
    """
    from fractions import Fraction

    E, J = instance.num_employees, instance.num_days
    q = instance.absence.q_pref if mode == "with" else [instance.absence.q_uniform] * E
    c3 = instance.costs.c3 if mode == "with" else Fraction(0)
    coverage = [[int(v) for v in d.a] for d in instance.duties]
    costs = [d.cost for d in instance.duties]
    memo = {}

    def expected(j, n):
        if (j, n) not in memo:
            memo[j, n] = sum((sc.probability * reference_recourse(coverage, costs, list(sc.demand), n,
                                                                  instance.costs.c1)
                              for sc in instance.scenarios[j]), Fraction(0))
        return memo[j, n]

    best = None
    for assign in itertools.product(range(7), repeat=E):
        total = Fraction(0)
        ok = True
        for j in range(J):
            working = [e for e, p in enumerate(assign) if instance.patterns[p].r[j]]
            off = E - len(working)
            present = sum((1 - Fraction(q[e][j]) for e in working), Fraction(0))
            o = int(instance.known_demand[j])
            if present < o:
                ok = False
                break
            absent = math.ceil(sum((Fraction(q[e][j]) for e in working), Fraction(0)))
            n = E - o - off - absent
            if n < 0:
                ok = False
                break
            total += expected(j, n)
        if not ok:
            continue
        total -= c3 * sum(int(instance.preferences.scores[e][p]) for e, p in enumerate(assign))
        if best is None or total < best:
            best = total
    return best
