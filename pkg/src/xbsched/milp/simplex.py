"""Bounded-variable simplex (revised form, explicit basis inverse).

The LP handled is ``min c.x  s.t.  row_lo <= A x <= row_hi,  lb <= x <= ub``.
Each row gets a logical column ``s = A x`` carrying the row bounds, so the
working system is ``[A | -I] z = 0`` with bounds on every column.

A cold solve runs the primal simplex: rows whose logical would start outside
its bounds receive an artificial column, and phase 1 minimizes the
artificial sum.  Pricing is Dantzig's rule; after a run of degenerate pivots
the solver switches to Bland's rule until the objective moves again.

A warm solve starts from a previous optimal basis after bounds changed (the
branch-and-bound case).  That basis stays dual feasible, so the dual simplex
restores primal feasibility, and a primal pass cleans up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import MilpModel

LOWER, UPPER, FREE, BASIC = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_DENSE_LIMIT = 4_000_000
_REFACTOR_EVERY = 64
_REL_PIVOT = 1e-10
_STALL_LIMIT = 40


class LPNumericalError(RuntimeError):
    """The simplex gave up (iteration guard exhausted or singular basis)."""


@dataclass(frozen=True, eq=False)
class WarmBasis:
    basis: np.ndarray
    status: np.ndarray
    art_rows: tuple[int, ...] = ()
    art_sign: tuple[float, ...] = ()
    binv: np.ndarray | None = None


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    duals: np.ndarray | None = None
    residual: float = 0.0
    basis: WarmBasis | None = field(default=None, repr=False)
    warm: bool = False


class _Columns:
    """Column access for [A | -I | artificials] in dense or CSC form."""

    def __init__(self, A, m: int):
        self.m = m
        n = A.shape[1]
        if m * (n + m) <= _DENSE_LIMIT:
            dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            self.M = np.hstack([dense, -np.eye(m)])
            self.MT = np.ascontiguousarray(self.M.T)
            self.dense = True
        else:
            self.M = sp.hstack([sp.csc_matrix(A), -sp.identity(m, format="csc")], format="csc")
            self.MT = self.M.T.tocsr()
            self.dense = False
        self.art_rows: list[int] = []
        self.art_sign: list[float] = []
        self.base_cols = n + m

    @property
    def ncols(self) -> int:
        return self.base_cols + len(self.art_rows)

    def add_artificial(self, row: int, sign: float) -> int:
        self.art_rows.append(int(row))
        self.art_sign.append(float(sign))
        return self.ncols - 1

    def col(self, q: int) -> np.ndarray:
        if q >= self.base_cols:
            k = q - self.base_cols
            out = np.zeros(self.m)
            out[self.art_rows[k]] = self.art_sign[k]
            return out
        if self.dense:
            return self.M[:, q]
        M = self.M
        out = np.zeros(self.m)
        lo, hi = M.indptr[q], M.indptr[q + 1]
        out[M.indices[lo:hi]] = M.data[lo:hi]
        return out

    def price(self, y: np.ndarray) -> np.ndarray:
        """M^T y over all columns."""
        base = self.MT @ y
        if self.art_rows:
            art = y[self.art_rows] * np.asarray(self.art_sign)
            return np.concatenate([base, art])
        return base

    def times(self, z: np.ndarray) -> np.ndarray:
        out = self.M @ z[:self.base_cols]
        if self.art_rows:
            np.add.at(out, self.art_rows, z[self.base_cols:] * np.asarray(self.art_sign))
        return out

    def basis_matrix(self, basis: np.ndarray) -> np.ndarray:
        if self.dense and not self.art_rows:
            return self.M[:, basis]
        return np.column_stack([self.col(int(q)) for q in basis])


class BoundedSimplex:
    def __init__(self, A, row_lo, row_hi, c, lb, ub, max_iter: int | None = None):
        self.m, self.n = A.shape
        self.cols = _Columns(A, self.m)
        self.c = np.asarray(c, dtype=float)
        self.lb = np.concatenate([np.asarray(lb, float), np.asarray(row_lo, float)])
        self.ub = np.concatenate([np.asarray(ub, float), np.asarray(row_hi, float)])
        self.max_iter = max_iter or 50 * (self.m + self.n) + 1000
        scale = max(1.0, float(np.max(np.abs(self.c), initial=0.0)))
        self.dtol = 1e-9 * scale
        finite = np.concatenate([self.lb[np.isfinite(self.lb)], self.ub[np.isfinite(self.ub)]])
        self.bscale = 1.0 + float(np.max(np.abs(finite), initial=0.0))
        self.ftol = 1e-9 * self.bscale
        self.ptol = 1e-9
        self.iterations = 0
        self._duals = None

    # -- setup ------------------------------------------------------------

    def _initial_basis(self):
        m, n = self.m, self.n
        z = np.zeros(n + m)
        status = np.full(n + m, LOWER, dtype=np.int8)
        lb, ub = self.lb, self.ub
        for j in range(n):
            if np.isfinite(lb[j]):
                z[j] = lb[j]
            elif np.isfinite(ub[j]):
                z[j] = ub[j]
                status[j] = UPPER
            else:
                status[j] = FREE
        activity = self.cols.times(z)
        basis = np.empty(m, dtype=np.int64)
        binv_diag = np.empty(m)
        art = []
        for i in range(m):
            s = activity[i]
            lo, hi = lb[n + i], ub[n + i]
            if lo - self.ftol <= s <= hi + self.ftol:
                basis[i] = n + i
                binv_diag[i] = -1.0
                z[n + i] = s
                status[n + i] = BASIC
            else:
                target = lo if s < lo else hi
                z[n + i] = target
                status[n + i] = LOWER if s < lo else UPPER
                sign = 1.0 if target - s > 0 else -1.0
                art.append((i, sign, abs(target - s)))
        extra = len(art)
        if extra:
            z = np.concatenate([z, np.zeros(extra)])
            status = np.concatenate([status, np.full(extra, BASIC, dtype=np.int8)])
            self.lb = np.concatenate([self.lb, np.zeros(extra)])
            self.ub = np.concatenate([self.ub, np.full(extra, np.inf)])
            for i, sign, val in art:
                q = self.cols.add_artificial(i, sign)
                basis[i] = q
                binv_diag[i] = sign
                z[q] = val
        self.z = z
        self.status = status
        self.basis = basis
        self.Binv = np.diag(binv_diag)
        self.num_art = extra
        self._since_refactor = 0
        self._fresh = True

    def _load_basis(self, wb: WarmBasis):
        for row, sign in zip(wb.art_rows, wb.art_sign):
            self.cols.add_artificial(row, sign)
        extra = len(wb.art_rows)
        if extra:
            self.lb = np.concatenate([self.lb, np.zeros(extra)])
            self.ub = np.concatenate([self.ub, np.zeros(extra)])
        self.num_art = 0
        self.basis = wb.basis.copy()
        status = wb.status.copy()
        lb, ub = self.lb, self.ub
        nb = status != BASIC
        # nonbasic columns sit on a finite bound matching their status
        to_upper = nb & (status == LOWER) & ~np.isfinite(lb) & np.isfinite(ub)
        to_lower = nb & (status == UPPER) & ~np.isfinite(ub) & np.isfinite(lb)
        status[to_upper] = UPPER
        status[to_lower] = LOWER
        free = nb & ~np.isfinite(lb) & ~np.isfinite(ub)
        status[free] = FREE
        z = np.zeros(len(status))
        at_lo = nb & (status == LOWER)
        at_hi = nb & (status == UPPER)
        z[at_lo] = lb[at_lo]
        z[at_hi] = ub[at_hi]
        self.status = status
        self.z = z
        if wb.binv is not None:
            self.Binv = wb.binv.copy()
            self._recompute_basic()
            self._since_refactor = 0
            self._fresh = False
        else:
            self._refactor()

    def _refactor(self):
        B = self.cols.basis_matrix(self.basis)
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LPNumericalError("singular basis during refactorization") from exc
        self._recompute_basic()
        self._since_refactor = 0
        self._fresh = True

    def _recompute_basic(self):
        z = self.z.copy()
        z[self.basis] = 0.0
        self.z[self.basis] = -self.Binv @ self.cols.times(z)

    def _pivot(self, r: int, q: int, alpha: np.ndarray) -> None:
        piv = alpha[r]
        row = self.Binv[r] / piv
        alpha = alpha.copy()
        alpha[r] = 0.0
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.status[q] = BASIC
        self._since_refactor += 1
        self._fresh = False
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()

    def _guard(self):
        if self.iterations >= self.max_iter:
            raise LPNumericalError(f"simplex iteration guard exhausted after {self.iterations} iterations")
        self.iterations += 1

    # -- primal iterations ------------------------------------------------------

    def _run(self, cost: np.ndarray, allow_unbounded: bool) -> str:
        stall = 0
        bland = False
        lb, ub = self.lb, self.ub
        room = ub - lb > 0
        while True:
            self._guard()
            y = cost[self.basis] @ self.Binv
            d = cost - self.cols.price(y)
            st = self.status
            up = ((st == LOWER) & room) | (st == FREE)
            down = ((st == UPPER) & room) | (st == FREE)
            eligible = (up & (d < -self.dtol)) | (down & (d > self.dtol))
            if not eligible.any():
                self._duals = y
                return OPTIMAL
            cand = np.flatnonzero(eligible)
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.Binv @ self.cols.col(q)
            delta = direction * alpha
            xB = self.z[self.basis]
            lbB, ubB = lb[self.basis], ub[self.basis]
            t = np.full(self.m, np.inf)
            # pivots tiny relative to the column make the next basis near-singular
            tol = max(self.ptol, _REL_PIVOT * float(np.max(np.abs(delta), initial=0.0)))
            pos = delta > tol
            neg = delta < -tol
            with np.errstate(invalid="ignore"):
                t[pos] = (xB[pos] - lbB[pos]) / delta[pos]
                t[neg] = (ubB[neg] - xB[neg]) / (-delta[neg])
            t = np.where(np.isnan(t), np.inf, np.maximum(t, 0.0))
            theta_b = float(t.min()) if self.m else np.inf
            flip = ub[q] - lb[q]
            if not np.isfinite(theta_b) and not np.isfinite(flip):
                if allow_unbounded:
                    return UNBOUNDED
                raise LPNumericalError("unbounded direction in phase 1")
            if flip <= theta_b:
                self.z[self.basis] -= flip * delta
                self.z[q] = ub[q] if direction > 0 else lb[q]
                self.status[q] = UPPER if direction > 0 else LOWER
                stall = 0
                bland = False
                continue
            ties = np.flatnonzero(t <= theta_b + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            theta = t[r]
            self.z[self.basis] -= theta * delta
            self.z[q] += direction * theta
            leaving = int(self.basis[r])
            if delta[r] > 0:
                self.status[leaving] = LOWER
                self.z[leaving] = lb[leaving]
            else:
                self.status[leaving] = UPPER
                self.z[leaving] = ub[leaving]
            if not np.isfinite(self.z[leaving]):
                self.status[leaving] = FREE
                self.z[leaving] = 0.0
            self._pivot(r, q, alpha)
            if theta * abs(d[q]) <= 1e-12 * self.bscale:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False

    def _drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis where a real column can replace them."""
        base = self.cols.base_cols
        for r in range(self.m):
            if self.basis[r] < base:
                continue
            rho = self.Binv[r]
            row = self.cols.price(rho)[:base]
            row[self.status[:base] == BASIC] = 0.0
            q = int(np.argmax(np.abs(row)))
            if abs(row[q]) <= 1e-7:
                continue  # redundant row: the artificial stays, fixed at zero
            leaving = int(self.basis[r])
            self.z[leaving] = 0.0
            self.status[leaving] = LOWER
            self._pivot(r, q, self.Binv @ self.cols.col(q))
        self._refactor()

    # -- dual iterations --------------------------------------------------------

    def _dual(self, cost: np.ndarray) -> str:
        lb, ub = self.lb, self.ub
        room = ub - lb > 0
        while True:
            xB = self.z[self.basis]
            lbB, ubB = lb[self.basis], ub[self.basis]
            viol = np.maximum(lbB - xB, xB - ubB)
            r = int(np.argmax(viol)) if self.m else 0
            if not self.m or viol[r] <= self.ftol:
                return OPTIMAL
            self._guard()
            below = xB[r] < lbB[r]
            target = lbB[r] if below else ubB[r]
            y = cost[self.basis] @ self.Binv
            d = cost - self.cols.price(y)
            arow = self.cols.price(self.Binv[r])
            st = self.status
            can_up = ((st == LOWER) & room) | (st == FREE)
            can_down = ((st == UPPER) & room) | (st == FREE)
            if below:
                cand = (can_up & (arow < -self.ptol)) | (can_down & (arow > self.ptol))
            else:
                cand = (can_up & (arow > self.ptol)) | (can_down & (arow < -self.ptol))
            if not cand.any():
                return INFEASIBLE
            idx = np.flatnonzero(cand)
            dj = d[idx]
            slack = np.where(st[idx] == LOWER, np.maximum(dj, 0.0),
                             np.where(st[idx] == UPPER, np.maximum(-dj, 0.0), np.abs(dj)))
            ratio = slack / np.abs(arow[idx])
            best = ratio.min()
            ties = idx[ratio <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(arow[ties]))])
            alpha = self.Binv @ self.cols.col(q)
            if abs(alpha[r] - arow[q]) > 1e-7 * (1.0 + abs(arow[q])):
                # the row and column views of the pivot disagree: the inverse has drifted
                if self._fresh:
                    raise LPNumericalError("inconsistent dual pivot after refactorization")
                self._refactor()
                continue
            step = (xB[r] - target) / alpha[r]
            self.z[self.basis] -= step * alpha
            self.z[q] += step
            leaving = int(self.basis[r])
            self.z[leaving] = target
            self.status[leaving] = LOWER if below else UPPER
            self._pivot(r, q, alpha)

    # -- drivers ------------------------------------------------------------------

    def solve(self) -> LPResult:
        self._initial_basis()
        ncols = self.cols.ncols
        if self.num_art:
            cost1 = np.zeros(ncols)
            cost1[self.cols.base_cols:] = 1.0
            self._run(cost1, allow_unbounded=False)
            self._refactor()
            infeas = float(self.z[self.cols.base_cols:].sum())
            if infeas > self.ftol * self.num_art:
                return LPResult(INFEASIBLE, iterations=self.iterations)
            self.lb[self.cols.base_cols:] = 0.0
            self.ub[self.cols.base_cols:] = 0.0
            self.z[self.cols.base_cols:] = 0.0
            self._drive_out_artificials()
        return self._finish()

    def warm_solve(self, wb: WarmBasis) -> LPResult:
        self._load_basis(wb)
        cost = np.zeros(self.cols.ncols)
        cost[:self.n] = self.c
        if self._dual(cost) == INFEASIBLE:
            return LPResult(INFEASIBLE, iterations=self.iterations, warm=True)
        res = self._finish()
        res.warm = True
        return res

    def _finish(self) -> LPResult:
        cost2 = np.zeros(self.cols.ncols)
        cost2[:self.n] = self.c
        status = self._run(cost2, allow_unbounded=True)
        if status == UNBOUNDED:
            return LPResult(UNBOUNDED, iterations=self.iterations)
        residual = self._refine()
        x = self.z[:self.n].copy()
        base = self.cols.base_cols
        art_basic = [k for k in range(len(self.cols.art_rows)) if self.status[base + k] == BASIC]
        keep = np.r_[np.arange(base), base + np.array(art_basic, dtype=np.int64)]
        remap = np.full(self.cols.ncols, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        wb = WarmBasis(remap[self.basis], self.status[keep].copy(),
                       tuple(self.cols.art_rows[k] for k in art_basic),
                       tuple(self.cols.art_sign[k] for k in art_basic), self.Binv.copy())
        return LPResult(OPTIMAL, x=x, objective=float(self.c @ x), iterations=self.iterations,
                        duals=self._duals, residual=residual, basis=wb)

    def _refine(self) -> float:
        """Recompute basic values from the nonbasic ones, then one residual correction."""
        if self._since_refactor > 16:
            self._refactor()
        else:
            self._recompute_basic()
        res = self.cols.times(self.z)
        self.z[self.basis] -= self.Binv @ res
        # snap basics that drifted just outside their bounds
        zb = self.z[self.basis]
        lbB, ubB = self.lb[self.basis], self.ub[self.basis]
        zb = np.where((zb < lbB) & (zb > lbB - self.ftol), lbB, zb)
        zb = np.where((zb > ubB) & (zb < ubB + self.ftol), ubB, zb)
        self.z[self.basis] = zb
        return float(np.max(np.abs(self.cols.times(self.z)), initial=0.0))


def solve_lp_arrays(A, row_lo, row_hi, c, lb, ub, max_iter: int | None = None,
                    warm: WarmBasis | None = None) -> LPResult:
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub):
        return LPResult(INFEASIBLE)
    if warm is not None:
        try:
            return BoundedSimplex(A, row_lo, row_hi, c, lb, ub, max_iter=max_iter).warm_solve(warm)
        except LPNumericalError:
            pass  # fall back to a cold start
    return BoundedSimplex(A, row_lo, row_hi, c, lb, ub, max_iter=max_iter).solve()


def solve_lp(model: MilpModel, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
             max_iter: int | None = None, warm: WarmBasis | None = None) -> LPResult:
    """Solve the continuous relaxation of ``model`` (integrality ignored).

    ``lb``/``ub`` override the model's variable bounds (used by branching);
    ``warm`` is the basis of an earlier solve of the same rows.  The returned
    objective includes ``model.obj_constant``.
    """
    lo, hi = model.row_bounds()
    res = solve_lp_arrays(model.A, lo, hi, model.obj,
                          model.lb if lb is None else lb,
                          model.ub if ub is None else ub, max_iter=max_iter, warm=warm)
    if res.status == OPTIMAL:
        res.objective += model.obj_constant
    return res
