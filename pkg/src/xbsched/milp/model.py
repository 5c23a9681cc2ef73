"""Sparse MILP container (minimization).

Rows are stored as COO triplets in float64.  Rows given with rational
coefficients are multiplied by the least common multiple of their
denominators before conversion, so such rows hold integers exactly and can be
re-checked without rounding error on integer points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "==", ">="
_SENSE_CODE = {LE: -1, EQ: 0, GE: 1}
_CODE_SENSE = {-1: LE, 0: EQ, 1: GE}

# Rows whose scaled coefficients would exceed this are kept in float form.
MAX_ROW_SCALE = 10**9


class ModelError(ValueError):
    pass


def _as_rational(v) -> Fraction | None:
    if isinstance(v, (bool, np.bool_)):
        return Fraction(int(v))
    if isinstance(v, (int, np.integer, Rational)):
        return Fraction(v)
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return Fraction(int(v))
    return None


@dataclass
class Incumbent:
    x: np.ndarray
    objective: float


class MilpModel:
    """Variables with bounds, integrality and objective; linear rows."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.obj_constant = 0.0
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._obj: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._names: list[str] = []
        self._n = 0
        self._ri: list[np.ndarray] = []
        self._ci: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._scale: list[np.ndarray] = []
        self._exact: list[np.ndarray] = []
        self._row_names: list[str] = []
        self._m = 0
        self._cache: dict = {}

    # -- building ---------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return self._n

    @property
    def num_rows(self) -> int:
        return self._m

    def add_var(self, name: str | None = None, lb=0.0, ub=math.inf, integer=False, obj=0.0) -> int:
        return int(self.add_vars(1, lb=lb, ub=ub, integer=integer, obj=obj,
                                 names=None if name is None else [name])[0])

    def add_vars(self, count: int, lb=0.0, ub=math.inf, integer=False, obj=0.0,
                 names: Sequence[str] | None = None, prefix: str = "x") -> np.ndarray:
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy()
        obj = np.broadcast_to(np.asarray(obj, dtype=float), (count,)).copy()
        integer = np.broadcast_to(np.asarray(integer, dtype=bool), (count,)).copy()
        if np.any(lb > ub):
            bad = int(np.flatnonzero(lb > ub)[0])
            raise ModelError(f"variable {self._n + bad}: lb {lb[bad]} > ub {ub[bad]}")
        if not np.all(np.isfinite(obj)):
            raise ModelError("objective coefficients must be finite")
        if names is None:
            names = [f"{prefix}{self._n + i}" for i in range(count)]
        elif len(names) != count:
            raise ModelError("names length does not match count")
        idx = np.arange(self._n, self._n + count)
        self._lb.append(lb)
        self._ub.append(ub)
        self._obj.append(obj)
        self._int.append(integer)
        self._names.extend(names)
        self._n += count
        self._cache.clear()
        return idx

    def add_row(self, coefs: Mapping[int, object] | tuple[Sequence[int], Sequence[object]],
                sense: str, rhs, name: str | None = None) -> int:
        """Add one row; rational data is scaled to integers (see module doc)."""
        if isinstance(coefs, Mapping):
            cols = list(coefs.keys())
            vals = list(coefs.values())
        else:
            cols, vals = list(coefs[0]), list(coefs[1])
        if sense not in _SENSE_CODE:
            raise ModelError(f"unknown sense {sense!r}")
        rats = [_as_rational(v) for v in vals] + [_as_rational(rhs)]
        scale = 1
        exact = all(r is not None for r in rats)
        if exact:
            for r in rats:
                scale = math.lcm(scale, r.denominator)
            if scale > MAX_ROW_SCALE:
                exact = False
                scale = 1
        if exact:
            fvals = np.array([float(r * scale) for r in rats[:-1]], dtype=float)
            frhs = float(rats[-1] * scale)
        else:
            fvals = np.array([float(v) for v in vals], dtype=float)
            frhs = float(rhs)
        self.add_rows(np.zeros(len(cols), dtype=np.int64), np.asarray(cols, dtype=np.int64), fvals,
                      [sense], [frhs], names=None if name is None else [name],
                      scale=[scale], exact=[exact])
        return self._m - 1

    def add_rows(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, senses: Sequence[str],
                 rhs: Sequence[float], names: Sequence[str] | None = None,
                 scale: Sequence[float] | None = None, exact: Sequence[bool] | None = None,
                 prefix: str = "r") -> np.ndarray:
        """Bulk add; ``rows`` are local indices 0..len(rhs)-1."""
        k = len(rhs)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        if rows.shape != cols.shape or rows.shape != vals.shape:
            raise ModelError("rows, cols and vals must have equal length")
        if len(cols) and (cols.min() < 0 or cols.max() >= self._n):
            raise ModelError("row references an unknown variable")
        if len(rows) and (rows.min() < 0 or rows.max() >= k):
            raise ModelError("local row index out of range")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rhs))):
            raise ModelError("row coefficients and right-hand sides must be finite")
        codes = np.array([_SENSE_CODE[s] for s in senses], dtype=np.int8)
        if len(codes) != k:
            raise ModelError("senses length does not match rhs")
        if exact is None:
            exact = np.ones(k, dtype=bool)
            if len(vals):
                bad_rows = rows[vals != np.round(vals)]
                exact[bad_rows] = False
            exact &= rhs == np.round(rhs)
        if names is None:
            names = [f"{prefix}{self._m + i}" for i in range(k)]
        self._ri.append(rows + self._m)
        self._ci.append(cols)
        self._v.append(vals)
        self._sense.append(codes)
        self._rhs.append(rhs)
        self._scale.append(np.ones(k) if scale is None else np.asarray(scale, dtype=float))
        self._exact.append(np.asarray(exact, dtype=bool))
        self._row_names.extend(names)
        idx = np.arange(self._m, self._m + k)
        self._m += k
        self._cache.clear()
        return idx

    def set_bounds(self, col: int, lb=None, ub=None) -> None:
        arrays = self._arrays()
        if lb is not None:
            arrays["lb"][col] = lb
        if ub is not None:
            arrays["ub"][col] = ub
        if arrays["lb"][col] > arrays["ub"][col]:
            raise ModelError(f"variable {col}: lb > ub")

    # -- finalized views --------------------------------------------------

    def _arrays(self) -> dict:
        if "lb" not in self._cache:
            cat = lambda chunks, dt: np.concatenate(chunks).astype(dt) if chunks else np.zeros(0, dt)
            self._lb = [cat(self._lb, float)]
            self._ub = [cat(self._ub, float)]
            self._obj = [cat(self._obj, float)]
            self._int = [cat(self._int, bool)]
            self._cache.update(lb=self._lb[0], ub=self._ub[0], obj=self._obj[0], integer=self._int[0])
        return self._cache

    @property
    def lb(self) -> np.ndarray:
        return self._arrays()["lb"]

    @property
    def ub(self) -> np.ndarray:
        return self._arrays()["ub"]

    @property
    def obj(self) -> np.ndarray:
        return self._arrays()["obj"]

    @property
    def integer(self) -> np.ndarray:
        return self._arrays()["integer"]

    @property
    def var_names(self) -> list[str]:
        return self._names

    @property
    def row_names(self) -> list[str]:
        return self._row_names

    def _row_arrays(self) -> dict:
        if "A" not in self._cache:
            cat = lambda chunks, dt: np.concatenate(chunks).astype(dt) if chunks else np.zeros(0, dt)
            ri, ci, v = cat(self._ri, np.int64), cat(self._ci, np.int64), cat(self._v, float)
            self._ri, self._ci, self._v = [ri], [ci], [v]
            for attr, dt in (("_sense", np.int8), ("_rhs", float), ("_scale", float), ("_exact", bool)):
                setattr(self, attr, [cat(getattr(self, attr), dt)])
            A = sp.csr_matrix((v, (ri, ci)), shape=(self._m, self._n))
            A.sum_duplicates()
            self._cache.update(A=A, sense=self._sense[0], rhs=self._rhs[0],
                               scale=self._scale[0], exact=self._exact[0])
        return self._cache

    @property
    def A(self) -> sp.csr_matrix:
        return self._row_arrays()["A"]

    @property
    def sense(self) -> np.ndarray:
        """Row sense codes: -1 for <=, 0 for ==, 1 for >=."""
        return self._row_arrays()["sense"]

    @property
    def rhs(self) -> np.ndarray:
        return self._row_arrays()["rhs"]

    @property
    def row_scale(self) -> np.ndarray:
        return self._row_arrays()["scale"]

    @property
    def row_exact(self) -> np.ndarray:
        return self._row_arrays()["exact"]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        s, b = self.sense, self.rhs
        lo = np.where(s >= 0, b, -np.inf)
        hi = np.where(s <= 0, b, np.inf)
        return lo, hi

    def row_sense(self, i: int) -> str:
        return _CODE_SENSE[int(self.sense[i])]

    # -- checks -----------------------------------------------------------

    def objective(self, x: np.ndarray) -> float:
        return float(self.obj @ x) + self.obj_constant

    def violations(self, x: np.ndarray, tol: float = 1e-6) -> list[tuple[str, float]]:
        """(name, amount) for every bound, row and integrality violation > tol.

        Row amounts are reported in original (unscaled) units.
        """
        x = np.asarray(x, dtype=float)
        out = []
        lb, ub = self.lb, self.ub
        for j in np.flatnonzero(x < lb - tol):
            out.append((f"lb:{self._names[j]}", float(lb[j] - x[j])))
        for j in np.flatnonzero(x > ub + tol):
            out.append((f"ub:{self._names[j]}", float(x[j] - ub[j])))
        frac = np.abs(x - np.round(x))
        for j in np.flatnonzero(self.integer & (frac > tol)):
            out.append((f"int:{self._names[j]}", float(frac[j])))
        if self._m:
            ax = self.A @ x
            lo, hi = self.row_bounds()
            viol = np.maximum(lo - ax, ax - hi) / self.row_scale
            for i in np.flatnonzero(viol > tol):
                out.append((self._row_names[i], float(viol[i])))
        return out

    def max_violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        if self._m:
            ax = self.A @ x
            lo, hi = self.row_bounds()
            worst = max(worst, float(np.max(np.maximum(lo - ax, ax - hi) / self.row_scale, initial=0.0)))
        return worst

    def exact_violations(self, x: np.ndarray) -> list[str]:
        """Row violations of an integer point, evaluated without tolerance.

        Only rows stored exactly (integer data) are checked exactly; other rows
        use a 1e-9 tolerance.
        """
        xi = np.round(np.asarray(x, dtype=float))
        out = []
        if not self._m:
            return out
        ax = self.A @ xi
        lo, hi = self.row_bounds()
        exact = self.row_exact
        tol = np.where(exact, 0.0, 1e-9 * (1 + np.abs(self.rhs)))
        bad = (ax < lo - tol) | (ax > hi + tol)
        for i in np.flatnonzero(bad):
            out.append(self._row_names[i])
        return out

    def copy(self) -> "MilpModel":
        other = MilpModel(self.name)
        arr = self._arrays()
        rows = self._row_arrays()
        other.add_vars(self._n, arr["lb"], arr["ub"], arr["integer"], arr["obj"], names=list(self._names))
        coo = rows["A"].tocoo()
        other.add_rows(coo.row, coo.col, coo.data, [_CODE_SENSE[int(s)] for s in rows["sense"]],
                       rows["rhs"], names=list(self._row_names), scale=rows["scale"], exact=rows["exact"])
        other.obj_constant = self.obj_constant
        return other

    def relaxed(self) -> "MilpModel":
        other = self.copy()
        other._arrays()["integer"][:] = False
        return other

    def fixed(self, values: Mapping[int, float]) -> "MilpModel":
        """Copy with the given variables fixed to values."""
        other = self.copy()
        arr = other._arrays()
        for j, v in values.items():
            arr["lb"][j] = v
            arr["ub"][j] = v
        return other


def warm_start(model: MilpModel, x: Iterable[float], tol: float = 1e-6) -> Incumbent:
    """Validate a full starting point and wrap it as an incumbent.

    Raises :class:`ModelError` naming the first violated row, bound or
    integrality requirement.
    """
    x = np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=float)
    if x.shape != (model.num_vars,):
        raise ModelError(f"warm start has {x.shape[0]} values, model has {model.num_vars} variables")
    x = np.where(model.integer, np.round(x), x) if np.all(np.abs(x - np.round(x))[model.integer] <= tol) else x
    viol = model.violations(x, tol)
    if viol:
        name, amount = max(viol, key=lambda t: t[1])
        raise ModelError(f"infeasible warm start: {name} violated by {amount:.6g}")
    return Incumbent(x, model.objective(x))
