"""Export a :class:`MilpModel` in the CPLEX LP text format."""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .model import MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.\[\]]")
_LINE = 240


def _name(raw: str) -> str:
    clean = _BAD.sub("_", raw)
    if not clean or clean[0].isdigit() or clean[0] in ".eE":
        clean = "_" + clean
    return clean


def _num(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def _linear(cols, vals, names) -> list[str]:
    terms = []
    for j, v in zip(cols, vals):
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else _num(mag) + " "
        terms.append(f"{sign} {coef}{names[j]}")
    return terms or ["0 " + names[0]] if names else ["0"]


def _wrap(prefix: str, terms: list[str], suffix: str = "") -> list[str]:
    lines, cur = [], prefix
    for t in terms + ([suffix] if suffix else []):
        if len(cur) + len(t) + 1 > _LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    lines.append(cur)
    return lines


def to_lp_string(model: MilpModel) -> str:
    names = [_name(n) for n in model.var_names]
    out = [f"\\ {model.name}", "Minimize"]
    obj = model.obj
    nz = np.flatnonzero(obj)
    terms = _linear(nz, obj[nz], names)
    if model.obj_constant:
        terms.append(("+ " if model.obj_constant > 0 else "- ") + _num(abs(model.obj_constant)))
    out += _wrap(" obj:", terms)
    out.append("Subject To")
    A = model.A.tocsr()
    ops = {-1: "<=", 0: "=", 1: ">="}
    for i in range(model.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        terms = _linear(A.indices[lo:hi], A.data[lo:hi], names)
        out += _wrap(f" {_name(model.row_names[i])}:", terms,
                     f"{ops[int(model.sense[i])]} {_num(model.rhs[i])}")
    out.append("Bounds")
    for j, (l, u) in enumerate(zip(model.lb, model.ub)):
        n = names[j]
        if l == u:
            out.append(f" {n} = {_num(l)}")
        elif math.isinf(l) and math.isinf(u):
            out.append(f" {n} free")
        elif math.isinf(u):
            if l != 0:
                out.append(f" {n} >= {_num(l)}")
        else:
            lo_s = "-inf" if math.isinf(l) else _num(l)
            out.append(f" {lo_s} <= {n} <= {_num(u)}")
    ints = [names[j] for j in np.flatnonzero(model.integer)]
    if ints:
        out.append("General")
        out += _wrap("", ints)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: MilpModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(to_lp_string(model))
    return path
