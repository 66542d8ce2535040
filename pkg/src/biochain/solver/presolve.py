"""Optimality-safe reductions and the matching postsolve.

Reductions: drop fixed columns (folding them into right-hand sides and objective
offsets), drop empty and redundant rows, turn singleton rows into bounds, and
substitute out a continuous column of an equality row ``+-x_j +- x_k = b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ..model import EQ, GE, LE, MilpModel
from .options import Status


@dataclass
class PresolveResult:
    model: MilpModel | None
    status: Status | None
    col_map: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    row_map: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    stack: list = field(default_factory=list)
    n_original: int = 0
    message: str = ""

    @property
    def infeasible(self) -> bool:
        return self.status is Status.INFEASIBLE

    def postsolve(self, x_reduced) -> np.ndarray:
        """Full-space primal vector from a reduced-space one."""
        x = np.zeros(self.n_original)
        x[self.col_map] = x_reduced
        for rec in reversed(self.stack):
            if rec[0] == "fix":
                _, j, v = rec
                x[j] = v
            else:
                _, k, j, b, aj, ak = rec
                x[k] = (b - aj * x[j]) / ak
        return x


def presolve(model: MilpModel, int_tol: float = 1e-6, feas_tol: float = 1e-9) -> PresolveResult:
    return _Presolver(model, int_tol, feas_tol).run()


class _Presolver:
    def __init__(self, model: MilpModel, int_tol: float, feas_tol: float):
        self.model = model
        self.int_tol = int_tol
        self.tol = feas_tol
        A = model.A.tocsr()
        self.m, self.n = A.shape
        self.rows = [dict(zip(A.indices[A.indptr[i]:A.indptr[i + 1]].tolist(),
                              A.data[A.indptr[i]:A.indptr[i + 1]].tolist())) for i in range(self.m)]
        self.cols = [set() for _ in range(self.n)]
        for i, row in enumerate(self.rows):
            for j in row:
                self.cols[j].add(i)
        self.sense = list(model.sense)
        self.rhs = model.rhs.astype(float).tolist()
        self.lb = model.lb.astype(float).tolist()
        self.ub = model.ub.astype(float).tolist()
        self.integ = model.integrality.tolist()
        self.cost = model.cost.astype(float).tolist()
        self.ghg = model.ghg.astype(float).tolist()
        self.cost_offset = model.cost_offset
        self.ghg_offset = model.ghg_offset
        self.row_alive = [True] * self.m
        self.col_alive = [True] * self.n
        self.stack: list = []
        self.dirty_rows = set(range(self.m))
        self.dirty_cols = set(range(self.n))

    class _Infeasible(Exception):
        pass

    def run(self) -> PresolveResult:
        try:
            while self.dirty_rows or self.dirty_cols:
                cols, self.dirty_cols = sorted(self.dirty_cols), set()
                for j in cols:
                    if self.col_alive[j] and self.lb[j] == self.ub[j]:
                        self._fix(j, self.lb[j])
                rows, self.dirty_rows = sorted(self.dirty_rows), set()
                for i in rows:
                    if self.row_alive[i]:
                        self._row(i)
        except self._Infeasible as exc:
            return PresolveResult(None, Status.INFEASIBLE, n_original=self.n, message=str(exc))
        return self._result()

    # -- reductions ---------------------------------------------------------

    def _drop_row(self, i):
        self.row_alive[i] = False
        for j in self.rows[i]:
            self.cols[j].discard(i)
        self.rows[i] = {}

    def _fix(self, j, v):
        for i in sorted(self.cols[j]):
            a = self.rows[i].pop(j)
            self.rhs[i] -= a * v
            self.dirty_rows.add(i)
        self.cols[j] = set()
        self.cost_offset += self.cost[j] * v
        self.ghg_offset += self.ghg[j] * v
        self.col_alive[j] = False
        self.stack.append(("fix", j, v))

    def _set_bounds(self, j, lo, hi):
        if self.integ[j]:
            lo = math.ceil(lo - self.int_tol) if math.isfinite(lo) else lo
            hi = math.floor(hi + self.int_tol) if math.isfinite(hi) else hi
        lo, hi = max(self.lb[j], lo), min(self.ub[j], hi)
        if lo > hi:
            scale = max(1.0, abs(lo), abs(hi))
            if lo - hi > self.tol * scale:
                raise self._Infeasible(f"column {self.model.col_names[j]} has empty domain [{lo}, {hi}]")
            lo = hi
        if (lo, hi) != (self.lb[j], self.ub[j]):
            self.lb[j], self.ub[j] = float(lo), float(hi)
            self.dirty_cols.add(j)

    def _row(self, i):
        row, sense, b = self.rows[i], self.sense[i], self.rhs[i]
        if (sense == LE and b == math.inf) or (sense == GE and b == -math.inf):
            self._drop_row(i)
            return
        if not row:
            scale = max(1.0, abs(b)) if math.isfinite(b) else 1.0
            ok = {LE: 0 <= b + self.tol * scale, GE: 0 >= b - self.tol * scale,
                  EQ: abs(b) <= self.tol * scale}[sense]
            if not ok:
                raise self._Infeasible(f"row {self.model.row_names[i]} reads 0 {sense} {b}")
            self._drop_row(i)
            return
        if len(row) == 1:
            (j, a), = row.items()
            bound = b / a
            if sense == EQ:
                self._set_bounds(j, bound, bound)
            elif (sense == LE) == (a > 0):
                self._set_bounds(j, -math.inf, bound)
            else:
                self._set_bounds(j, bound, math.inf)
            self._drop_row(i)
            return
        if len(row) == 2 and sense == EQ and math.isfinite(b):
            (j1, a1), (j2, a2) = sorted(row.items())
            if abs(a1) == 1.0 and abs(a2) == 1.0:
                choices = [k for k in (j1, j2) if not self.integ[k]]
                if choices:
                    k = min(choices, key=lambda c: (len(self.cols[c]), -c))
                    j = j2 if k == j1 else j1
                    self._substitute(i, k, j, b, row[j], row[k])

    def _substitute(self, i, k, j, b, aj, ak):
        """Eliminate x_k = (b - aj x_j) / ak using equality row ``i``."""
        s = ak / aj
        base = b / aj
        lk, uk = self.lb[k], self.ub[k]
        # x_j = base - s x_k
        if s > 0:
            lo, hi = base - uk, base - lk
        else:
            lo, hi = base + lk, base + uk
        self._drop_row(i)
        for r in sorted(self.cols[k]):
            a_rk = self.rows[r].pop(k)
            self.rhs[r] -= a_rk * b / ak
            new = self.rows[r].get(j, 0.0) - a_rk * aj / ak
            if abs(new) < 1e-12:
                self.rows[r].pop(j, None)
                self.cols[j].discard(r)
            else:
                self.rows[r][j] = new
                self.cols[j].add(r)
            self.dirty_rows.add(r)
        self.cols[k] = set()
        for vec, attr in ((self.cost, "cost_offset"), (self.ghg, "ghg_offset")):
            ck = vec[k]
            if ck:
                setattr(self, attr, getattr(self, attr) + ck * b / ak)
                vec[j] -= ck * aj / ak
                vec[k] = 0.0
        self.col_alive[k] = False
        self.stack.append(("sub", k, j, b, aj, ak))
        self._set_bounds(j, lo, hi)
        self.dirty_cols.add(j)
        for r in self.cols[j]:
            self.dirty_rows.add(r)

    # -- output -------------------------------------------------------------

    def _result(self) -> PresolveResult:
        col_map = np.array([j for j in range(self.n) if self.col_alive[j]], dtype=np.int64)
        row_map = np.array([i for i in range(self.m) if self.row_alive[i]], dtype=np.int64)
        new_col = {int(j): c for c, j in enumerate(col_map)}
        r_idx, c_idx, vals = [], [], []
        for new_i, i in enumerate(row_map):
            for j, v in sorted(self.rows[i].items()):
                r_idx.append(new_i)
                c_idx.append(new_col[j])
                vals.append(v)
        A = sp.csr_matrix((np.array(vals, dtype=float), (np.array(r_idx, dtype=np.int64),
                                                       np.array(c_idx, dtype=np.int64))),
                          shape=(len(row_map), len(col_map)))
        A.sort_indices()
        m = self.model
        eps_row = None
        if m.epsilon_row is not None and self.row_alive[m.epsilon_row]:
            eps_row = int(np.searchsorted(row_map, m.epsilon_row))
        arr = np.asarray
        reduced = replace(
            m, A=A,
            sense=arr(self.sense, dtype="<U1")[row_map] if len(row_map) else np.zeros(0, dtype="<U1"),
            rhs=arr(self.rhs, dtype=float)[row_map] if len(row_map) else np.zeros(0),
            lb=arr(self.lb, dtype=float)[col_map], ub=arr(self.ub, dtype=float)[col_map],
            integrality=arr(self.integ, dtype=bool)[col_map],
            cost=arr(self.cost, dtype=float)[col_map], ghg=arr(self.ghg, dtype=float)[col_map],
            col_names=tuple(m.col_names[j] for j in col_map), row_names=tuple(m.row_names[i] for i in row_map),
            cost_offset=self.cost_offset, ghg_offset=self.ghg_offset, epsilon_row=eps_row,
        )
        return PresolveResult(reduced, None, col_map, row_map, self.stack, self.n)
