"""Bounded revised simplex (primal and dual) on a sparse LU basis with product-form updates.

Every row ``i`` gets a logical variable ``r_i = A_i x`` whose bounds encode the row
sense, so the working system is ``A x - r = 0`` with ``lo <= (x, r) <= up``. The
all-logical basis is then ``-I`` and is dual feasible whenever the costs are
non-negative on variables sitting at their lower bounds, which is the normal case
for the supply-chain models. Otherwise a phase 1 with artificial variables is run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import NumericalBreakdown
from .options import SolveOptions, Status

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3


class _Deadline(Exception):
    pass


class _Unbounded(Exception):
    pass


class _Infeasible(Exception):
    pass


@dataclass(frozen=True)
class Basis:
    """Basis description: basic variable per row, and a status per variable (structurals then logicals)."""

    basic: np.ndarray
    status: np.ndarray


@dataclass
class LpOutcome:
    status: Status
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    dual_objective: float = float("nan")


def row_bounds(sense, rhs):
    sense = np.asarray(sense)
    rhs = np.asarray(rhs, dtype=float)
    lo = np.where(sense == "L", -np.inf, rhs)
    hi = np.where(sense == "G", np.inf, rhs)
    return lo, hi


class SimplexEngine:
    """Re-usable LP engine for a fixed matrix, cost vector and row bounds.

    Column bounds are supplied per :meth:`solve` call so branch-and-bound can
    change them between nodes and warm start from the parent basis.
    """

    def __init__(self, A, sense, rhs, c, opts: SolveOptions | None = None):
        self.opts = opts or SolveOptions()
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.row_lo, self.row_hi = row_bounds(sense, rhs)
        self.K = sp.hstack([A, -sp.identity(self.m, format="csc")], format="csc")
        self.KT = self.K.T.tocsr()
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(self.m)])

    def solve(self, lb, ub, warm: Basis | None = None, deadline: float | None = None) -> LpOutcome:
        lo = np.concatenate([np.asarray(lb, dtype=float), self.row_lo])
        up = np.concatenate([np.asarray(ub, dtype=float), self.row_hi])
        if self.m == 0:
            return self._bounds_only(lo, up)
        run = _Run(self, lo, up, deadline)
        try:
            status = run.solve(warm)
        except _Deadline:
            return LpOutcome(Status.TIME_LIMIT, iterations=run.iterations)
        except _Unbounded:
            return LpOutcome(Status.UNBOUNDED, iterations=run.iterations)
        if status is not Status.OPTIMAL:
            return LpOutcome(status, iterations=run.iterations)
        return run.outcome()

    def _bounds_only(self, lo, up):
        c = self.c
        if np.any(lo > up):
            return LpOutcome(Status.INFEASIBLE)
        x = np.where(c > 0, lo, np.where(c < 0, up, np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))))
        if not np.all(np.isfinite(x)):
            return LpOutcome(Status.UNBOUNDED)
        status = np.where(x == lo, AT_LOWER, np.where(x == up, AT_UPPER, AT_ZERO)).astype(np.int8)
        obj = float(c @ x)
        return LpOutcome(Status.OPTIMAL, obj, x.copy(), np.zeros(0), c.copy(),
                         Basis(np.zeros(0, dtype=np.int64), status), 0, obj)


class _Run:
    def __init__(self, eng: SimplexEngine, lo, up, deadline):
        self.eng = eng
        self.opts = eng.opts
        self.m, self.n = eng.m, eng.n
        self.K, self.KT, self.c = eng.K, eng.KT, eng.c
        self.lo, self.up = lo, up
        self.N = self.n + self.m
        self.deadline = deadline
        self.iterations = 0
        self.max_iter = self.opts.max_iter or 50 * (self.m + self.n) + 10_000
        self.tiny_pivots = 0

    # -- basis bookkeeping --------------------------------------------------

    def _default_status(self, lo, up):
        st = np.full(lo.shape, AT_LOWER, dtype=np.int8)
        st[~np.isfinite(lo)] = AT_UPPER
        st[~np.isfinite(lo) & ~np.isfinite(up)] = AT_ZERO
        return st

    def _place_nonbasic(self):
        """Put every nonbasic variable on a finite bound consistent with its status."""
        st, lo, up = self.status, self.lo, self.up
        nb = st != BASIC
        fix_lo = nb & (st == AT_LOWER) & ~np.isfinite(lo)
        st[fix_lo & np.isfinite(up)] = AT_UPPER
        fix_up = nb & (st == AT_UPPER) & ~np.isfinite(up)
        st[fix_up & np.isfinite(lo)] = AT_LOWER
        st[nb & ~np.isfinite(lo) & ~np.isfinite(up)] = AT_ZERO
        st[nb & (st == AT_ZERO) & np.isfinite(lo)] = AT_LOWER
        st[nb & (st == AT_ZERO) & np.isfinite(up) & ~np.isfinite(lo)] = AT_UPPER
        x = self.x
        x[nb & (st == AT_LOWER)] = lo[nb & (st == AT_LOWER)]
        x[nb & (st == AT_UPPER)] = up[nb & (st == AT_UPPER)]
        x[nb & (st == AT_ZERO)] = 0.0

    def _column(self, j):
        a = np.zeros(self.m)
        K = self.K
        lo, hi = K.indptr[j], K.indptr[j + 1]
        a[K.indices[lo:hi]] = K.data[lo:hi]
        return a

    def refactor(self):
        B = self.K[:, self.basic].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalBreakdown(f"basis factorisation failed: {exc}") from None
        self.etas = []
        xn = self.x.copy()
        xn[self.basic] = 0.0
        self.x[self.basic] = self.lu.solve(-(self.K @ xn))

    def ftran(self, a):
        v = self.lu.solve(a)
        for r, idx, vals, wr in self.etas:
            vr = v[r] / wr
            if vr != 0.0:
                v[idx] -= vals * vr
            v[r] = vr
        return v

    def btran(self, cb):
        v = np.array(cb, dtype=float)
        for r, idx, vals, wr in reversed(self.etas):
            v[r] = (v[r] - vals @ v[idx]) / wr
        return self.lu.solve(v, trans="T")

    def _push_eta(self, r, w):
        mask = np.abs(w) > 1e-14
        mask[r] = False
        idx = np.flatnonzero(mask)
        self.etas.append((r, idx, w[idx].copy(), w[r]))

    def _tick(self):
        self.iterations += 1
        if self.iterations > self.max_iter:
            raise NumericalBreakdown(f"simplex exceeded {self.max_iter} iterations")
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise _Deadline()

    def _reduced_costs(self, cost):
        y = self.btran(cost[self.basic])
        d = cost - self.KT @ y
        d[self.basic] = 0.0
        return y, d

    def _tiny_pivot(self, piv):
        if abs(piv) < 1e-10:
            self.tiny_pivots += 1
            if self.tiny_pivots > 5:
                raise NumericalBreakdown("repeated pivots below 1e-10")
            return True
        return False

    # -- driver -----------------------------------------------------------

    def solve(self, warm: Basis | None):
        tol = self.opts.opt_tol
        if warm is not None and len(warm.basic) == self.m and len(warm.status) == self.N:
            self.basic = np.array(warm.basic, dtype=np.int64)
            self.status = np.array(warm.status, dtype=np.int8)
            self.x = np.zeros(self.N)
            self._place_nonbasic()
            try:
                self.refactor()
                _, d = self._reduced_costs(self.c)
                if self._dual_feasible(d, tol):
                    return self._dual_then_primal(d)
                if self._primal_feasible():
                    return self._primal(self.c)
            except NumericalBreakdown:
                pass
        return self._cold()

    def _cold(self):
        self.basic = np.arange(self.n, self.N, dtype=np.int64)
        self.status = np.zeros(self.N, dtype=np.int8)
        self.status[: self.n] = self._default_status(self.lo[: self.n], self.up[: self.n])
        self.x = np.zeros(self.N)
        self._place_nonbasic()
        self.refactor()
        _, d = self._reduced_costs(self.c)
        if self._dual_feasible(d, self.opts.opt_tol):
            return self._dual_then_primal(d)
        return self._two_phase()

    def _dual_feasible(self, d, tol):
        st, lo, up = self.status, self.lo, self.up
        movable = lo < up
        bad = ((st == AT_LOWER) & movable & (d < -tol)) | ((st == AT_UPPER) & movable & (d > tol)) \
            | ((st == AT_ZERO) & (np.abs(d) > tol))
        return not bad.any()

    def _primal_feasible(self):
        xb = self.x[self.basic]
        ft = self.opts.feas_tol
        return bool(np.all(xb >= self.lo[self.basic] - ft) and np.all(xb <= self.up[self.basic] + ft))

    def _dual_then_primal(self, d):
        try:
            self._dual(d)
        except _Infeasible:
            return Status.INFEASIBLE
        return self._primal(self.c)

    # -- primal simplex ---------------------------------------------------

    def _primal(self, cost):
        opts = self.opts
        tol, ft, piv_tol = opts.opt_tol, opts.feas_tol, opts.pivot_tol
        stall, bland = 0, False
        while True:
            if len(self.etas) >= opts.refactor_every:
                self.refactor()
            _, d = self._reduced_costs(cost)
            st, lo, up = self.status, self.lo, self.up
            movable = lo < up
            inc = (st == AT_LOWER) & movable & (d < -tol)
            dec = (st == AT_UPPER) & movable & (d > tol)
            free = (st == AT_ZERO) & (np.abs(d) > tol)
            elig = inc | dec | free
            if not elig.any():
                return Status.OPTIMAL
            self._tick()
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if d[q] < 0 else -1.0
            w = self.ftran(self._column(q))
            alpha = direction * w
            basic = self.basic
            xb, lob, upb = self.x[basic], lo[basic], up[basic]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec_mask = (alpha > piv_tol) & np.isfinite(lob)
                inc_mask = (alpha < -piv_tol) & np.isfinite(upb)
                ratio = np.full(self.m, np.inf)
                ratio[dec_mask] = (xb[dec_mask] - lob[dec_mask]) / alpha[dec_mask]
                ratio[inc_mask] = (upb[inc_mask] - xb[inc_mask]) / -alpha[inc_mask]
                relaxed = np.full(self.m, np.inf)
                relaxed[dec_mask] = (xb[dec_mask] - lob[dec_mask] + ft) / alpha[dec_mask]
                relaxed[inc_mask] = (upb[inc_mask] - xb[inc_mask] + ft) / -alpha[inc_mask]
            flip = up[q] - lo[q]
            r = -1
            if np.isfinite(relaxed).any():
                if bland:
                    best = ratio.min()
                    cand = np.flatnonzero(ratio <= best + 1e-12)
                    r = int(cand[np.argmin(basic[cand])])
                else:
                    theta_max = relaxed.min()
                    cand = np.flatnonzero(ratio <= theta_max)
                    r = int(cand[np.argmax(np.abs(alpha[cand]))])
                theta = max(ratio[r], 0.0)
            else:
                theta = np.inf
            if flip <= theta:
                if not np.isfinite(flip):
                    raise _Unbounded()
                theta = flip
                r = -1
            if r >= 0 and self._tiny_pivot(w[r]):
                self.refactor()
                continue
            # update primal values
            self.x[basic] = xb - theta * alpha
            if r < 0:
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = up[q] if direction > 0 else lo[q]
            else:
                leave = basic[r]
                self.x[q] = self.x[q] + direction * theta
                if alpha[r] > 0:
                    self.x[leave], self.status[leave] = lob[r], AT_LOWER
                else:
                    self.x[leave], self.status[leave] = upb[r], AT_UPPER
                if lo[leave] == up[leave]:
                    self.status[leave] = AT_LOWER
                basic[r] = q
                self.status[q] = BASIC
                self._push_eta(r, w)
            if theta <= 1e-12:
                stall += 1
                if stall > opts.bland_after:
                    bland = True
            else:
                stall, bland = 0, False

    # -- dual simplex -----------------------------------------------------

    def _dual(self, d):
        opts = self.opts
        tol, ft, piv_tol = opts.opt_tol, opts.feas_tol, opts.pivot_tol
        stall, bland = 0, False
        retried = False
        while True:
            if len(self.etas) >= opts.refactor_every:
                self.refactor()
                _, d = self._reduced_costs(self.c)
            basic = self.basic
            xb, lob, upb = self.x[basic], self.lo[basic], self.up[basic]
            below = lob - xb
            above = xb - upb
            infeas = np.maximum(below, above)
            viol = infeas > ft
            if not viol.any():
                return
            self._tick()
            if bland:
                cand = np.flatnonzero(viol)
                r = int(cand[np.argmin(basic[cand])])
            else:
                r = int(np.argmax(infeas))
            to_lower = below[r] > above[r]
            target = lob[r] if to_lower else upb[r]
            delta = xb[r] - target
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self.btran(e)
            alpha = self.KT @ rho
            st = self.status
            movable = (self.lo < self.up) & (st != BASIC)
            if delta < 0:
                elig = movable & (((st == AT_LOWER) & (alpha < -piv_tol)) | ((st == AT_UPPER) & (alpha > piv_tol)))
            else:
                elig = movable & (((st == AT_LOWER) & (alpha > piv_tol)) | ((st == AT_UPPER) & (alpha < -piv_tol)))
            elig |= movable & (st == AT_ZERO) & (np.abs(alpha) > piv_tol)
            if not elig.any():
                raise _Infeasible()
            idx = np.flatnonzero(elig)
            a_abs = np.abs(alpha[idx])
            dj = np.abs(d[idx])
            # a wrongly signed reduced cost within tolerance counts as zero
            wrong = ((st[idx] == AT_LOWER) & (d[idx] < 0)) | ((st[idx] == AT_UPPER) & (d[idx] > 0))
            dj[wrong] = 0.0
            ratio = dj / a_abs
            if bland:
                best = ratio.min()
                cand = idx[ratio <= best + 1e-12]
                q = int(cand.min())
            else:
                theta_max = ((dj + tol) / a_abs).min()
                ok = ratio <= theta_max
                q = int(idx[ok][np.argmax(a_abs[ok])])
            w = self.ftran(self._column(q))
            if abs(w[r] - alpha[q]) > 1e-6 * (1.0 + abs(alpha[q])) or self._tiny_pivot(w[r]):
                if retried:
                    raise NumericalBreakdown("pivot element disagrees between row and column computation")
                retried = True
                self.refactor()
                _, d = self._reduced_costs(self.c)
                continue
            retried = False
            theta_p = delta / w[r]
            leave = basic[r]
            self.x[basic] = xb - theta_p * w
            self.x[q] += theta_p
            self.x[leave] = target
            self.status[leave] = AT_LOWER if (to_lower or self.lo[leave] == self.up[leave]) else AT_UPPER
            theta_d = d[q] / alpha[q]
            d = d - theta_d * alpha
            d[q] = 0.0
            basic[r] = q
            self.status[q] = BASIC
            self._push_eta(r, w)
            if abs(theta_d) <= 1e-12:
                stall += 1
                if stall > opts.bland_after:
                    bland = True
            else:
                stall, bland = 0, False

    # -- phase 1 with artificials -------------------------------------------

    def _two_phase(self):
        """Artificial phase 1 from the all-logical basis, then primal phase 2."""
        xb = self.x[self.basic]
        lob, upb = self.lo[self.basic], self.up[self.basic]
        rows = np.flatnonzero((xb < lob - self.opts.feas_tol) | (xb > upb + self.opts.feas_tol))
        if len(rows) == 0:
            try:
                return self._primal(self.c)
            except _Unbounded:
                return Status.UNBOUNDED
        # logical of each bad row goes to its nearest bound, an artificial absorbs the gap
        K0, KT0, c0, lo0, up0, N0 = self.K, self.KT, self.c, self.lo, self.up, self.N
        na = len(rows)
        sigma = np.empty(na)
        for i, row in enumerate(rows):
            j = self.n + row
            v = lob[row] if xb[row] < lob[row] else upb[row]
            self.status[j] = AT_LOWER if v == self.lo[j] else AT_UPPER
            self.x[j] = v
            sigma[i] = 1.0 if xb[row] < v else -1.0  # A_i x - v + sigma a = 0
            # A_i x = xb[row]; a = (v - xb)/sigma >= 0
        art = sp.csc_matrix((sigma, (rows, np.arange(na))), shape=(self.m, na))
        self.K = sp.hstack([K0, art], format="csc")
        self.KT = self.K.T.tocsr()
        self.N = N0 + na
        self.lo = np.concatenate([lo0, np.zeros(na)])
        self.up = np.concatenate([up0, np.full(na, np.inf)])
        self.c = np.concatenate([np.zeros(N0), np.ones(na)])
        self.x = np.concatenate([self.x, np.abs(xb[rows] - self.x[self.n + rows])])
        self.status = np.concatenate([self.status, np.full(na, BASIC, dtype=np.int8)])
        self.basic[rows] = N0 + np.arange(na)
        self.refactor()
        try:
            self._primal(self.c)
        except _Unbounded:
            raise NumericalBreakdown("phase 1 reported unbounded") from None
        infeas = float(self.x[N0:].sum())
        scale = max(1.0, float(np.max(np.abs(np.concatenate([lo0[np.isfinite(lo0)], up0[np.isfinite(up0)], [0.0]])))))
        if infeas > self.opts.feas_tol + 1e-9 * scale:
            return Status.INFEASIBLE
        # swap leftover artificials for the (collinear) logical of the same row
        for pos in np.flatnonzero(self.basic >= N0):
            row = rows[self.basic[pos] - N0]
            self.basic[pos] = self.n + row
        self.K, self.KT, self.c, self.lo, self.up, self.N = K0, KT0, c0, lo0, up0, N0
        self.status = self.status[:N0]
        self.status[self.basic] = BASIC
        self.x = self.x[:N0]
        self.refactor()
        try:
            return self._primal(self.c)
        except _Unbounded:
            return Status.UNBOUNDED

    # -- results ------------------------------------------------------------

    def outcome(self) -> LpOutcome:
        self.refactor()
        y, d = self._reduced_costs(self.c)
        x = self.x[: self.n].copy()
        obj = float(self.c[: self.n] @ x)
        # Lagrangian dual value: sum of d_j times the bound it pushes against
        dz = np.where(np.abs(d) <= self.opts.opt_tol, 0.0, d)
        with np.errstate(invalid="ignore"):
            terms = np.where(dz > 0, dz * self.lo, np.where(dz < 0, dz * self.up, 0.0))
        dual_obj = float(terms.sum())
        return LpOutcome(
            status=Status.OPTIMAL, objective=obj, x=x, duals=y, reduced_costs=d[: self.n].copy(),
            basis=Basis(self.basic.copy(), self.status.copy()), iterations=self.iterations,
            dual_objective=dual_obj,
        )
