"""Bounded-variable revised simplex with Dantzig pricing and a Bland fallback.

The solver works on an internal equality form ``A x = b, l <= x <= u``
obtained by appending one slack column per row, plus one artificial column
per row (identity block) used only by phase 1: rows whose all-slack start
violates slack bounds get a signed unit cost on their artificial, all other
artificials stay fixed at zero. Phase 2 optimizes the real objective with
every artificial pinned to zero.

The basis inverse is kept explicitly (BLAS rank-1 updates, periodic
refactorization) and reduced costs are maintained incrementally from the
pivot row, so a pivot costs O(m^2 + nnz). Dantzig pricing (most negative
reduced cost) is the default; after a streak of 50 degenerate pivots the
solver switches to Bland's rule until it makes progress again, which
bounds degenerate cycling. Optimality is only declared after exact
repricing and a primal residual check against freshly recomputed data.

Re-solves over the same matrix with different variable bounds (the branch
and bound pattern) can adopt a previous solution's basis: bound changes
leave it dual feasible, so a short dual-simplex loop restores primal
feasibility before the primal loop certifies the result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

from .problem import LE, GE, MilpProblem, MilpSolution, SolveStatus

# nonbasic-at-lower / -upper / free-at-zero / basic markers
_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3

_TOL_RC = 1e-9      # reduced-cost threshold for entering candidates
_TOL_PIVOT = 1e-9   # smallest acceptable pivot magnitude
_TOL_DEGEN = 1e-10  # step sizes below this count as degenerate
_BLAND_STREAK = 50  # degenerate pivots before falling back to Bland's rule
_REFACTOR_EVERY = 300
_DUAL_CAP = 2000    # dual warm-start pivots before giving up on the basis


class _StandardForm:
    """Equality form of a MilpProblem: structurals, slacks, then artificials."""

    def __init__(self, problem: MilpProblem):
        n, m = problem.n_vars, problem.n_rows
        self.n_struct = n
        self.m = m
        self.n_real = n + m  # structural + slack columns
        self.sense = problem.sense
        A = problem.matrix()

        lb = np.asarray(problem.lower, dtype=float)
        ub = np.asarray(problem.upper, dtype=float)
        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for k, s in enumerate(problem.row_senses):
            if s == LE:
                slack_ub[k] = np.inf
            elif s == GE:
                slack_lb[k] = -np.inf
        self.lb = np.concatenate([lb, slack_lb])
        self.ub = np.concatenate([ub, slack_ub])

        c = np.asarray(problem.obj, dtype=float)
        if problem.sense == "max":
            c = -c
        self.c = np.concatenate([c, np.zeros(m)])
        self.b = np.asarray(problem.rhs, dtype=float)
        eye = sp.eye(m, format="csc")
        self.A = sp.hstack([A, eye, eye], format="csc")
        self.At = self.A.T.tocsr()
        self.b_scale = max(1.0, float(np.abs(self.b).max(initial=0.0)))
        self._dense = None

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.A.toarray()
        return self._dense

    def with_bounds(self, lb_struct: np.ndarray, ub_struct: np.ndarray) -> "_StandardForm":
        clone = object.__new__(_StandardForm)
        clone.__dict__.update(self.__dict__)
        clone.lb = self.lb.copy()
        clone.ub = self.ub.copy()
        clone.lb[: self.n_struct] = lb_struct
        clone.ub[: self.n_struct] = ub_struct
        return clone


@dataclass
class _Basis:
    """Portable warm-start state: basis columns and all column statuses."""

    basis: np.ndarray
    stat: np.ndarray
    Binv: np.ndarray | None = None


@dataclass
class _CoreResult:
    status: SolveStatus
    x: np.ndarray          # values of structural + slack columns
    objective: float       # minimize-sense objective
    iterations: int
    warm: _Basis | None = field(default=None, repr=False)


def _initial_point(lb, ub):
    """Nonbasic start: each variable at its finite bound nearest zero, free ones at 0."""
    x = np.zeros(lb.shape[0])
    stat = np.full(lb.shape[0], _FREE, dtype=np.int8)
    finite_l, finite_u = np.isfinite(lb), np.isfinite(ub)
    at_lower = finite_l
    at_upper = ~finite_l & finite_u
    x[at_lower] = lb[at_lower]
    x[at_upper] = ub[at_upper]
    stat[at_lower] = _AT_LOWER
    stat[at_upper] = _AT_UPPER
    return x, stat


class _Simplex:
    """Primal/dual iteration engine over one standard form instance."""

    def __init__(self, form: _StandardForm, tol_feas: float, max_iter: int):
        self.form = form
        self.tol_feas = tol_feas
        self.max_iter = max_iter
        self.iterations = 0
        m = form.m
        self.n_cols = form.n_real + m
        self.lb = np.concatenate([form.lb, np.zeros(m)])
        self.ub = np.concatenate([form.ub, np.zeros(m)])
        self.c2 = np.zeros(self.n_cols)
        self.c2[: form.n_real] = form.c

    # -- entry points ---------------------------------------------------------

    def solve_cold(self) -> _CoreResult:
        form = self.form
        m, n_real = form.m, form.n_real
        x = np.zeros(self.n_cols)
        stat = np.full(self.n_cols, _AT_LOWER, dtype=np.int8)
        x[:n_real], stat[:n_real] = _initial_point(form.lb, form.ub)

        # all-slack basis; rows whose slack would sit outside its bounds hand
        # the violation to their artificial column instead
        residual = form.b - form.A[:, : form.n_struct] @ x[: form.n_struct]
        basis = np.arange(form.n_struct, n_real)
        c1 = np.zeros(self.n_cols)
        n_bad = 0
        for k in range(m):
            j = form.n_struct + k
            r = residual[k]
            if self.lb[j] - self.tol_feas <= r <= self.ub[j] + self.tol_feas:
                x[j] = r
                stat[j] = _BASIC
            else:
                bound = self.lb[j] if r < self.lb[j] else self.ub[j]
                x[j] = bound
                stat[j] = _AT_LOWER if bound == self.lb[j] else _AT_UPPER
                a = n_real + k
                v = r - bound
                if v > 0:
                    self.ub[a], c1[a] = np.inf, 1.0
                else:
                    self.lb[a], c1[a] = -np.inf, -1.0
                x[a] = v
                stat[a] = _BASIC
                basis[k] = a
                n_bad += 1

        self.x, self.stat, self.basis = x, stat, basis
        self.refactor()

        if n_bad:
            status = self.primal(c1)
            if status is SolveStatus.UNBOUNDED:
                raise ArithmeticError("phase-1 objective unbounded: numerical failure")
            if status is not SolveStatus.OPTIMAL:
                return self._result(status)
            infeas = float(c1[n_real:] @ self.x[n_real:])
            if infeas > self.tol_feas * self.form.b_scale:
                return self._result(SolveStatus.INFEASIBLE)
            self._pin_artificials()

        return self._result(self.primal(self.c2))

    def solve_warm(self, warm: _Basis) -> _CoreResult | None:
        """Re-solve after bound changes from an adopted basis; None = give up."""
        form = self.form
        self.basis = warm.basis.copy()
        self.stat = warm.stat.copy()
        x = np.zeros(self.n_cols)
        at_l = (self.stat == _AT_LOWER) & np.isfinite(self.lb)
        at_u = (self.stat == _AT_UPPER) & np.isfinite(self.ub)
        x[at_l] = self.lb[at_l]
        x[at_u] = self.ub[at_u]
        # nonbasics whose recorded bound vanished restart at the other one
        stranded = (self.stat != _BASIC) & ~at_l & ~at_u
        x[stranded & np.isfinite(self.lb)] = self.lb[stranded & np.isfinite(self.lb)]
        self.stat[stranded] = np.where(
            np.isfinite(self.lb[stranded]), _AT_LOWER, np.where(np.isfinite(self.ub[stranded]), _AT_UPPER, _FREE)
        ).astype(np.int8)
        x[stranded & ~np.isfinite(self.lb) & np.isfinite(self.ub)] = self.ub[
            stranded & ~np.isfinite(self.lb) & np.isfinite(self.ub)
        ]
        self.x = x
        self._pin_artificials()

        if warm.Binv is not None:
            self.Binv = np.asfortranarray(warm.Binv.copy())
            self._recompute_basics()
            self._since_refactor = 0
        else:
            try:
                self.refactor()
            except np.linalg.LinAlgError:
                return None

        status = self.dual(self.c2)
        if status is None:
            return None
        if status is SolveStatus.INFEASIBLE:
            return self._result(status)
        return self._result(self.primal(self.c2))

    def _pin_artificials(self):
        n_real = self.form.n_real
        self.lb[n_real:] = 0.0
        self.ub[n_real:] = 0.0
        nb = self.stat[n_real:] != _BASIC
        self.stat[n_real:][nb] = _AT_LOWER
        self.x[n_real:][nb] = 0.0

    def _result(self, status) -> _CoreResult:
        n_real = self.form.n_real
        xs = self.x[:n_real].copy()
        obj = float(self.form.c @ xs)
        warm = _Basis(self.basis.copy(), self.stat.copy(), self.Binv)
        return _CoreResult(status, xs, obj, self.iterations, warm)

    # -- basis maintenance ----------------------------------------------------

    def refactor(self):
        B = self.form.dense[:, self.basis]
        self.Binv = np.asfortranarray(np.linalg.inv(B))
        self._recompute_basics()
        self._since_refactor = 0

    def _recompute_basics(self):
        xt = self.x.copy()
        xt[self.basis] = 0.0
        rhs = self.form.b - self.form.A @ xt
        self.x[self.basis] = self.Binv @ rhs

    def _exact_d(self, c):
        y = c[self.basis] @ self.Binv
        return c - self.form.At @ y

    def _primal_residual(self) -> float:
        return float(np.abs(self.form.b - self.form.A @ self.x).max(initial=0.0))

    def _column(self, j):
        A = self.form.A
        lo, hi = A.indptr[j], A.indptr[j + 1]
        return self.Binv[:, A.indices[lo:hi]] @ A.data[lo:hi]

    def _pivot(self, r, j, w, d, theta):
        """Replace basis row r by column j; updates inverse and reduced costs."""
        alpha_row = self.form.At @ np.ascontiguousarray(self.Binv[r, :])
        d -= theta * alpha_row
        d[j] = 0.0
        self.basis[r] = j
        self.stat[j] = _BASIC
        pivot_row = self.Binv[r, :] / w[r]
        self.Binv = dger(-1.0, w, pivot_row, a=self.Binv, overwrite_a=1)
        self.Binv[r, :] = pivot_row
        self._since_refactor += 1

    # -- primal loop ----------------------------------------------------------

    def primal(self, c: np.ndarray) -> SolveStatus:
        bland = False
        streak = 0
        fixed = self.lb >= self.ub
        d = self._exact_d(c)
        d_exact = True
        m = self.form.m

        while True:
            if self.iterations >= self.max_iter:
                return SolveStatus.TIME_LIMIT
            if self._since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                d = self._exact_d(c)
                d_exact = True

            lower_ok = (self.stat == _AT_LOWER) & (d < -_TOL_RC) & ~fixed
            upper_ok = (self.stat == _AT_UPPER) & (d > _TOL_RC) & ~fixed
            free_ok = (self.stat == _FREE) & (np.abs(d) > _TOL_RC)
            eligible = lower_ok | upper_ok | free_ok
            if not eligible.any():
                if not d_exact:
                    d = self._exact_d(c)
                    d_exact = True
                    continue
                if self._primal_residual() > self.tol_feas * self.form.b_scale:
                    self.refactor()
                    d = self._exact_d(c)
                    continue
                return SolveStatus.OPTIMAL

            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(lower_ok, d, 0.0)
                np.subtract(score, d, out=score, where=upper_ok)
                score[free_ok] = -np.abs(d[free_ok])
                j = int(np.argmin(score))
            direction = 1.0 if (self.stat[j] == _AT_LOWER or (self.stat[j] == _FREE and d[j] < 0)) else -1.0

            w = self._column(j)
            delta = -direction * w  # change of basic values per unit step

            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            ratios = np.full(m, np.inf)
            dec = (delta < -_TOL_PIVOT) & np.isfinite(lbb)
            inc = (delta > _TOL_PIVOT) & np.isfinite(ubb)
            ratios[dec] = np.maximum(xb[dec] - lbb[dec], 0.0) / -delta[dec]
            ratios[inc] = np.maximum(ubb[inc] - xb[inc], 0.0) / delta[inc]

            t_flip = self.ub[j] - self.lb[j] if self.stat[j] != _FREE else np.inf
            t_basic = float(ratios.min()) if m else np.inf
            t = min(t_basic, t_flip)
            if not np.isfinite(t):
                if not d_exact or self._since_refactor:
                    self.refactor()
                    d = self._exact_d(c)
                    d_exact = True
                    continue
                return SolveStatus.UNBOUNDED

            self.iterations += 1
            streak = streak + 1 if t <= _TOL_DEGEN else 0
            if streak >= _BLAND_STREAK:
                bland = True
            elif t > _TOL_DEGEN:
                bland = False

            if t_flip <= t_basic:
                # bound flip: no basis change
                self.x[self.basis] = xb + delta * t_flip
                self.x[j] = self.ub[j] if self.stat[j] == _AT_LOWER else self.lb[j]
                self.stat[j] = _AT_UPPER if self.stat[j] == _AT_LOWER else _AT_LOWER
                continue

            cand = np.flatnonzero(ratios <= t_basic + 1e-12)
            if bland:
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(cand[np.argmax(np.abs(delta[cand]))])

            leaving = self.basis[r]
            self.x[self.basis] = xb + delta * t
            self.x[j] = self.x[j] + direction * t
            self.x[leaving] = lbb[r] if delta[r] < 0 else ubb[r]
            self.stat[leaving] = _AT_LOWER if delta[r] < 0 else _AT_UPPER

            self._pivot(r, j, w, d, d[j] / w[r])
            d_exact = False

    # -- dual loop (warm restarts after bound changes) -------------------------

    def dual(self, c: np.ndarray) -> SolveStatus | None:
        """Chase out-of-bound basics; returns OPTIMAL-ish (feasible), INFEASIBLE,
        or None when it stalls and the caller should re-solve cold."""
        d = self._exact_d(c)
        movable = ~(self.lb >= self.ub)
        pivots = 0

        while True:
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            over = xb - ubb
            under = lbb - xb
            viol = np.maximum(np.maximum(over, under), 0.0)
            viol[~np.isfinite(viol)] = 0.0
            r = int(np.argmax(viol))
            if viol[r] <= self.tol_feas * max(1.0, self.form.b_scale):
                return SolveStatus.OPTIMAL  # primal feasible; primal loop certifies
            if pivots >= _DUAL_CAP or self.iterations >= self.max_iter:
                return None

            above = over[r] > 0.0
            alpha = self.form.At @ np.ascontiguousarray(self.Binv[r, :])

            # admissible entering moves that reduce the violation
            if above:
                adm_l = (self.stat == _AT_LOWER) & (alpha > _TOL_PIVOT)
                adm_u = (self.stat == _AT_UPPER) & (alpha < -_TOL_PIVOT)
            else:
                adm_l = (self.stat == _AT_LOWER) & (alpha < -_TOL_PIVOT)
                adm_u = (self.stat == _AT_UPPER) & (alpha > _TOL_PIVOT)
            adm_f = (self.stat == _FREE) & (np.abs(alpha) > _TOL_PIVOT)
            adm = (adm_l | adm_u | adm_f) & movable
            if not adm.any():
                return SolveStatus.INFEASIBLE

            idx = np.flatnonzero(adm)
            theta = np.abs(d[idx]) / np.abs(alpha[idx])
            best = theta.min()
            tied = idx[theta <= best + 1e-12]
            q = int(tied[np.argmax(np.abs(alpha[tied]))])

            target = ubb[r] if above else lbb[r]
            mu = (xb[r] - target) / alpha[q]
            w = self._column(q)
            self.x[self.basis] = xb - mu * w
            self.x[q] = self.x[q] + mu
            leaving = self.basis[r]
            self.x[leaving] = target
            self.stat[leaving] = _AT_UPPER if above else _AT_LOWER

            self._pivot(r, q, w, d, d[q] / alpha[q])
            self.iterations += 1
            pivots += 1
            if self._since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                d = self._exact_d(c)


def solve_lp(problem: MilpProblem, tol_feas: float = 1e-7, max_iter: int | None = None) -> MilpSolution:
    """Solve the LP relaxation of `problem` (integrality ignored).

    Returns an OPTIMAL solution satisfying rows and bounds within
    `tol_feas`, or INFEASIBLE / UNBOUNDED; an iteration-limited run is
    reported as TIME_LIMIT. Deterministic for a fixed problem.
    """
    t0 = time.perf_counter()
    form = _StandardForm(problem)
    res = _solve_form(form, tol_feas, max_iter)
    x = res.x[: problem.n_vars]
    obj = problem.objective_value(x) if res.status is SolveStatus.OPTIMAL else np.nan
    return MilpSolution(
        status=res.status,
        x=x,
        objective=obj,
        best_bound=obj,
        iterations=res.iterations,
        wall_time=time.perf_counter() - t0,
    )


def _solve_form(
    form: _StandardForm,
    tol_feas: float,
    max_iter: int | None = None,
    warm: _Basis | None = None,
) -> _CoreResult:
    if max_iter is None:
        max_iter = 200 * (form.m + form.n_struct) + 20_000
    engine = _Simplex(form, tol_feas, max_iter)
    res = None
    if warm is not None:
        res = engine.solve_warm(warm)
    if res is None:
        engine = _Simplex(form, tol_feas, max_iter)
        res = engine.solve_cold()
    if res.status is SolveStatus.OPTIMAL and form.sense == "max":
        res.objective = -res.objective
    return res
