"""Branch and bound over the bounded-variable simplex.

Most-fractional branching (ties to the lowest variable index) and
best-bound node selection. Both children of a branch are solved right away
with a warm start from the parent basis (a handful of dual pivots each);
the search then dives into the better child while the sibling joins the
best-bound heap carrying its own solved relaxation, so heap pops never
re-solve. Guided dives find near-bound incumbents early, which lets
best-bound pruning collapse the rest of the tree.

Deterministic: a fixed problem and config always reproduce the same
solution vector.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .problem import MilpProblem, MilpSolution, SolveStatus
from .simplex import _Basis, _solve_form, _StandardForm


@dataclass
class MilpConfig:
    time_limit_s: float = 60.0
    tol_int: float = 1e-6
    tol_feas: float = 1e-7
    node_selection: str = "best-bound"
    gap_tol: float = 1e-7
    rel_gap: float = 0.0  # > 0: may stop early at proven relative gap (status FEASIBLE)
    max_nodes: int | None = None

    _KEEP_BINV = 48  # shelved nodes that keep their basis inverse alive


def solve_milp(problem: MilpProblem, cfg: MilpConfig | None = None) -> MilpSolution:
    """Solve a MILP exactly by LP-based branch and bound.

    Integer variables must have finite bounds. OPTIMAL means the returned
    objective is the true optimum; FEASIBLE means the time limit (or the
    configured relative gap) struck with an incumbent in hand, its quality
    bounded by `best_bound`; TIME_LIMIT with an empty primal means no
    incumbent was found in time.
    """
    cfg = cfg or MilpConfig()
    t0 = time.perf_counter()
    int_mask = np.asarray(problem.is_integer, dtype=bool)
    if int_mask.any():
        ilb = np.asarray(problem.lower)[int_mask]
        iub = np.asarray(problem.upper)[int_mask]
        if not (np.isfinite(ilb).all() and np.isfinite(iub).all()):
            raise ValueError("all integer variables must have finite bounds")

    form = _StandardForm(problem)
    sign = -1.0 if problem.sense == "max" else 1.0  # work in minimize sense
    lb0 = np.asarray(problem.lower, dtype=float)
    ub0 = np.asarray(problem.upper, dtype=float)

    iterations = 0
    node_count = 0
    incumbent_x = None
    incumbent_obj = math.inf
    heap: list = []  # (child LP bound, seq, solved result, lb, ub)
    seq = 0
    timed_out = False
    gap_stop = False
    binv_budget = cfg._KEEP_BINV

    def solve_node(nlb, nub, warm):
        nonlocal iterations, node_count
        node_count += 1
        res = _solve_form(form.with_bounds(nlb, nub), cfg.tol_feas, warm=warm)
        iterations += res.iterations
        return res

    def fractional_of(x):
        frac = x - np.floor(x)
        bad = int_mask & (np.minimum(frac, 1.0 - frac) > cfg.tol_int)
        return np.flatnonzero(bad), frac

    def out_of_budget():
        return time.perf_counter() - t0 > cfg.time_limit_s or (
            cfg.max_nodes is not None and node_count >= cfg.max_nodes
        )

    def rel_gap_closed(open_bound):
        if cfg.rel_gap <= 0 or incumbent_x is None:
            return False
        return incumbent_obj - open_bound <= cfg.rel_gap * max(1.0, abs(incumbent_obj))

    root = solve_node(lb0, ub0, None)
    if root.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED, SolveStatus.TIME_LIMIT):
        return MilpSolution(root.status, np.array([]), node_count=node_count,
                            iterations=iterations, wall_time=time.perf_counter() - t0)

    current = (root, lb0, ub0)
    while True:
        if out_of_budget():
            timed_out = True
            break

        res, nlb, nub = current
        plunge = None
        if res.status is not SolveStatus.INFEASIBLE:
            obj = sign * res.objective
            if obj < incumbent_obj - cfg.gap_tol:
                x = res.x[: problem.n_vars]
                fractional, frac = fractional_of(x)
                if fractional.size == 0:
                    incumbent_obj = obj
                    incumbent_x = x.copy()
                else:
                    j = int(fractional[np.argmin(np.abs(frac[fractional] - 0.5))])
                    down_ub = nub.copy()
                    down_ub[j] = math.floor(x[j])
                    up_lb = nlb.copy()
                    up_lb[j] = math.ceil(x[j])
                    res_dn = solve_node(nlb, down_ub, res.warm)
                    res_up = solve_node(up_lb, nub, res.warm)
                    eff_dn = sign * res_dn.objective if res_dn.status is not SolveStatus.INFEASIBLE else math.inf
                    eff_up = sign * res_up.objective if res_up.status is not SolveStatus.INFEASIBLE else math.inf
                    if eff_dn <= eff_up:
                        plunge = (res_dn, nlb, down_ub)
                        shelf, shelf_eff = (res_up, up_lb, nub), eff_up
                    else:
                        plunge = (res_up, up_lb, nub)
                        shelf, shelf_eff = (res_dn, nlb, down_ub), eff_dn
                    if plunge[0].status is SolveStatus.INFEASIBLE:
                        plunge = None
                    if shelf_eff < incumbent_obj - cfg.gap_tol:
                        sres = shelf[0]
                        if sres.warm is not None and sres.warm.Binv is not None:
                            if binv_budget > 0:
                                binv_budget -= 1
                                sres.warm.Binv = sres.warm.Binv.copy()
                            else:
                                sres.warm.Binv = None
                        heapq.heappush(heap, (shelf_eff, seq, sres, shelf[1], shelf[2]))
                        seq += 1

        if plunge is not None:
            current = plunge
            continue

        # climb back to the globally best open node
        while heap and heap[0][0] >= incumbent_obj - cfg.gap_tol:
            heapq.heappop(heap)
        if not heap:
            break
        if rel_gap_closed(heap[0][0]):
            gap_stop = True
            break
        current = (heap[0][2], heap[0][3], heap[0][4])
        heapq.heappop(heap)

    wall = time.perf_counter() - t0
    open_bounds = [e[0] for e in heap]
    if (timed_out or gap_stop) and open_bounds:
        proven = min(min(open_bounds), incumbent_obj)
    else:
        proven = incumbent_obj

    if incumbent_x is None:
        status = SolveStatus.TIME_LIMIT if timed_out else SolveStatus.INFEASIBLE
        return MilpSolution(status, np.array([]), node_count=node_count,
                            iterations=iterations, wall_time=wall)
    status = SolveStatus.FEASIBLE if (timed_out or gap_stop) else SolveStatus.OPTIMAL
    return MilpSolution(
        status=status,
        x=incumbent_x,
        objective=sign * incumbent_obj,
        best_bound=sign * proven,
        node_count=node_count,
        iterations=iterations,
        wall_time=wall,
    )
