"""Balanced transportation problem: exact integral min-cost flows in polynomial time.

Successive shortest augmenting paths with node potentials on the bipartite
supplier/consumer graph. Forward arcs are uncapacitated, so every
augmentation saturates a supplier, a consumer, or empties a reverse arc,
and the path count stays small; Dijkstra runs dense (the graph is complete)
with an early exit at the nearest consumer with remaining demand. Costs may
be +inf to forbid an arc. All tie-breaking is index-ordered, so solutions
are deterministic.

The path-augmenting kernel is written in plain loops and compiled with
numba when available (pure-Python fallback otherwise), which keeps
fleet-scale instances well inside a 50 ms budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

__all__ = ["TransportProblem", "TransportSolution", "UnbalancedError", "solve_transportation"]


class UnbalancedError(ValueError):
    """Total supply and total demand differ."""


@dataclass(frozen=True)
class TransportProblem:
    """supply[i] units leave node i, demand[j] units enter node j, cost[i][j] per unit."""

    supply: np.ndarray
    demand: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.supply, dtype=np.int64)
        d = np.asarray(self.demand, dtype=np.int64)
        c = np.asarray(self.cost, dtype=float)
        if s.ndim != 1 or d.ndim != 1 or c.shape != (s.shape[0], d.shape[0]):
            raise ValueError(f"inconsistent shapes: supply {s.shape}, demand {d.shape}, cost {c.shape}")
        if (s < 0).any() or (d < 0).any():
            raise ValueError("supply and demand must be non-negative")
        object.__setattr__(self, "supply", s)
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "cost", c)


@dataclass(frozen=True)
class TransportSolution:
    flows: np.ndarray  # integer matrix, row sums = supply, column sums = demand
    total_cost: float
    wall_time: float = 0.0


def _augment_all(excess, deficit, cost, flow, u, v):
    """Drain all excess along successive shortest paths; returns 0, or -1 when
    the finite-cost arcs cannot carry the flow. Mutates flow/excess/deficit."""
    m, n = cost.shape
    INF = np.inf
    nn = m + n  # suppliers 0..m-1, consumers m..m+n-1
    dist = np.empty(nn)
    done = np.empty(nn, dtype=np.bool_)
    parent = np.empty(nn, dtype=np.int64)

    total = np.int64(0)
    for i in range(m):
        total += excess[i]

    while total > 0:
        for k in range(nn):
            dist[k] = INF
            done[k] = False
            parent[k] = -1
        for i in range(m):
            if excess[i] > 0:
                dist[i] = 0.0

        target = -1
        while True:
            best = -1
            bd = INF
            for k in range(nn):
                if not done[k] and dist[k] < bd:
                    bd = dist[k]
                    best = k
            if best < 0:
                break
            done[best] = True
            if best >= m:
                j = best - m
                if deficit[j] > 0:
                    target = j
                    break
                for i in range(m):  # residual reverse arcs where flow > 0
                    if flow[i, j] > 0 and not done[i]:
                        nd = dist[best] - cost[i, j] + u[i] - v[j]
                        if nd < dist[i] - 1e-15:
                            dist[i] = nd
                            parent[i] = best
            else:
                i = best
                di = dist[i]
                ui = u[i]
                for j in range(n):
                    c = cost[i, j]
                    if c < INF and not done[m + j]:
                        nd = di + c - ui + v[j]
                        if nd < dist[m + j] - 1e-15:
                            dist[m + j] = nd
                            parent[m + j] = i
        if target < 0:
            return -1

        # shift potentials by the distance, capped at the target's, so reduced
        # costs stay non-negative and the augmenting path becomes tight
        cap = dist[m + target]
        for i in range(m):
            u[i] -= dist[i] if dist[i] < cap else cap
        for j in range(n):
            v[j] -= dist[m + j] if dist[m + j] < cap else cap

        # walk the alternating path to find its bottleneck, then apply it
        bott = deficit[target]
        j = target
        origin = -1
        while True:
            i = parent[m + j]
            pj = parent[i]
            if pj < 0:
                origin = i
                break
            jj = pj - m
            if flow[i, jj] < bott:
                bott = flow[i, jj]
            j = jj
        if excess[origin] < bott:
            bott = excess[origin]

        j = target
        while True:
            i = parent[m + j]
            flow[i, j] += bott
            pj = parent[i]
            if pj < 0:
                break
            jj = pj - m
            flow[i, jj] -= bott
            j = jj
        excess[origin] -= bott
        deficit[target] -= bott
        total -= bott
    return 0


try:  # compiled kernel when numba is around; the fallback is the same code
    from numba import njit

    _augment_all = njit(cache=True)(_augment_all)
except ImportError:  # pragma: no cover
    pass


def solve_transportation(p: TransportProblem) -> TransportSolution:
    """Minimum-cost integral flow meeting all supplies and demands exactly.

    Raises UnbalancedError when the margins disagree, ValueError when the
    finite-cost arcs cannot carry the required flow.
    """
    t0 = time.perf_counter()
    total_supply = int(p.supply.sum())
    total_demand = int(p.demand.sum())
    if total_supply != total_demand:
        raise UnbalancedError(f"total supply {total_supply} != total demand {total_demand}")

    # zero-margin rows/columns carry no flow; prune them before solving
    rows = np.flatnonzero(p.supply > 0)
    cols = np.flatnonzero(p.demand > 0)
    flows_full = np.zeros((p.supply.shape[0], p.demand.shape[0]), dtype=np.int64)
    if rows.size == 0:
        return TransportSolution(flows_full, 0.0, time.perf_counter() - t0)

    cost = np.ascontiguousarray(p.cost[np.ix_(rows, cols)])
    excess = p.supply[rows].copy()
    deficit = p.demand[cols].copy()
    flow = np.zeros(cost.shape, dtype=np.int64)
    u = np.zeros(cost.shape[0])
    v = np.zeros(cost.shape[1])
    if _augment_all(excess, deficit, cost, flow, u, v) < 0:
        raise ValueError("no augmenting path: finite-cost arcs cannot carry the flow")

    flows_full[np.ix_(rows, cols)] = flow
    total_cost = float((flow * np.where(flow > 0, cost, 0.0)).sum())
    return TransportSolution(flows_full, total_cost, time.perf_counter() - t0)
