"""Build and solve the relocation optimization over a moving window.

Epochs are 1-based here to match the optimization formulation; array
lookups subtract 1. Decision variables:

  xp[i,j,t,rho]  vehicles starting to serve riders i->j at rho who arrived at t
                 (created only for rho in phi(t) and demand[i,j,t] > 0)
  xr[i,j,t]      vehicles starting to relocate i->j at t, j != i
  z[i,t]         vehicles staying in i from t-1 to t, t = 1..T+1; z[i,1] = 0
  l[i,t]         binary: 1 iff all currently serveable demand of zone i is
                 cleared at the end of t (relocations out of i require it)

The objective maximizes service reward minus relocation cost; vehicles
are conserved per zone and epoch, with inflow terms whose start epoch
falls before the window dropped (pre-window commitments enter through
the supply matrix instead).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import MpcInstance, RelocationPlan, WeightConfig, validate_instance
from .milp import MilpConfig, MilpProblem, MilpSolution, SolveStatus, solve_milp, write_lp

__all__ = [
    "phi",
    "weight_qp",
    "weight_qr",
    "MpcVariableIndex",
    "MpcDecision",
    "build_model",
    "solve_mpc",
]


def phi(t: int, s: int, T: int) -> range:
    """Valid pick-up epochs for riders arriving in epoch t: t..min(t+s-1, T)."""
    if not 1 <= t <= T:
        raise ValueError(f"epoch t={t} outside 1..{T}")
    return range(t, min(t + s - 1, T) + 1)


def weight_qp(t: int, rho: int, cfg: WeightConfig | None = None) -> float:
    """Service weight of a rider arriving at t and picked up at rho."""
    cfg = cfg or WeightConfig()
    return cfg.qp_base**t * cfg.qp_decay ** (rho - t)


def weight_qr(i: int, j: int, t: int, eta_ij: float, cfg: WeightConfig | None = None) -> float:
    """Relocation cost weight for moving one vehicle i -> j starting at t."""
    if i == j:
        raise ValueError("relocation requires distinct zones")
    cfg = cfg or WeightConfig()
    return cfg.qr_scale * cfg.qr_base**t * eta_ij


@dataclass
class MpcVariableIndex:
    """Bijective map between model variables and MILP column ids."""

    xp: dict = field(default_factory=dict)  # (i, j, t, rho) -> col
    xr: dict = field(default_factory=dict)  # (i, j, t) -> col
    z: dict = field(default_factory=dict)  # (i, t) -> col, t = 1..T+1
    l: dict = field(default_factory=dict)  # (i, t) -> col

    @property
    def n_cols(self) -> int:
        return len(self.xp) + len(self.xr) + len(self.z) + len(self.l)

    def first_epoch_plan(self, x: np.ndarray, n_zones: int, tol_int: float = 1e-6) -> RelocationPlan:
        flows = np.zeros((n_zones, n_zones), dtype=np.int64)
        for (i, j, t), col in self.xr.items():
            if t == 1:
                v = int(round(float(x[col])))
                if abs(x[col] - v) > 10 * tol_int:
                    raise ValueError(f"xr[{i},{j},1]={x[col]} not integral within tolerance")
                flows[i, j] = v
        return RelocationPlan(flows)

    def served_by_epoch(self, x: np.ndarray, T: int) -> np.ndarray:
        served = np.zeros(T)
        for (_, _, _, rho), col in self.xp.items():
            served[rho - 1] += x[col]
        return served


@dataclass
class MpcDecision:
    """Outcome of one optimization run; `first_epoch_plan` is None when the
    solver hit its limit without an incumbent (caller: no relocations)."""

    first_epoch_plan: RelocationPlan | None
    solution: MilpSolution
    served_by_epoch: np.ndarray
    index: MpcVariableIndex


def build_model(inst: MpcInstance, cfg: WeightConfig | None = None) -> tuple[MilpProblem, MpcVariableIndex]:
    """Encode the instance as a MILP; returns the problem and variable index."""
    report = validate_instance(inst)
    if report:
        raise ValueError("invalid instance: " + "; ".join(str(v) for v in report))
    cfg = cfg or inst.weights
    n, T, s = inst.n_zones, inst.horizon.T, inst.horizon.s
    D, V = inst.demand, inst.supply
    lam, eta, W = inst.travel_epochs, inst.travel_seconds, inst.ride_share_ratio
    M = float(cfg.big_M)

    p = MilpProblem("max", name="relocation-window")
    idx = MpcVariableIndex()

    # valid per-zone-epoch cap on vehicles present (hence on relocations out):
    # own-zone supply this epoch plus everything that appeared anywhere earlier
    appeared_before = np.concatenate([[0], np.cumsum(V.sum(axis=0))])[:T]
    present_cap = np.minimum(V.T + appeared_before[:, None], M).T  # [i][t-1]

    for i in range(n):
        for j in range(n):
            for t in range(1, T + 1):
                if D[i, j, t - 1] > 0:
                    for rho in phi(t, s, T):
                        col = p.add_variable(
                            f"xp[{i},{j},{t},{rho}]",
                            obj=weight_qp(t, rho, cfg) * W[i, j],
                            lb=0,
                            ub=float(D[i, j, t - 1]),
                            integer=True,
                        )
                        idx.xp[(i, j, t, rho)] = col
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for t in range(1, T + 1):
                col = p.add_variable(
                    f"xr[{i},{j},{t}]",
                    obj=-weight_qr(i, j, t, eta[i, j], cfg),
                    lb=0,
                    ub=float(present_cap[i, t - 1]),
                    integer=True,
                )
                idx.xr[(i, j, t)] = col
    for i in range(n):
        for t in range(1, T + 2):
            ub = 0.0 if t == 1 else M  # z[i,1] = 0: initial stock enters via supply
            col = p.add_variable(f"z[{i},{t}]", obj=0.0, lb=0, ub=ub, integer=True)
            idx.z[(i, t)] = col
    for i in range(n):
        for t in range(1, T + 1):
            col = p.add_variable(f"l[{i},{t}]", obj=0.0, lb=0, ub=1, integer=True)
            idx.l[(i, t)] = col

    # (1) serve at most the demand of each arrival cohort
    for (i, j, t), _ in _cohorts(D, n, T):
        coefs = {idx.xp[(i, j, t, rho)]: 1.0 for rho in phi(t, s, T)}
        p.add_constraint(coefs, "<=", float(D[i, j, t - 1]), name=f"demand[{i},{j},{t}]")

    # (3) per-zone flow balance: departures + stay = arrivals + stock + supply
    for i in range(n):
        for t in range(1, T + 1):
            coefs: dict[int, float] = {}

            def add(col, v):
                coefs[col] = coefs.get(col, 0.0) + v

            for j in range(n):
                for t0 in range(1, T + 1):
                    if t in phi(t0, s, T) and D[i, j, t0 - 1] > 0:
                        add(idx.xp[(i, j, t0, t)], 1.0)
                if j != i:
                    add(idx.xr[(i, j, t)], 1.0)
            add(idx.z[(i, t + 1)], 1.0)
            for j in range(n):
                rho = t - int(lam[j, i])
                if rho >= 1:
                    for t0 in range(1, T + 1):
                        if rho in phi(t0, s, T) and D[j, i, t0 - 1] > 0:
                            add(idx.xp[(j, i, t0, rho)], -1.0)
                    if j != i:
                        add(idx.xr[(j, i, rho)], -1.0)
            add(idx.z[(i, t)], -1.0)
            p.add_constraint(coefs, "=", float(V[i, t - 1]), name=f"balance[{i},{t}]")

    # (4)-(5) relocations out of a zone only once its serveable demand is cleared
    for i in range(n):
        for t in range(1, T + 1):
            coefs = {idx.xr[(i, j, t)]: 1.0 for j in range(n) if j != i}
            coefs[idx.l[(i, t)]] = -float(present_cap[i, t - 1])
            p.add_constraint(coefs, "<=", 0.0, name=f"reloc_gate[{i},{t}]")

            # the gate's own M is the window demand sum: unserved can never
            # exceed it, and a fleet-sized M would cut off feasible states
            # whenever window demand exceeds the fleet
            coefs = {}
            unserved_base = 0.0
            for j in range(n):
                for t0 in range(1, T + 1):
                    if t in phi(t0, s, T):
                        unserved_base += float(D[i, j, t0 - 1])
                        if D[i, j, t0 - 1] > 0:
                            for rho in range(t0, t + 1):
                                coefs[idx.xp[(i, j, t0, rho)]] = -1.0
            coefs[idx.l[(i, t)]] = unserved_base
            p.add_constraint(coefs, "<=", 0.0, name=f"unserved_gate[{i},{t}]")

    return p, idx


def _cohorts(D, n, T):
    for i in range(n):
        for j in range(n):
            for t in range(1, T + 1):
                if D[i, j, t - 1] > 0:
                    yield (i, j, t), int(D[i, j, t - 1])


def solve_mpc(
    inst: MpcInstance,
    cfg: WeightConfig | None = None,
    solver_cfg: MilpConfig | None = None,
    dump_lp_path: str | Path | None = None,
    run_log_path: str | Path | None = None,
) -> MpcDecision:
    """Solve the relocation window and extract the first-epoch plan.

    `dump_lp_path` writes the built model in LP text format before solving;
    `run_log_path` appends one JSON line with the plan and solve stats.
    """
    problem, idx = build_model(inst, cfg)
    if dump_lp_path is not None:
        write_lp(problem, dump_lp_path)
    solver_cfg = solver_cfg or MilpConfig(time_limit_s=5.0)
    sol = solve_milp(problem, solver_cfg)

    n, T = inst.n_zones, inst.horizon.T
    if sol.has_solution:
        plan = idx.first_epoch_plan(sol.x, n, solver_cfg.tol_int)
        served = idx.served_by_epoch(sol.x, T)
    else:
        plan = None
        served = np.zeros(T)

    if run_log_path is not None:
        entry = {
            "status": str(sol.status),
            "objective": None if not sol.has_solution else sol.objective,
            "plan": None if plan is None else plan.flows.tolist(),
            "nodes": sol.node_count,
            "iterations": sol.iterations,
            "wall_time": sol.wall_time,
        }
        with open(run_log_path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")

    return MpcDecision(plan, sol, served, idx)
