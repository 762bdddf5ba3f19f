"""Relocation policies and the aggregate/restore/disaggregate pipeline.

Zone-to-zone plans aggregate to per-zone outflow/inflow totals for
learning; model predictions come back as real vectors, get restored to a
feasible aggregated plan, and are disaggregated to zone-to-zone flows with
a min-cost transportation solve over the travel-time cost matrix (the
diagonal is forbidden so the round trip through aggregation is exact).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .domain import AggregatedPlan, HorizonConfig, MpcInstance, RelocationPlan, WeightConfig
from .milp import MilpConfig
from .mpc import solve_mpc
from .transport import TransportProblem, solve_transportation

__all__ = [
    "aggregate",
    "restore_feasibility",
    "disaggregate",
    "DispatcherPolicy",
    "MpcPolicy",
    "LearnedPolicy",
    "policy_from_name",
]

log = logging.getLogger(__name__)


def aggregate(plan: RelocationPlan) -> AggregatedPlan:
    """Per-zone totals of a zone-to-zone plan: outflow row sums, inflow column sums."""
    return AggregatedPlan(plan.flows.sum(axis=1), plan.flows.sum(axis=0))


def restore_feasibility(
    raw: AggregatedPlan,
    supply1: np.ndarray,
    rng: np.random.Generator | int | None = 0,
) -> AggregatedPlan:
    """Turn real-valued predictions into a feasible aggregated plan.

    1. round each entry to its nearest non-negative integer (.5 up);
    2. cap outflows by the idle vehicles available per zone;
    3. while the outflow and inflow totals differ, decrement a uniformly
       random non-zero entry of the larger side (re-drawn every step);
    4. cancel residual overlap: while some zone's outflow+inflow exceeds the
       total, no zero-diagonal zone-to-zone plan matches the totals, so both
       sides of the worst zone shed one unit together.

    Always succeeds; the result is integral, non-negative, balanced,
    supply-capped and disaggregatable.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    supply1 = np.asarray(supply1, dtype=np.int64)

    out = np.floor(np.asarray(raw.outflow, dtype=float) + 0.5).astype(np.int64)
    inf_ = np.floor(np.asarray(raw.inflow, dtype=float) + 0.5).astype(np.int64)
    np.maximum(out, 0, out=out)
    np.maximum(inf_, 0, out=inf_)

    out = np.minimum(out, supply1)

    while out.sum() != inf_.sum():
        larger = out if out.sum() > inf_.sum() else inf_
        nz = np.flatnonzero(larger)
        larger[rng.choice(nz)] -= 1

    while True:
        total = out.sum()
        overlap = out + inf_ - total
        worst = int(np.argmax(overlap))
        if overlap[worst] <= 0:
            break
        out[worst] -= 1
        inf_[worst] -= 1

    return AggregatedPlan(out, inf_)


def disaggregate(agg: AggregatedPlan, cost: np.ndarray) -> RelocationPlan:
    """Zone-to-zone flows matching the aggregated totals at minimum cost.

    The diagonal is excluded, so aggregate(disaggregate(agg)) == agg for
    any restored plan.
    """
    c = np.array(cost, dtype=float)
    np.fill_diagonal(c, np.inf)
    sol = solve_transportation(
        TransportProblem(agg.outflow.astype(np.int64), agg.inflow.astype(np.int64), c)
    )
    return RelocationPlan(sol.flows)


@dataclass
class PolicyTimings:
    """Wall-clock pieces of the latest decision, seconds."""

    total: float = 0.0
    predict: float = 0.0
    restore: float = 0.0
    transport: float = 0.0
    solver: float = 0.0


class DispatcherPolicy:
    """No relocations; the dispatcher alone moves vehicles."""

    name = "dispatcher"

    def __init__(self):
        self.timings = PolicyTimings()

    def decide(self, inst: MpcInstance) -> RelocationPlan:
        t0 = time.perf_counter()
        plan = RelocationPlan.zero(inst.n_zones)
        self.timings = PolicyTimings(total=time.perf_counter() - t0)
        return plan


class MpcPolicy:
    """Solve the relocation optimization over its own horizon each epoch."""

    def __init__(
        self,
        horizon: int,
        solver_cfg: MilpConfig | None = None,
        weights: WeightConfig | None = None,
        run_log_path=None,
    ):
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.horizon = horizon
        self.solver_cfg = solver_cfg or MilpConfig(time_limit_s=5.0, rel_gap=1e-4)
        self.weights = weights
        self.run_log_path = run_log_path
        self.name = f"mpc{horizon}"
        self.timings = PolicyTimings()
        self.last_decision = None

    def decide(self, inst: MpcInstance) -> RelocationPlan:
        t0 = time.perf_counter()
        inst = with_horizon(inst, self.horizon)
        decision = solve_mpc(inst, self.weights, self.solver_cfg, run_log_path=self.run_log_path)
        self.last_decision = decision
        elapsed = time.perf_counter() - t0
        self.timings = PolicyTimings(total=elapsed, solver=decision.solution.wall_time)
        if decision.first_epoch_plan is None:
            log.warning("relocation solve hit its limit with no incumbent; skipping this round")
            return RelocationPlan.zero(inst.n_zones)
        return decision.first_epoch_plan


class LearnedPolicy:
    """Predict aggregated relocations, restore feasibility, disaggregate."""

    name = "learned"

    def __init__(self, model, seed: int = 0):
        self.model = model  # neural.MlpRegressor or loaded model file
        self.rng = np.random.default_rng(seed)
        self.timings = PolicyTimings()

    def decide(self, inst: MpcInstance) -> RelocationPlan:
        t0 = time.perf_counter()
        features = np.concatenate([inst.supply.ravel(), inst.demand.ravel()]).astype(float)
        y = self.model.predict(features[None, :])[0]
        t1 = time.perf_counter()
        n = inst.n_zones
        raw = AggregatedPlan(outflow=y[n:], inflow=y[:n])
        restored = restore_feasibility(raw, inst.supply[:, 0], self.rng)
        t2 = time.perf_counter()
        plan = disaggregate(restored, inst.travel_seconds)
        t3 = time.perf_counter()
        self.timings = PolicyTimings(
            total=t3 - t0, predict=t1 - t0, restore=t2 - t1, transport=t3 - t2
        )
        return plan


def with_horizon(inst: MpcInstance, T: int) -> MpcInstance:
    """Truncate or zero-extend the instance tensors to a T-epoch window."""
    if T == inst.horizon.T:
        return inst
    n, T0 = inst.n_zones, inst.horizon.T
    demand = np.zeros((n, n, T), dtype=np.int64)
    supply = np.zeros((n, T), dtype=np.int64)
    keep = min(T, T0)
    demand[:, :, :keep] = inst.demand[:, :, :keep]
    supply[:, :keep] = inst.supply[:, :keep]
    horizon = HorizonConfig(T=T, s=min(inst.horizon.s, T), epoch_length=inst.horizon.epoch_length)
    return MpcInstance(
        zones=inst.zones,
        horizon=horizon,
        demand=demand,
        supply=supply,
        travel_epochs=inst.travel_epochs,
        travel_seconds=inst.travel_seconds,
        ride_share_ratio=inst.ride_share_ratio,
        weights=inst.weights,
    )


def policy_from_name(name: str, time_limit_s: float = 5.0, model_loader=None, seed: int = 0):
    """Build a policy from a config string: dispatcher | mpc<T> | learned:<model path>."""
    name = name.strip()
    if name == "dispatcher":
        return DispatcherPolicy()
    if name.startswith("mpc"):
        try:
            horizon = int(name[3:])
        except ValueError:
            raise ValueError(f"unknown policy {name!r}") from None
        return MpcPolicy(horizon, MilpConfig(time_limit_s=time_limit_s, rel_gap=1e-4))
    if name.startswith("learned:"):
        if model_loader is None:
            from .neural import load_model

            model_loader = load_model
        return LearnedPolicy(model_loader(name.split(":", 1)[1]), seed=seed)
    raise ValueError(f"unknown policy {name!r}")
