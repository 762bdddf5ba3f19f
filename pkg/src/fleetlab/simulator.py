"""Zone-level rolling-horizon ride-sharing simulator.

Ticks are the dispatch cadence (30 s), epochs the relocation cadence
(10 ticks = 5 min). Each tick: finished trips land, new riders arrive,
stale riders drop out, then a greedy zone-local batch dispatcher matches
idle vehicles to waiting riders (oldest first, pooled up to ceil of the
ride-share ratio per trip). At every relocation boundary the policy sees a
fresh window instance (noisy demand forecast + supply estimate) and its
plan is executed on the idle fleet.

Riders arriving in epoch e can be picked up during epochs e..e+s-1 and
drop out at the start of epoch e+s, mirroring the optimization's pick-up
window.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import build_demand_from_counts, forecast_demand
from .domain import HorizonConfig, MpcInstance, RelocationPlan

log = logging.getLogger(__name__)

IDLE, SERVING, RELOCATING = "idle", "serving", "relocating"


@dataclass
class Vehicle:
    id: int
    status: str = IDLE
    zone: int = 0  # current zone when idle
    dest: int = -1  # destination zone while moving
    arrival_tick: int = -1  # tick the trip completes


@dataclass
class RiderRequest:
    id: int
    origin: int
    dest: int
    arrival_tick: int
    party: int = 1
    pickup_tick: int | None = None
    dropout_tick: int | None = None

    @property
    def waiting_ticks(self) -> int | None:
        return None if self.pickup_tick is None else self.pickup_tick - self.arrival_tick


@dataclass
class SimConfig:
    tick_seconds: float = 30.0
    ticks_per_epoch: int = 10
    relocation_period_epochs: int = 1
    dispatch_period_ticks: int = 1
    max_wait_epochs: int = 3  # rider patience s
    forecast_horizon: int = 6  # epochs of demand/supply exposed to policies
    pooling_ratio: float = 1.5
    forecast_sigma_pct: float = 2.5
    seed: int = 0

    def __post_init__(self):
        period_ticks = self.relocation_period_epochs * self.ticks_per_epoch
        if period_ticks % self.dispatch_period_ticks != 0:
            raise ValueError("relocation period must be a multiple of the dispatch period")


@dataclass
class EpochRecord:
    epoch: int
    wait_avg_min: float
    relocations: int
    idle_count: int
    decide_seconds: float
    solver_status: str = ""


@dataclass
class EpisodeMetrics:
    arrivals: int = 0
    served: int = 0
    dropped: int = 0
    waiting_at_end: int = 0
    wait_total_min: float = 0.0
    relocation_count: int = 0
    relocation_vehicle_seconds: float = 0.0
    relocation_rounds: int = 0
    policy_timeouts: int = 0
    per_epoch: list = field(default_factory=list)
    decide_seconds: list = field(default_factory=list)
    transport_seconds: list = field(default_factory=list)

    @property
    def avg_wait_min(self) -> float:
        return self.wait_total_min / self.served if self.served else 0.0

    def to_dict(self) -> dict:
        return {
            "arrivals": self.arrivals,
            "served": self.served,
            "dropped": self.dropped,
            "waiting_at_end": self.waiting_at_end,
            "avg_wait_min": self.avg_wait_min,
            "relocation_count": self.relocation_count,
            "relocation_vehicle_seconds": self.relocation_vehicle_seconds,
            "relocation_rounds": self.relocation_rounds,
            "policy_timeouts": self.policy_timeouts,
            "per_epoch": [vars(r) for r in self.per_epoch],
            "decide_seconds": self.decide_seconds,
            "transport_seconds": self.transport_seconds,
        }


class Simulation:
    """One episode's mutable state; `run_episode` drives it tick by tick."""

    def __init__(self, scenario, cfg: SimConfig):
        self.scenario = scenario
        self.cfg = cfg
        self.n_zones = scenario.zones.count
        self.lam = scenario.travel_epochs
        self.eta = scenario.travel_seconds
        self.vehicles = [
            Vehicle(id=k, zone=int(z)) for k, z in enumerate(scenario.initial_vehicle_zones)
        ]
        self.idle_by_zone: list[list[int]] = [[] for _ in range(self.n_zones)]
        for veh in self.vehicles:
            self.idle_by_zone[veh.zone].append(veh.id)
        self.waiting: list[list[RiderRequest]] = [[] for _ in range(self.n_zones)]
        self.riders: list[RiderRequest] = []
        self.tick = 0
        self.metrics = EpisodeMetrics()
        self.pool_cap = math.ceil(cfg.pooling_ratio)

    # -- clock helpers -------------------------------------------------------

    def epoch_of(self, tick: int) -> int:
        return tick // self.cfg.ticks_per_epoch

    # -- per-tick steps ------------------------------------------------------

    def land_vehicles(self):
        for veh in self.vehicles:
            if veh.status != IDLE and veh.arrival_tick <= self.tick:
                veh.status = IDLE
                veh.zone = veh.dest
                veh.dest = -1
                veh.arrival_tick = -1
                self.idle_by_zone[veh.zone].append(veh.id)
        for zone in self.idle_by_zone:
            zone.sort()

    def inject(self, requests):
        for req in requests:
            self.waiting[req.origin].append(req)
            self.riders.append(req)
            self.metrics.arrivals += req.party

    def expire(self):
        cutoff = self.epoch_of(self.tick) - self.cfg.max_wait_epochs
        for zone_queue in self.waiting:
            keep = []
            for req in zone_queue:
                if self.epoch_of(req.arrival_tick) <= cutoff:
                    req.dropout_tick = self.tick
                    self.metrics.dropped += req.party
                else:
                    keep.append(req)
            zone_queue[:] = keep

    def dispatch(self):
        """Greedy zone-local batch matcher: oldest request first, pooled with
        same origin-destination requests up to ceil(pooling ratio) riders; a
        single oversize request still rides alone."""
        for i in range(self.n_zones):
            queue = self.waiting[i]
            idle = self.idle_by_zone[i]
            if not queue or not idle:
                continue
            queue.sort(key=lambda r: (r.arrival_tick, r.id))
            served_ids = set()
            while queue and idle:
                head = queue[0]
                group = [head]
                size = head.party
                for req in queue[1:]:
                    if req.dest == head.dest and size + req.party <= self.pool_cap:
                        group.append(req)
                        size += req.party
                vid = idle.pop(0)
                veh = self.vehicles[vid]
                veh.status = SERVING
                veh.dest = head.dest
                veh.arrival_tick = self.tick + int(self.lam[i, head.dest]) * self.cfg.ticks_per_epoch
                for req in group:
                    req.pickup_tick = self.tick
                    wait_min = (self.tick - req.arrival_tick) * self.cfg.tick_seconds / 60.0
                    self.metrics.served += req.party
                    self.metrics.wait_total_min += wait_min * req.party
                    served_ids.add(req.id)
                queue[:] = [r for r in queue if r.id not in served_ids]

    def estimate_supply(self, T: int) -> np.ndarray:
        """V[i][t-1]: vehicles becoming idle in zone i during window epoch t."""
        cur = self.epoch_of(self.tick)
        V = np.zeros((self.n_zones, T), dtype=np.int64)
        for veh in self.vehicles:
            if veh.status == IDLE:
                V[veh.zone, 0] += 1
            else:
                t = self.epoch_of(veh.arrival_tick) - cur + 1
                if 1 <= t <= T:
                    V[veh.dest, t - 1] += 1
        return V

    def apply_relocations(self, plan: RelocationPlan):
        for i in range(self.n_zones):
            for j in range(self.n_zones):
                want = int(plan.flows[i, j])
                if want == 0:
                    continue
                idle = self.idle_by_zone[i]
                if want > len(idle):
                    log.warning(
                        "relocation plan wants %d vehicles from zone %d but only %d idle; clipping",
                        want, i, len(idle),
                    )
                    want = len(idle)
                for _ in range(want):
                    vid = idle.pop(0)
                    veh = self.vehicles[vid]
                    veh.status = RELOCATING
                    veh.dest = j
                    veh.arrival_tick = self.tick + int(self.lam[i, j]) * self.cfg.ticks_per_epoch
                    self.metrics.relocation_count += 1
                    self.metrics.relocation_vehicle_seconds += float(self.eta[i, j])

    # -- invariants (exercised by tests) --------------------------------------

    def vehicle_census(self):
        census = {IDLE: 0, SERVING: 0, RELOCATING: 0}
        for veh in self.vehicles:
            census[veh.status] += 1
        return census

    def rider_census(self):
        served = sum(r.party for r in self.riders if r.pickup_tick is not None)
        dropped = sum(r.party for r in self.riders if r.dropout_tick is not None)
        waiting = sum(r.party for r in self.riders if r.pickup_tick is None and r.dropout_tick is None)
        return served, dropped, waiting


def run_episode(scenario, policy, cfg: SimConfig, recorder=None) -> EpisodeMetrics:
    """Simulate the scenario under one relocation policy.

    `recorder(epoch, instance, plan, had_plan)` is called at every relocation
    round (used for harvesting training pairs). Deterministic for a fixed
    (scenario, policy, seed).
    """
    sim = Simulation(scenario, cfg)
    rng = np.random.default_rng(cfg.seed)
    arrivals = sorted(scenario.requests, key=lambda r: (r.arrival_tick, r.id))
    duration = scenario.duration_ticks
    reloc_ticks = cfg.relocation_period_epochs * cfg.ticks_per_epoch
    next_arrival = 0

    for tick in range(duration):
        sim.tick = tick
        sim.land_vehicles()

        batch = []
        while next_arrival < len(arrivals) and arrivals[next_arrival].arrival_tick <= tick:
            batch.append(arrivals[next_arrival])
            next_arrival += 1
        sim.inject(batch)
        sim.expire()

        if tick % cfg.dispatch_period_ticks == 0:
            sim.dispatch()

        if tick % reloc_ticks == 0:
            epoch = sim.epoch_of(tick)
            inst = build_window_instance(scenario, sim, epoch, rng, cfg)
            t0 = time.perf_counter()
            plan = policy.decide(inst)
            decide_s = time.perf_counter() - t0
            timings = getattr(policy, "timings", None)
            had_plan = True
            last = getattr(policy, "last_decision", None)
            if last is not None and last.first_epoch_plan is None:
                had_plan = False
                sim.metrics.policy_timeouts += 1
            if recorder is not None:
                recorder(epoch, inst, plan, had_plan)
            idle_now = sum(len(z) for z in sim.idle_by_zone)
            reloc_before = sim.metrics.relocation_count
            sim.apply_relocations(plan)
            sim.metrics.relocation_rounds += 1
            sim.metrics.decide_seconds.append(decide_s)
            if timings is not None and timings.transport:
                sim.metrics.transport_seconds.append(timings.transport)
            sim.metrics.per_epoch.append(
                EpochRecord(
                    epoch=epoch,
                    wait_avg_min=0.0,  # filled below once the epoch closes
                    relocations=sim.metrics.relocation_count - reloc_before,
                    idle_count=idle_now,
                    decide_seconds=decide_s,
                )
            )

    # per-epoch waiting averages over riders served in each epoch
    per_epoch_wait: dict[int, list] = {}
    for req in sim.riders:
        if req.pickup_tick is not None:
            e = sim.epoch_of(req.pickup_tick)
            per_epoch_wait.setdefault(e, []).append(
                (req.pickup_tick - req.arrival_tick) * cfg.tick_seconds / 60.0
            )
    for rec in sim.metrics.per_epoch:
        waits = per_epoch_wait.get(rec.epoch)
        rec.wait_avg_min = float(np.mean(waits)) if waits else 0.0

    served, dropped, waiting = sim.rider_census()
    sim.metrics.waiting_at_end = waiting
    return sim.metrics


def build_window_instance(scenario, sim: Simulation, epoch: int, rng, cfg: SimConfig) -> MpcInstance:
    """Window instance seen by policies: noisy demand forecast + supply estimate."""
    T = cfg.forecast_horizon
    n = scenario.zones.count
    counts = np.zeros((n, n, T), dtype=np.int64)
    lo = epoch * cfg.ticks_per_epoch
    hi = (epoch + T) * cfg.ticks_per_epoch
    for req in scenario.requests:
        if lo <= req.arrival_tick < hi:
            t = (req.arrival_tick - lo) // cfg.ticks_per_epoch
            counts[req.origin, req.dest, t] += req.party
    demand_true = build_demand_from_counts(counts, scenario.ride_share_ratio)
    demand = forecast_demand(demand_true, cfg.forecast_sigma_pct, rng)
    supply = sim.estimate_supply(T)
    return MpcInstance(
        zones=scenario.zones,
        horizon=HorizonConfig(T=T, s=cfg.max_wait_epochs, epoch_length=cfg.tick_seconds * cfg.ticks_per_epoch),
        demand=demand,
        supply=supply,
        travel_epochs=scenario.travel_epochs,
        travel_seconds=scenario.travel_seconds,
        ride_share_ratio=scenario.ride_share_ratio,
        weights=scenario.weights,
    )
