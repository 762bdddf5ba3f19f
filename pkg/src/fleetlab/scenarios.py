"""Synthetic episode scenarios and trip-file wrapping for experiments.

The imbalanced family concentrates rider origins in a few hot zones while
the fleet starts in the cold remainder, so idle vehicles drain away from
demand and relocation quality separates policies. Zones sit on a line with
adjacent zones one epoch apart; the far end is several epochs from the hot
cluster, which is exactly where a longer optimization window pays off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import TripRecord
from .domain import WeightConfig, ZoneSet
from .simulator import RiderRequest

__all__ = ["Scenario", "imbalanced_scenario", "scenario_from_trips"]


@dataclass
class Scenario:
    """Everything an episode needs: geography, fleet start, and the rider stream."""

    name: str
    zones: ZoneSet
    travel_epochs: np.ndarray
    travel_seconds: np.ndarray
    ride_share_ratio: np.ndarray
    weights: WeightConfig
    requests: list
    initial_vehicle_zones: np.ndarray
    duration_ticks: int
    meta: dict = field(default_factory=dict)

    @property
    def fleet_size(self) -> int:
        return len(self.initial_vehicle_zones)


def _line_geography(n_zones: int, zone_spacing_m: float, speed_mps: float, epoch_seconds: float):
    xs = np.arange(n_zones) * zone_spacing_m
    centroids = np.stack([xs, np.zeros(n_zones)], axis=1)
    dist = np.abs(xs[:, None] - xs[None, :])
    eta = dist / speed_mps
    lam = np.maximum(1, np.ceil(eta / epoch_seconds)).astype(np.int64)
    np.fill_diagonal(lam, 1)
    return centroids, lam, eta


def imbalanced_scenario(
    seed: int,
    n_zones: int = 10,
    hot_zones: int = 3,
    fleet: int = 100,
    duration_epochs: int = 24,
    riders_per_epoch: float = 36.0,
    hot_dest_fraction: float = 0.3,
    pooling_ratio: float = 1.5,
    ticks_per_epoch: int = 10,
    epoch_seconds: float = 300.0,
    zone_spacing_m: float = 900.0,
    speed_mps: float = 3.0,
) -> Scenario:
    """Demand originates in the first `hot_zones` zones; the fleet starts in
    the rest. Most riders travel toward cold zones, so vehicles keep
    draining away from the demand and need to be relocated back."""
    rng = np.random.default_rng(seed)
    centroids, lam, eta = _line_geography(n_zones, zone_spacing_m, speed_mps, epoch_seconds)
    hot = np.arange(hot_zones)
    cold = np.arange(hot_zones, n_zones)

    requests = []
    rid = 0
    for epoch in range(duration_epochs):
        n_arrivals = rng.poisson(riders_per_epoch)
        for _ in range(n_arrivals):
            origin = int(rng.choice(hot))
            if rng.random() < hot_dest_fraction:
                dest = int(rng.choice(hot))
            else:
                dest = int(rng.choice(cold))
            if dest == origin:
                dest = int(hot[(origin + 1) % hot_zones]) if dest in hot else dest
            tick = epoch * ticks_per_epoch + int(rng.integers(ticks_per_epoch))
            party = 2 if rng.random() < 0.1 else 1
            requests.append(RiderRequest(id=rid, origin=origin, dest=dest, arrival_tick=tick, party=party))
            rid += 1

    initial = cold[rng.integers(0, cold.size, fleet)]
    return Scenario(
        name=f"imbalanced-s{seed}",
        zones=ZoneSet(n_zones, centroids),
        travel_epochs=lam,
        travel_seconds=eta,
        ride_share_ratio=np.full((n_zones, n_zones), pooling_ratio),
        weights=WeightConfig(big_M=fleet),
        requests=requests,
        initial_vehicle_zones=np.asarray(initial),
        duration_ticks=duration_epochs * ticks_per_epoch,
        meta={
            "kind": "imbalanced",
            "seed": seed,
            "n_zones": n_zones,
            "hot_zones": hot_zones,
            "fleet": fleet,
            "duration_epochs": duration_epochs,
            "riders_per_epoch": riders_per_epoch,
        },
    )


def scenario_from_trips(
    name: str,
    trips: list[TripRecord],
    zones: ZoneSet,
    travel_epochs: np.ndarray,
    travel_seconds: np.ndarray,
    fleet: int,
    duration_epochs: int,
    seed: int = 0,
    pooling_ratio: float = 1.5,
    ticks_per_epoch: int = 10,
    epoch_seconds: float = 300.0,
) -> Scenario:
    """Wrap loaded trip records as an episode; the fleet starts uniformly."""
    rng = np.random.default_rng(seed)
    tick_seconds = epoch_seconds / ticks_per_epoch
    requests = [
        RiderRequest(
            id=k,
            origin=t.origin,
            dest=t.dest,
            arrival_tick=int(t.pickup_seconds // tick_seconds),
            party=t.party,
        )
        for k, t in enumerate(trips)
        if t.pickup_seconds < duration_epochs * epoch_seconds
    ]
    n = zones.count
    return Scenario(
        name=name,
        zones=zones,
        travel_epochs=travel_epochs,
        travel_seconds=travel_seconds,
        ride_share_ratio=np.full((n, n), pooling_ratio),
        weights=WeightConfig(big_M=fleet),
        requests=requests,
        initial_vehicle_zones=rng.integers(0, n, fleet),
        duration_ticks=duration_epochs * ticks_per_epoch,
        meta={"kind": "trips", "seed": seed, "fleet": fleet},
    )
