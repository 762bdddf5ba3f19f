"""Trip ingestion, demand tensors, noise models, and training-pair harvest.

Trip CSVs carry either zone-id columns or lon/lat coordinates mapped
through a rectangular grid; rows that map nowhere are dropped and counted,
malformed rows are skipped with a diagnostic. Demand forecasts perturb the
true counts with white noise proportional to each cell, and whole
instances are perturbed by adding or deleting a normally drawn percentage
of requests.

Training pairs tie the exact (supply, demand) window handed to the
optimizer to the aggregated first-epoch decision it produced; they are
stored as JSON-lines, one pair per line.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .policy import aggregate

log = logging.getLogger(__name__)

__all__ = [
    "TripRecord",
    "TripLoadResult",
    "ZoneGrid",
    "load_trips",
    "build_demand",
    "build_demand_from_counts",
    "forecast_demand",
    "perturb_trips",
    "TrainingPair",
    "harvest_training_pairs",
    "save_training_pairs",
    "load_training_pairs",
]


@dataclass(frozen=True)
class TripRecord:
    pickup_seconds: float  # seconds since the episode window start
    origin: int
    dest: int
    party: int = 1


@dataclass
class TripLoadResult:
    trips: list
    dropped_unmappable: int = 0
    skipped_malformed: int = 0


@dataclass(frozen=True)
class ZoneGrid:
    """Rectangular grid over planar coordinates; zone id = row * nx + col."""

    x0: float
    y0: float
    cell_w: float
    cell_h: float
    nx: int
    ny: int

    def locate(self, x: float, y: float) -> int | None:
        ix = math.floor((x - self.x0) / self.cell_w)
        iy = math.floor((y - self.y0) / self.cell_h)
        if 0 <= ix < self.nx and 0 <= iy < self.ny:
            return iy * self.nx + ix
        return None


_DEFAULT_COLUMNS = {
    "pickup_datetime": "pickup_datetime",
    "pickup_zone": "pickup_zone",
    "dropoff_zone": "dropoff_zone",
    "pickup_lon": "pickup_lon",
    "pickup_lat": "pickup_lat",
    "dropoff_lon": "dropoff_lon",
    "dropoff_lat": "dropoff_lat",
    "passenger_count": "passenger_count",
}


def _parse_time(value: str, t0: float | None) -> tuple[float, float]:
    try:
        seconds = float(value)
    except ValueError:
        seconds = datetime.fromisoformat(value).timestamp()
    if t0 is None:
        t0 = seconds
    return seconds - t0, t0


def load_trips(
    path: str | Path,
    zone_grid: ZoneGrid | None = None,
    columns: dict | None = None,
    n_zones: int | None = None,
) -> TripLoadResult:
    """Parse a trip CSV into TripRecords ordered by pickup time.

    Zone ids come from explicit zone columns when present, else from
    lon/lat columns mapped through `zone_grid`. Timestamps may be ISO
    datetimes or plain seconds; they are rebased to the first row.
    """
    cols = dict(_DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    result = TripLoadResult(trips=[])
    t0 = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, expected a header row")
        by_zone = cols["pickup_zone"] in reader.fieldnames
        for lineno, row in enumerate(reader, start=2):
            try:
                seconds, t0 = _parse_time(row[cols["pickup_datetime"]], t0)
                party = int(float(row.get(cols["passenger_count"], 1) or 1))
                if by_zone:
                    origin = int(row[cols["pickup_zone"]])
                    dest = int(row[cols["dropoff_zone"]])
                else:
                    if zone_grid is None:
                        raise ValueError("coordinate columns require a zone_grid")
                    origin = zone_grid.locate(float(row[cols["pickup_lon"]]), float(row[cols["pickup_lat"]]))
                    dest = zone_grid.locate(float(row[cols["dropoff_lon"]]), float(row[cols["dropoff_lat"]]))
            except (KeyError, ValueError) as exc:
                log.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)
                result.skipped_malformed += 1
                continue
            if origin is None or dest is None:
                result.dropped_unmappable += 1
                continue
            if n_zones is not None and not (0 <= origin < n_zones and 0 <= dest < n_zones):
                result.dropped_unmappable += 1
                continue
            result.trips.append(TripRecord(seconds, origin, dest, max(1, party)))
    result.trips.sort(key=lambda t: t.pickup_seconds)
    return result


def build_demand_from_counts(counts: np.ndarray, ratio) -> np.ndarray:
    """Vehicles needed per cell: ceil(rider count / ride-share ratio)."""
    ratio = np.asarray(ratio, dtype=float)
    if ratio.ndim == 2:
        ratio = ratio[:, :, None]
    return np.ceil(counts / ratio).astype(np.int64)


def build_demand(trips, n_zones: int, T: int, epoch_seconds: float, ratio) -> np.ndarray:
    """Demand tensor D[i][j][t] over T epochs starting at time zero."""
    counts = np.zeros((n_zones, n_zones, T), dtype=np.int64)
    for trip in trips:
        t = int(trip.pickup_seconds // epoch_seconds)
        if 0 <= t < T:
            counts[trip.origin, trip.dest, t] += trip.party
    return build_demand_from_counts(counts, ratio)


def forecast_demand(demand: np.ndarray, sigma_pct: float, rng) -> np.ndarray:
    """White noise per cell with std = sigma_pct% of the cell's true demand.

    Cells with zero demand stay zero; results round to non-negative ints.
    Deterministic given the generator/seed.
    """
    if sigma_pct < 0:
        raise ValueError(f"sigma_pct must be >= 0, got {sigma_pct}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if sigma_pct == 0:
        return demand.copy()
    noise = rng.normal(0.0, 1.0, demand.shape) * (sigma_pct / 100.0) * demand
    noisy = np.rint(demand + noise).astype(np.int64)
    np.maximum(noisy, 0, out=noisy)
    noisy[demand == 0] = 0
    return noisy


def perturb_trips(trips: list, rng, tick_seconds: float = 30.0) -> list:
    """Perturb an instance by adding/deleting a Normal(0, 2.5)-percent of trips.

    Positive draws duplicate a uniform sample of trips with +-1 tick time
    jitter; negative draws delete a uniform sample. Deterministic given the
    generator/seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    p = float(rng.normal(0.0, 2.5))
    n = len(trips)
    if n == 0 or p == 0.0:
        return list(trips)
    k = int(round(abs(p) / 100.0 * n))
    if k == 0:
        return list(trips)
    if p > 0:
        picks = rng.choice(n, size=k, replace=False)
        extra = []
        for idx in picks:
            t = trips[int(idx)]
            jitter = float(rng.choice([-1.0, 1.0])) * tick_seconds
            extra.append(
                TripRecord(max(0.0, t.pickup_seconds + jitter), t.origin, t.dest, t.party)
            )
        out = list(trips) + extra
    else:
        drop = set(int(i) for i in rng.choice(n, size=k, replace=False))
        out = [t for i, t in enumerate(trips) if i not in drop]
    out.sort(key=lambda t: t.pickup_seconds)
    return out


# ---------------------------------------------------------------------------
# Training pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    """(features, label) extracted from one relocation round.

    features = flatten(V) ++ flatten(D) for the exact window the optimizer
    saw; label = [inflow per zone, outflow per zone] of its first-epoch plan.
    """

    features: np.ndarray
    label: np.ndarray
    instance: str = ""
    epoch: int = -1


def harvest_training_pairs(scenario, policy, sim_cfg, instance_name: str = "") -> list:
    """Run one episode under an optimizing policy and collect training pairs.

    Rounds where the solver produced no incumbent are excluded (there is no
    label to learn from).
    """
    from .simulator import run_episode

    pairs = []

    def recorder(epoch, inst, plan, had_plan):
        if not had_plan:
            return
        agg = aggregate(plan)
        features = np.concatenate([inst.supply.ravel(), inst.demand.ravel()]).astype(float)
        label = np.concatenate([agg.inflow, agg.outflow])
        pairs.append(TrainingPair(features, label, instance_name, epoch))

    run_episode(scenario, policy, sim_cfg, recorder=recorder)
    return pairs


def save_training_pairs(pairs, path: str | Path) -> None:
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "instance": p.instance,
                        "epoch": p.epoch,
                        "features": p.features.tolist(),
                        "label": p.label.tolist(),
                    }
                )
                + "\n"
            )


def load_training_pairs(path: str | Path) -> list:
    pairs = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            pairs.append(
                TrainingPair(
                    np.asarray(doc["features"], dtype=float),
                    np.asarray(doc["label"], dtype=float),
                    doc.get("instance", ""),
                    doc.get("epoch", -1),
                )
            )
    return pairs
