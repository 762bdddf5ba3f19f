"""Core data types shared by all modules, plus instance validation and I/O.

All tensors are dense numpy arrays indexed ``[i][j][t]`` (demand),
``[i][t]`` (supply) or ``[i][j]`` (travel / ride-share matrices), with
zones ``0..n_zones-1`` and epochs ``0..T-1`` (epoch ``t`` in the
formulation is array index ``t-1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ZoneSet",
    "HorizonConfig",
    "WeightConfig",
    "MpcInstance",
    "RelocationPlan",
    "AggregatedPlan",
    "Violation",
    "validate_instance",
    "save_instance",
    "load_instance",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ZoneSet:
    """Dense set of service zones with abstract planar centroids (meters)."""

    count: int
    centroids: np.ndarray = field(default=None)  # shape (count, 2)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"zone count must be >= 1, got {self.count}")
        c = self.centroids
        if c is None:
            c = np.zeros((self.count, 2))
        c = _readonly(np.asarray(c, dtype=float))
        if c.shape != (self.count, 2):
            raise ValueError(f"centroids shape {c.shape} != ({self.count}, 2)")
        object.__setattr__(self, "centroids", c)

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True)
class HorizonConfig:
    """Optimization window: T epochs, rider patience s epochs, epoch length."""

    T: int
    s: int
    epoch_length: float = 300.0  # seconds

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not 1 <= self.s <= self.T:
            raise ValueError(f"s must satisfy 1 <= s <= T, got s={self.s}, T={self.T}")
        if self.epoch_length <= 0:
            raise ValueError(f"epoch_length must be > 0, got {self.epoch_length}")


@dataclass(frozen=True)
class WeightConfig:
    """Objective weights for the relocation optimization.

    Service weight of a rider arriving at epoch t and picked up at rho is
    ``qp_base**t * qp_decay**(rho - t)``; relocation cost between zones i, j
    at epoch t is ``qr_scale * qr_base**t * eta_ij`` with eta in seconds.
    ``big_M`` couples relocations to the unserved-demand indicator and must
    be at least the fleet size.
    """

    qp_base: float = 0.5
    qp_decay: float = 0.75
    qr_scale: float = 0.001
    qr_base: float = 0.5
    big_M: int = 1000

    def __post_init__(self):
        for name in ("qp_base", "qp_decay", "qr_base"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.qr_scale <= 0:
            raise ValueError(f"qr_scale must be > 0, got {self.qr_scale}")
        if self.big_M < 1:
            raise ValueError(f"big_M must be a positive integer, got {self.big_M}")


@dataclass(frozen=True)
class MpcInstance:
    """One relocation-optimization input: demand, supply and travel data.

    demand[i][j][t]        vehicles needed for riders i->j arriving in epoch t
    supply[i][t]           idle vehicles becoming available in zone i in epoch t
    travel_epochs[i][j]    whole epochs to travel i->j (>= 1)
    travel_seconds[i][j]   travel time i->j in seconds (>= 0)
    ride_share_ratio[i][j] average riders per vehicle trip i->j
    """

    zones: ZoneSet
    horizon: HorizonConfig
    demand: np.ndarray
    supply: np.ndarray
    travel_epochs: np.ndarray
    travel_seconds: np.ndarray
    ride_share_ratio: np.ndarray = field(default=None)
    weights: WeightConfig = field(default_factory=WeightConfig)

    def __post_init__(self):
        n = self.zones.count
        object.__setattr__(self, "demand", _readonly(np.asarray(self.demand, dtype=np.int64)))
        object.__setattr__(self, "supply", _readonly(np.asarray(self.supply, dtype=np.int64)))
        # intra-zone trips occupy a vehicle for one epoch; clip lambda_ii up to 1
        lam = np.asarray(self.travel_epochs, dtype=np.int64).copy()
        if lam.shape == (n, n):
            np.fill_diagonal(lam, np.maximum(np.diagonal(lam), 1))
        object.__setattr__(self, "travel_epochs", _readonly(lam))
        object.__setattr__(
            self, "travel_seconds", _readonly(np.asarray(self.travel_seconds, dtype=float))
        )
        w = self.ride_share_ratio
        if w is None:
            w = np.full((n, n), 1.5)
        elif np.isscalar(w):
            w = np.full((n, n), float(w))
        object.__setattr__(self, "ride_share_ratio", _readonly(np.asarray(w, dtype=float)))

    @property
    def n_zones(self) -> int:
        return self.zones.count

    @property
    def T(self) -> int:
        return self.horizon.T


@dataclass(frozen=True)
class RelocationPlan:
    """Zone-to-zone integer relocation flows for the first epoch; zero diagonal."""

    flows: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flows, dtype=np.int64)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError(f"flows must be a square matrix, got shape {f.shape}")
        if (f < 0).any():
            raise ValueError("flows must be non-negative")
        if np.diagonal(f).any():
            raise ValueError("flows diagonal must be zero")
        object.__setattr__(self, "flows", _readonly(f))

    @classmethod
    def zero(cls, n_zones: int) -> "RelocationPlan":
        return cls(np.zeros((n_zones, n_zones), dtype=np.int64))

    @property
    def n_zones(self) -> int:
        return self.flows.shape[0]

    def total(self) -> int:
        return int(self.flows.sum())


@dataclass(frozen=True)
class AggregatedPlan:
    """Per-zone relocation outflow/inflow totals, the learning target.

    Entries are real-valued before feasibility restoration and integral,
    balanced (sum outflow == sum inflow) and supply-capped afterwards.
    """

    outflow: np.ndarray
    inflow: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.outflow, dtype=float)
        d = np.asarray(self.inflow, dtype=float)
        if o.shape != d.shape or o.ndim != 1:
            raise ValueError(f"outflow/inflow must be equal-length vectors, got {o.shape}, {d.shape}")
        object.__setattr__(self, "outflow", _readonly(o))
        object.__setattr__(self, "inflow", _readonly(d))

    @property
    def n_zones(self) -> int:
        return self.outflow.shape[0]

    def is_restored(self, supply1: np.ndarray | None = None, tol: float = 1e-9) -> bool:
        """True iff integral, non-negative, balanced and (optionally) supply-capped."""
        o, d = self.outflow, self.inflow
        ok = (
            np.allclose(o, np.round(o), atol=tol)
            and np.allclose(d, np.round(d), atol=tol)
            and (o >= -tol).all()
            and (d >= -tol).all()
            and abs(o.sum() - d.sum()) <= tol
        )
        if ok and supply1 is not None:
            ok = (o <= np.asarray(supply1) + tol).all()
        return bool(ok)


@dataclass(frozen=True)
class Violation:
    field: str
    index: tuple
    rule: str

    def __str__(self):
        idx = "" if not self.index else str(list(self.index))
        return f"{self.field}{idx}: {self.rule}"


def validate_instance(inst: MpcInstance) -> list[Violation]:
    """Check every instance invariant; empty report means the instance is well formed.

    Pure: the same instance always yields the same report. Each violation
    names the offending field, index and rule.
    """
    n, T = inst.zones.count, inst.horizon.T
    report: list[Violation] = []

    def check_shape(name, arr, shape):
        if arr.shape != shape:
            report.append(Violation(name, (), f"expected shape {shape}, got {arr.shape}"))
            return False
        return True

    def check_nonneg(name, arr):
        for idx in zip(*np.nonzero(arr < 0)):
            report.append(Violation(name, tuple(int(k) for k in idx), "must be >= 0"))

    if check_shape("demand", inst.demand, (n, n, T)):
        check_nonneg("demand", inst.demand)
    if check_shape("supply", inst.supply, (n, T)):
        check_nonneg("supply", inst.supply)
    if check_shape("travel_epochs", inst.travel_epochs, (n, n)):
        for idx in zip(*np.nonzero(inst.travel_epochs < 1)):
            report.append(Violation("travel_epochs", tuple(int(k) for k in idx), "must be >= 1"))
    if check_shape("travel_seconds", inst.travel_seconds, (n, n)):
        check_nonneg("travel_seconds", inst.travel_seconds)
    if check_shape("ride_share_ratio", inst.ride_share_ratio, (n, n)):
        for idx in zip(*np.nonzero(inst.ride_share_ratio <= 0)):
            report.append(Violation("ride_share_ratio", tuple(int(k) for k in idx), "must be > 0"))
    return report


# ---------------------------------------------------------------------------
# Instance file format: a single JSON document with dense arrays.
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def instance_to_dict(inst: MpcInstance) -> dict:
    return {
        "version": _FORMAT_VERSION,
        "zones": {"count": inst.zones.count, "centroids": inst.zones.centroids.tolist()},
        "horizon": {
            "T": inst.horizon.T,
            "s": inst.horizon.s,
            "epoch_length": inst.horizon.epoch_length,
        },
        "demand": inst.demand.tolist(),
        "supply": inst.supply.tolist(),
        "travel_epochs": inst.travel_epochs.tolist(),
        "travel_seconds": inst.travel_seconds.tolist(),
        "ride_share_ratio": inst.ride_share_ratio.tolist(),
        "weights": {
            "qp_base": inst.weights.qp_base,
            "qp_decay": inst.weights.qp_decay,
            "qr_scale": inst.weights.qr_scale,
            "qr_base": inst.weights.qr_base,
            "big_M": inst.weights.big_M,
        },
    }


def instance_from_dict(doc: dict) -> MpcInstance:
    version = doc.get("version", _FORMAT_VERSION)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported instance format version {version} (expected {_FORMAT_VERSION})")
    return MpcInstance(
        zones=ZoneSet(doc["zones"]["count"], np.asarray(doc["zones"]["centroids"])),
        horizon=HorizonConfig(**doc["horizon"]),
        demand=np.asarray(doc["demand"]),
        supply=np.asarray(doc["supply"]),
        travel_epochs=np.asarray(doc["travel_epochs"]),
        travel_seconds=np.asarray(doc["travel_seconds"]),
        ride_share_ratio=np.asarray(doc["ride_share_ratio"]),
        weights=WeightConfig(**doc["weights"]),
    )


def save_instance(inst: MpcInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def load_instance(path: str | Path) -> MpcInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))
