"""Independent oracles and generators shared by the test suite.

The window-optimum oracle enumerates integer decisions epoch by epoch with
memoization on the full system state, so it shares no code path with the
MILP encoding or the simplex.
"""

from __future__ import annotations

import itertools

import numpy as np

from fleetlab.domain import HorizonConfig, MpcInstance, WeightConfig, ZoneSet


def _allocations(caps, budget):
    """All tuples a with 0 <= a[k] <= caps[k] and sum(a) <= budget."""
    if not caps:
        yield ()
        return
    head_cap = min(caps[0], budget)
    for amount in range(head_cap + 1):
        for rest in _allocations(caps[1:], budget - amount):
            yield (amount,) + rest


def enumerate_window_optimum(inst: MpcInstance) -> float:
    """Exact optimum of the relocation window by exhaustive search.

    Dynamics: vehicles available in zone i at epoch t (supply + stayed +
    finished trips) may serve alive demand cohorts of their zone, relocate
    (only once every cohort serveable at t is exhausted), or stay. Serving
    cohort t0 at epoch t earns qp(t0,t)*W; relocating costs qr. Trips end
    lambda epochs later; arrivals past the window are dropped.
    """
    n, T, s = inst.n_zones, inst.horizon.T, inst.horizon.s
    D, V = inst.demand, inst.supply
    lam, eta, W = inst.travel_epochs, inst.travel_seconds, inst.ride_share_ratio
    w = inst.weights

    def qp(t0, rho):
        return w.qp_base**t0 * w.qp_decay ** (rho - t0)

    def qr(i, j, t):
        return w.qr_scale * w.qr_base**t * eta[i, j]

    def cohorts_arriving(t):
        return [(i, j, t) for i in range(n) for j in range(n) if D[i, j, t - 1] > 0]

    memo: dict = {}

    def rec(t, idle, arrivals, rem):
        if t > T:
            return 0.0
        key = (t, idle, arrivals, rem)
        if key in memo:
            return memo[key]
        remd = dict(rem)

        zone_choices = []
        for i in range(n):
            alive = sorted(k for k in remd if k[0] == i)
            caps = [remd[k] for k in alive]
            reloc_to = [j for j in range(n) if j != i and t + lam[i, j] <= T]
            total_alive = sum(caps)
            choices = []
            for picks in _allocations(tuple(caps), idle[i]):
                picked = sum(picks)
                value = sum(
                    a * qp(k[2], t) * W[i, k[1]] for a, k in zip(picks, alive)
                )
                choices.append((dict(zip(alive, picks)), {}, value))
                if picked == total_alive:  # zone cleared: relocations unlocked
                    for rel in _allocations(tuple([idle[i] - picked] * len(reloc_to)), idle[i] - picked):
                        if sum(rel) == 0:
                            continue
                        rvalue = value - sum(a * qr(i, j, t) for a, j in zip(rel, reloc_to))
                        choices.append((dict(zip(alive, picks)), dict(zip(reloc_to, rel)), rvalue))
            zone_choices.append(choices)

        best = -np.inf
        for combo in itertools.product(*zone_choices):
            value = sum(ch[2] for ch in combo)
            new_arr = [list(row) for row in arrivals]
            new_rem = dict(remd)
            leftover = list(idle)
            for i, (picks, relocs, _) in enumerate(combo):
                for k, a in picks.items():
                    if a == 0:
                        continue
                    new_rem[k] -= a
                    leftover[i] -= a
                    tau = t + lam[i, k[1]]
                    if tau <= T:
                        new_arr[k[1]][tau - 1] += a
                for j, a in relocs.items():
                    if a == 0:
                        continue
                    leftover[i] -= a
                    new_arr[j][t + lam[i, j] - 1] += a
            if t < T:
                next_idle = tuple(
                    leftover[i] + int(V[i, t]) + new_arr[i][t] for i in range(n)
                )
                next_rem = {
                    k: v for k, v in new_rem.items() if t + 1 <= min(k[2] + s - 1, T)
                }
                for k in cohorts_arriving(t + 1):
                    next_rem[k] = int(D[k[0], k[1], t])
                sub = rec(
                    t + 1,
                    next_idle,
                    tuple(tuple(row) for row in new_arr),
                    tuple(sorted(next_rem.items())),
                )
            else:
                sub = 0.0
            best = max(best, value + sub)
        memo[key] = best
        return best

    idle0 = tuple(int(V[i, 0]) for i in range(n))
    rem0 = tuple(sorted((k, int(D[k[0], k[1], 0])) for k in cohorts_arriving(1)))
    arr0 = tuple((0,) * T for _ in range(n))
    return rec(1, idle0, arr0, rem0)


def random_tiny_instance(rng: np.random.Generator) -> MpcInstance:
    """Small random window instance suited to exhaustive enumeration."""
    n = int(rng.integers(2, 4))
    T = int(rng.integers(2, 4))
    s = int(rng.integers(1, T + 1))
    fleet = int(rng.integers(1, 6))

    supply = np.zeros((n, T), dtype=np.int64)
    for _ in range(fleet):
        supply[rng.integers(n), rng.integers(T)] += 1

    demand = np.zeros((n, n, T), dtype=np.int64)
    for _ in range(int(rng.integers(1, 5))):
        demand[rng.integers(n), rng.integers(n), rng.integers(T)] = int(rng.integers(1, 3))

    lam = rng.integers(1, 3, (n, n))
    np.fill_diagonal(lam, 1)
    eta = lam * 300.0 + rng.integers(0, 120, (n, n))
    np.fill_diagonal(eta, 0.0)

    centroids = rng.uniform(0, 2000, (n, 2))
    return MpcInstance(
        zones=ZoneSet(n, centroids),
        horizon=HorizonConfig(T=T, s=s),
        demand=demand,
        supply=supply,
        travel_epochs=lam,
        travel_seconds=eta,
        ride_share_ratio=float(rng.choice([1.0, 1.5, 2.0])),
        weights=WeightConfig(big_M=max(fleet, 1)),
    )
