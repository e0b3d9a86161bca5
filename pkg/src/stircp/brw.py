"""Branching random walk: walkers jump to each neighbor at rate v, die at
rate 1, and split in two (children co-located) at rate beta."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stircp import _kernels
from stircp.lattice import CapacityError, DomainError, Geometry, ball_indices
from stircp.stats import Estimate, binomial_estimate, subseed


@dataclass
class WalkerForest:
    """Genealogy plus the alive set.  ``records`` rows are
    (id, birth_time, parent_id, death_time or -1);  positions are kept for
    alive walkers only."""

    geometry: Geometry
    records: list = field(default_factory=list)
    alive: dict = field(default_factory=dict)  # id -> flat site
    time: float = 0.0

    def positions(self):
        return list(self.alive.values())

    def to_json(self):
        counts = {}
        for s in self.alive.values():
            counts[s] = counts.get(s, 0) + 1
        return {
            "time": self.time,
            "alive": [{"site": int(s), "count": int(c)} for s, c in sorted(counts.items())],
        }


def run_brw(
    g: Geometry,
    initial_sites,
    beta: float,
    v: float,
    horizon: float,
    seed: int,
    cap: int = 100_000,
) -> WalkerForest:
    """Exact event-driven run; total rate |alive| * (1 + beta + 2d v)."""
    if beta < 0 or v < 0:
        raise DomainError("rates must be nonnegative")
    rng = np.random.Generator(np.random.Philox(key=subseed(seed, 0xB0)))
    nt = g.neighbor_table()
    deg = 2 * g.d
    forest = WalkerForest(g)
    next_id = 0
    for s in initial_sites:
        forest.records.append([next_id, 0.0, -1, -1.0])
        forest.alive[next_id] = int(s)
        next_id += 1
    per = 1.0 + beta + deg * v
    t = 0.0
    ids = list(forest.alive.keys())
    while ids:
        total = len(ids) * per
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        k = int(rng.integers(0, len(ids)))
        wid = ids[k]
        u = rng.random() * per
        if u < 1.0:
            forest.records[wid][3] = t
            del forest.alive[wid]
            ids[k] = ids[-1]
            ids.pop()
        elif u < 1.0 + beta:
            if len(ids) + 1 > cap:
                raise CapacityError("walker population exceeded cap", cap=cap)
            forest.records.append([next_id, t, wid, -1.0])
            forest.alive[next_id] = forest.alive[wid]
            ids.append(next_id)
            next_id += 1
        else:
            direction = int(rng.integers(0, deg))
            nb = int(nt[forest.alive[wid], direction])
            if nb >= 0:
                forest.alive[wid] = nb
    forest.time = min(t, horizon)
    return forest


def occupancy(forest: WalkerForest, center, r: int) -> int:
    """Alive walkers inside the radius-r ball, multiplicities counted."""
    box = set(ball_indices(forest.geometry, center, r).tolist())
    return sum(1 for s in forest.alive.values() if s in box)


def extinction_probability(beta: float) -> float:
    """Smallest fixed point of the offspring equation: 1 below beta=1,
    1/beta above."""
    return 1.0 if beta <= 1.0 else 1.0 / beta


def brw_extinction(
    beta: float, n0: int, horizon: float, replicas: int, seed: int, cap: int = 100_000
) -> Estimate:
    """Extinction-by-horizon frequency from n0 ancestors (population chain
    only; positions do not enter extinction)."""
    out = _kernels.brw_population_batch(seed, replicas, n0, beta, horizon, cap)
    extinct = int(out[:, 0].sum())
    capped = int(out[:, 2].sum())
    return binomial_estimate(extinct, replicas, seed, excluded=0), capped


def mean_field_params(d: int, p: float, lam: float, h0_hint: float | None = None):
    """Growth parameters of the walker skeleton: branching rate 2*d*p*lam,
    the occupancy margin alpha, and the per-site target k = 2/alpha.

    The calibration height h0 is configuration, not derivable in closed
    form; ``h0_hint`` passes one through, and :func:`calibrate_h0` sweeps
    for one empirically.
    """
    beta = 2.0 * d * p * lam
    if beta <= 1.0:
        return {"beta": beta, "alpha": None, "k": None, "h0_hint": h0_hint, "supercritical": False}
    alpha = (beta - 1.0) / (2.0 * beta)
    k = 2.0 / alpha
    return {"beta": beta, "alpha": alpha, "k": k, "h0_hint": h0_hint, "supercritical": True}


def box_fill_event(
    forest: WalkerForest, k: int, inner_radius: int, outer_radius: int
) -> bool:
    """True when every ball of the inner radius centered in the outer ball
    holds at least k walkers."""
    g = forest.geometry
    origin = g.origin()
    for c in ball_indices(g, origin, outer_radius):
        if occupancy(forest, g.site_coords(int(c)), inner_radius) < k:
            return False
    return True


def calibrate_h0(
    d: int,
    p: float,
    lam: float,
    v: float,
    side: int,
    h_grid,
    replicas: int,
    seed: int,
    inner_radius: int | None = None,
    outer_radius: int | None = None,
    cap: int = 100_000,
):
    """Sweep heights until the box-fill frequency exceeds the target alpha.

    Radii default to the diffusive forms sqrt(v)/2 and 8*sqrt(v); both are
    overridable so the sweep stays runnable at desk scale.
    """
    params = mean_field_params(d, p, lam)
    if not params["supercritical"]:
        raise DomainError("calibration needs a supercritical branching rate")
    g = Geometry(d, side)
    r_in = inner_radius if inner_radius is not None else max(1, int(math.sqrt(v) / 2))
    r_out = outer_radius if outer_radius is not None else int(8 * math.sqrt(v))
    k = int(math.ceil(params["k"]))
    rows = []
    chosen = None
    for h in h_grid:
        hits = 0
        for r in range(replicas):
            forest = run_brw(g, [g.site_index(g.origin())], params["beta"], v, h, subseed(seed, r), cap)
            if box_fill_event(forest, k, r_in, r_out):
                hits += 1
        freq = hits / replicas
        rows.append({"h": h, "freq": freq})
        if chosen is None and freq > params["alpha"]:
            chosen = h
    return {"params": params, "k": k, "rows": rows, "h0": chosen}
