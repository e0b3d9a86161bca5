"""Domination and approximation couplings.

Two constructions live here:

* the two-family coupling of stirring processes that yields stochastic
  domination on an inner space-time window (box-cover pairing of particles,
  refreshed on quadratic epochs, matched pairs moving together);
* the shared-randomness pairing of infections with branching-walk walkers,
  exact up to the first transmission mark that lands inside the containment
  set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from stircp import _kernels
from stircp.icp import ICPParams
from stircp.lattice import BoundaryMode, DomainError, Geometry
from stircp.stats import subseed


class FailureCause(Enum):
    PAIRING_EPOCH = "pairing_epoch_not_good"
    FLOW_ESCAPE = "boundary_flow_reached_inner_shell"
    UNMATCHED = "unmatched_particle_in_window"


_CAUSE_BY_CODE = {1: FailureCause.PAIRING_EPOCH, 2: FailureCause.FLOW_ESCAPE, 3: FailureCause.UNMATCHED}


@dataclass(frozen=True)
class Pairing:
    pairs: dict  # xi particle site -> xi' particle site, within one cover box
    matched: dict  # xi particle site -> bool (co-located from the start)
    boxes: tuple  # cover box descriptors ((lo per axis), (hi per axis))


@dataclass(frozen=True)
class CouplingOutcome:
    success: bool
    cause: FailureCause | None
    dominated_window_verified: bool
    matched_at_end: int
    epochs_checked: int


def cover_boxes(g: Geometry, ell: int, L: int):
    """Disjoint radius-ell boxes covering the centered radius-(L-2*ell) ball.

    The tiling is anchored at the lower corner -(L-2*ell) on every axis and
    may overshoot the covered ball on the high side.  Rejected when the
    cover would wrap around the torus.
    """
    if ell >= L:
        raise DomainError("need ell < L")
    half = L - 2 * ell
    if half < 0:
        raise DomainError("need L >= 2*ell")
    width = 2 * ell + 1
    nb = (2 * half + 1 + width - 1) // width
    extent = nb * width
    if extent > g.n:
        raise DomainError(
            f"cover of extent {extent} does not fit on a torus of side {g.n}"
        )
    starts = [-half + j * width for j in range(nb)]
    boxes = []
    for corner in itertools.product(starts, repeat=g.d):
        lo = tuple(corner)
        hi = tuple(c + width - 1 for c in corner)
        boxes.append((lo, hi))
    return boxes


def box_id_array(g: Geometry, ell: int, L: int) -> tuple[np.ndarray, int]:
    """Per-site cover-box index (-1 outside the cover), relative to the
    geometry's center site."""
    boxes = cover_boxes(g, ell, L)
    half = L - 2 * ell
    width = 2 * ell + 1
    nb = (2 * half + 1 + width - 1) // width
    origin = g.origin()
    out = np.full(g.nsites, -1, dtype=np.int64)
    for idx in range(g.nsites):
        coords = g.site_coords(idx)
        jval = 0
        ok = True
        for c, cc in zip(coords, origin):
            delta = c - cc
            if g.boundary is BoundaryMode.TORUS:
                if delta > g.n // 2:
                    delta -= g.n
                elif delta < -(g.n // 2):
                    delta += g.n
            if not (-half <= delta <= -half + nb * width - 1):
                ok = False
                break
            jval = jval * nb + (delta + half) // width
        if ok:
            out[idx] = jval
    return out, nb ** g.d


class NotGood:
    """Sentinel: no within-box injective pairing exists."""

    def __repr__(self):
        return "NotGood"


NOT_GOOD = NotGood()


def good_pairing(xi: np.ndarray, xi_prime: np.ndarray, ell: int, L: int, g: Geometry):
    """Within-box lexicographic injection from xi particles to xi' particles
    over the cover; NotGood when some box holds more xi than xi' particles."""
    box_id, nboxes = box_id_array(g, ell, L)
    pairs = {}
    matched = {}
    for bx in range(nboxes):
        sites = np.flatnonzero(box_id == bx)
        ones = [int(s) for s in sites if xi[s] != 0]
        twos = [int(s) for s in sites if xi_prime[s] != 0]
        if len(ones) > len(twos):
            return NOT_GOOD
        for z, mz in zip(ones, twos):
            pairs[z] = mz
            matched[z] = z == mz
    boxes = tuple(cover_boxes(g, ell, L))
    return Pairing(pairs, matched, boxes)


def _shells(g: Geometry, r: int):
    from stircp.lattice import ball_indices

    origin = g.origin()
    outer = set(ball_indices(g, origin, r).tolist())
    inner = set(ball_indices(g, origin, r - 1).tolist()) if r >= 1 else set()
    return sorted(outer - inner)


def couple_interchange(
    xi: np.ndarray,
    xi_prime: np.ndarray,
    ell: int,
    L: int,
    t: float,
    T: float,
    seed: int,
    g: Geometry,
    speed: float = 1.0,
) -> CouplingOutcome:
    """Coupled rate-one evolutions of (xi, xi') with the two-family rule;
    claims xi' >= xi on the inner quarter window [t, T] and verifies the
    claim exactly on the realized run.

    ``speed`` reuses the rate-one construction at rate v by rescaling the
    window into rate-one time units.
    """
    if not (0 < t <= T):
        raise DomainError("need 0 < t <= T")
    box_id, nboxes = box_id_array(g, ell, L)
    from stircp.lattice import ball_indices

    edges = g.edges()
    edge_a = np.array([e[0] for e in edges], dtype=np.int64)
    edge_b = np.array([e[1] for e in edges], dtype=np.int64)
    src = np.array(_shells(g, L // 2), dtype=np.int64)
    probe = np.array(_shells(g, L // 4), dtype=np.int64)
    b14 = np.zeros(g.nsites, dtype=np.bool_)
    b14[ball_indices(g, g.origin(), L // 4)] = True
    out = np.zeros(_kernels.N_AB_SCALARS, dtype=np.int64)
    xi_final = np.zeros(g.nsites, dtype=np.uint8)
    _kernels._couple_ab_one(
        seed,
        0,
        edge_a,
        edge_b,
        np.ascontiguousarray(xi, dtype=np.uint8),
        np.ascontiguousarray(xi_prime, dtype=np.uint8),
        box_id,
        nboxes,
        src,
        probe,
        b14,
        float(ell * ell),
        float(t * speed),
        float(T * speed),
        False,
        out,
        xi_final,
    )
    success = bool(out[0])
    cause = None if success else _CAUSE_BY_CODE.get(int(out[1]))
    return CouplingOutcome(
        success=success,
        cause=cause,
        dominated_window_verified=success and out[2] == 0,
        matched_at_end=int(out[4]),
        epochs_checked=int(out[3]),
    )


def couple_interchange_batch(
    p_lo: float,
    p_hi: float,
    ell: int,
    L: int,
    t: float,
    T: float,
    replicas: int,
    seed: int,
    g: Geometry,
    collect_final: bool = False,
    stop_on_failure: bool = True,
):
    """Replica batch with Bernoulli(p_lo)/Bernoulli(p_hi) initial pairs;
    returns the raw per-replica scalar table (see kernel docstring) and
    optionally the final xi fields for marginal-law checks.

    Failed runs stop at their first failure by default; disable when the
    final fields are wanted (marginal-law comparisons)."""
    box_id, nboxes = box_id_array(g, ell, L)
    from stircp.lattice import ball_indices

    edges = g.edges()
    edge_a = np.array([e[0] for e in edges], dtype=np.int64)
    edge_b = np.array([e[1] for e in edges], dtype=np.int64)
    src = np.array(_shells(g, L // 2), dtype=np.int64)
    probe = np.array(_shells(g, L // 4), dtype=np.int64)
    b14 = np.zeros(g.nsites, dtype=np.bool_)
    b14[ball_indices(g, g.origin(), L // 4)] = True
    return _kernels.couple_ab_batch(
        seed,
        replicas,
        edge_a,
        edge_b,
        p_lo,
        p_hi,
        box_id,
        nboxes,
        src,
        probe,
        b14,
        float(ell * ell),
        float(t),
        float(T),
        collect_final,
        stop_on_failure,
    )


# ---------------------------------------------------------------------------
# infection <-> walker pairing
# ---------------------------------------------------------------------------


@dataclass
class PairedRun:
    collision_time: float | None
    bijection_ok: bool
    identity_ok: bool
    attempts_before_collision: int
    attempts_on_occupied: int
    n_infections: int
    containment_size: int
    capacity_exceeded: bool
    records: dict
    post_walkers: list  # unwrapped positions alive at the coupling end


def _geometry_arrays(g: Geometry):
    edges = g.edges()
    edge_a = np.array([e[0] for e in edges], dtype=np.int64)
    edge_b = np.array([e[1] for e in edges], dtype=np.int64)
    axis = np.empty(len(edges), dtype=np.int64)
    for i, (a, b) in enumerate(edges):
        ca = g.site_coords(a)
        cb = g.site_coords(b)
        for ax in range(g.d):
            if ca[ax] != cb[ax]:
                axis[i] = ax
                break
    nt = np.ascontiguousarray(g.neighbor_table())
    return nt, edge_a, edge_b, axis


def couple_icp_brw(
    A,
    params: ICPParams,
    h0: float,
    seed: int,
    rec_cap: int = 4096,
    thr54: float | None = None,
) -> PairedRun:
    """One shared-randomness paired run (verbose records)."""
    g = params.g
    nt, edge_a, edge_b, axis = _geometry_arrays(g)
    initial = np.array(sorted(int(a) for a in A), dtype=np.int64)
    if thr54 is None:
        thr54 = params.v ** (7.0 / 16.0)
    out_scalar, out_float, records = _kernels.pairing_single(
        seed,
        0,
        nt,
        edge_a,
        edge_b,
        axis,
        g.d,
        initial,
        params.v,
        params.lam,
        params.p,
        float(h0),
        rec_cap,
        float(thr54),
    )
    alive = (records["tjp"] < 0).nonzero()[0]
    post = [tuple(int(v) for v in records["W"][j][: g.d]) for j in alive] if "W" in records else []
    return PairedRun(
        collision_time=float(out_float[0]) if out_scalar[0] else None,
        bijection_ok=bool(out_scalar[1]),
        identity_ok=bool(out_scalar[6]),
        attempts_before_collision=int(out_scalar[2]),
        attempts_on_occupied=int(out_scalar[3]),
        n_infections=int(out_scalar[4]),
        containment_size=int(out_scalar[7]),
        capacity_exceeded=bool(out_scalar[5]),
        records=records,
        post_walkers=post,
    )


def couple_icp_brw_batch(
    A,
    params: ICPParams,
    h0: float,
    replicas: int,
    seed: int,
    rec_cap: int = 4096,
    thr54: float | None = None,
):
    """Replica batch; returns the kernel scalar and float tables."""
    g = params.g
    nt, edge_a, edge_b, axis = _geometry_arrays(g)
    initial = np.array(sorted(int(a) for a in A), dtype=np.int64)
    if thr54 is None:
        thr54 = params.v ** (7.0 / 16.0)
    return _kernels.pairing_batch(
        seed,
        replicas,
        nt,
        edge_a,
        edge_b,
        axis,
        g.d,
        initial,
        params.v,
        params.lam,
        params.p,
        float(h0),
        rec_cap,
        float(thr54),
    )


def continue_brw_free(positions, beta: float, v: float, horizon: float, seed: int, d: int, cap: int = 100_000):
    """Independent branching walk on the free lattice from given unwrapped
    positions (the post-collision continuation)."""
    rng = np.random.Generator(np.random.Philox(key=subseed(seed, 0xBF)))
    alive = [tuple(p) for p in positions]
    per = 1.0 + beta + 2 * d * v
    t = 0.0
    while alive:
        total = len(alive) * per
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        k = int(rng.integers(0, len(alive)))
        u = rng.random() * per
        if u < 1.0:
            alive[k] = alive[-1]
            alive.pop()
        elif u < 1.0 + beta:
            if len(alive) + 1 > cap:
                raise DomainError("walker population exceeded cap")
            alive.append(alive[k])
        else:
            direction = int(rng.integers(0, 2 * d))
            ax, sg = direction // 2, (1 if direction % 2 == 0 else -1)
            pos = list(alive[k])
            pos[ax] += sg
            alive[k] = tuple(pos)
    return alive
