"""The stirring process: flow queries, occupancy evolution, and the
meeting / discrepancy / density-deviation estimators used for decoupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from stircp import _kernels
from stircp.lattice import BoundaryMode, DomainError, Geometry, ball_indices
from stircp.marks import MarkSet, Rates, sample_marks
from stircp.stats import Estimate, binomial_estimate, subseed


class Direction(Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class DensityWindow:
    """Deviation query: some radius-ell box inside the radius-L ball shows
    particle density above (Up) / below (Down) p at some time before t."""

    ell: int
    L: int
    t: float
    p: float
    direction: Direction

    def __post_init__(self):
        if not (0 <= self.ell < self.L):
            raise DomainError("need 0 <= ell < L")
        if self.t <= 0:
            raise DomainError("horizon must be positive")
        if not (0.0 <= self.p <= 1.0):
            raise DomainError("p must lie in [0,1]")


def _jump_sequence(m: MarkSet):
    """Jump marks as (ea, eb, times) sorted by time; cached on the MarkSet."""
    cached = getattr(m, "_jump_sorted", None)
    if cached is not None:
        return cached
    ea, eb, times = m.jump_edges()
    order = np.argsort(times, kind="stable")
    seq = (
        np.ascontiguousarray(ea[order]),
        np.ascontiguousarray(eb[order]),
        np.ascontiguousarray(times[order]),
    )
    m._jump_sorted = seq
    return seq


def flow(m: MarkSet, x: int, s: float, t: float) -> int:
    """Stirring flow: the site holding, at time t, the content that sat at
    site x at time s.  For t < s this resolves the unique preimage by
    replaying the swap sequence in reverse.
    """
    if min(s, t) < 0 or max(s, t) > m.horizon:
        raise DomainError("flow query outside the mark window")
    ea, eb, times = _jump_sequence(m)
    if t >= s:
        lo = np.searchsorted(times, s, side="right")
        hi = np.searchsorted(times, t, side="right")
        return int(_kernels.flow_point(x, ea[lo:hi], eb[lo:hi], True))
    lo = np.searchsorted(times, t, side="right")
    hi = np.searchsorted(times, s, side="right")
    return int(_kernels.flow_point(x, ea[lo:hi], eb[lo:hi], False))


def evolve(xi0: np.ndarray, m: MarkSet, t: float) -> np.ndarray:
    """Occupancy at time t for the stirring process started from xi0.

    Equals xi0 pulled back through the flow; implemented by replaying the
    swaps forward on a copy, which is the same map and conserves the
    particle count exactly.
    """
    if not (0 <= t <= m.horizon):
        raise DomainError("time outside the mark window")
    if len(xi0) != m.geometry.nsites:
        raise DomainError("occupancy length does not match geometry")
    ea, eb, times = _jump_sequence(m)
    hi = np.searchsorted(times, t, side="right")
    out = np.array(xi0, copy=True)
    _kernels.apply_swaps(out, ea[:hi], eb[:hi])
    return out


def flow_permutation(m: MarkSet, t: float) -> np.ndarray:
    """perm[x] = flow(m, x, 0, t) for every site, computed in one replay."""
    ea, eb, times = _jump_sequence(m)
    hi = np.searchsorted(times, t, side="right")
    # content started at x ends at position y iff pulling back y gives x:
    # evolve the identity labels forward and invert.
    labels = np.arange(m.geometry.nsites, dtype=np.int64)
    _kernels.apply_swaps(labels, ea[:hi], eb[:hi])
    perm = np.empty_like(labels)
    perm[labels] = np.arange(m.geometry.nsites, dtype=np.int64)
    return perm


# ---------------------------------------------------------------------------
# meeting probability
# ---------------------------------------------------------------------------


def _simulate_pair_meets(d: int, start_diff, horizon: float, rng) -> bool:
    """Two independent walks, each jumping to each neighbor at rate 1;
    True when they share a site by ``horizon``.  Free lattice (no wrap)."""
    x = [0] * d
    y = list(start_diff)
    if x == y:
        return True
    total_rate = 4.0 * d  # 2d per walk
    t = 0.0
    while True:
        t += rng.exponential(1.0 / total_rate)
        if t > horizon:
            return False
        r = int(rng.integers(0, 4 * d))
        walker = r % 2
        axis = (r // 2) % d
        step = 1 if r >= 2 * d else -1
        if walker == 0:
            x[axis] += step
        else:
            y[axis] += step
        if x == y:
            return True


def meet_probability(
    d: int, ell: int, replicas: int, seed: int, exhaustive: bool = False
) -> Estimate:
    """Monte Carlo estimate of the probability that two independent rate-1
    walks started in the radius-ell ball meet by time ell^2.

    Default start is the antipodal pair (sup-norm distance 2*ell), a proxy
    for the infimum over all start pairs; ``exhaustive`` scans every
    distinct separation vector instead and returns the smallest estimate.
    """
    if replicas < 100:
        raise DomainError("need at least 100 replicas")
    horizon = float(ell * ell)
    if exhaustive:
        diffs = _distinct_separations(d, ell)
    else:
        diffs = [tuple([2 * ell] + [0] * (d - 1))]
    best = None
    for idx, diff in enumerate(diffs):
        rng = np.random.Generator(np.random.Philox(key=subseed(seed, idx)))
        hits = sum(
            1 for _ in range(replicas) if _simulate_pair_meets(d, diff, horizon, rng)
        )
        est = binomial_estimate(hits, replicas, seed)
        if best is None or est.mean < best.mean:
            best = est
    return best


def _distinct_separations(d: int, ell: int):
    """Sorted nonnegative separation vectors reachable by pairs in B_0(ell)."""
    import itertools

    seen = set()
    for delta in itertools.product(range(0, 2 * ell + 1), repeat=d):
        seen.add(tuple(sorted(delta, reverse=True)))
    return sorted(seen)


def meet_oracle(d: int, start_diff, horizon: float, radius_pad: int = 40) -> float:
    """Transient CTMC solve for the meeting probability: the difference of
    the two walks jumps to each neighbor at rate 2; meeting is absorption
    at the origin.

    The line is truncated at sup-norm M; mass leaking past M is counted as
    "met", so the value overestimates by the escape probability, which is
    superexponentially small in ``radius_pad``.
    """
    if d != 1:
        raise DomainError("oracle implemented for d=1 (the acceptance case)")
    from scipy.linalg import expm

    z0 = abs(int(start_diff[0])) if hasattr(start_diff, "__len__") else abs(int(start_diff))
    if z0 == 0:
        return 1.0
    M = z0 + radius_pad + int(6 * math.sqrt(4.0 * horizon))
    states = [z for z in range(-M, M + 1) if z != 0]
    index = {z: i for i, z in enumerate(states)}
    n = len(states)
    Q = np.zeros((n, n))
    for z in states:
        i = index[z]
        for nb in (z - 1, z + 1):
            Q[i, i] -= 2.0
            if nb != 0 and abs(nb) <= M:
                Q[i, index[nb]] += 2.0
    P = expm(Q * horizon)
    alive = P[index[z0], :].sum()
    return float(1.0 - alive)


# ---------------------------------------------------------------------------
# discrepancy probability of the stirring flow
# ---------------------------------------------------------------------------


def discr_ip_event(m: MarkSet, ell: int, L: int) -> bool:
    """Exact detection, on one frozen mark set, of the event that the flow
    carries some point of the outer shell (started at any time) into the
    inner shell within the window.

    Tracks, for each outer-shell site x, the set {flow(x, s, now): s <= now};
    that set only changes at jump marks and always re-contains x.
    """
    g = m.geometry
    origin = g.origin()
    ball_indices(g, origin, L + 1)  # validates that the outer shell fits
    shell_out = sorted(
        set(ball_indices(g, origin, L).tolist()) - set(ball_indices(g, origin, L - 1).tolist())
    )
    inner_shell = sorted(
        set(ball_indices(g, origin, ell).tolist())
        - (set(ball_indices(g, origin, ell - 1).tolist()) if ell >= 1 else set())
    )
    inner_mask = np.zeros(g.nsites, dtype=bool)
    inner_mask[inner_shell] = True

    w = np.zeros(g.nsites, dtype=bool)
    w[shell_out] = True
    ea, eb, _times = _jump_sequence(m)
    for i in range(len(ea)):
        a, b = ea[i], eb[i]
        wa, wb = w[a], w[b]
        if wa != wb:
            w[a], w[b] = wb, wa
        for x in shell_out:
            w[x] = True
        if w[a] and inner_mask[a]:
            return True
        if w[b] and inner_mask[b]:
            return True
    return False


def discr_ip(
    ell: int, L: int, t: float, replicas: int, seed: int, side: int | None = None, d: int = 1
) -> Estimate:
    """MC estimate of discr for the rate-1 stirring flow on a torus."""
    if ell >= L:
        raise DomainError("need ell < L")
    n = side if side is not None else 2 * L + 4
    if n <= 2 * L + 2:
        raise DomainError("torus side must exceed 2L+2")
    g = Geometry(d, n, BoundaryMode.TORUS)
    hits = 0
    for r in range(replicas):
        m = sample_marks(g, Rates(v=1.0, lam=0.0), t, subseed(seed, r))
        if discr_ip_event(m, ell, L):
            hits += 1
    return binomial_estimate(hits, replicas, seed)


def discr_ip_bound(d: int, ell: int, L: int, t: float) -> float:
    """Analytic upper bound for the rate-1 discrepancy probability
    (valid for t >= 1 and L >= ell + 2)."""
    return (
        16.0
        * math.e
        * d**3
        * t
        * (2 * L + 1) ** (d - 1)
        * math.exp(-(L - ell) * math.log1p((L - ell) / (2.0 * t)))
    )


# ---------------------------------------------------------------------------
# density deviation indicators (g-up / g-down)
# ---------------------------------------------------------------------------


def density_deviation(xi0: np.ndarray, m: MarkSet, w: DensityWindow) -> bool:
    """True iff some radius-ell box inside the radius-L ball violates the
    threshold in the stated direction at some time <= w.t.

    Box counts are constant between jump marks touching the L-ball, so the
    check at time 0 and after each such mark is exact.
    """
    g = m.geometry
    origin = g.origin()
    if w.t > m.horizon:
        raise DomainError("window exceeds the mark horizon")
    centers = ball_indices(g, origin, w.L - w.ell)
    boxes = [ball_indices(g, g.site_coords(c), w.ell) for c in centers]
    box_size = (2 * w.ell + 1) ** g.d
    relevant = np.zeros(g.nsites, dtype=bool)
    relevant[ball_indices(g, origin, w.L)] = True

    occ = np.array(xi0, copy=True).astype(np.int8)

    def violated() -> bool:
        for box in boxes:
            cnt = int(occ[box].sum())
            if w.direction is Direction.UP and cnt > w.p * box_size:
                return True
            if w.direction is Direction.DOWN and cnt < w.p * box_size:
                return True
        return False

    if violated():
        return True
    ea, eb, times = _jump_sequence(m)
    hi = np.searchsorted(times, w.t, side="right")
    for i in range(hi):
        a, b = ea[i], eb[i]
        if occ[a] != occ[b]:
            occ[a], occ[b] = occ[b], occ[a]
            if (relevant[a] or relevant[b]) and violated():
                return True
    return False


def estimate_g(
    xi0: np.ndarray, g: Geometry, w: DensityWindow, replicas: int, seed: int
) -> Estimate:
    """MC mean of the deviation indicator over fresh rate-1 mark sets,
    started from the fixed occupancy xi0."""
    hits = 0
    for r in range(replicas):
        m = sample_marks(g, Rates(v=1.0, lam=0.0), w.t, subseed(seed, r))
        if density_deviation(xi0, m, w):
            hits += 1
    return binomial_estimate(hits, replicas, seed)


def g_integral_bound(d: int, ell: int, L: int, t: float, p_lo: float, p_hi: float) -> float:
    """Analytic bound for the averaged deviation probabilities when the
    initial law is product Bernoulli (both directions share it)."""
    return (
        (2 * L + 1) ** d
        * (math.e * (2 * ell + 2) ** d * t + math.e)
        * math.exp(-2.0 * (2 * ell + 1) ** d * (p_hi - p_lo) ** 2)
    )


def err_coup(d: int, ell: int, L: int, t: float, T: float, meet_est: float, discr_est: float) -> float:
    """Coupling error combination: unmet-pair term plus flow discrepancy."""
    ball_count = (2 * (L // 2) + 1) ** d
    return ball_count * (1.0 - meet_est) ** int(t // (ell * ell)) + discr_est


def time_together(m: MarkSet, x: int, y: int, t: float) -> float:
    """Exact time in [0, t] that the flows of x and y spend adjacent."""
    g = m.geometry
    ea, eb, times = _jump_sequence(m)
    hi = np.searchsorted(times, t, side="right")
    px, py = x, y
    acc = 0.0
    prev = 0.0
    for i in range(hi):
        now = times[i]
        if _l1_adjacent(g, px, py):
            acc += now - prev
        a, b = ea[i], eb[i]
        if px == a:
            px = b
        elif px == b:
            px = a
        if py == a:
            py = b
        elif py == b:
            py = a
        prev = now
    if _l1_adjacent(g, px, py):
        acc += t - prev
    return acc


def _l1_adjacent(g: Geometry, i: int, j: int) -> bool:
    nt = g.neighbor_table()
    return any(int(nt[i, k]) == j for k in range(2 * g.d))
