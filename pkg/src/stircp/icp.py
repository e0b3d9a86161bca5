"""The infection-on-stirring process and its bookkeeping.

States per site: 0 empty, 1 healthy particle, 2 infected particle.

Two engines produce the same law:

* ``FrozenMarks`` replays a stored mark realization in global order and
  logs every event with pre/post local states (the reference engine, and
  the one used whenever several constructions must share randomness);
* ``Dynamic`` draws competing exponentials on the fly (category, then
  carrier), never materializing marks, for long or large runs.

Mass replica statistics use the compiled batch driver of the dynamic
engine in :mod:`stircp.mc`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from stircp.lattice import (
    BoundaryMode,
    CapacityError,
    DomainError,
    Geometry,
    ball_indices,
)
from stircp.marks import JUMP, RECOVERY, TRANSMISSION, MarkSet, Rates, sample_marks
from stircp.stats import subseed

EMPTY, HEALTHY, INFECTED = 0, 1, 2


class Engine(Enum):
    FROZEN_MARKS = "frozen"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class ICPParams:
    g: Geometry
    lam: float
    v: float
    p: float
    initial_infected: tuple = ()

    def __post_init__(self):
        if self.lam < 0 or self.v < 0:
            raise DomainError("rates must be nonnegative")
        if not (0.0 <= self.p <= 1.0):
            raise DomainError("p must lie in [0,1]")


@dataclass
class Event:
    """One applied (or no-effect) mark: kind, time, sites, local states.

    ``outcome`` distinguishes transmission results: 'infect', 'blocked_empty',
    'blocked_infected', 'idle_source' (source not infected); recoveries use
    'recover' / 'idle_site'; jumps use 'swap'.
    """

    time: float
    kind: int
    sites: tuple
    pre: tuple
    post: tuple
    outcome: str

    def to_json(self):
        return {
            "time": self.time,
            "kind": {JUMP: "jump", RECOVERY: "recovery", TRANSMISSION: "transmission"}[
                self.kind
            ],
            "sites": list(self.sites),
            "pre": list(self.pre),
            "post": list(self.post),
            "outcome": self.outcome,
        }


@dataclass
class Trajectory:
    geometry: Geometry
    initial: np.ndarray
    events: list
    final: np.ndarray
    horizon: float
    wrapped: bool
    engine: str
    seed: int

    def infected_trace(self):
        """(time, infected count) after each event, starting at time 0."""
        count = int((self.initial == INFECTED).sum())
        out = [(0.0, count)]
        for ev in self.events:
            if ev.outcome == "recover":
                count -= 1
            elif ev.outcome == "infect":
                count += 1
            out.append((ev.time, count))
        return out

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "geometry": self.geometry.to_json(),
                    "horizon": self.horizon,
                    "wrapped": self.wrapped,
                    "engine": self.engine,
                    "seed": self.seed,
                    "initial": self.initial.tolist(),
                },
                sort_keys=True,
            )
        ]
        lines.extend(json.dumps(ev.to_json(), sort_keys=True) for ev in self.events)
        return "\n".join(lines) + "\n"


def infected_count(zeta: np.ndarray) -> int:
    return int((zeta == INFECTED).sum())


def make_initial(g: Geometry, p: float, infected_sites, seed: int) -> np.ndarray:
    """Independent occupation with density p outside the infected set."""
    rng = np.random.Generator(np.random.Philox(key=subseed(seed, 0xC0)))
    zeta = (rng.random(g.nsites) < p).astype(np.int8)
    for s in infected_sites:
        zeta[s] = INFECTED
    return zeta


def wrap_band(g: Geometry, width: int = 2) -> np.ndarray:
    """Antipodal band: sites at torus distance >= n//2 - width from origin."""
    from stircp.lattice import linf_dist_torus

    origin = g.origin()
    band = np.zeros(g.nsites, dtype=bool)
    if g.boundary is not BoundaryMode.TORUS:
        return band
    cut = g.n // 2 - width
    for idx in range(g.nsites):
        if linf_dist_torus(g, g.site_coords(idx), origin) >= cut:
            band[idx] = True
    return band


def run(
    zeta0: np.ndarray,
    params: ICPParams,
    horizon: float,
    engine: Engine = Engine.FROZEN_MARKS,
    seed: int = 0,
    markset: MarkSet | None = None,
    lam_level: float | None = None,
    log: str = "all",
) -> Trajectory:
    """Run the process from an explicit configuration.

    With FrozenMarks, ``markset`` may be supplied (shared-randomness runs);
    otherwise one is sampled from (params, horizon, seed).  ``lam_level``
    replays the transmission marks thinned to a smaller rate (requires
    lam_level <= markset rate), the common-random-numbers mechanism.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if engine is Engine.FROZEN_MARKS:
        if markset is None:
            markset = sample_marks(params.g, Rates(params.v, params.lam), horizon, seed)
        return replay(zeta0, markset, horizon, lam_level=lam_level, log=log, seed=seed)
    return _dynamic_run(zeta0, params, horizon, seed, log=log)


def replay(
    zeta0: np.ndarray,
    m: MarkSet,
    horizon: float | None = None,
    lam_level: float | None = None,
    log: str = "all",
    seed: int = 0,
) -> Trajectory:
    """FrozenMarks engine: apply marks in global order.

    Jump marks swap the two site states; recovery marks heal an infected
    site; transmission marks infect a healthy target when the source is
    infected.  ``log='effective'`` drops no-effect events from the log.
    """
    g = m.geometry
    horizon = m.horizon if horizon is None else horizon
    if horizon > m.horizon:
        raise DomainError("horizon exceeds the mark window")
    thin_ratio = None
    if lam_level is not None:
        if m.rates.lam <= 0 or lam_level > m.rates.lam:
            raise DomainError("lam_level must be <= the sampled transmission rate")
        thin_ratio = lam_level / m.rates.lam
    zeta = np.array(zeta0, copy=True).astype(np.int8)
    band = wrap_band(g)
    wrapped = bool(band[np.flatnonzero(zeta == INFECTED)].any()) if (zeta == INFECTED).any() else False
    edges = g.edges()
    pairs = g.directed_pairs()
    events = []
    for kind, carrier, tt, _seq, thin in m.ordered():
        if tt > horizon:
            break
        if kind == JUMP:
            a, b = edges[carrier]
            pa, pb = int(zeta[a]), int(zeta[b])
            if pa == pb and log != "all":
                continue
            zeta[a], zeta[b] = pb, pa
            if (pa == INFECTED and band[b]) or (pb == INFECTED and band[a]):
                wrapped = True
            if log == "all" or pa != pb:
                events.append(Event(tt, JUMP, (a, b), (pa, pb), (pb, pa), "swap"))
        elif kind == RECOVERY:
            x = carrier
            pre = int(zeta[x])
            if pre == INFECTED:
                zeta[x] = HEALTHY
                events.append(Event(tt, RECOVERY, (x,), (pre,), (HEALTHY,), "recover"))
            elif log == "all":
                events.append(Event(tt, RECOVERY, (x,), (pre,), (pre,), "idle_site"))
        else:
            if thin_ratio is not None and thin >= thin_ratio:
                continue
            x, y = pairs[carrier]
            px, py = int(zeta[x]), int(zeta[y])
            if px == INFECTED:
                if py == HEALTHY:
                    zeta[y] = INFECTED
                    if band[y]:
                        wrapped = True
                    events.append(
                        Event(tt, TRANSMISSION, (x, y), (px, py), (px, INFECTED), "infect")
                    )
                else:
                    outcome = "blocked_empty" if py == EMPTY else "blocked_infected"
                    events.append(Event(tt, TRANSMISSION, (x, y), (px, py), (px, py), outcome))
            elif log == "all":
                events.append(Event(tt, TRANSMISSION, (x, y), (px, py), (px, py), "idle_source"))
    return Trajectory(g, np.array(zeta0, copy=True).astype(np.int8), events, zeta, horizon, wrapped, "frozen", seed)


def _dynamic_run(zeta0, params, horizon, seed, log="all", event_cap=5_000_000):
    """Dynamic engine: total rate v|E| + |I| + lam * (directed infected
    pairs); category, then uniform carrier inside the category.  Counts of
    infected sites and infected-source pairs are maintained incrementally.
    """
    g = params.g
    rng = np.random.Generator(np.random.Philox(key=subseed(seed, 0xD1)))
    zeta = np.array(zeta0, copy=True).astype(np.int8)
    band = wrap_band(g)
    edges = g.edges()
    nedges = len(edges)
    nt = g.neighbor_table()
    deg = 2 * g.d
    infected = [int(s) for s in np.flatnonzero(zeta == INFECTED)]
    inf_index = {s: i for i, s in enumerate(infected)}
    wrapped = bool(any(band[s] for s in infected))
    events = []
    t = 0.0
    while infected:
        ninf = len(infected)
        # directed infected-source pairs: one per (infected, valid neighbor)
        npairs = sum(1 for s in infected for k in range(deg) if nt[s, k] >= 0)
        total = params.v * nedges + ninf + params.lam * npairs
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        if len(events) >= event_cap:
            raise CapacityError("dynamic event log exceeded cap", cap=event_cap)
        u = rng.random() * total
        if u < params.v * nedges:
            a, b = edges[int(rng.integers(0, nedges))]
            pa, pb = int(zeta[a]), int(zeta[b])
            zeta[a], zeta[b] = pb, pa
            if pa == INFECTED:
                inf_index[b] = inf_index.pop(a) if a in inf_index else inf_index.get(b)
            # rebuild indices cheaply: positions of infected may have moved
            if pa == INFECTED or pb == INFECTED:
                infected = [int(s) for s in np.flatnonzero(zeta == INFECTED)]
                inf_index = {s: i for i, s in enumerate(infected)}
                if (pa == INFECTED and band[b]) or (pb == INFECTED and band[a]):
                    wrapped = True
            if log == "all" or pa != pb:
                events.append(Event(t, JUMP, (a, b), (pa, pb), (pb, pa), "swap"))
        elif u < params.v * nedges + ninf:
            x = infected[int(rng.integers(0, ninf))]
            zeta[x] = HEALTHY
            infected = [int(s) for s in np.flatnonzero(zeta == INFECTED)]
            inf_index = {s: i for i, s in enumerate(infected)}
            events.append(Event(t, RECOVERY, (x,), (INFECTED,), (HEALTHY,), "recover"))
        else:
            k = int(rng.integers(0, npairs))
            src = tgt = -1
            for s in infected:
                for kk in range(deg):
                    nb = nt[s, kk]
                    if nb >= 0:
                        if k == 0:
                            src, tgt = s, int(nb)
                        k -= 1
            py = int(zeta[tgt])
            if py == HEALTHY:
                zeta[tgt] = INFECTED
                infected.append(tgt)
                inf_index[tgt] = len(infected) - 1
                if band[tgt]:
                    wrapped = True
                events.append(
                    Event(t, TRANSMISSION, (src, tgt), (INFECTED, py), (INFECTED, INFECTED), "infect")
                )
            else:
                outcome = "blocked_empty" if py == EMPTY else "blocked_infected"
                events.append(Event(t, TRANSMISSION, (src, tgt), (INFECTED, py), (INFECTED, py), outcome))
    return Trajectory(g, np.array(zeta0, copy=True).astype(np.int8), events, zeta, horizon, wrapped, "dynamic", seed)


# ---------------------------------------------------------------------------
# containment flow and collision statistics
# ---------------------------------------------------------------------------


def containment_run(m: MarkSet, A, s: float, t: float, lam_level: float | None = None):
    """Set-valued flow from A on [s, t]: swaps move membership, recovery
    marks are ignored, transmission marks add the target of a member.

    Yields (time, frozenset) after each membership-changing mark, starting
    with (s, A).
    """
    if not (0 <= s <= t <= m.horizon):
        raise DomainError("containment window outside marks")
    g = m.geometry
    edges = g.edges()
    pairs = g.directed_pairs()
    thin_ratio = None
    if lam_level is not None:
        if m.rates.lam <= 0 or lam_level > m.rates.lam:
            raise DomainError("lam_level must be <= the sampled transmission rate")
        thin_ratio = lam_level / m.rates.lam
    members = set(int(a) for a in A)
    out = [(s, frozenset(members))]
    for kind, carrier, tt, _seq, thin in m.ordered():
        if tt <= s:
            continue
        if tt > t:
            break
        if kind == JUMP:
            a, b = edges[carrier]
            ina, inb = a in members, b in members
            if ina != inb:
                if ina:
                    members.discard(a)
                    members.add(b)
                else:
                    members.discard(b)
                    members.add(a)
                out.append((tt, frozenset(members)))
        elif kind == TRANSMISSION:
            if thin_ratio is not None and thin >= thin_ratio:
                continue
            x, y = pairs[carrier]
            if x in members and y not in members:
                members.add(y)
                out.append((tt, frozenset(members)))
    return out


def containment(m: MarkSet, A, s: float, t: float) -> frozenset:
    return containment_run(m, A, s, t)[-1][1]


@dataclass(frozen=True)
class CollisionStats:
    psi_size: int
    adjacency_time: float
    collision_time: float  # inf -> math.inf


def collision_stats(m: MarkSet, A, h: float) -> CollisionStats:
    """Exact containment-size / adjacency-time / first-collision statistics
    on a frozen mark realization.

    The adjacency count is piecewise constant between marks, so the time
    integral is a finite sum.  The collision time is the first transmission
    mark whose two endpoints both already belong to the containment set.
    """
    if h > m.horizon:
        raise DomainError("window exceeds marks")
    g = m.geometry
    nt = g.neighbor_table()
    deg = 2 * g.d
    edges = g.edges()
    pairs = g.directed_pairs()
    members = set(int(a) for a in A)

    def adj_pairs() -> int:
        cnt = 0
        for site in members:
            for k in range(deg):
                nb = int(nt[site, k])
                if nb >= 0 and nb in members and nb > site:
                    cnt += 1
        return cnt

    K = 0.0
    prev = 0.0
    adj = adj_pairs()
    T_coll = math.inf
    for kind, carrier, tt, _seq, _thin in m.ordered():
        if tt > h:
            break
        if kind == RECOVERY:
            continue
        K += adj * (tt - prev)
        prev = tt
        if kind == JUMP:
            a, b = edges[carrier]
            ina, inb = a in members, b in members
            if ina != inb:
                if ina:
                    members.discard(a)
                    members.add(b)
                else:
                    members.discard(b)
                    members.add(a)
                adj = adj_pairs()
        else:
            x, y = pairs[carrier]
            if x in members:
                if y in members:
                    T_coll = tt
                    break
                members.add(y)
                adj = adj_pairs()
    if not math.isinf(T_coll):
        return CollisionStats(len(members), K, T_coll)
    K += adj * (h - prev)
    return CollisionStats(len(members), K, math.inf)


def kappa(m: MarkSet, t: float, source: int | None = None) -> np.ndarray:
    """Auxiliary mass field: starts as the indicator of the source site,
    swaps permute values, and a transmission mark adds the source site's
    mass onto the target."""
    if t > m.horizon:
        raise DomainError("window exceeds marks")
    g = m.geometry
    src = g.site_index(g.origin()) if source is None else source
    edges = g.edges()
    pairs = g.directed_pairs()
    kap = np.zeros(g.nsites, dtype=np.int64)
    kap[src] = 1
    for kind, carrier, tt, _seq, _thin in m.ordered():
        if tt > t:
            break
        if kind == JUMP:
            a, b = edges[carrier]
            kap[a], kap[b] = kap[b], kap[a]
        elif kind == TRANSMISSION:
            x, y = pairs[carrier]
            kap[y] += kap[x]
    return kap


# ---------------------------------------------------------------------------
# half-crossings of space-time boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceTimeBox:
    center: tuple
    radius: int
    t0: float
    height: float


class Crossing(Enum):
    NONE = "none"
    TEMPORAL = "temporal"
    SPATIAL = "spatial"


def _events_in(traj: Trajectory, lo: float, hi: float):
    return [ev for ev in traj.events if lo < ev.time <= hi]


def _state_at(traj: Trajectory, t: float) -> np.ndarray:
    zeta = np.array(traj.initial, copy=True)
    for ev in traj.events:
        if ev.time > t:
            break
        _apply_event(zeta, ev)
    return zeta


def _apply_event(zeta: np.ndarray, ev: Event):
    if ev.kind == JUMP:
        a, b = ev.sites
        zeta[a], zeta[b] = zeta[b], zeta[a]
    elif ev.outcome == "recover":
        zeta[ev.sites[0]] = HEALTHY
    elif ev.outcome == "infect":
        zeta[ev.sites[1]] = INFECTED


def half_crossing(traj: Trajectory, box: SpaceTimeBox):
    """Detect an infection path achieving a temporal half-crossing (alive in
    the box for the first half of its height) or a spatial half-crossing
    (traversing the radius along some axis within the box).

    Reachability over the event log is exact: path positions follow swaps,
    die at recovery marks, branch along transmission marks onto occupied
    sites, and are discarded when the flow leaves the allowed region.
    Paths may start at any occupied site of the allowed start region, at
    any time (start sets are re-seeded at every event).
    """
    g = traj.geometry
    if box.t0 < 0 or box.t0 + box.height > traj.horizon + 1e-12:
        raise DomainError("box time span outside trajectory coverage")
    box_sites = ball_indices(g, box.center, box.radius)
    in_box = np.zeros(g.nsites, dtype=bool)
    in_box[box_sites] = True
    rel = _relative_coords(g, box.center, box_sites, box.radius)

    if _temporal_crossing(traj, box, in_box):
        return Crossing.TEMPORAL, None
    for axis in range(g.d):
        if _spatial_crossing(traj, box, in_box, rel, axis):
            return Crossing.SPATIAL, axis
    return Crossing.NONE, None


def _relative_coords(g: Geometry, center, box_sites, radius):
    rel = {}
    for s in box_sites:
        coords = g.site_coords(int(s))
        offs = []
        for c, cc in zip(coords, center):
            delta = c - cc
            if g.boundary is BoundaryMode.TORUS:
                if delta > g.n // 2:
                    delta -= g.n
                elif delta < -(g.n // 2):
                    delta += g.n
            offs.append(delta)
        rel[int(s)] = tuple(offs)
    return rel


def _temporal_crossing(traj: Trajectory, box: SpaceTimeBox, in_box) -> bool:
    zeta = _state_at(traj, box.t0)
    reach = set(
        int(s) for s in np.flatnonzero((zeta != EMPTY)) if in_box[s]
    )
    t_end = box.t0 + box.height / 2.0
    for ev in _events_in(traj, box.t0, t_end):
        if not reach:
            return False
        reach = _step_reach(zeta, reach, ev, in_box, None, None)
        _apply_event(zeta, ev)
        reach = {s for s in reach if in_box[s]}
    return bool(reach)


def _spatial_crossing(traj: Trajectory, box, in_box, rel, axis) -> bool:
    # four clause families: start plane 0 to +r or -r, start plane +-r to 0
    for start_val, end_val, lo, hi in (
        (0, box.radius, 0, box.radius),
        (0, -box.radius, -box.radius, 0),
        (box.radius, 0, 0, box.radius),
        (-box.radius, 0, -box.radius, 0),
    ):
        if _plane_reach(traj, box, in_box, rel, axis, start_val, end_val, lo, hi):
            return True
    return False


def _plane_reach(traj, box, in_box, rel, axis, start_val, end_val, lo, hi) -> bool:
    def allowed(s: int) -> bool:
        if not in_box[s]:
            return False
        return lo <= rel[s][axis] <= hi

    def on_start(s: int) -> bool:
        return allowed(s) and rel[s][axis] == start_val

    def on_end(s: int) -> bool:
        return allowed(s) and rel[s][axis] == end_val

    zeta = _state_at(traj, box.t0)
    reach = set(int(s) for s in np.flatnonzero(zeta != EMPTY) if on_start(int(s)))
    if any(on_end(s) for s in reach):
        return True
    t_end = box.t0 + box.height
    for ev in _events_in(traj, box.t0, t_end):
        reach = _step_reach(zeta, reach, ev, None, allowed, None)
        _apply_event(zeta, ev)
        reach = {s for s in reach if allowed(s)}
        reach |= set(
            int(s) for s in np.flatnonzero(zeta != EMPTY) if on_start(int(s))
        )
        if any(on_end(s) for s in reach):
            return True
    return False


def _step_reach(zeta, reach, ev: Event, in_box, allowed, _unused):
    """Advance a reachability set through one event (pre-event state zeta)."""
    ok = (lambda s: in_box[s]) if in_box is not None else allowed
    if ev.kind == JUMP:
        a, b = ev.sites
        ina, inb = a in reach, b in reach
        out = set(reach)
        if ina != inb:
            if ina:
                out.discard(a)
                out.add(b)
            else:
                out.discard(b)
                out.add(a)
        return out
    if ev.kind == RECOVERY:
        return reach - {ev.sites[0]}
    if ev.kind == TRANSMISSION:
        x, y = ev.sites
        if x in reach and zeta[y] != EMPTY and ok(y):
            return reach | {y}
    return reach


# ---------------------------------------------------------------------------
# configuration classes and epoch chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifyFlags:
    dens: bool
    dist: bool
    inf: bool


def default_radii(v: float):
    """Radii from the model's functional forms: container sqrt(v)*log^4 v,
    density probe v^(1/10), infection threshold log^3 v."""
    L0 = math.sqrt(v) * math.log(v) ** 4 if v > 1 else 1.0
    r_dens = v ** 0.1
    thresh = math.log(v) ** 3 if v > 1 else 1.0
    return int(L0), max(1, int(r_dens)), thresh


def xi_classify(
    zeta: np.ndarray,
    g: Geometry,
    v: float,
    p0: float,
    L0: int | None = None,
    r_dens: int | None = None,
    inf_threshold: float | None = None,
) -> ClassifyFlags:
    """Density / distance / infection-count flags of one configuration.

    Defaults follow the model's functional forms in v; explicit overrides
    keep the classifier usable on desk-size geometries.  Density boxes are
    required to sit entirely inside the container ball.
    """
    dL0, dr, dthr = default_radii(v)
    L0 = dL0 if L0 is None else L0
    r_dens = dr if r_dens is None else r_dens
    inf_threshold = dthr if inf_threshold is None else inf_threshold
    if 2 * L0 + 1 > g.n:
        raise DomainError(
            f"geometry side {g.n} too small for container radius {L0}"
            f" (need side >= {2 * L0 + 1})"
        )
    origin = g.origin()
    occ = zeta != EMPTY
    box_size = (2 * r_dens + 1) ** g.d
    dens = False
    if L0 >= r_dens:
        for c in ball_indices(g, origin, L0 - r_dens):
            box = ball_indices(g, g.site_coords(int(c)), r_dens)
            if occ[box].sum() >= p0 * box_size:
                dens = True
                break
    inner = set(ball_indices(g, origin, L0 // 2).tolist())
    dist = any(
        int(s) not in inner for s in np.flatnonzero(zeta == INFECTED)
    )
    inf = infected_count(zeta) > inf_threshold
    return ClassifyFlags(dens, dist, inf)


def sigma_chain(traj: Trajectory):
    """Epochs at which an infected particle recovers or emits a transmission
    mark, with the infected count after the epoch.

    Requires a trajectory logged with log='all' so that no-effect
    transmission attempts are present.  Returns [(time, count), ...].
    """
    count = infected_count(traj.initial)
    out = []
    for ev in traj.events:
        if ev.kind == RECOVERY and ev.outcome == "recover":
            count -= 1
            out.append((ev.time, count))
        elif ev.kind == TRANSMISSION and ev.pre[0] == INFECTED:
            if ev.outcome == "infect":
                count += 1
            out.append((ev.time, count))
    return out
