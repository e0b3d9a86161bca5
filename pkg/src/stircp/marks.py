"""Sampling and storage of the Poisson graphical construction.

A frozen MarkSet holds three families of marks on a window [0, T]:

* jump marks, one Poisson stream of rate ``v`` per undirected edge
  (these drive the stirring flow);
* recovery marks, rate 1 per site;
* transmission marks, rate ``lam`` per ordered neighbor pair.

Every transmission mark also carries an independent U(0,1) thinning value,
so a MarkSet sampled at rate ``lam`` can be replayed at any smaller rate
``lam' <= lam`` by keeping marks with ``thin < lam'/lam``.  That is what
makes survival curves common-random-number monotone across infection rates.

Randomness is drawn from counter-based Philox streams keyed by
``(seed, stream kind)``; per-carrier counts are drawn in one vectorized pass
in canonical carrier order, so the realization does not depend on insertion
order and the jump/recovery streams are untouched when only ``lam`` changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from stircp.lattice import CapacityError, DomainError, Geometry

JUMP, RECOVERY, TRANSMISSION = 0, 1, 2
_KIND_NAMES = {JUMP: "jump", RECOVERY: "recovery", TRANSMISSION: "transmission"}
_KIND_IDS = {v: k for k, v in _KIND_NAMES.items()}

DEFAULT_MARK_CAP = 50_000_000


@dataclass(frozen=True)
class Rates:
    """Event rates of the model; recovery is pinned at 1 per site."""

    v: float
    lam: float
    recovery: float = 1.0

    def __post_init__(self):
        if self.v < 0 or self.lam < 0:
            raise DomainError("rates must be nonnegative")


def _stream(seed: int, kind: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(np.uint64(seed) << np.uint64(8)) + np.uint64(kind)))


@dataclass
class MarkSet:
    """Frozen realization of the graphical construction on [0, horizon].

    Arrays are parallel per family: ``*_carrier`` indexes the canonical
    carrier list (edges / sites / directed pairs), ``*_time`` holds the mark
    times (strictly increasing within each carrier, a.s.).  ``seq`` arrays
    give the position of each mark in the global (time, seq) order.
    """

    geometry: Geometry
    rates: Rates
    horizon: float
    seed: int
    jump_carrier: np.ndarray
    jump_time: np.ndarray
    rec_carrier: np.ndarray
    rec_time: np.ndarray
    trans_carrier: np.ndarray
    trans_time: np.ndarray
    trans_thin: np.ndarray
    jump_seq: np.ndarray = field(repr=False, default=None)
    rec_seq: np.ndarray = field(repr=False, default=None)
    trans_seq: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.jump_seq is None:
            self._assign_seq()

    def _assign_seq(self):
        nj, nr, nt = len(self.jump_time), len(self.rec_time), len(self.trans_time)
        times = np.concatenate([self.jump_time, self.rec_time, self.trans_time])
        kinds = np.concatenate(
            [np.full(nj, JUMP), np.full(nr, RECOVERY), np.full(nt, TRANSMISSION)]
        )
        carriers = np.concatenate(
            [self.jump_carrier, self.rec_carrier, self.trans_carrier]
        )
        # strict total order: time, then a deterministic tiebreak
        order = np.lexsort((carriers, kinds, times))
        seq = np.empty(len(order), dtype=np.int64)
        seq[order] = np.arange(len(order))
        self.jump_seq = seq[:nj]
        self.rec_seq = seq[nj : nj + nr]
        self.trans_seq = seq[nj + nr :]

    @property
    def n_marks(self) -> int:
        return len(self.jump_time) + len(self.rec_time) + len(self.trans_time)

    def jump_edges(self):
        """Jump marks as (a, b, time) with flat site indices, in stream order."""
        edges = self.geometry.edges()
        ea = np.array([edges[c][0] for c in self.jump_carrier], dtype=np.int64)
        eb = np.array([edges[c][1] for c in self.jump_carrier], dtype=np.int64)
        return ea, eb, self.jump_time

    def ordered(self):
        """Yield every mark once, in the global (time, seq) order.

        Items are tuples (kind, carrier, time, seq, thin); thin is None for
        non-transmission marks.
        """
        rows = []
        for c, t, s in zip(self.jump_carrier, self.jump_time, self.jump_seq):
            rows.append((JUMP, int(c), float(t), int(s), None))
        for c, t, s in zip(self.rec_carrier, self.rec_time, self.rec_seq):
            rows.append((RECOVERY, int(c), float(t), int(s), None))
        for c, t, s, u in zip(
            self.trans_carrier, self.trans_time, self.trans_seq, self.trans_thin
        ):
            rows.append((TRANSMISSION, int(c), float(t), int(s), float(u)))
        rows.sort(key=lambda r: r[3])
        return rows

    def to_jsonl(self) -> str:
        lines = []
        header = {
            "geometry": self.geometry.to_json(),
            "rates": {"v": self.rates.v, "lam": self.rates.lam},
            "horizon": self.horizon,
            "seed": self.seed,
        }
        lines.append(json.dumps(header, sort_keys=True))
        for kind, carrier, t, seq, thin in self.ordered():
            rec = {"kind": _KIND_NAMES[kind], "carrier": carrier, "time": t, "seq": seq}
            if thin is not None:
                rec["thin"] = thin
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "MarkSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        g = Geometry.from_json(header["geometry"])
        rates = Rates(header["rates"]["v"], header["rates"]["lam"])
        cols = {k: ([], [], []) for k in (JUMP, RECOVERY, TRANSMISSION)}
        thins = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            kind = _KIND_IDS[rec["kind"]]
            cs, ts, ss = cols[kind]
            cs.append(rec["carrier"])
            ts.append(rec["time"])
            ss.append(rec["seq"])
            if kind == TRANSMISSION:
                thins.append(rec.get("thin", 0.0))
        return MarkSet(
            g,
            rates,
            float(header["horizon"]),
            int(header["seed"]),
            np.array(cols[JUMP][0], dtype=np.int64),
            np.array(cols[JUMP][1], dtype=np.float64),
            np.array(cols[RECOVERY][0], dtype=np.int64),
            np.array(cols[RECOVERY][1], dtype=np.float64),
            np.array(cols[TRANSMISSION][0], dtype=np.int64),
            np.array(cols[TRANSMISSION][1], dtype=np.float64),
            np.array(thins, dtype=np.float64),
            np.array(cols[JUMP][2], dtype=np.int64),
            np.array(cols[RECOVERY][2], dtype=np.int64),
            np.array(cols[TRANSMISSION][2], dtype=np.int64),
        )


def _sample_family(rng, n_carriers, rate, horizon):
    """Per-carrier Poisson counts then sorted uniform times, carrier-major."""
    if n_carriers == 0 or rate == 0.0:
        return (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )
    counts = rng.poisson(rate * horizon, size=n_carriers)
    total = int(counts.sum())
    carrier = np.repeat(np.arange(n_carriers, dtype=np.int64), counts)
    times = rng.random(total) * horizon
    # sort within carrier; carrier blocks are already contiguous
    order = np.lexsort((times, carrier))
    return carrier, times[order]


def sample_marks(
    g: Geometry,
    rates: Rates,
    horizon: float,
    seed: int,
    mark_cap: int = DEFAULT_MARK_CAP,
) -> MarkSet:
    """Draw a full graphical construction on [0, horizon].

    Deterministic in (g, rates, horizon, seed).  Raises CapacityError when
    the expected mark count exceeds ``mark_cap``.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    n_edges = len(g.edges())
    n_sites = g.nsites
    n_pairs = 2 * n_edges  # ordered neighbor pairs (torus/hardwall alike)
    expected = horizon * (n_edges * rates.v + n_sites * rates.recovery + n_pairs * rates.lam)
    if expected > mark_cap:
        raise CapacityError(
            f"expected {expected:.3g} marks exceeds cap {mark_cap}", cap=mark_cap
        )

    jc, jt = _sample_family(_stream(seed, JUMP), n_edges, rates.v, horizon)
    rc, rt = _sample_family(_stream(seed, RECOVERY), n_sites, rates.recovery, horizon)
    tstream = _stream(seed, TRANSMISSION)
    tc, tt = _sample_family(tstream, n_pairs, rates.lam, horizon)
    thin = tstream.random(len(tt))

    return MarkSet(g, rates, float(horizon), int(seed), jc, jt, rc, rt, tc, tt, thin)


def order(m: MarkSet):
    """EventStream: iterator over all marks in the global strict order."""
    return iter(m.ordered())


def restrict(m: MarkSet, t: float) -> MarkSet:
    """Marks of m with time <= t, as a MarkSet on window [0, t]."""
    if not (0 < t <= m.horizon):
        raise DomainError("restriction time outside window")
    jk = m.jump_time <= t
    rk = m.rec_time <= t
    tk = m.trans_time <= t
    return MarkSet(
        m.geometry,
        m.rates,
        t,
        m.seed,
        m.jump_carrier[jk],
        m.jump_time[jk],
        m.rec_carrier[rk],
        m.rec_time[rk],
        m.trans_carrier[tk],
        m.trans_time[tk],
        m.trans_thin[tk],
    )
