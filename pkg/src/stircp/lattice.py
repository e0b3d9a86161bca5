"""Finite hypercubic geometries: torus and hard-wall box.

Sites are d-tuples of integers in [0, n).  Internally most code works with
flat site indices (row-major ravel), so the geometry carries cached
index/coordinate converters and a neighbor table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class BoundaryMode(Enum):
    TORUS = "torus"
    HARDWALL = "hardwall"


class DomainError(ValueError):
    """Raised when an argument is outside a module's stated domain."""


class CapacityError(RuntimeError):
    """Raised when a run would exceed a configured memory/population cap."""

    def __init__(self, message, cap=None):
        super().__init__(message)
        self.cap = cap


@dataclass(frozen=True)
class Geometry:
    """Hypercubic chunk of the lattice with n sites per axis.

    The torus wraps every axis (keeps translation invariance and the
    stationarity of product measures); the hard wall drops out-of-range
    neighbors so wrap effects are impossible by construction.
    """

    d: int
    n: int
    boundary: BoundaryMode = BoundaryMode.TORUS

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"dimension must be >= 1, got {self.d}")
        if self.n < 3:
            raise DomainError(f"side must be >= 3, got {self.n}")

    @property
    def nsites(self) -> int:
        return self.n ** self.d

    def site_index(self, site) -> int:
        idx = 0
        for c in site:
            if not (0 <= c < self.n):
                raise DomainError(f"coordinate {c} outside [0, {self.n})")
            idx = idx * self.n + int(c)
        return idx

    def site_coords(self, idx: int):
        if not (0 <= idx < self.nsites):
            raise DomainError(f"site index {idx} outside geometry")
        out = []
        for _ in range(self.d):
            out.append(idx % self.n)
            idx //= self.n
        return tuple(reversed(out))

    def wrap(self, coords):
        """Torus-reduce raw integer coordinates; None if outside a hard wall."""
        if self.boundary is BoundaryMode.TORUS:
            return tuple(c % self.n for c in coords)
        if all(0 <= c < self.n for c in coords):
            return tuple(coords)
        return None

    def origin(self):
        """Center site (n//2 per axis); used as the default ball center."""
        return (self.n // 2,) * self.d

    def neighbor_table(self) -> np.ndarray:
        """(nsites, 2d) array of neighbor flat indices, -1 where a wall cuts."""
        return _neighbor_table_cached(self.d, self.n, self.boundary)

    def edges(self):
        """Canonical undirected edge list [(a, b), ...], a < b as flat indices.

        Each edge appears once: the +axis edge from every site (torus), or
        only in-range ones (hard wall).
        """
        return _edges_cached(self.d, self.n, self.boundary)

    def directed_pairs(self):
        """Canonical ordered neighbor pairs [(src, dst), ...]."""
        nt = self.neighbor_table()
        pairs = []
        for s in range(self.nsites):
            for k in range(2 * self.d):
                t = nt[s, k]
                if t >= 0:
                    pairs.append((s, int(t)))
        return pairs

    def to_json(self):
        return {"d": self.d, "n": self.n, "boundary": self.boundary.value}

    @staticmethod
    def from_json(obj) -> "Geometry":
        return Geometry(int(obj["d"]), int(obj["n"]), BoundaryMode(obj["boundary"]))


def _neighbor_cache():
    return {}


_NT_CACHE = {}
_EDGE_CACHE = {}


def _neighbor_table_cached(d, n, boundary):
    key = (d, n, boundary)
    tbl = _NT_CACHE.get(key)
    if tbl is not None:
        return tbl
    g = Geometry(d, n, boundary)
    nsites = g.nsites
    tbl = np.full((nsites, 2 * d), -1, dtype=np.int64)
    for idx in range(nsites):
        coords = g.site_coords(idx)
        k = 0
        for axis in range(d):
            for step in (+1, -1):
                raw = list(coords)
                raw[axis] += step
                w = g.wrap(raw)
                if w is not None:
                    tbl[idx, k] = g.site_index(w)
                k += 1
    tbl.setflags(write=False)
    _NT_CACHE[key] = tbl
    return tbl


def _edges_cached(d, n, boundary):
    key = (d, n, boundary)
    edges = _EDGE_CACHE.get(key)
    if edges is not None:
        return edges
    g = Geometry(d, n, boundary)
    edges = []
    for idx in range(g.nsites):
        coords = g.site_coords(idx)
        for axis in range(d):
            raw = list(coords)
            raw[axis] += 1
            w = g.wrap(raw)
            if w is not None:
                j = g.site_index(w)
                if j != idx:
                    edges.append((idx, j))
    edges = tuple(edges)
    _EDGE_CACHE[key] = edges
    return edges


def neighbors(g: Geometry, site):
    """Nearest neighbors of a site; torus wraps, hard wall truncates."""
    g.site_index(site)  # validates
    out = []
    seen = set()
    for axis in range(g.d):
        for step in (+1, -1):
            raw = list(site)
            raw[axis] += step
            w = g.wrap(raw)
            if w is not None and w not in seen:
                seen.add(w)
                out.append(w)
    return out


def ball(g: Geometry, center, r: int):
    """Sup-norm ball of radius r around center, as a set of sites.

    A ball that would wrap onto itself is rejected: overlapping images would
    silently double-count density statistics.
    """
    if r < 0:
        raise DomainError("radius must be >= 0")
    g.site_index(center)
    if g.boundary is BoundaryMode.TORUS and 2 * r + 1 > g.n:
        raise DomainError(
            f"ball of radius {r} wraps onto itself on a torus of side {g.n}"
        )
    out = set()
    for offs in itertools.product(range(-r, r + 1), repeat=g.d):
        raw = [c + o for c, o in zip(center, offs)]
        w = g.wrap(raw)
        if w is not None:
            out.add(w)
    return out


def boundary(g: Geometry, center, r: int):
    """Sites at sup-norm distance exactly r from center."""
    if r < 1:
        raise DomainError("boundary radius must be >= 1")
    return ball(g, center, r) - ball(g, center, r - 1)


def ball_indices(g: Geometry, center, r: int) -> np.ndarray:
    """Flat indices of ball(g, center, r), sorted."""
    return np.array(sorted(g.site_index(s) for s in ball(g, center, r)), dtype=np.int64)


def linf_dist_torus(g: Geometry, a, b) -> int:
    """Sup-norm distance respecting torus wrap (plain distance on hard wall)."""
    dist = 0
    for x, y in zip(a, b):
        dd = abs(x - y)
        if g.boundary is BoundaryMode.TORUS:
            dd = min(dd, g.n - dd)
        dist = max(dist, dd)
    return dist
