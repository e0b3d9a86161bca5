"""Exact multiscale box arithmetic and combinatorics.

Two scale systems: the geometric one used on the extinction side (ratio 128
per level) and the super-exponential one used on the survival side
(ratio alpha^(2N-1) between consecutive levels, with overlap factors
rho_N -> 2).  All integer quantities are exact: rationals are carried as
``fractions.Fraction`` and floored/ceiled only where the definitions do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from stircp.lattice import DomainError


def _alpha_of(v, eps0: Fraction) -> int:
    """floor(v ** (eps0/64)), exact for integer v via the characterization
    a <= v^(num/den) < a+1  <=>  a^den <= v^num < (a+1)^den."""
    e = Fraction(eps0) / 64
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer()):
        vi = int(v)
        num, den = e.numerator, e.denominator
        target = vi**num
        hi = 2
        while hi**den <= target:
            hi *= 2
        lo = hi // 2 if hi > 2 else 1
        while lo < hi - 1:
            mid = (lo + hi) // 2
            if mid**den <= target:
                lo = mid
            else:
                hi = mid
        return lo if lo**den <= target else 1
    return int(math.floor(v ** float(e)))


def _isqrt(v) -> int:
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer()):
        return math.isqrt(int(v))
    return int(math.sqrt(v))


@dataclass
class SurvScaleTable:
    """Survival-side scales.  rho, h, hprime, delta are exact Fractions;
    alpha and the spatial grid steps are exact integers."""

    v: object
    eps0: Fraction
    h0: Fraction
    Nmax: int
    alpha: int = 0
    rho: list = field(default_factory=list)
    L: list = field(default_factory=list)
    L_side: list = field(default_factory=list)
    hprime: list = field(default_factory=list)
    h: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    L0_side_display: float = 0.0
    degenerate: bool = False

    def h_ratio(self, N: int) -> int:
        """h_N / h_{N-1}, exact (h_N is an integer multiple by construction)."""
        q = self.h[N] / self.h[N - 1]
        assert q.denominator == 1
        return int(q)

    def sandwich_ok(self, N: int) -> bool:
        """(1 - alpha^(-2N+1)) h'_N <= h_N <= h'_N, exactly."""
        lo = (1 - Fraction(1, self.alpha ** (2 * N - 1))) * self.hprime[N]
        return lo <= self.h[N] <= self.hprime[N]


def surv_scales(v, eps0, h0, Nmax: int, alpha_override: int | None = None) -> SurvScaleTable:
    """Build the survival-side table.

    ``alpha_override`` injects a synthetic growth constant (the index
    formulas and classifications are parameterized by alpha alone), which
    keeps oracle tests independent of astronomically large v.
    """
    eps0 = Fraction(str(eps0)) if not isinstance(eps0, Fraction) else eps0
    if not (0 < eps0 < Fraction(1, 16)):
        raise DomainError("eps0 must lie in (0, 1/16)")
    if v <= 1:
        raise DomainError("v must exceed 1")
    if Nmax < 1:
        raise DomainError("Nmax must be >= 1")
    tbl = SurvScaleTable(v=v, eps0=eps0, h0=Fraction(str(h0)), Nmax=Nmax)
    tbl.alpha = alpha_override if alpha_override is not None else _alpha_of(v, eps0)
    tbl.degenerate = tbl.alpha < 2
    tbl.rho = [sum(Fraction(1, 2**i) for i in range(N + 1)) for N in range(Nmax + 1)]
    L0 = _isqrt(v)
    tbl.L = [L0 * tbl.alpha ** (N * N) for N in range(Nmax + 1)]
    logv = v.bit_length() * math.log(2) if isinstance(v, int) and v > 10**300 else math.log(v)
    half_log = 0.5 * logv + 2.0 * math.log(logv) + math.log(2.0)
    tbl.L0_side_display = math.exp(half_log) if half_log < 700 else float("inf")
    tbl.L_side = [Fraction(tbl.L[0])] + [tbl.rho[N] * tbl.L[N] for N in range(1, Nmax + 1)]
    tbl.hprime = [tbl.h0] + [tbl.rho[N] * tbl.alpha ** (N * N) * tbl.h0 for N in range(1, Nmax + 1)]
    hs = [tbl.h0]
    for N in range(1, Nmax + 1):
        hs.append((tbl.hprime[N] // hs[N - 1]) * hs[N - 1])
    tbl.h = hs
    tbl.delta = [Fraction(1, tbl.alpha ** (8 * (N + 2))) for N in range(Nmax + 1)]
    return tbl


@dataclass(frozen=True)
class IndexRange:
    l: int
    r: int
    b: int
    t: int


def index_ranges(tbl: SurvScaleTable, N: int, m: int, n: int) -> IndexRange:
    """Indices (i, j) of the level-(N-1) boxes contained in box (m, n) of
    level N: the closed-form ceil/floor expressions, exact."""
    if N < 1:
        raise DomainError("index ranges need N >= 1 (no sub-scale below 0)")
    a = Fraction(tbl.alpha) ** (2 * N - 1)
    l = math.ceil(a * (m - tbl.rho[N]) + tbl.rho[N - 1])
    r = math.floor(a * (m + tbl.rho[N]) - tbl.rho[N - 1])
    q = tbl.h_ratio(N)
    return IndexRange(l, r, q * n, q * (n + 1) - 1)


def index_ranges_bruteforce(tbl: SurvScaleTable, N: int, m: int, n: int) -> IndexRange:
    """The defining characterization, by scan: smallest i whose level-(N-1)
    box left edge clears the level-N box left edge, and so on.  Uses the
    uniform side convention L_side_k = rho_k * L_k on every level, which is
    what the closed forms encode."""
    if N < 1:
        raise DomainError("index ranges need N >= 1")
    Lm, Ls = tbl.L[N], tbl.rho[N] * tbl.L[N]
    Lm1, Ls1 = tbl.L[N - 1], tbl.rho[N - 1] * tbl.L[N - 1]
    left_edge = Lm * m - Ls
    right_edge = Lm * m + Ls
    i = int(math.floor((left_edge + Ls1) / Lm1)) - 3
    while not (Lm1 * i - Ls1 >= left_edge):
        i += 1
    l = i
    i = int(math.ceil((right_edge - Ls1) / Lm1)) + 3
    while not (Lm1 * i + Ls1 <= right_edge):
        i -= 1
    r = i
    # temporal: smallest j with h_{N-1} * j >= h_N * n, largest with
    # h_{N-1} * (j+1) <= h_N * (n+1)
    j = 0
    hN, hN1 = tbl.h[N], tbl.h[N - 1]
    j = int(math.floor(hN * n / hN1)) - 3
    while not (hN1 * j >= hN * n):
        j += 1
    b = j
    j = int(math.ceil(hN * (n + 1) / hN1)) + 3
    while not (hN1 * (j + 1) <= hN * (n + 1)):
        j -= 1
    t = j
    return IndexRange(l, r, b, t)


@dataclass
class ExtScaleTable:
    """Extinction-side scales: geometric ratio 128 and the explicit
    per-level failure budgets."""

    v: float
    d: int
    Nmax: int
    L0: float = 0.0
    h0: float = 0.0
    L: list = field(default_factory=list)
    h: list = field(default_factory=list)
    delta: list = field(default_factory=list)


def ext_scales(v: float, d: int, Nmax: int) -> ExtScaleTable:
    if v <= 1:
        raise DomainError("v must exceed 1")
    tbl = ExtScaleTable(v=v, d=d, Nmax=Nmax)
    logv = math.log(v)
    tbl.L0 = math.sqrt(v) * logv**4
    tbl.h0 = 2.0 * logv**3
    tbl.L = [(128**N) * tbl.L0 for N in range(Nmax + 1)]
    tbl.h = [(128**N) * tbl.h0 for N in range(Nmax + 1)]
    base = Fraction(255 ** (2 * d) * (4 * d + 2))
    tbl.delta = [Fraction(1, base ** (N + 1)) for N in range(Nmax + 1)]
    return tbl


# ---------------------------------------------------------------------------
# grid fields, bad-point recursion, accessibility
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Boolean field over a rectangle of (m, n) indices at one scale."""

    scale: int
    m_lo: int
    n_lo: int
    values: np.ndarray  # [m - m_lo, n - n_lo]

    @property
    def m_hi(self) -> int:
        return self.m_lo + self.values.shape[0] - 1

    @property
    def n_hi(self) -> int:
        return self.n_lo + self.values.shape[1] - 1

    def covers(self, m: int, n: int) -> bool:
        return self.m_lo <= m <= self.m_hi and self.n_lo <= n <= self.n_hi

    def get(self, m: int, n: int) -> bool:
        if not self.covers(m, n):
            raise DomainError(f"grid point ({m},{n}) outside coverage of scale-{self.scale} field")
        return bool(self.values[m - self.m_lo, n - self.n_lo])

    @staticmethod
    def full(scale, m_lo, m_hi, n_lo, n_hi, value=False):
        return GridField(
            scale, m_lo, n_lo, np.full((m_hi - m_lo + 1, n_hi - n_lo + 1), value, dtype=bool)
        )


def _sqrt_floor(alpha: int) -> int:
    return math.isqrt(alpha)


def is_badN_point(bad_prev: GridField, tbl: SurvScaleTable, N: int, m: int, n: int) -> bool:
    """Level-N badness at one point: two level-(N-1) bad boxes inside,
    separated by more than one row, or by more than sqrt(alpha) columns
    within adjacent rows ((i-i')^2 > alpha, exact)."""
    rng = index_ranges(tbl, N, m, n)
    if not (
        bad_prev.covers(rng.l, rng.b)
        and bad_prev.covers(rng.r, rng.t)
    ):
        raise DomainError(
            f"coverage gap: need index rectangle [{rng.l},{rng.r}]x[{rng.b},{rng.t}]"
            f" at scale {N - 1}, have [{bad_prev.m_lo},{bad_prev.m_hi}]"
            f"x[{bad_prev.n_lo},{bad_prev.n_hi}]"
        )
    sub = bad_prev.values[
        rng.l - bad_prev.m_lo : rng.r - bad_prev.m_lo + 1,
        rng.b - bad_prev.n_lo : rng.t - bad_prev.n_lo + 1,
    ]
    bads = np.argwhere(sub)
    if len(bads) < 2:
        return False
    js = bads[:, 1]
    if js.max() - js.min() > 1:
        return True
    iis = bads[:, 0]
    return int(iis.max() - iis.min()) ** 2 > tbl.alpha


def is_badN_bruteforce(bad_prev: GridField, tbl: SurvScaleTable, N: int, m: int, n: int) -> bool:
    """Literal pair enumeration over the definition."""
    rng = index_ranges(tbl, N, m, n)
    pts = [
        (i, j)
        for i in range(rng.l, rng.r + 1)
        for j in range(rng.b, rng.t + 1)
        if bad_prev.get(i, j)
    ]
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            (i, j), (i2, j2) = pts[a], pts[b]
            if abs(j - j2) > 1:
                return True
            if (i - i2) ** 2 > tbl.alpha:
                return True
    return False


def classify_badN(bad_prev: GridField, tbl: SurvScaleTable, N: int, m_lo: int, m_hi: int, n_lo: int, n_hi: int) -> GridField:
    out = GridField.full(N, m_lo, m_hi, n_lo, n_hi)
    for m in range(m_lo, m_hi + 1):
        for n in range(n_lo, n_hi + 1):
            out.values[m - m_lo, n - n_lo] = is_badN_point(bad_prev, tbl, N, m, n)
    return out


def accessible0(goods: GridField) -> GridField:
    """Path dynamic program: (m, n) is reachable through good points from
    (0, 0) with per-step horizontal moves of at most one."""
    out = GridField.full(0, goods.m_lo, goods.m_hi, goods.n_lo, goods.n_hi)
    if goods.n_lo != 0:
        raise DomainError("level-0 accessibility needs rows starting at n=0")
    for n in range(goods.n_lo, goods.n_hi + 1):
        for m in range(goods.m_lo, goods.m_hi + 1):
            if not goods.get(m, n):
                continue
            if n == 0:
                out.values[m - out.m_lo, 0] = m == 0
            else:
                ok = False
                for dm in (-1, 0, 1):
                    mm = m + dm
                    if out.covers(mm, n - 1) and out.values[mm - out.m_lo, n - 1 - out.n_lo]:
                        ok = True
                        break
                out.values[m - out.m_lo, n - out.n_lo] = ok
    return out


def accessible0_bruteforce(goods: GridField, m: int, n: int, _memo=None) -> bool:
    """Top-down evaluation of the path definition (independent of the DP
    sweep; memoized so wide grids stay feasible)."""
    if not goods.covers(m, n):
        raise DomainError("point outside coverage")
    memo = {} if _memo is None else _memo

    def rec(mm, nn):
        key = (mm, nn)
        if key in memo:
            return memo[key]
        if not goods.covers(mm, nn) or not goods.get(mm, nn):
            memo[key] = False
        elif nn == 0:
            memo[key] = mm == 0
        else:
            memo[key] = any(rec(mm + dm, nn - 1) for dm in (-1, 0, 1))
        return memo[key]

    return rec(m, n)


def accessibleN(acc_prev: GridField, tbl: SurvScaleTable, N: int, m_lo, m_hi, n_lo, n_hi) -> GridField:
    """Level-N accessibility from the level-(N-1) field: along the top row
    of the box's index rectangle, all but at most sqrt(alpha) columns must
    be accessible below."""
    out = GridField.full(N, m_lo, m_hi, n_lo, n_hi)
    allow = _sqrt_floor(tbl.alpha)
    for m in range(m_lo, m_hi + 1):
        for n in range(n_lo, n_hi + 1):
            rng = index_ranges(tbl, N, m, n)
            misses = 0
            for i in range(rng.l, rng.r + 1):
                if not acc_prev.get(i, rng.t):
                    misses += 1
            out.values[m - m_lo, n - n_lo] = misses <= allow
    return out


def accessible_chain(goods0: GridField, tbl: SurvScaleTable, N: int, rects):
    """Accessibility fields at levels 0..N; ``rects[k]`` gives the output
    rectangle (m_lo, m_hi, n_lo, n_hi) requested at level k >= 1."""
    fields = [accessible0(goods0)]
    for k in range(1, N + 1):
        m_lo, m_hi, n_lo, n_hi = rects[k]
        fields.append(accessibleN(fields[k - 1], tbl, k, m_lo, m_hi, n_lo, n_hi))
    return fields


def accessibleN_bruteforce(
    goods0: GridField, tbl: SurvScaleTable, N: int, m: int, n: int, _memo=None
) -> bool:
    """The recursive definition evaluated top-down (memoized per call tree)."""
    memo = {} if _memo is None else _memo
    if N == 0:
        return accessible0_bruteforce(goods0, m, n, _memo=memo.setdefault("path", {}))
    rng = index_ranges(tbl, N, m, n)
    lower = memo.setdefault(("level", N - 1), {})
    misses = 0
    for i in range(rng.l, rng.r + 1):
        key = (i, rng.t)
        if key not in lower:
            lower[key] = accessibleN_bruteforce(goods0, tbl, N - 1, i, rng.t, _memo=memo)
        if not lower[key]:
            misses += 1
    return misses <= _sqrt_floor(tbl.alpha)


@dataclass
class SpreadReport:
    checked: int
    holds: int
    hypothesis_failures: int
    counterexamples: list


def spread_check(bad0: GridField, tbl: SurvScaleTable, N: int, rects) -> SpreadReport:
    """Instance check of the spreading property on the computed fields:
    when (m, n) is N-accessible and (m', n+1) is N-good with |m - m'| <= 1,
    then (m', n+1) must be N-accessible.

    Points whose goodness or accessibility cannot be evaluated inside the
    provided coverage count as hypothesis failures, not counterexamples.
    """
    goods0 = GridField(0, bad0.m_lo, bad0.n_lo, ~bad0.values)
    acc = accessible_chain(goods0, tbl, N, rects)

    # goodness chain up to N
    bad_fields = [bad0]
    for k in range(1, N + 1):
        m_lo, m_hi, n_lo, n_hi = rects[k]
        bad_fields.append(classify_badN(bad_fields[k - 1], tbl, k, m_lo, m_hi, n_lo, n_hi))

    accN = acc[N]
    badN = bad_fields[N]
    checked = holds = hyp_fail = 0
    cex = []
    for m in range(accN.m_lo, accN.m_hi + 1):
        for n in range(accN.n_lo, accN.n_hi):
            if not accN.get(m, n):
                continue
            for dm in (-1, 0, 1):
                mp = m + dm
                if not accN.covers(mp, n + 1):
                    continue
                try:
                    good = not badN.get(mp, n + 1)
                except DomainError:
                    hyp_fail += 1
                    continue
                if not good:
                    continue
                checked += 1
                if accN.get(mp, n + 1):
                    holds += 1
                else:
                    cex.append((m, n, mp, n + 1))
    return SpreadReport(checked, holds, hyp_fail, cex)


def random_field(scale, m_lo, m_hi, n_lo, n_hi, p_bad, seed) -> GridField:
    rng = np.random.Generator(np.random.Philox(key=seed))
    vals = rng.random((m_hi - m_lo + 1, n_hi - n_lo + 1)) < p_bad
    return GridField(scale, m_lo, n_lo, vals)


# ---------------------------------------------------------------------------
# bottom-scale classification from simulation snapshots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bad0Params:
    """Window parameters of the bottom-scale test, overridable at desk
    scale; defaults follow the model's forms in (v, eps0)."""

    ell: int
    L: int
    t: float
    p_theta: float
    g_threshold: float
    inf_threshold: float
    prop_radius: int
    shift: int


def bad0_defaults(v: float, eps0: float, p_lo: float, p0: float) -> Bad0Params:
    ve = v**eps0
    return Bad0Params(
        ell=max(1, int(round(v ** (1.0 / 8.0)))),
        L=max(2, int(math.sqrt(v) * math.log(v) ** 2)),
        t=v ** (1.0 - 2.0 * eps0),
        p_theta=0.5 * (p_lo + p0),
        g_threshold=math.exp(-0.5 * ve),
        inf_threshold=ve,
        prop_radius=max(1, int(math.sqrt(v))),
        shift=max(1, int(math.sqrt(v))),
    )


class Bad0Status:
    GOOD = "good"
    BAD = "bad"
    INDETERMINATE = "indeterminate"


@dataclass
class Bad0Result:
    status: str
    b1: str  # 'yes' / 'no' / 'indeterminate'
    gv_mean: float
    gv_ci: tuple
    b2: bool | None
    n_inf_start: int


def classify_bad0(
    snap_start: np.ndarray,
    snap_end: np.ndarray,
    g,
    prm: Bad0Params,
    g_budget: int,
    seed: int,
) -> Bad0Result:
    """Bottom-scale badness from two configuration snapshots one epoch apart.

    The sparsity functional is a nested MC estimate (down-deviation
    probability of the masked occupancy); when its interval straddles the
    threshold the result is Indeterminate, which downstream classification
    treats as bad.  The propagation clause is exact on the snapshots.
    """
    from stircp.icp import EMPTY, INFECTED
    from stircp.interchange import DensityWindow, Direction, estimate_g
    from stircp.lattice import ball_indices

    origin = g.origin()
    mask = np.zeros(g.nsites, dtype=bool)
    mask[ball_indices(g, origin, min(2 * prm.L, (g.n - 1) // 2))] = True
    xi = ((snap_start != EMPTY) & mask).astype(np.int8)
    est = estimate_g(
        xi, g, DensityWindow(prm.ell, prm.L, prm.t, prm.p_theta, Direction.DOWN), g_budget, seed
    )
    if est.ci_low >= prm.g_threshold:
        b1 = "yes"
    elif est.ci_high < prm.g_threshold:
        b1 = "no"
    else:
        b1 = "indeterminate"

    inner = ball_indices(g, origin, prm.prop_radius)
    n_inf = int((snap_start[inner] == INFECTED).sum())
    b2 = None
    if b1 == "no":
        if n_inf >= prm.inf_threshold:
            b2 = False
            for shift_mult in (-1, 0, 1):
                center = list(origin)
                center[0] = (center[0] + shift_mult * prm.shift) % g.n
                box = ball_indices(g, tuple(center), prm.prop_radius)
                if (snap_end[box] == INFECTED).sum() < prm.inf_threshold:
                    b2 = True
                    break
        else:
            b2 = False

    if b1 == "yes":
        status = Bad0Status.BAD
    elif b1 == "indeterminate":
        status = Bad0Status.INDETERMINATE
    else:
        status = Bad0Status.BAD if b2 else Bad0Status.GOOD
    return Bad0Result(status, b1, est.mean, (est.ci_low, est.ci_high), b2, n_inf)
