"""Replica orchestration: survival estimation, threshold scanning, and the
large-swap-rate trend table.

All replica batches run on compiled per-replica event loops with
independent streams keyed by (seed, replica); aggregation reduces integer
counts in replica order, so results are identical for any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stircp import _kernels
from stircp.icp import ICPParams, wrap_band
from stircp.lattice import DomainError, Geometry
from stircp.stats import Estimate, binomial_estimate


class RangeError(ValueError):
    """Scan range does not bracket the requested crossing."""


def set_workers(workers: int | None):
    if workers is not None:
        import numba

        numba.set_num_threads(max(1, int(workers)))


def _geometry_arrays(g: Geometry):
    edges = g.edges()
    edge_a = np.array([e[0] for e in edges], dtype=np.int64)
    edge_b = np.array([e[1] for e in edges], dtype=np.int64)
    nt = np.ascontiguousarray(g.neighbor_table())
    band = wrap_band(g)
    origin = g.site_index(g.origin())
    return nt, edge_a, edge_b, band, origin


def survival_batch(
    params: ICPParams,
    horizon: float,
    replicas: int,
    seed: int,
    lam_max: float | None = None,
    collect_sigma: bool = False,
    tag: int = _kernels.TAG_SURVIVAL,
):
    """Raw per-replica outcome table of the dynamic engine, initial law:
    origin infected, every other site independently healthy w.p. p."""
    g = params.g
    nt, edge_a, edge_b, band, origin = _geometry_arrays(g)
    lam_max = params.lam if lam_max is None else lam_max
    if lam_max < params.lam:
        raise DomainError("lam_max must dominate lam")
    return _kernels.icp_dynamic_batch(
        seed,
        tag,
        replicas,
        nt,
        edge_a,
        edge_b,
        band,
        origin,
        float(params.v),
        float(lam_max),
        float(params.lam),
        float(params.p),
        float(horizon),
        collect_sigma,
    )


def estimate_survival(
    params: ICPParams,
    horizon: float,
    replicas: int,
    seed: int,
    lam_max: float | None = None,
) -> Estimate:
    """Fraction of replicas with at least one infection left at the horizon
    (the finite-horizon survival proxy).  Replicas whose infected set
    reached the torus midline band are excluded and counted."""
    if replicas < 100:
        raise DomainError("need at least 100 replicas")
    out, _ = survival_batch(params, horizon, replicas, seed, lam_max=lam_max)
    wrapped = out[:, 1] == 1
    excluded = int(wrapped.sum())
    kept = replicas - excluded
    if kept == 0:
        raise DomainError("all replicas wrap-flagged: geometry too small")
    survived = int((out[~wrapped, 0] == 1).sum())
    return binomial_estimate(survived, kept, seed, excluded=excluded)


def sigma_tallies(
    params: ICPParams, horizon: float, replicas: int, seed: int
) -> tuple[int, int, int]:
    """Pooled epoch-increment counts (down, up, zero) over all replicas."""
    _, sig = survival_batch(
        params, horizon, replicas, seed, collect_sigma=True, tag=_kernels.TAG_SIGMA
    )
    return int(sig[:, 0].sum()), int(sig[:, 1].sum()), int(sig[:, 2].sum())


def dynamic_final_counts(
    params: ICPParams, horizon: float, replicas: int, seed: int
) -> np.ndarray:
    """Final infected counts per replica (engine-equivalence statistics)."""
    out, _ = survival_batch(params, horizon, replicas, seed)
    return out[:, 2].copy()


@dataclass
class ScanResult:
    lam_hat: float
    bracket: tuple
    endpoint_estimates: tuple
    trace: list = field(default_factory=list)
    theta_star: float = 0.0
    horizon: float = 0.0
    geometry: dict | None = None
    replicas: int = 0
    seed: int = 0
    ci_separated: bool = False

    def to_json(self):
        return {
            "lam_hat": self.lam_hat,
            "bracket": list(self.bracket),
            "endpoint_estimates": [e.to_json() for e in self.endpoint_estimates],
            "trace": [
                {"lam": lam, "stage": stage, **est.to_json()}
                for lam, stage, est in self.trace
            ],
            "theta_star": self.theta_star,
            "horizon": self.horizon,
            "geometry": self.geometry,
            "replicas": self.replicas,
            "seed": self.seed,
            "ci_separated": self.ci_separated,
        }


def scan_lambda(
    g: Geometry,
    v: float,
    p: float,
    lam_lo: float,
    lam_hi: float,
    theta_star: float,
    horizon: float,
    replicas: int,
    seed: int,
    coarse_replicas: int | None = None,
    coarse_steps: int = 4,
    fine_steps: int = 4,
) -> ScanResult:
    """Pseudo-critical infection rate where the survival proxy crosses
    theta_star: a geometric ladder brackets the crossing from below, then
    bisection refines it, coarse replicas first and the full count on the
    final bracket.

    All evaluations share the transmission stream at rate ``lam_hi`` and
    thin it, so the per-replica survival indicator is a monotone step in
    lam and the whole scan is coherent.  The ladder never relies on the
    far-supercritical region, where spreading clouds reach the torus
    midline and wrap exclusions would starve the estimate.

    The reported value is tied to (horizon, geometry, theta_star); it is a
    finite-size proxy, not the infinite-volume threshold.
    """
    if not (0 < theta_star < 1):
        raise DomainError("theta_star must lie in (0,1)")
    if not (0 < lam_lo < lam_hi):
        raise RangeError("need 0 < lam_lo < lam_hi")
    lam_max = lam_hi
    trace = []
    n_coarse = coarse_replicas if coarse_replicas is not None else max(1000, replicas // 10)

    def theta(lam: float, n: int, stage: str) -> Estimate:
        est = estimate_survival(ICPParams(g, lam, v, p), horizon, n, seed, lam_max=lam_max)
        trace.append((lam, stage, est))
        return est

    # geometric ladder: first rung whose estimate clears the threshold
    rungs = [lam_lo]
    while rungs[-1] < lam_hi:
        rungs.append(min(lam_hi, rungs[-1] * math.sqrt(2.0)))
    lo = hi = None
    prev = lam_lo
    for i, rung in enumerate(rungs):
        est = theta(rung, n_coarse, "ladder")
        if est.mean >= theta_star:
            if i == 0:
                raise RangeError(
                    f"theta at lam_lo={rung} already {est.mean:.4f} >= {theta_star}"
                )
            lo, hi = prev, rung
            break
        prev = rung
    if lo is None:
        raise RangeError(
            f"no crossing in range: theta stayed below {theta_star} up to lam_hi={lam_hi}"
        )

    for _ in range(coarse_steps):
        mid = 0.5 * (lo + hi)
        if theta(mid, n_coarse, "coarse").mean >= theta_star:
            hi = mid
        else:
            lo = mid

    est_lo = theta(lo, replicas, "fine")
    est_hi = theta(hi, replicas, "fine")
    for _ in range(fine_steps):
        if est_lo.mean >= theta_star:
            hi, est_hi = lo, est_lo
            lo = lo * 0.9
            est_lo = theta(lo, replicas, "fine")
            continue
        if est_hi.mean < theta_star:
            lo, est_lo = hi, est_hi
            hi = min(lam_max, hi * 1.1)
            est_hi = theta(hi, replicas, "fine")
            continue
        mid = 0.5 * (lo + hi)
        est_mid = theta(mid, replicas, "fine")
        if est_mid.mean >= theta_star:
            hi, est_hi = mid, est_mid
        else:
            lo, est_lo = mid, est_mid

    for est, lam in ((est_lo, lo), (est_hi, hi)):
        if est.excluded > 0.05 * (est.replicas + est.excluded):
            raise DomainError(
                f"wrap exclusions dominate at lam={lam}: geometry too small"
            )
    separated = est_lo.ci_high < theta_star <= est_hi.ci_low
    return ScanResult(
        lam_hat=0.5 * (lo + hi),
        bracket=(lo, hi),
        endpoint_estimates=(est_lo, est_hi),
        trace=trace,
        theta_star=theta_star,
        horizon=horizon,
        geometry=g.to_json(),
        replicas=replicas,
        seed=seed,
        ci_separated=bool(separated),
    )


def trend_report(
    v_list,
    d: int,
    p: float,
    theta_star: float,
    horizon: float,
    replicas: int,
    seed: int,
    side: int,
    lam_lo: float = 0.1,
    lam_hi: float = 6.0,
    coarse_replicas: int | None = None,
):
    """Pseudo-critical rates across swap rates with the normalization
    2*d*p*lam_hat, whose drift toward 1 is the large-v signature.

    Every row carries the horizon/geometry/threshold context: these numbers
    are finite-size proxies by construction.
    """
    g = Geometry(d, side)
    rows = []
    for i, v in enumerate(v_list):
        res = scan_lambda(
            g,
            v,
            p,
            lam_lo,
            lam_hi,
            theta_star,
            horizon,
            replicas,
            seed + i,
            coarse_replicas=coarse_replicas,
        )
        rows.append(
            {
                "v": v,
                "lam_hat": res.lam_hat,
                "normalized": 2 * d * p * res.lam_hat,
                "bracket_lo": res.bracket[0],
                "bracket_hi": res.bracket[1],
                "theta_star": theta_star,
                "horizon": horizon,
                "side": side,
                "replicas": replicas,
                "ci_separated": res.ci_separated,
            }
        )
    return rows
