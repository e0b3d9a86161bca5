"""One executable, many subcommands; scripts and CI are the audience.

Config precedence: command-line flags beat ``--config`` file entries
(flat ``key=value`` lines) beat built-in defaults.  Every artifact embeds
the fully resolved configuration.  Exit codes: 0 success, 2 domain/range
errors, 3 capacity or I/O errors, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from stircp import brw as brw_mod
from stircp import icp, interchange, mc, renorm, report
from stircp.coupling import couple_icp_brw_batch, couple_interchange_batch
from stircp.icp import Engine, ICPParams
from stircp.lattice import BoundaryMode, CapacityError, DomainError, Geometry
from stircp.marks import Rates, sample_marks
from stircp.stats import subseed

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_CAPACITY = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _load_config(path):
    out = {}
    if not path:
        return out
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _resolve(args, spec):
    """flags > config file > defaults; returns the resolved flat dict."""
    cfg_file = _load_config(getattr(args, "config", None))
    resolved = {}
    for name, typ, default, _help in spec:
        key = name.replace("-", "_")
        val = getattr(args, key, None)
        if val is None and key in cfg_file:
            val = typ(cfg_file[key]) if typ is not None else cfg_file[key]
        if val is None:
            val = default
        resolved[key] = val
    return resolved


def _add(sub, name, spec, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", type=str, default=None, help="flat key=value file")
    p.add_argument("--out", type=str, default=None, help="artifact path (stdout default)")
    p.add_argument("--format", type=str, default=None, choices=["json", "csv"])
    p.add_argument("--workers", type=int, default=None)
    for flag, typ, _default, h in spec:
        if typ is bool:
            p.add_argument(f"--{flag}", action="store_const", const=True, default=None, help=h)
        else:
            p.add_argument(f"--{flag}", type=typ, default=None, help=h)
    return p


def _geometry(cfg) -> Geometry:
    return Geometry(
        int(cfg["d"]), int(cfg["n"]), BoundaryMode(cfg.get("boundary") or "torus")
    )


_COMMON_GEO = [
    ("d", int, 1, "dimension"),
    ("n", int, 64, "sites per axis"),
    ("boundary", str, "torus", "torus|hardwall"),
]

_SPECS = {
    "simulate": _COMMON_GEO
    + [
        ("lam", float, 1.0, "transmission rate"),
        ("v", float, 1.0, "swap rate"),
        ("p", float, 0.5, "initial particle density"),
        ("horizon", float, 2.0, "run length"),
        ("engine", str, "frozen", "frozen|dynamic"),
        ("seed", int, 0, "seed"),
        ("log", str, "all", "all|effective"),
    ],
    "survival": _COMMON_GEO
    + [
        ("lam", float, 1.0, ""),
        ("v", float, 1.0, ""),
        ("p", float, 0.5, ""),
        ("horizon", float, 10.0, ""),
        ("replicas", int, 1000, ""),
        ("seed", int, 0, ""),
    ],
    "scan-lambda": _COMMON_GEO
    + [
        ("v", float, 1.0, ""),
        ("p", float, 0.5, ""),
        ("lam-lo", float, 0.1, ""),
        ("lam-hi", float, 6.0, ""),
        ("theta-star", float, 0.05, ""),
        ("horizon", float, 30.0, ""),
        ("replicas", int, 2000, ""),
        ("seed", int, 0, ""),
    ],
    "trend": [
        ("d", int, 1, ""),
        ("n", int, 512, ""),
        ("p", float, 0.5, ""),
        ("v-list", str, "1,4,16,64", "comma separated"),
        ("theta-star", float, 0.05, ""),
        ("horizon", float, 30.0, ""),
        ("replicas", int, 2000, ""),
        ("seed", int, 0, ""),
    ],
    "meet": [
        ("d", int, 1, ""),
        ("ell", int, 1, ""),
        ("replicas", int, 2000, ""),
        ("seed", int, 0, ""),
        ("exhaustive", bool, False, "scan all separations"),
    ],
    "discr-ip": [
        ("ell", int, 2, ""),
        ("L", int, 6, ""),
        ("t", float, 1.0, ""),
        ("replicas", int, 2000, ""),
        ("seed", int, 0, ""),
        ("side", int, None, "torus side override"),
    ],
    "g-estimate": _COMMON_GEO
    + [
        ("ell", int, 3, ""),
        ("L", int, 12, ""),
        ("t", float, 2.0, ""),
        ("p", float, 0.9, "threshold density"),
        ("direction", str, "up", "up|down"),
        ("init", str, "bernoulli:0.5", "bernoulli:<p>|ones|zeros"),
        ("replicas", int, 500, ""),
        ("seed", int, 0, ""),
    ],
    "containment": _COMMON_GEO
    + [
        ("lam", float, 1.0, ""),
        ("v", float, 4.0, ""),
        ("horizon", float, 2.0, ""),
        ("sites", str, "", "comma separated flat indices; default origin"),
        ("seed", int, 0, ""),
    ],
    "kappa": _COMMON_GEO
    + [
        ("lam", float, 1.0, ""),
        ("v", float, 4.0, ""),
        ("t", float, 2.0, ""),
        ("seed", int, 0, ""),
    ],
    "collisions": _COMMON_GEO
    + [
        ("lam", float, 1.0, ""),
        ("v", float, 4.0, ""),
        ("h", float, 2.0, ""),
        ("sites", str, "", ""),
        ("seed", int, 0, ""),
    ],
    "half-cross": _COMMON_GEO
    + [
        ("lam", float, 1.0, ""),
        ("v", float, 1.0, ""),
        ("p", float, 0.7, ""),
        ("radius", int, 3, "box radius"),
        ("t0", float, 0.0, ""),
        ("height", float, 2.0, ""),
        ("seed", int, 0, ""),
    ],
    "brw": _COMMON_GEO
    + [
        ("beta", float, 2.0, ""),
        ("v", float, 1.0, ""),
        ("horizon", float, 3.0, ""),
        ("walkers", int, 1, "initial walkers at the center"),
        ("seed", int, 0, ""),
        ("cap", int, 100000, ""),
    ],
    "brw-extinction": [
        ("beta", float, 2.0, ""),
        ("n0", int, 1, ""),
        ("horizon", float, 30.0, ""),
        ("replicas", int, 10000, ""),
        ("seed", int, 0, ""),
        ("cap", int, 4096, ""),
    ],
    "couple-ip": [
        ("n", int, 256, ""),
        ("ell", int, 4, ""),
        ("L", int, 64, ""),
        ("t", float, 320.0, ""),
        ("T", float, 640.0, ""),
        ("p-lo", float, 0.4, ""),
        ("p-hi", float, 0.6, ""),
        ("replicas", int, 100, ""),
        ("seed", int, 0, ""),
    ],
    "couple-brw": [
        ("d", int, 1, ""),
        ("n", int, 512, ""),
        ("lam", float, 1.5, ""),
        ("v", float, 64.0, ""),
        ("p", float, 0.5, ""),
        ("h0", float, 2.0, ""),
        ("a-count", int, 4, "initial infections near the center"),
        ("replicas", int, 100, ""),
        ("seed", int, 0, ""),
        ("verbose", bool, False, "emit per-infection records of replica 0"),
    ],
    "scales": [
        ("mode", str, "surv", "surv|ext"),
        ("v", float, 65536.0, ""),
        ("eps0", str, "1/32", "fraction or decimal"),
        ("h0", str, "1", ""),
        ("d", int, 1, "(ext mode)"),
        ("N", int, 3, "max level"),
        ("alpha-override", int, None, "synthetic growth constant"),
    ],
    "index-ranges": [
        ("v", float, 65536.0, ""),
        ("eps0", str, "1/32", ""),
        ("h0", str, "1", ""),
        ("alpha-override", int, 10, ""),
        ("N", int, 1, ""),
        ("m", int, 0, ""),
        ("n-idx", int, 0, ""),
    ],
    "classify": [
        ("d", int, 1, ""),
        ("n", int, 64, ""),
        ("lam", float, 1.5, ""),
        ("v", float, 16.0, ""),
        ("p", float, 0.5, ""),
        ("h0", float, 1.0, ""),
        ("epochs", int, 2, ""),
        ("m-range", int, 1, "classify m in [-m_range, m_range]"),
        ("eps0", float, 0.03125, ""),
        ("g-budget", int, 60, ""),
        ("seed", int, 0, ""),
    ],
    "accessible": [
        ("alpha", int, 25, ""),
        ("m-half", int, 45, "columns in [-m_half, m_half]"),
        ("rows", int, 40, ""),
        ("p-bad", float, 0.1, ""),
        ("N", int, 1, ""),
        ("seed", int, 0, ""),
    ],
    "spread-check": [
        ("alpha", int, 25, ""),
        ("m-half", int, 15, ""),
        ("rows", int, 40, ""),
        ("p-bad", float, 0.05, ""),
        ("N", int, 1, ""),
        ("seed", int, 0, ""),
    ],
}


def _emit(cfg, payload, fmt, out, fieldnames=None):
    fmt = fmt or "json"
    if fmt == "json":
        report.write_artifact(report.render_json(cfg, payload), out)
    else:
        rows = payload if isinstance(payload, list) else [payload]
        if fieldnames is None:
            fieldnames = list(rows[0].keys()) if rows else []
        report.write_artifact(report.render_csv(cfg, rows, fieldnames), out)


def _cmd_simulate(cfg, fmt, out):
    g = _geometry(cfg)
    params = ICPParams(g, cfg["lam"], cfg["v"], cfg["p"])
    zeta0 = icp.make_initial(g, cfg["p"], [g.site_index(g.origin())], cfg["seed"])
    engine = Engine.FROZEN_MARKS if cfg["engine"] == "frozen" else Engine.DYNAMIC
    traj = icp.run(zeta0, params, cfg["horizon"], engine, cfg["seed"], log=cfg["log"])
    text = traj.to_jsonl()
    header = json.dumps({"schema_version": report.SCHEMA_VERSION, "config": cfg}, sort_keys=True)
    report.write_artifact(header + "\n" + text, out)


def _cmd_survival(cfg, fmt, out):
    g = _geometry(cfg)
    est = mc.estimate_survival(
        ICPParams(g, cfg["lam"], cfg["v"], cfg["p"]), cfg["horizon"], cfg["replicas"], cfg["seed"]
    )
    _emit(cfg, est.to_json(), fmt, out, fieldnames=list(est.to_json().keys()))


def _cmd_scan(cfg, fmt, out):
    g = _geometry(cfg)
    res = mc.scan_lambda(
        g,
        cfg["v"],
        cfg["p"],
        cfg["lam_lo"],
        cfg["lam_hi"],
        cfg["theta_star"],
        cfg["horizon"],
        cfg["replicas"],
        cfg["seed"],
    )
    if (fmt or "json") == "csv":
        rows = [
            {"lam": lam, "stage": stage, **est.to_json()} for lam, stage, est in res.trace
        ]
        _emit(cfg, rows, "csv", out, fieldnames=["lam", "stage", "mean", "ci_low", "ci_high", "replicas", "excluded", "seed"])
    else:
        _emit(cfg, res.to_json(), fmt, out)


def _cmd_trend(cfg, fmt, out):
    v_list = [float(x) for x in str(cfg["v_list"]).split(",") if x]
    rows = mc.trend_report(
        v_list,
        cfg["d"],
        cfg["p"],
        cfg["theta_star"],
        cfg["horizon"],
        cfg["replicas"],
        cfg["seed"],
        cfg["n"],
    )
    _emit(cfg, rows, fmt, out, fieldnames=list(rows[0].keys()) if rows else None)


def _cmd_meet(cfg, fmt, out):
    est = interchange.meet_probability(
        cfg["d"], cfg["ell"], cfg["replicas"], cfg["seed"], exhaustive=bool(cfg["exhaustive"])
    )
    _emit(cfg, est.to_json(), fmt, out, fieldnames=list(est.to_json().keys()))


def _cmd_discr(cfg, fmt, out):
    est = interchange.discr_ip(
        cfg["ell"], cfg["L"], cfg["t"], cfg["replicas"], cfg["seed"], side=cfg["side"]
    )
    payload = est.to_json()
    payload["analytic_bound"] = interchange.discr_ip_bound(1, cfg["ell"], cfg["L"], cfg["t"])
    _emit(cfg, payload, fmt, out, fieldnames=list(payload.keys()))


def _cmd_g_estimate(cfg, fmt, out):
    g = _geometry(cfg)
    init = cfg["init"]
    if init == "ones":
        xi0 = np.ones(g.nsites, dtype=np.int8)
    elif init == "zeros":
        xi0 = np.zeros(g.nsites, dtype=np.int8)
    else:
        dens = float(init.split(":", 1)[1])
        rng = np.random.Generator(np.random.Philox(key=subseed(cfg["seed"], 0xA11)))
        xi0 = (rng.random(g.nsites) < dens).astype(np.int8)
    win = interchange.DensityWindow(
        cfg["ell"],
        cfg["L"],
        cfg["t"],
        cfg["p"],
        interchange.Direction.UP if cfg["direction"] == "up" else interchange.Direction.DOWN,
    )
    est = interchange.estimate_g(xi0, g, win, cfg["replicas"], cfg["seed"])
    _emit(cfg, est.to_json(), fmt, out, fieldnames=list(est.to_json().keys()))


def _parse_sites(cfg, g):
    if cfg["sites"]:
        return [int(x) for x in str(cfg["sites"]).split(",")]
    return [g.site_index(g.origin())]


def _cmd_containment(cfg, fmt, out):
    g = _geometry(cfg)
    m = sample_marks(g, Rates(cfg["v"], cfg["lam"]), cfg["horizon"], cfg["seed"])
    final = icp.containment(m, _parse_sites(cfg, g), 0.0, cfg["horizon"])
    _emit(cfg, {"size": len(final), "members": sorted(final)}, fmt, out)


def _cmd_kappa(cfg, fmt, out):
    g = _geometry(cfg)
    m = sample_marks(g, Rates(cfg["v"], cfg["lam"]), cfg["t"], cfg["seed"])
    field = icp.kappa(m, cfg["t"])
    nz = {int(i): int(x) for i, x in enumerate(field) if x}
    _emit(cfg, {"total_mass": int(field.sum()), "field": nz}, fmt, out)


def _cmd_collisions(cfg, fmt, out):
    g = _geometry(cfg)
    m = sample_marks(g, Rates(cfg["v"], cfg["lam"]), cfg["h"], cfg["seed"])
    st = icp.collision_stats(m, _parse_sites(cfg, g), cfg["h"])
    payload = {
        "psi_size": st.psi_size,
        "adjacency_time": st.adjacency_time,
        "collision_time": None if st.collision_time == float("inf") else st.collision_time,
    }
    _emit(cfg, payload, fmt, out)


def _cmd_half_cross(cfg, fmt, out):
    g = _geometry(cfg)
    params = ICPParams(g, cfg["lam"], cfg["v"], cfg["p"])
    zeta0 = icp.make_initial(g, cfg["p"], [g.site_index(g.origin())], cfg["seed"])
    traj = icp.run(zeta0, params, cfg["t0"] + cfg["height"], Engine.FROZEN_MARKS, cfg["seed"])
    box = icp.SpaceTimeBox(g.origin(), cfg["radius"], cfg["t0"], cfg["height"])
    kind, axis = icp.half_crossing(traj, box)
    _emit(cfg, {"crossing": kind.value, "axis": axis}, fmt, out)


def _cmd_brw(cfg, fmt, out):
    g = _geometry(cfg)
    forest = brw_mod.run_brw(
        g,
        [g.site_index(g.origin())] * cfg["walkers"],
        cfg["beta"],
        cfg["v"],
        cfg["horizon"],
        cfg["seed"],
        cap=cfg["cap"],
    )
    _emit(cfg, forest.to_json(), fmt, out)


def _cmd_brw_ext(cfg, fmt, out):
    est, capped = brw_mod.brw_extinction(
        cfg["beta"], cfg["n0"], cfg["horizon"], cfg["replicas"], cfg["seed"], cap=cfg["cap"]
    )
    payload = est.to_json()
    payload["capped"] = capped
    payload["analytic_extinction"] = brw_mod.extinction_probability(cfg["beta"]) ** cfg["n0"]
    _emit(cfg, payload, fmt, out, fieldnames=list(payload.keys()))


def _cmd_couple_ip(cfg, fmt, out):
    g = Geometry(1, cfg["n"])
    scal, _ = couple_interchange_batch(
        cfg["p_lo"],
        cfg["p_hi"],
        cfg["ell"],
        cfg["L"],
        cfg["t"],
        cfg["T"],
        cfg["replicas"],
        cfg["seed"],
        g,
    )
    payload = {
        "replicas": cfg["replicas"],
        "success": int(scal[:, 0].sum()),
        "cause_pairing": int((scal[:, 1] == 1).sum()),
        "cause_flow": int((scal[:, 1] == 2).sum()),
        "cause_unmatched": int((scal[:, 1] == 3).sum()),
        "domination_violations": int(scal[:, 2].sum()),
    }
    _emit(cfg, payload, fmt, out)


def _cmd_couple_brw(cfg, fmt, out):
    g = Geometry(cfg["d"], cfg["n"])
    origin = g.site_index(g.origin())
    A = [(origin + k) % g.nsites for k in range(cfg["a_count"])]
    params = ICPParams(g, cfg["lam"], cfg["v"], cfg["p"])
    scal, flt = couple_icp_brw_batch(A, params, cfg["h0"], cfg["replicas"], cfg["seed"])
    payload = {
        "replicas": cfg["replicas"],
        "collision_fired": int(scal[:, 0].sum()),
        "bijection_ok": int(scal[:, 1].sum()),
        "identity_ok": int(scal[:, 6].sum()),
        "attempts": int(scal[:, 2].sum()),
        "attempts_on_occupied": int(scal[:, 3].sum()),
        "mean_collision_time": float(np.mean([x for x in flt[:, 0] if x >= 0]) if (flt[:, 0] >= 0).any() else -1),
    }
    if cfg["verbose"]:
        from stircp.coupling import couple_icp_brw

        run = couple_icp_brw(A, params, cfg["h0"], cfg["seed"])
        payload["replica0_records"] = {
            key: np.asarray(val).tolist() for key, val in run.records.items()
        }
    _emit(cfg, payload, fmt, out)


def _parse_number(s):
    s = str(s)
    if "/" in s:
        from fractions import Fraction

        return Fraction(s)
    f = float(s)
    return int(f) if f.is_integer() else f


def _cmd_scales(cfg, fmt, out):
    if cfg["mode"] == "surv":
        tbl = renorm.surv_scales(
            _parse_number(cfg["v"]),
            _parse_number(cfg["eps0"]),
            _parse_number(cfg["h0"]),
            cfg["N"],
            alpha_override=cfg["alpha_override"],
        )
        rows = [
            {
                "N": N,
                "rho": str(tbl.rho[N]),
                "L": str(tbl.L[N]),
                "L_side": str(tbl.L_side[N]),
                "h_prime": str(tbl.hprime[N]),
                "h": str(tbl.h[N]),
                "delta": str(tbl.delta[N]),
            }
            for N in range(cfg["N"] + 1)
        ]
        payload = {"alpha": tbl.alpha, "degenerate": tbl.degenerate, "rows": rows}
        if (fmt or "json") == "csv":
            _emit(cfg, rows, "csv", out, fieldnames=list(rows[0].keys()))
        else:
            _emit(cfg, payload, fmt, out)
    else:
        tbl = renorm.ext_scales(float(cfg["v"]), cfg["d"], cfg["N"])
        rows = [
            {"N": N, "L": tbl.L[N], "h": tbl.h[N], "delta": str(tbl.delta[N])}
            for N in range(cfg["N"] + 1)
        ]
        _emit(cfg, rows, fmt, out, fieldnames=["N", "L", "h", "delta"])


def _cmd_index_ranges(cfg, fmt, out):
    tbl = renorm.surv_scales(
        _parse_number(cfg["v"]),
        _parse_number(cfg["eps0"]),
        _parse_number(cfg["h0"]),
        max(cfg["N"], 1),
        alpha_override=cfg["alpha_override"],
    )
    rng = renorm.index_ranges(tbl, cfg["N"], cfg["m"], cfg["n_idx"])
    brute = renorm.index_ranges_bruteforce(tbl, cfg["N"], cfg["m"], cfg["n_idx"])
    payload = {
        "l": rng.l,
        "r": rng.r,
        "b": rng.b,
        "t": rng.t,
        "bruteforce_agrees": rng == brute,
    }
    _emit(cfg, payload, fmt, out, fieldnames=list(payload.keys()))


def _cmd_classify(cfg, fmt, out):
    g = Geometry(cfg["d"], cfg["n"])
    params = ICPParams(g, cfg["lam"], cfg["v"], cfg["p"])
    origin = g.site_index(g.origin())
    zeta0 = icp.make_initial(g, cfg["p"], [origin], cfg["seed"])
    horizon = cfg["h0"] * cfg["epochs"]
    traj = icp.run(zeta0, params, horizon, Engine.FROZEN_MARKS, cfg["seed"])
    snaps = [icp._state_at(traj, k * cfg["h0"]) for k in range(cfg["epochs"] + 1)]
    prm = renorm.bad0_defaults(cfg["v"], cfg["eps0"], cfg["p"] * 0.9, cfg["p"])
    # desk-scale overrides keeping the window inside the geometry
    prm = renorm.Bad0Params(
        ell=min(prm.ell, max(1, cfg["n"] // 16)),
        L=min(prm.L, max(2, cfg["n"] // 4 - 1)),
        t=min(prm.t, 2.0),
        p_theta=prm.p_theta,
        g_threshold=prm.g_threshold,
        inf_threshold=prm.inf_threshold,
        prop_radius=min(prm.prop_radius, max(1, cfg["n"] // 8)),
        shift=min(prm.shift, max(1, cfg["n"] // 8)),
    )
    rows = []
    for n_idx in range(cfg["epochs"]):
        for m_idx in range(-cfg["m_range"], cfg["m_range"] + 1):
            shift = (m_idx * prm.shift) % g.nsites
            s0 = np.roll(snaps[n_idx], -shift)
            s1 = np.roll(snaps[n_idx + 1], -shift)
            res = renorm.classify_bad0(
                s0, s1, g, prm, cfg["g_budget"], subseed(cfg["seed"], 1000 + n_idx * 100 + m_idx)
            )
            rows.append(
                {
                    "m": m_idx,
                    "n": n_idx,
                    "status": res.status,
                    "b1": res.b1,
                    "gv_mean": res.gv_mean,
                    "b2": res.b2,
                    "n_inf_start": res.n_inf_start,
                }
            )
    _emit(cfg, rows, fmt, out, fieldnames=list(rows[0].keys()) if rows else None)


def _make_bad_field(cfg):
    return renorm.random_field(
        0, -cfg["m_half"], cfg["m_half"], 0, cfg["rows"] - 1, cfg["p_bad"], cfg["seed"]
    )


def _grid_rects(tbl, N, m_half, rows):
    """Largest level-k index rectangles supported by the level-0 coverage;
    raises with the required sizes when even one box does not fit."""
    rects = {}
    prev = (-m_half, m_half, 0, rows - 1)
    for k in range(1, N + 1):
        q = tbl.h_ratio(k)
        n_span = (prev[3] + 1) // q
        m_span = -1
        while True:
            cand = renorm.index_ranges(tbl, k, m_span + 1, 0)
            lo = renorm.index_ranges(tbl, k, -(m_span + 1), 0)
            if cand.r <= prev[1] and lo.l >= prev[0]:
                m_span += 1
            else:
                break
        if n_span < 1 or m_span < 0:
            need_r = renorm.index_ranges(tbl, k, 0, 0)
            raise DomainError(
                f"grid too small for level {k} at alpha={tbl.alpha}: need at "
                f"least m-half {need_r.r} and rows {q} (have {prev[1]}, {prev[3] + 1})"
            )
        rects[k] = (-m_span, m_span, 0, n_span - 1)
        prev = rects[k]
    return rects


def _cmd_accessible(cfg, fmt, out):
    tbl = renorm.surv_scales(2**4096, "1/32", 1, max(cfg["N"], 1), alpha_override=cfg["alpha"])
    bad0 = _make_bad_field(cfg)
    goods = renorm.GridField(0, bad0.m_lo, bad0.n_lo, ~bad0.values)
    rects = _grid_rects(tbl, cfg["N"], cfg["m_half"], cfg["rows"])
    fields = renorm.accessible_chain(goods, tbl, cfg["N"], rects) if cfg["N"] >= 1 else [
        renorm.accessible0(goods)
    ]
    top = fields[cfg["N"]]
    rows = [
        {"m": m, "n": n, "accessible": bool(top.get(m, n))}
        for m in range(top.m_lo, top.m_hi + 1)
        for n in range(top.n_lo, top.n_hi + 1)
    ]
    _emit(cfg, rows, fmt, out, fieldnames=["m", "n", "accessible"])


def _cmd_spread(cfg, fmt, out):
    tbl = renorm.surv_scales(2**4096, "1/32", 1, max(cfg["N"], 1), alpha_override=cfg["alpha"])
    bad0 = _make_bad_field(cfg)
    rects = _grid_rects(tbl, cfg["N"], cfg["m_half"], cfg["rows"])
    rep = renorm.spread_check(bad0, tbl, cfg["N"], rects)
    payload = {
        "checked": rep.checked,
        "holds": rep.holds,
        "hypothesis_failures": rep.hypothesis_failures,
        "counterexamples": rep.counterexamples,
    }
    _emit(cfg, payload, fmt, out)


_HANDLERS = {
    "simulate": _cmd_simulate,
    "survival": _cmd_survival,
    "scan-lambda": _cmd_scan,
    "trend": _cmd_trend,
    "meet": _cmd_meet,
    "discr-ip": _cmd_discr,
    "g-estimate": _cmd_g_estimate,
    "containment": _cmd_containment,
    "kappa": _cmd_kappa,
    "collisions": _cmd_collisions,
    "half-cross": _cmd_half_cross,
    "brw": _cmd_brw,
    "brw-extinction": _cmd_brw_ext,
    "couple-ip": _cmd_couple_ip,
    "couple-brw": _cmd_couple_brw,
    "scales": _cmd_scales,
    "index-ranges": _cmd_index_ranges,
    "classify": _cmd_classify,
    "accessible": _cmd_accessible,
    "spread-check": _cmd_spread,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="stircp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in _SPECS.items():
        _add(sub, name, spec, help_text=name)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    spec = _SPECS[args.command]
    cfg = _resolve(args, spec)
    cfg["command"] = args.command
    if args.workers is not None:
        mc.set_workers(args.workers)
        cfg["workers"] = args.workers
    try:
        _HANDLERS[args.command](cfg, args.format, args.out)
    except (DomainError, mc.RangeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DOMAIN
    except (CapacityError, IOError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CAPACITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
