#!/usr/bin/env python3
"""Sweep heights for the box-fill calibration of the walker skeleton: the
smallest h at which every inner ball in the target region holds at least k
walkers with frequency above the margin alpha."""

import argparse
import json
import sys

from stircp.brw import calibrate_h0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--lam", type=float, default=1.5)
    ap.add_argument("--v", type=float, default=4.0)
    ap.add_argument("--side", type=int, default=64)
    ap.add_argument("--h-grid", default="1,2,4,8")
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--inner-radius", type=int, default=None)
    ap.add_argument("--outer-radius", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = calibrate_h0(
        args.d,
        args.p,
        args.lam,
        args.v,
        args.side,
        [float(h) for h in args.h_grid.split(",")],
        args.replicas,
        args.seed,
        inner_radius=args.inner_radius,
        outer_radius=args.outer_radius,
    )
    out["params"] = {k: v for k, v in out["params"].items()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
