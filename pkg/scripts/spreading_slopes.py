"""Arrival-slope survey over seeds for the ballistic/diffusive comparison on a 40-node path.

    python3 scripts/spreading_slopes.py --seeds 20 --out slopes.csv
"""
import argparse
import csv

import numpy as np

from dbgnn import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--preset", default="fig1")
    ap.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=JSON")
    ap.add_argument("--out", default=None, help="optional CSV of per-seed slopes")
    args = ap.parse_args()

    rows = []
    for seed in range(args.seeds):
        cfg = cli.resolve_config("spread", None, args.preset, seed, args.overrides)
        runs = cli.run_spread(cfg)
        row = [seed] + [v for k in cfg.steppers for v in (runs[k]["T"], runs[k]["slope"])]
        rows.append(row)
        print(" ".join(f"{x:.3f}" if isinstance(x, float) else str(x) for x in row), flush=True)
    header = ["seed"] + [f"{k}_{f}" for k in cfg.steppers for f in ("steps", "slope")]
    slopes = np.array([[r[2 + 2 * j] for j in range(len(cfg.steppers))] for r in rows])
    for j, k in enumerate(cfg.steppers):
        print(f"{k}: mean slope {np.nanmean(slopes[:, j]):.3f}, nan in {int(np.isnan(slopes[:, j]).sum())} seeds")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows([header, *rows])


if __name__ == "__main__":
    main()
