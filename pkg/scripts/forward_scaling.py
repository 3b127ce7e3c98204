"""Wall-time of the DB T-step forward against T and against grid size.

    python3 scripts/forward_scaling.py --hidden 64
"""
import argparse
import time

import numpy as np

from dbgnn.dynamics import FeatureState, init_weights
from dbgnn.graph import make_grid
from dbgnn.model import dbts_forward


def best_time(g, T, d, repeats):
    rng = np.random.default_rng(0)
    w = init_weights(d, d, 0.1, True, rng)
    s = FeatureState(rng.normal(size=(g.num_nodes, d)), rng.normal(size=(g.num_directed, d)))
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        dbts_forward(g, w, T, s)
        out.append(time.perf_counter() - t0)
    return min(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    g = make_grid(5, 20)
    print("T     seconds")
    for T in (10, 20, 40, 80, 160):
        print(f"{T:<5d} {best_time(g, T, args.hidden, args.repeats):.4f}")
    print("grid  |E|   seconds(T=40)  per-edge-us")
    for cols in (10, 20, 40, 80):
        h = make_grid(5, cols)
        t = best_time(h, 40, args.hidden, args.repeats)
        print(f"5x{cols:<3d} {h.num_edges:<5d} {t:.4f}         {1e6 * t / (40 * h.num_edges):.2f}")


if __name__ == "__main__":
    main()
