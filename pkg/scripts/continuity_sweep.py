"""Gain change under additive perturbation of the omega actions, written as CSV.

Each omega action's cost is raised by eps and its lambda lowered by eps; the
ratio |dg|/eps should settle to a constant as eps shrinks.
"""

import argparse
import csv
import sys

import numpy as np

from mdpembed import build_embedding, controlled_queue, perturb_omega, policy_iteration, summarize_exits


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    ap.add_argument("--points", type=int, default=13)
    args = ap.parse_args()

    model = controlled_queue()
    emdp = build_embedding(model, summarize_exits(model))
    g0 = policy_iteration(emdp.base).gain
    rows = []
    for eps in np.logspace(-5, -1, args.points):
        g = policy_iteration(perturb_omega(emdp, cost_eps=eps, lam_eps=eps).base).gain
        rows.append((f"{eps:.6g}", f"{g:.12f}", f"{abs(g - g0):.6e}", f"{abs(g - g0) / eps:.6f}"))

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["eps", "gain", "abs_change", "ratio"])
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
