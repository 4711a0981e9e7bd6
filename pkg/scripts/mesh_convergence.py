"""Fold value under dyadic refinement for both detection routes, with Richardson extrapolation.

    python scripts/mesh_convergence.py --n 63 127 255 511
"""
import argparse
import time

from saddlefold.continuation import (branch_start, detect_fold, fold_by_bisection, observed_order,
                                     refine_fold_moore_spence, refine_minimax, trace_branch)
from saddlefold.mesh import build_grid
from saddlefold.model import scalar_abc
from saddlefold.sublinear import baseline_state


def fold_values(n, dim):
    grid = build_grid(dim, (1.0,) * dim, (n,) * dim)
    spec = scalar_abc(grid)
    wbar, _ = baseline_state(spec, grid)
    branch = trace_branch(spec, grid, branch_start(spec, grid, wbar))
    bracket = detect_fold(branch)[0]
    ms = refine_fold_moore_spence(spec, grid, branch, bracket).lambda_star
    return {"h": grid.h[0], "moore_spence": ms,
            "bisection": fold_by_bisection(spec, grid, branch, bracket).lambda_star,
            "minimax": refine_minimax(spec, grid, branch, bracket)["lambda_s"]}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[63, 127, 255, 511])
    ap.add_argument("--dim", type=int, default=1, choices=[1, 2])
    args = ap.parse_args()

    rows = []
    print(f"{'n':>5} {'h':>10} {'Moore-Spence':>18} {'bisection':>18} {'minimax':>18} {'time':>6}")
    for n in args.n:
        t0 = time.perf_counter()
        r = fold_values(n, args.dim)
        rows.append(r)
        print(f"{n:5d} {r['h']:10.3e} {r['moore_spence']:18.10f} {r['bisection']:18.10f} "
              f"{r['minimax']:18.10f} {time.perf_counter() - t0:6.1f}")
    for route in ("moore_spence", "minimax"):
        for k in range(len(rows) - 2):
            rep = observed_order([r[route] for r in rows[k:k + 3]])
            print(f"{route:>12} n={args.n[k]}..{args.n[k + 2]}: order {rep['order']:.3f}  "
                  f"extrapolated {rep['extrapolated']:.8f} +/- {rep['error_estimate']:.2e}")


if __name__ == "__main__":
    main()
