"""Observed temporal order of the theta-scheme on a fixed grid.

Errors are measured against a run with a much smaller step on the same grid,
so the spatial error cancels.

    python3 scripts/temporal_order.py [--n 64] [--ref-factor 32]
"""

import argparse

import numpy as np

from evflow.mesh import single_block_mesh
from evflow.mms import manufactured_case, temporal_order_study


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=64, help="cells per side")
    ap.add_argument("--ref-factor", type=int, default=32)
    ap.add_argument("--thetas", type=float, nargs="+", default=[1.0, 0.5, 0.0])
    args = ap.parse_args()

    case = manufactured_case("cosine")
    mesh = single_block_mesh(args.n)
    dts = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    for theta in args.thetas:
        study = temporal_order_study(case, mesh, theta, dts, ref_factor=args.ref_factor)
        slope = np.polyfit(np.log(dts), np.log(study.errors), 1)[0]
        rates = " ".join(f"{r:.2f}" for r in study.rates)
        errors = " ".join(f"{e:.3e}" for e in study.errors)
        print(f"theta={theta:g}: errors {errors} rates {rates} slope {slope:.3f}")


if __name__ == "__main__":
    main()
