"""Run both convergence tables and compare with the published reference values.

    python3 scripts/reproduce_tables.py [--threads N] [--out results]
"""

import argparse
from pathlib import Path

import numpy as np

from evflow.cli import format_convergence_csv
from evflow.mesh import quadrant_mesh
from evflow.mms import TABLE1_LEVELS, TABLE2_LEVELS, manufactured_case, run_convergence_study

REFERENCE = {
    "example1": (TABLE1_LEVELS, [6.33e-4, 3.32e-4, 2.79e-4, 2.26e-4], [1.51e-1, 1.02e-1, 9.15e-2, 7.97e-2]),
    "example2": (TABLE2_LEVELS, [7.28e-1, 6.38e-1, 5.69e-1, 5.13e-1], [8.64e-1, 7.71e-1, 6.87e-1, 6.24e-1]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for name, (levels, ref_p, ref_u) in REFERENCE.items():
        rep = run_convergence_study(manufactured_case(name), levels, 1.0, mesh_builder=quadrant_mesh, threads=args.threads)
        (out / f"{name}_convergence.csv").write_text(format_convergence_csv(rep))
        print(f"\n{name}")
        print(f"{'lvl':>3} {'error_p':>10} {'ref':>10} {'error_u':>10} {'per-step':>10} {'ref':>10}")
        for k, r in enumerate(rep.results):
            print(
                f"{k + 1:>3} {r.error_p:10.3e} {ref_p[k]:10.3e} {r.error_u:10.3e} {r.error_u_per_step:10.3e} {ref_u[k]:10.3e}"
            )
        for label, ours, ref in (("p", rep.errors("p"), ref_p), ("u", rep.errors("u"), ref_u)):
            dev = np.abs(ours - ref) / np.asarray(ref)
            print(f"max relative deviation error_{label}: {dev.max():.1%}")
        print(f"slope p {rep.slope('p'):.3f}  slope u {rep.slope('u'):.3f}  max balance {max(r.max_balance for r in rep.results):.1e}")


if __name__ == "__main__":
    main()
