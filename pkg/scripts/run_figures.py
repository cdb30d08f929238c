"""Run the published sweep settings and write one CSV/JSON pair per sweep.

    python scripts/run_figures.py --out-dir results
    python scripts/run_figures.py --only rte_vs_p aoii_vs_q --horizon 200000
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from semtrack.experiment import run_sweep
from semtrack.figures import FIGURES, figure_spec


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--only", nargs="*", choices=sorted(FIGURES), help="subset of sweeps (default all)")
    ap.add_argument("--horizon", type=int, default=10**6)
    ap.add_argument("--heuristic-horizon", type=int, default=10**5,
                    help="horizon for belief-driven policies, which run slot by slot in Python")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    os.makedirs(args.out_dir, exist_ok=True)
    failed = 0
    for name in args.only or FIGURES:
        spec = figure_spec(name, horizon=args.horizon, seeds=range(args.seeds),
                           out=os.path.join(args.out_dir, f"{name}.csv"), heuristic_horizon=args.heuristic_horizon)
        spec.workers = args.workers
        t0 = time.perf_counter()
        rows = run_sweep(spec)
        bad = [r for r in rows if r["error"]]
        failed += len(bad)
        print(f"{name}: {len(rows)} rows, {len(bad)} failed, {time.perf_counter() - t0:.0f} s")
        for r in rows:
            if r["mean"] is not None:
                print(f"  {spec.param}={r['value']:<6} {r['_label']:<14} {r['mean']:.4f} +- {r['ci_half']:.4f}")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
