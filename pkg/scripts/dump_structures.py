"""Solve the structure-figure settings and print their action grids.

Writes ``<out-dir>/<name>.json`` (policy) and ``<name>_<slice>.json`` (grid)
for the real-time error policies at mu = 0.2 and 0.8 and the AoII policies
at mu = 0.1 and 0.5.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from semtrack.experiment import build_policy, dump_policy_structure, render_grid
from semtrack.mdp import SystemConfig
from semtrack.policy import save_policy

CASES = {
    "rte_mu0.2": ("real_time_error", SystemConfig(p=0.8, q=0.5, mu=0.2, E=10, N=30)),
    "rte_mu0.8_cs5": ("real_time_error", SystemConfig(p=0.8, q=0.5, mu=0.8, E=10, N=30, c_s=5)),
    "aoii_mu0.1": ("aoii", SystemConfig(p=0.7, q=1.0, mu=0.1, E=10, N=30)),
    "aoii_mu0.5": ("aoii", SystemConfig(p=0.7, q=1.0, mu=0.5, E=10, N=30)),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/structure")
    args = ap.parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, (metric, cfg) in CASES.items():
        pol, info = build_policy("optimal", metric, cfg)
        with open(os.path.join(args.out_dir, f"{name}.json"), "w") as fh:
            json.dump(save_policy(pol), fh)
        slices = [(1, 0), (0, 0), (1, 1), (0, 1)] if metric != "aoii" else [None]
        print(f"== {name}: gain {info['gain']:.4f}")
        for sl in slices:
            doc = dump_policy_structure(pol, sl)
            tag = "all" if sl is None else f"{sl[0]}{sl[1]}"
            with open(os.path.join(args.out_dir, f"{name}_{tag}.json"), "w") as fh:
                json.dump(doc, fh)
            print(render_grid(doc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
