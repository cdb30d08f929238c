"""Command line entry point: ``semtrack {solve,simulate,sweep,structure,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiment import (METRICS, ExperimentSpec, build_policy, dump_policy_structure, render_grid,
                         resolve_config, run_sweep)
from .mdp import ConfigError
from .policy import PolicyLoadError, TabularPolicy, load_policy, save_policy
from .sim import evaluate

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _seeds(text):
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return [int(s) for s in text.split(",")]


def _values(text):
    out = []
    for s in text.split(","):
        s = s.strip()
        out.append(int(s) if s.lstrip("-").isdigit() else float(s))
    return out


def _write(doc, path):
    text = json.dumps(doc, indent=1)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_solve(args):
    cfg = resolve_config(args.config, _overrides(args.set))
    pol, info = build_policy("optimal", args.metric, cfg)
    if not isinstance(pol, TabularPolicy):
        raise ConfigError(f"no finite MDP for metric {args.metric} at q={cfg.q}; nothing to solve")
    print(f"{pol.name}: gain {info['gain']:.6g} after {info['iterations']} sweeps "
          f"({info['solve_time']:.2f} s)", file=sys.stderr)
    _write(save_policy(pol), args.out)
    return EXIT_OK


def cmd_simulate(args):
    if args.policy:
        pol = load_policy(args.policy)
        cfg = pol.config
        if args.config or args.set:
            cfg = resolve_config(args.config, {**cfg.to_dict(), **_overrides(args.set)})
            pol = load_policy(args.policy, cfg)
    else:
        cfg = resolve_config(args.config, _overrides(args.set))
        pol, _ = build_policy(args.name, args.metric, cfg)
    ev = evaluate(pol, cfg, args.horizon, args.seeds)
    doc = {"policy": pol.name, "config": cfg.to_dict(), "config_hash": cfg.hash(), "horizon": args.horizon,
           "means": ev.means, "ci_half": ev.ci, "runs": [r.to_dict() for r in ev.runs]}
    _write(doc, args.out)
    return EXIT_OK


def cmd_sweep(args):
    cfg = resolve_config(args.config, _overrides(args.set))
    spec = ExperimentSpec(args.metric, args.sweep, _values(args.values), cfg, args.policies.split(","),
                          args.horizon, args.seeds, args.out, args.workers)
    rows = run_sweep(spec)
    if not args.out:
        from .experiment import results_csv
        sys.stdout.write(results_csv(rows))
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"point {r['param']}={r['value']} policy {r['policy']}: {r['error']}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_structure(args):
    pol = load_policy(args.policy)
    sl = None
    if args.slice:
        sl = tuple(int(v) for v in args.slice.split(","))
    doc = dump_policy_structure(pol, sl)
    if args.out:
        _write(doc, args.out)
    print(render_grid(doc))
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_checks

    results = run_checks(quick=not args.full)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FATAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semtrack", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, metric=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        if metric:
            p.add_argument("--metric", choices=METRICS, default="real_time_error")
        p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("solve", help="build the MDP, run RVI and write the policy JSON")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    common(p)
    p.add_argument("--policy", help="policy JSON written by solve")
    p.add_argument("--name", default="optimal", help="policy id when no JSON is given")
    p.add_argument("--seeds", type=_seeds, default=list(range(5)), help="comma list or lo:hi")
    p.add_argument("--horizon", type=int, default=10**6)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="evaluate policies over one swept parameter")
    common(p)
    p.add_argument("--sweep", required=True, help="parameter to sweep")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--policies", default="optimal,baseline")
    p.add_argument("--seeds", type=_seeds, default=list(range(5)))
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("structure", help="print the action grid of a solved policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--slice", help="remaining state components, e.g. 1,0 for (x_tilde, x_hat)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--full", action="store_true", help="use the full grids (slower)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PolicyLoadError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
