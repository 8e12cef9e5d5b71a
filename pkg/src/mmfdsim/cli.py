"""Command line entry point: ``sim run | powerctl | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import (InvariantError, load_link_config, powerctl_sweep, run_experiment,
                         run_single, write_outputs, write_sweep_csv)
from .radio import w_to_dbm
from .scenario import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

log = logging.getLogger("mmfdsim")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    cfg.validate()

    def progress(r):
        log.info("%s n=%d rep=%d: %.4g bit/s, Jain %.4f", r.variant, r.node_count, r.replication,
                 r.network_throughput, r.jain)

    results = run_experiment(cfg, trace_path=args.trace, check=args.check, progress=progress)
    csv_path, json_path = write_outputs(args.out, cfg, results)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def _cmd_powerctl(args) -> int:
    lc = load_link_config(args.linkspec)
    rows = powerctl_sweep(lc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "powerctl.csv"
    write_sweep_csv(path, rows)
    for row in rows:
        if not row["ibi"]:
            continue
        label = "with PC   " if row["power_control"] else "without PC"
        if row["user_power_w"] is None:
            print(f"P_AP^max {w_to_dbm(row['ap_power_max_w']):6.2f} dBm {label}: infeasible")
            continue
        print(f"P_AP^max {w_to_dbm(row['ap_power_max_w']):6.2f} dBm {label}: "
              f"user {w_to_dbm(row['user_power_w']):6.2f} dBm, AP {w_to_dbm(row['ap_power_w']):6.2f} dBm, "
              f"SINR AP {row['sinr_ap_db']:6.2f} dB (MCS {row['mcs_ap']}), "
              f"SINR user {row['sinr_user_db']:6.2f} dB (MCS {row['mcs_user']})")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    duration = min(cfg.duration, args.duration)
    checked = 0
    for n in cfg.node_counts:
        for variant in cfg.variants:
            _, violations = run_single(cfg, variant, n, 0, check=True, duration=duration)
            if violations:
                raise InvariantError(f"{variant.value} n={n}", violations)
            checked += 1
    print(f"{args.config}: configuration valid; {checked} checked run(s) of {duration} s without violations")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="mmWave full-duplex MAC simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log every finished run")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write results.csv and summary.json")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--replications", type=int)
    r.add_argument("--out", default="out")
    r.add_argument("--trace", metavar="PATH", help="write the event trace (enables invariant checks)")
    r.add_argument("--check", action="store_true", help="check protocol invariants without a trace file")
    r.set_defaults(func=_cmd_run)

    pc = sub.add_parser("powerctl", help="sweep the AP power limit of one FD link")
    pc.add_argument("linkspec")
    pc.add_argument("--out", default="out")
    pc.set_defaults(func=_cmd_powerctl)

    v = sub.add_parser("validate", help="parse a config and run a short invariant-checked simulation")
    v.add_argument("config")
    v.add_argument("--duration", type=float, default=0.01, help="seconds simulated per check (default 0.01)")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as e:
        print(f"invariant violation in {e.context}:", file=sys.stderr)
        for v in e.violations[:20]:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
