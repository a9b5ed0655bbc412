"""Command-line entry point: ``epcast run | tune | trace-stats | contacts``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .epidemic_models import EpidemicParams, reached_fraction, solve, write_trajectory_csv
from .errors import EpcastError
from .harness import PRESETS, load_config, run
from .mobility import ArenaConfig, RandomWaypointContacts, write_edges_csv
from .traces import degree_series, load_colocation
from .tuner import DEFAULT_GAMMA, DEFAULT_TOLERANCE, TuneRequest, tune_lambda, tune_lambda_heterogeneous

log = logging.getLogger("epcast")


def _add_run(sub):
    p = sub.add_parser("run", help="run an experiment and write results.csv / aggregate.json")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a shipped preset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out-dir", default="results", help="output directory (default: results)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for replications")
    p.add_argument("--replications", type=int)
    p.add_argument("--nodes", type=int, dest="node_count")
    p.add_argument("--targets", type=float, nargs="+")
    p.add_argument("--initial-messages", type=int)
    p.add_argument("--deadline-s", type=float)
    p.add_argument("--buffer", type=int, dest="buffer_capacity")
    p.add_argument("--mode", choices=["epcast", "epcast-het", "fixed-beta"])
    p.add_argument("--fixed-beta", type=float)
    p.add_argument("--trace", help="co-location trace CSV (switches to the trace scenario)")
    p.add_argument("--gamma-prior", help="removal prior: a rate, or 'calibrate'")
    p.add_argument("--events", action="store_true", help="also write per-replication JSON-lines event logs")
    p.set_defaults(func=cmd_run)


def cmd_run(args) -> int:
    overrides = {
        "master_seed": args.seed,
        "replications": args.replications,
        "node_count": args.node_count,
        "targets": args.targets,
        "initial_messages": args.initial_messages,
        "deadline_s": args.deadline_s,
        "buffer_capacity": args.buffer_capacity,
        "mode": args.mode,
        "fixed_beta": args.fixed_beta,
    }
    if args.fixed_beta is not None and args.mode is None:
        overrides["mode"] = "fixed-beta"
    if args.gamma_prior is not None:
        overrides["gamma_prior"] = args.gamma_prior if args.gamma_prior == "calibrate" else float(args.gamma_prior)
    if args.events:
        overrides["record_events"] = True
    config = load_config(args.config, args.preset, overrides)
    if args.trace:
        data = config.to_dict()
        data.update(scenario="trace", trace_path=args.trace, arena=None)
        config = type(config).from_dict(data)
    results = run(config, args.out_dir, parallel=args.parallel)
    for res in results:
        m = res.summary()["metrics"]
        line = {k: round(v["mean"], 4) for k, v in m.items()}
        print(f"{res.scenario} [{res.reports[0].kind}] reps={len(res.reports)} "
              f"gamma_prior={res.gamma_prior:.4f} {json.dumps(line)}")
    print(f"wrote {args.out_dir}/results.csv and {args.out_dir}/aggregate.json")
    return 0


def _add_tune(sub):
    p = sub.add_parser("tune", help="compute the infectivity for a target fraction and deadline")
    p.add_argument("--n", type=int, required=True, help="number of hosts N")
    p.add_argument("--k", type=float, required=True, help="mean degree <k>")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="removal rate per round")
    p.add_argument("--deadline", type=float, required=True, help="deadline t* in rounds")
    p.add_argument("--target", type=float, required=True, help="target fraction of hosts")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--k-min", type=float, help="tune against this minimum degree instead")
    p.add_argument("--trajectory", help="write the predicted t,s,i,r trajectory to this CSV")
    p.add_argument("--check", action="store_true", help="re-solve at lambda* and print the residual")
    p.set_defaults(func=cmd_tune)


def cmd_tune(args) -> int:
    req = TuneRequest(args.n, args.k, args.gamma, args.deadline, args.target, args.tolerance)
    res = tune_lambda_heterogeneous(req, args.k_min) if args.k_min is not None else tune_lambda(req)
    print(f"lambda*={res.lambda_star:.6g} achieved={res.achieved_fraction:.6f} "
          f"feasible={str(res.feasible).lower()} iterations={res.iterations}")
    k = args.k_min if args.k_min is not None else args.k
    traj = solve(EpidemicParams(args.n, res.lambda_star, args.gamma, k), args.deadline, min(0.1, args.deadline))
    peak = int(traj.i.argmax())
    print(f"predicted: peak infectives {traj.i[peak]:.2f} at t={traj.t[peak]:.1f}, "
          f"reached {reached_fraction(traj, args.deadline):.4f} at t*={args.deadline:g}")
    if args.check:
        residual = reached_fraction(traj, args.deadline) - args.target
        ok = abs(residual) <= args.tolerance or (res.lambda_star == 0 and residual >= 0)
        print(f"round-trip residual={residual:+.3e} within_tolerance={str(ok).lower()}")
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            write_trajectory_csv(traj, fh)
    return 0


def _add_trace_stats(sub):
    p = sub.add_parser("trace-stats", help="per-slot degree statistics of a co-location trace")
    p.add_argument("trace", help="CSV with header node_id,location_id,start_s,end_s")
    p.add_argument("--slot-s", type=float, default=60.0)
    p.add_argument("--min-duration", type=float, default=60.0, help="drop contacts shorter than this (s)")
    p.add_argument("--window", type=float, nargs=2, metavar=("START_S", "END_S"))
    p.add_argument("--edges", help="write the per-slot edge list (slot,node_a,node_b) to this CSV")
    p.set_defaults(func=cmd_trace_stats)


def cmd_trace_stats(args) -> int:
    tvg = load_colocation(args.trace, args.slot_s, min_duration_s=args.min_duration,
                          window=tuple(args.window) if args.window else None)
    series = degree_series(tvg)
    print(f"nodes={tvg.n} slots={len(tvg)} slot_s={tvg.slot_s:g} t0={tvg.t0:g}")
    print("slot,mean_degree,min_degree,active,isolated")
    for row in series:
        print(f"{row.slot},{row.mean_degree:.4f},{row.min_degree},{row.active},{row.isolated}")
    if args.edges:
        with open(args.edges, "w", newline="") as fh:
            tvg.write_edges_csv(fh)
    return 0


def _add_contacts(sub):
    p = sub.add_parser("contacts", help="dump Random Waypoint contact snapshots as t,node_a,node_b")
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--rounds", type=int, default=60)
    p.add_argument("--tau-s", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side-m", type=float, default=1000.0)
    p.add_argument("--range-m", type=float, default=200.0)
    p.add_argument("--warmup-s", type=float, default=1000.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contacts)


def cmd_contacts(args) -> int:
    arena = ArenaConfig(side_m=args.side_m, range_m=args.range_m)
    source = RandomWaypointContacts(arena, args.nodes, args.seed, args.tau_s, args.warmup_s)
    with open(args.out, "w", newline="") as fh:
        write_edges_csv(((r * args.tau_s, source(r)) for r in range(args.rounds)), fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epcast", description="Controlled epidemic dissemination simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_tune(sub)
    _add_trace_stats(sub)
    _add_contacts(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EpcastError as exc:
        print(f"epcast: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"epcast: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
