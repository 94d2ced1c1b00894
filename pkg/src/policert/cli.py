"""Command-line front end.

Exit codes for `verify`:
  0  verification passed (or no p_safe threshold was given)
  1  certified bound exceeds p_safe
  2  configuration error
  3  state budget exhausted with a conservatively failed frontier and no
     sound pass (the report is still written; its bound remains valid)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, canonical_json, load_config
from .environments import make_environment
from .imdp import verify as run_verification
from .network import NetworkError, load_network
from .plotting import DimensionError, plot_file, write_partition
from .simulation import mc_failure_estimate, simulate_mc_with_traces


def _load_run_inputs(config: RunConfig):
    env = make_environment(config.environment, config.env_overrides)
    if config.network is None:
        raise ConfigError("config has no network path")
    net = load_network(config.network)
    if net.input_dim != env.dimension or net.action_count != env.action_count:
        raise ConfigError(
            f"network is {net.input_dim}->{net.action_count} but environment "
            f"{config.environment} needs {env.dimension}->{env.action_count}")
    return env, net


def cmd_verify(args) -> int:
    try:
        config = load_config(args.config)
        if args.threads is not None:
            config.threads = max(1, args.threads)
        env, net = _load_run_inputs(config)
    except (ConfigError, NetworkError, KeyError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report, imdp = run_verification(env, net, config)
    out = Path(args.report) if args.report else Path(args.config).with_suffix(".report.json")
    out.write_text(canonical_json(report.to_json_dict()))
    if args.dump_imdp:
        Path(args.dump_imdp).write_text("\n".join(imdp.dump_lines()) + "\n")
    if args.dump_partition:
        write_partition(args.dump_partition, imdp, env, report.config)

    stats = report.stats
    print(f"environment      {config.environment}")
    print(f"horizon k        {config.horizon}")
    print(f"phi              {config.phi}")
    print(f"containment      {'on' if config.containment else 'off'}")
    print(f"polyhedra        {stats['polyhedra']}")
    print(f"containment hits {stats['containment_merges']}")
    print(f"imdp states      {stats['imdp_states']}")
    print(f"prob bound       {report.global_maxmax:.6g}")
    print(f"maxmin           {report.global_maxmin:.6g}  (guidance only)")
    print(f"runtime          {stats['wall_clock_s']:.1f} s")
    if report.flags:
        print(f"flags            {','.join(report.flags)}")
    print(f"report           {out}")

    if report.passed is False:
        print(f"FAIL: bound {report.global_maxmax:.6g} > p_safe {config.p_safe}")
        return 3 if "budget_exhausted" in report.flags else 1
    if report.passed is True:
        print(f"PASS: bound {report.global_maxmax:.6g} <= p_safe {config.p_safe}")
        return 0
    return 3 if "budget_exhausted" in report.flags else 0


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
        env, net = _load_run_inputs(config)
        start = np.array([float(x) for x in args.start.split(",")])
        if start.shape != (env.dimension,):
            raise ConfigError(f"start state needs {env.dimension} coordinates")
    except (ConfigError, NetworkError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    k = args.horizon or config.horizon
    seed = args.seed if args.seed is not None else config.seed
    est = mc_failure_estimate(env, net, start, k, args.trials, seed)
    print(f"trials           {est.trials}")
    print(f"estimate         {est.estimate:.6g}")
    print(f"wilson 95%       [{est.wilson_lo:.6g}, {est.wilson_hi:.6g}]")
    if args.dump_traces:
        lines = []
        for i, (trace, failed) in enumerate(
                simulate_mc_with_traces(env, net, start, k, min(args.trials, 100), seed)):
            lines.append(f"trace {i} failed={int(failed)}")
            lines.extend(trace.dump_lines())
        Path(args.dump_traces).write_text("\n".join(lines) + "\n")
        print(f"traces           {args.dump_traces}")
    return 0


def cmd_plot(args) -> int:
    axes = tuple(args.axes) if args.axes else None
    try:
        count = plot_file(args.partition, args.output, axes)
    except (DimensionError, OSError, ValueError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output} with {count} polygons")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policert",
        description="Certified failure-probability bounds for softmax policies",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="build the abstraction and bound the failure probability")
    v.add_argument("config", help="run-configuration JSON file")
    v.add_argument("--report", help="report output path (default: <config>.report.json)")
    v.add_argument("--dump-imdp", help="write the interval MDP as line-oriented text")
    v.add_argument("--dump-partition", help="write the leaf partition as JSON (plot input)")
    v.add_argument("--threads", type=int, default=None,
                   help="cap engine parallelism (overrides the config)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="Monte Carlo failure estimate from one start state")
    s.add_argument("config", help="run-configuration JSON file")
    s.add_argument("--start", required=True, help="comma-separated start state")
    s.add_argument("--trials", type=int, default=10000)
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--dump-traces", help="write up to 100 traces as text")
    s.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="render a partition dump as SVG")
    p.add_argument("partition", help="partition JSON from verify --dump-partition")
    p.add_argument("-o", "--output", required=True, help="SVG output path")
    p.add_argument("--axes", type=int, nargs=2, default=None,
                   help="state axes to project onto (needed when dim > 2)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
