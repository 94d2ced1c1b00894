"""Train, gate, and export the three benchmark policies.

Run from the repository root:

    python3 -m policy_trainer.train --out ../fixtures        (from trainer/)
    train-policies --env bouncing_ball --out fixtures        (installed)

Fixtures are committed to the repository so the verifier's test suite
never needs this package at test time.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .envs import make_vec_env
from .export import export_network
from .gates import check_gate
from .ppo import TrainSpec, train_policy

SPECS = {
    "bouncing_ball": TrainSpec(
        environment="bouncing_ball", hidden=(32, 32), total_steps=250_000, seed=11),
    "cruise_control": TrainSpec(
        environment="cruise_control", hidden=(64, 64), total_steps=300_000, seed=12),
    "inverted_pendulum": TrainSpec(
        environment="inverted_pendulum", hidden=(64, 64), total_steps=300_000, seed=13),
}


def train_and_export(name: str, out_dir: Path, manifest_path=None, log=print) -> dict:
    spec = SPECS[name]
    log(f"training {name} (hidden {spec.hidden}, {spec.total_steps} steps)")
    env = make_vec_env(name, spec.vec_envs, spec.seed, manifest_path)
    result = train_policy(spec, env, log=log)
    ok, rate, bar = check_gate(result.policy, name, manifest_path=manifest_path)
    log(f"  gate: MC failure rate {rate:.4f} (bar {bar})  -> {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise SystemExit(f"{name}: policy failed its evaluation gate ({rate:.4f} > {bar})")
    region = env.constants["default_region"]
    lo, hi = env.constants["initial_regions"][region]
    out_path = out_dir / f"{name}_policy.json"
    export_network(result.policy, out_path, lo, hi)
    (out_dir / f"{name}_training_curve.json").write_text(json.dumps(result.curve, indent=2))
    log(f"  exported {out_path}")
    return {"environment": name, "failure_rate": rate, "export": str(out_path)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--env", choices=sorted(SPECS), action="append",
                        help="train only these environments (default: all)")
    parser.add_argument("--out", default="fixtures", help="export directory")
    parser.add_argument("--manifest", default=None,
                        help="path to the shared constants manifest")
    args = parser.parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = args.env or sorted(SPECS)
    summary = [train_and_export(n, out_dir, args.manifest) for n in names]
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
