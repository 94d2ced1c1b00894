"""Post-training evaluation gates.

Each exported fixture must clear a Monte Carlo bar before it is committed;
the estimates use the trainer's own environments with greedy-free
(stochastic) action sampling, mirroring how the verifier's oracle runs the
policy.
"""

from __future__ import annotations

import numpy as np
import torch

from .envs import VecEnv, make_vec_env
from .ppo import MlpPolicy


def rollout_failure_rate(policy: MlpPolicy, env_name: str, region: str,
                         horizon: int, episodes: int, seed: int,
                         manifest_path=None) -> float:
    env = make_vec_env(env_name, batch=episodes, seed=seed, manifest_path=manifest_path)
    lo, hi = env.constants["initial_regions"][region]
    rng = np.random.default_rng(seed + 1)
    states = rng.uniform(lo, hi, size=(episodes, env.dim))
    failed = env.fail(states)
    alive = ~failed
    with torch.no_grad():
        for t in range(horizon):
            if not alive.any():
                break
            idx = np.flatnonzero(alive)
            logits = policy.logits(torch.from_numpy(states[idx].astype(np.float32)))
            probs = torch.softmax(logits, dim=1).numpy().astype(float)
            u = rng.uniform(size=idx.shape[0])
            actions = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
            states[idx] = env.dynamics(states[idx], actions)
            now_failed = env.fail(states[idx])
            failed[idx[now_failed]] = True
            alive[idx[now_failed]] = False
    return float(failed.mean())


GATES = {
    # environment: (region, horizon, max failure rate)
    "bouncing_ball": ("small", 20, 0.05),
    "cruise_control": ("default", 7, 0.2),
    "inverted_pendulum": ("default", 6, 0.1),
}


def check_gate(policy: MlpPolicy, env_name: str, episodes: int = 4000,
               seed: int = 123, manifest_path=None) -> tuple[bool, float, float]:
    region, horizon, bar = GATES[env_name]
    rate = rollout_failure_rate(policy, env_name, region, horizon, episodes,
                                seed, manifest_path)
    return rate <= bar, rate, bar
