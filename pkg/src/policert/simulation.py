"""Ground-truth concrete execution of the closed loop.

Monte Carlo rollouts and an exact finite-horizon failure probability give
the reference values that the abstraction's certified bounds must dominate.
Sampling uses the portable splitmix stream so committed expected values
hold on every platform; the exact computation expands the action tree level
by level with merging of identical successor states, which is the plain
reachability recursion with the per-state summation applied across the
whole level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environments import Environment, Trace
from .network import Network, action_distribution
from .rng import draw_unit, stream_state

_WILSON_Z = 1.959963984540054  # 95% two-sided normal quantile


class CapExceeded(Exception):
    """Action tree too large for exact expansion."""


@dataclass
class McEstimate:
    estimate: float
    trials: int
    wilson_lo: float
    wilson_hi: float


def wilson_interval(successes: int, trials: int, z: float = _WILSON_Z) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, float(centre - half))
    hi = 1.0 if successes == trials else min(1.0, float(centre + half))
    return lo, hi


def _sample_action(probs: np.ndarray, u: float) -> int:
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def simulate_trace(env: Environment, net: Network, s0, k: int,
                   seed: int, stream: int = 0) -> tuple[Trace, bool]:
    """One rollout of at most k steps; stops early on failure."""
    state = stream_state(seed, stream)
    s = np.asarray(s0, dtype=float)
    trace = Trace()
    if env.is_fail_state(s):
        return trace, True
    for t in range(k):
        probs = action_distribution(net, s)
        a = _sample_action(probs, draw_unit(state, t))
        nxt = env.concrete_step(s, a)
        trace.steps.append((s, a, nxt))
        s = nxt
        if env.is_fail_state(s):
            return trace, True
    return trace, False


def mc_failure_estimate(env: Environment, net: Network, s0, k: int,
                        trials: int, seed: int) -> McEstimate:
    """i.i.d. rollouts, vectorised across trials; Wilson 95% interval."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    s0 = np.asarray(s0, dtype=float)
    states = np.tile(s0, (trials, 1))
    # Per-trial streams derived from (seed, trial index), identical to
    # simulate_trace(..., stream=i+1).
    from .rng import mix64

    with np.errstate(over="ignore"):
        rng_states = mix64(mix64(np.uint64(seed % (1 << 64)))
                           ^ np.arange(1, trials + 1, dtype=np.uint64))
    alive = ~env.fail_mask(states)
    failures = int(np.sum(~alive))
    for t in range(k):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        probs = action_distribution(net, states[idx])
        draws = draw_unit(rng_states[idx], t)
        cum = np.cumsum(probs, axis=1)
        actions = (draws[:, None] >= cum).sum(axis=1)
        nxt = states[idx].copy()
        for a in range(net.action_count):
            mask = actions == a
            if mask.any():
                nxt[mask] = env.step_batch(states[idx][mask], a)
        states[idx] = nxt
        failed_now = env.fail_mask(nxt)
        failures += int(np.sum(failed_now))
        alive[idx[failed_now]] = False
    lo, hi = wilson_interval(failures, trials)
    return McEstimate(failures / trials, trials, lo, hi)


def exact_tree_probability(env: Environment, net: Network, s0, k: int,
                           cap: int = 10**7) -> float:
    """Exact finite-horizon failure probability of the closed loop.

    Level-wise expansion of the reachability recursion: fail contributes its
    accumulated weight, the horizon contributes nothing, and identical
    successors (bitwise) merge via the probability summation.
    """
    if env.action_count ** k > cap:
        raise CapExceeded(f"|A|^k = {env.action_count ** k} exceeds cap {cap}")
    s0 = np.asarray(s0, dtype=float)
    if env.is_fail_state(s0):
        return 1.0
    states = s0[None, :]
    weights = np.array([1.0])
    fail_prob = 0.0
    for _ in range(k):
        probs = action_distribution(net, states)
        branches = []
        for a in range(net.action_count):
            nxt = env.step_batch(states, a)
            branches.append((nxt, weights * probs[:, a]))
        states = np.concatenate([b[0] for b in branches])
        weights = np.concatenate([b[1] for b in branches])
        keep = weights > 0.0
        states, weights = states[keep], weights[keep]
        failed = env.fail_mask(states)
        fail_prob += float(weights[failed].sum())
        states, weights = states[~failed], weights[~failed]
        if states.size == 0:
            break
        merged, inverse = np.unique(states, axis=0, return_inverse=True)
        summed = np.zeros(merged.shape[0])
        np.add.at(summed, inverse, weights)
        states, weights = merged, summed
    return fail_prob


def simulate_mc_with_traces(env: Environment, net: Network, s0, k: int,
                            trials: int, seed: int):
    """Per-trial traces (slow path); used for dump tooling and tests."""
    out = []
    for i in range(trials):
        out.append(simulate_trace(env, net, s0, k, seed, stream=i + 1))
    return out
