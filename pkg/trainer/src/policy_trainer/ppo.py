"""Compact PPO (clipped objective, GAE) for the benchmark policies.

Actor and critic are separate ReLU MLPs; the actor's linear logit head is
what gets exported. Training is single-process over a vectorised
environment batch, which is plenty for these two-variable problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .envs import VecEnv


@dataclass
class TrainSpec:
    environment: str
    hidden: tuple[int, int]
    learning_rate: float = 5e-4
    batch_size: int = 4096
    total_steps: int = 300_000
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 8
    minibatch: int = 512
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    seed: int = 0
    vec_envs: int = 16
    export_path: str | None = None
    # Abort when the smoothed return drops this far below its best.
    collapse_margin: float = 0.5


class MlpPolicy(nn.Module):
    def __init__(self, obs_dim: int, action_count: int, hidden: tuple[int, int]):
        super().__init__()
        h1, h2 = hidden
        self.actor = nn.Sequential(
            nn.Linear(obs_dim, h1), nn.ReLU(),
            nn.Linear(h1, h2), nn.ReLU(),
            nn.Linear(h2, action_count))
        self.critic = nn.Sequential(
            nn.Linear(obs_dim, 64), nn.ReLU(),
            nn.Linear(64, 64), nn.ReLU(),
            nn.Linear(64, 1))

    def logits(self, obs: torch.Tensor) -> torch.Tensor:
        return self.actor(obs)

    def value(self, obs: torch.Tensor) -> torch.Tensor:
        return self.critic(obs).squeeze(-1)


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainResult:
    policy: MlpPolicy
    curve: list[dict] = field(default_factory=list)


def _gae(rewards, values, dones, last_value, gamma, lam):
    steps, lanes = rewards.shape
    adv = np.zeros_like(rewards)
    running = np.zeros(lanes)
    next_value = last_value
    for t in reversed(range(steps)):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        running = delta + gamma * lam * not_done * running
        adv[t] = running
        next_value = values[t]
    return adv


def train_policy(spec: TrainSpec, env: VecEnv, log=print) -> TrainResult:
    """PPO training loop; raises DivergenceError on reward collapse."""
    torch.manual_seed(spec.seed)
    policy = MlpPolicy(env.dim, env.action_count, spec.hidden)
    optim = torch.optim.Adam(policy.parameters(), lr=spec.learning_rate)

    lanes = spec.vec_envs
    rollout_len = max(1, spec.batch_size // lanes)
    updates = max(1, spec.total_steps // (rollout_len * lanes))

    episode_return = np.zeros(lanes)
    finished_returns: list[float] = []
    best_smoothed = -np.inf
    curve = []

    for update in range(updates):
        obs_buf = np.zeros((rollout_len, lanes, env.dim), dtype=np.float32)
        act_buf = np.zeros((rollout_len, lanes), dtype=np.int64)
        logp_buf = np.zeros((rollout_len, lanes), dtype=np.float32)
        rew_buf = np.zeros((rollout_len, lanes), dtype=np.float32)
        val_buf = np.zeros((rollout_len, lanes), dtype=np.float32)
        done_buf = np.zeros((rollout_len, lanes), dtype=np.float32)

        for t in range(rollout_len):
            obs = env.states.astype(np.float32)
            with torch.no_grad():
                ten = torch.from_numpy(obs)
                logits = policy.logits(ten)
                dist = torch.distributions.Categorical(logits=logits)
                actions = dist.sample()
                logp = dist.log_prob(actions)
                values = policy.value(ten)
            acts = actions.numpy()
            _, rewards, done = env.step(acts)
            obs_buf[t] = obs
            act_buf[t] = acts
            logp_buf[t] = logp.numpy()
            rew_buf[t] = rewards
            val_buf[t] = values.numpy()
            done_buf[t] = done
            episode_return += rewards
            for i in np.flatnonzero(done):
                finished_returns.append(episode_return[i])
                episode_return[i] = 0.0

        with torch.no_grad():
            last_value = policy.value(torch.from_numpy(env.states.astype(np.float32))).numpy()
        adv = _gae(rew_buf, val_buf, done_buf, last_value, spec.gamma, spec.gae_lambda)
        returns = adv + val_buf

        flat_obs = torch.from_numpy(obs_buf.reshape(-1, env.dim))
        flat_act = torch.from_numpy(act_buf.reshape(-1))
        flat_logp = torch.from_numpy(logp_buf.reshape(-1))
        flat_adv = torch.from_numpy(adv.reshape(-1).astype(np.float32))
        flat_ret = torch.from_numpy(returns.reshape(-1).astype(np.float32))
        flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)

        n = flat_obs.shape[0]
        idx = np.arange(n)
        rng = np.random.default_rng(spec.seed * 7919 + update)
        for _ in range(spec.epochs):
            rng.shuffle(idx)
            for start in range(0, n, spec.minibatch):
                mb = torch.from_numpy(idx[start:start + spec.minibatch])
                logits = policy.logits(flat_obs[mb])
                dist = torch.distributions.Categorical(logits=logits)
                logp = dist.log_prob(flat_act[mb])
                ratio = torch.exp(logp - flat_logp[mb])
                surr1 = ratio * flat_adv[mb]
                surr2 = torch.clamp(ratio, 1 - spec.clip, 1 + spec.clip) * flat_adv[mb]
                policy_loss = -torch.min(surr1, surr2).mean()
                value_loss = ((policy.value(flat_obs[mb]) - flat_ret[mb]) ** 2).mean()
                entropy = dist.entropy().mean()
                loss = (policy_loss + spec.value_coef * value_loss
                        - spec.entropy_coef * entropy)
                optim.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(policy.parameters(), spec.max_grad_norm)
                optim.step()

        if finished_returns:
            smoothed = float(np.mean(finished_returns[-50:]))
            curve.append({"update": update, "mean_return": smoothed,
                          "episodes": len(finished_returns)})
            if update % 5 == 0:
                log(f"  update {update:4d}  mean return {smoothed:9.2f}")
            scale = max(1.0, abs(best_smoothed))
            if update > updates // 4:
                if smoothed < best_smoothed - spec.collapse_margin * scale:
                    raise DivergenceError(
                        f"reward collapse: {smoothed:.2f} after best {best_smoothed:.2f}")
            best_smoothed = max(best_smoothed, smoothed)
    return TrainResult(policy, curve)
