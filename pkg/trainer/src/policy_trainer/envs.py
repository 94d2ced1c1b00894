"""Vectorised training environments built from the shared constants manifest.

Dynamics are re-implemented here (the trainer talks to the verifier only
through files), but every constant comes from the same manifest the
verifier ships, so the two sides cannot drift. Each environment steps a
whole batch of parallel rollouts with numpy.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DEFAULT_MANIFEST = Path(__file__).resolve().parents[3] / "src" / "policert" / "data" / "env_constants.json"


def load_manifest(path=None) -> dict:
    return json.loads(Path(path or DEFAULT_MANIFEST).read_text())


class VecEnv:
    """Batch of independent rollouts advanced in lockstep."""

    name: str
    episode_len: int

    def __init__(self, constants: dict, batch: int, seed: int):
        self.constants = constants
        self.batch = batch
        self.rng = np.random.default_rng(seed)
        self.dim = len(constants["state"])
        self.action_count = len(constants["actions"])
        lo, hi = constants["initial_regions"][self.train_region()]
        self.init_lo = np.asarray(lo, dtype=float)
        self.init_hi = np.asarray(hi, dtype=float)
        self.states = np.zeros((batch, self.dim))
        self.steps = np.zeros(batch, dtype=int)
        self.reset_all()

    def train_region(self) -> str:
        return self.constants["default_region"]

    def reset_all(self):
        for i in range(self.batch):
            self.reset_one(i)

    def reset_one(self, i: int):
        self.states[i] = self.rng.uniform(self.init_lo, self.init_hi)
        self.steps[i] = 0

    def fail(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dynamics(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reward(self, states, actions, nxt, failed) -> np.ndarray:
        raise NotImplementedError

    def step(self, actions: np.ndarray):
        """Returns (next_states, rewards, done) and auto-resets done lanes."""
        nxt = self.dynamics(self.states, actions)
        failed = self.fail(nxt)
        rewards = self.reward(self.states, actions, nxt, failed)
        self.steps += 1
        done = failed | (self.steps >= self.episode_len)
        self.states = nxt
        for i in np.flatnonzero(done):
            self.reset_one(i)
        return nxt, rewards, done


class BouncingBallEnv(VecEnv):
    name = "bouncing_ball"
    episode_len = 200

    def train_region(self) -> str:
        return "large"

    def fail(self, states):
        c = self.constants
        return (states[:, 0] <= c["fail_p_max"]) & (np.abs(states[:, 1]) <= c["fail_v_abs_max"])

    def dynamics(self, states, actions):
        c = self.constants
        dt, g = c["dt"], c["gravity"]
        p, v = states[:, 0].copy(), states[:, 1].copy()
        z_lo, z_hi = c["hit_zone"]
        hit = (actions == 1) & (p >= z_lo) & (p <= z_hi)
        v = np.where(hit, v + c["hit_delta_v"], v)
        bounce = (p <= 0.0) & (v < 0.0)
        v_b = -c["restitution"] * v
        v_f = v - g * dt
        p_f = np.maximum(0.0, p + v_f * dt)
        return np.stack([np.where(bounce, p, p_f), np.where(bounce, v_b, v_f)], axis=1)

    def reward(self, states, actions, nxt, failed):
        r = np.ones(states.shape[0])
        r -= 0.05 * (actions == 1)        # hitting has a small cost
        r -= 100.0 * failed
        return r


class CruiseControlEnv(VecEnv):
    name = "cruise_control"
    episode_len = 100

    def fail(self, states):
        return states[:, 0] <= 0.0

    def dynamics(self, states, actions):
        c = self.constants
        dt, lead, mag = c["dt"], c["lead_speed"], c["accel_mag"]
        a = np.where(actions == 0, mag, -mag)
        x_rel = states[:, 0] + (lead - states[:, 1]) * dt - 0.5 * a * dt * dt
        v_ego = states[:, 1] + a * dt
        return np.stack([x_rel, v_ego], axis=1)

    def reward(self, states, actions, nxt, failed):
        # Keep a healthy but not runaway gap.
        r = 1.0 - 0.08 * np.abs(nxt[:, 0] - 6.0)
        r -= 100.0 * failed
        return r


class InvertedPendulumEnv(VecEnv):
    name = "inverted_pendulum"
    episode_len = 100

    def fail(self, states):
        c = self.constants
        return (np.abs(states[:, 0]) > c["fail_theta_abs"]) | (np.abs(states[:, 1]) > c["fail_omega_abs"])

    def dynamics(self, states, actions):
        c = self.constants
        dt = c["dt"]
        sin_gain = 3.0 * c["gravity"] / (2.0 * c["length"])
        torque_gain = 3.0 / (c["mass"] * c["length"] ** 2)
        u = np.asarray(c["torques"])[actions]
        omega = states[:, 1] + (sin_gain * np.sin(states[:, 0]) + torque_gain * u) * dt
        omega = np.clip(omega, -c["omega_max"], c["omega_max"])
        theta = states[:, 0] + omega * dt
        return np.stack([theta, omega], axis=1)

    def reward(self, states, actions, nxt, failed):
        u = np.asarray(self.constants["torques"])[actions]
        r = -(nxt[:, 0] ** 2 + 0.1 * nxt[:, 1] ** 2 + 0.001 * u ** 2)
        r -= 10.0 * failed
        return r


ENVS = {
    "bouncing_ball": BouncingBallEnv,
    "cruise_control": CruiseControlEnv,
    "inverted_pendulum": InvertedPendulumEnv,
}


def make_vec_env(name: str, batch: int, seed: int, manifest_path=None) -> VecEnv:
    manifest = load_manifest(manifest_path)
    return ENVS[name](manifest[name], batch, seed)
