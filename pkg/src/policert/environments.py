"""Benchmark environments: concrete steppers and abstract post operators.

Each environment provides a deterministic step (vectorised over state
batches), a sound successor operator over template polyhedra, and its fail
and initial regions. Dynamics constants come from the shared manifest in
``data/env_constants.json`` so the policy trainer and this verifier can
never drift apart; per-run overrides are applied on top and echoed into
reports.

Piecewise-affine dynamics are stored as guarded modes. The abstract post of
a piece returns one polyhedron per mode whose guard meets the piece; the
caller decides how the mode posts enter the abstraction. The pendulum's
sine nonlinearity is handled by subdividing the angle range and relaxing
sin to an interval per subrange.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .geometry import (
    EmptyInput,
    Halfspace,
    Polyhedron,
    Template,
    intersects_region,
)
from .linprog import LinearProgram, Status, solve_lp
from .tolerances import DEFAULT, Tolerances


def load_constants(name: str | None = None, overrides: dict | None = None) -> dict:
    """Manifest constants, optionally for one environment with overrides."""
    with resources.files("policert").joinpath("data/env_constants.json").open() as fh:
        manifest = json.load(fh)
    if name is None:
        return manifest
    if name not in manifest:
        raise KeyError(f"unknown environment {name!r}; have {sorted(manifest)}")
    consts = dict(manifest[name])
    for key, value in (overrides or {}).items():
        if key not in consts:
            raise KeyError(f"unknown constant {key!r} for {name}")
        consts[key] = value
    return consts


@dataclass(frozen=True)
class Mode:
    """Affine successor s' = matrix @ s + offset on guard rows (<=)."""

    guard: tuple[Halfspace, ...]
    matrix: np.ndarray
    offset: np.ndarray

    def applies(self, states: np.ndarray) -> np.ndarray:
        ok = np.ones(states.shape[0], dtype=bool)
        for h in self.guard:
            ok &= states @ h.normal <= h.offset + 1e-12
        return ok

    def apply(self, states: np.ndarray) -> np.ndarray:
        return states @ self.matrix.T + self.offset


class Environment:
    """Shared surface for all benchmark environments."""

    kind = "linear"

    def __init__(self, name: str, constants: dict):
        self.name = name
        self.constants = constants
        self.state_names = list(constants["state"])
        self.action_names = list(constants["actions"])
        self.dimension = len(self.state_names)
        self.action_count = len(self.action_names)
        self.declared_lo = np.asarray(constants["declared_lo"], dtype=float)
        self.declared_hi = np.asarray(constants["declared_hi"], dtype=float)
        self.fail_region: list[list[Halfspace]] = []

    # -- regions -----------------------------------------------------------

    def initial_box(self, region: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        key = region or self.constants["default_region"]
        try:
            lo, hi = self.constants["initial_regions"][key]
        except KeyError as exc:
            raise KeyError(f"unknown initial region {key!r} for {self.name}") from exc
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def label_fail(self, p: Polyhedron, tols: Tolerances = DEFAULT) -> bool:
        """fail label is existential: true iff p meets any fail disjunct."""
        return any(intersects_region(p, conj, tols) for conj in self.fail_region)

    def fail_mask(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        mask = np.zeros(states.shape[0], dtype=bool)
        for conj in self.fail_region:
            ok = np.ones(states.shape[0], dtype=bool)
            for h in conj:
                ok &= states @ h.normal <= h.offset
            mask |= ok
        return mask

    def is_fail_state(self, state) -> bool:
        return bool(self.fail_mask(np.asarray(state, dtype=float)[None, :])[0])

    # -- dynamics ------------------------------------------------------------

    def step_batch(self, states: np.ndarray, action: int) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        out = self._step_batch_raw(states, action)
        return np.clip(out, self.declared_lo, self.declared_hi)

    def concrete_step(self, state, action: int) -> np.ndarray:
        return self.step_batch(np.asarray(state, dtype=float)[None, :], action)[0]

    def _step_batch_raw(self, states: np.ndarray, action: int) -> np.ndarray:
        raise NotImplementedError

    def abstract_post(self, p: Polyhedron, action: int,
                      tols: Tolerances = DEFAULT) -> list[Polyhedron]:
        raise NotImplementedError


def _affine_image_bounds(template: Template, rows, A: np.ndarray, c: np.ndarray,
                         tols: Tolerances):
    """Support of {A s + c : rows(s)} per template direction, or None."""
    out = np.empty(len(template))
    lp_rows = [(h.normal, "<=", float(h.offset)) for h in rows]
    for j, d in enumerate(template.directions):
        res = solve_lp(LinearProgram(objective=A.T @ d, rows=lp_rows), tols)
        if res.status is Status.INFEASIBLE:
            return None
        if res.status is not Status.OPTIMAL:
            raise RuntimeError("unbounded affine image on a bounded piece")
        out[j] = res.optimum + float(d @ c)
    return out


class PiecewiseAffineEnv(Environment):
    kind = "piecewise-linear"

    def __init__(self, name: str, constants: dict):
        super().__init__(name, constants)
        # modes[action] lists guarded affine updates, first match wins.
        self.modes: list[list[Mode]] = []

    def _step_batch_raw(self, states: np.ndarray, action: int) -> np.ndarray:
        out = np.empty_like(states)
        assigned = np.zeros(states.shape[0], dtype=bool)
        for mode in self.modes[action]:
            mask = mode.applies(states) & ~assigned
            if mask.any():
                out[mask] = mode.apply(states[mask])
                assigned |= mask
        if not assigned.all():
            raise RuntimeError(f"{self.name}: state not covered by any mode")
        return out

    def abstract_post(self, p: Polyhedron, action: int,
                      tols: Tolerances = DEFAULT) -> list[Polyhedron]:
        if p.is_empty:
            raise EmptyInput("abstract post of an empty polyhedron")
        posts = []
        base_rows = p.with_rows()
        for mode in self.modes[action]:
            rows = base_rows + list(mode.guard)
            bounds = _affine_image_bounds(p.template, rows, mode.matrix, mode.offset, tols)
            if bounds is not None:
                posts.append(Polyhedron(p.template, bounds, _canonical=True, tols=tols))
        return posts


def _compose(pre: Mode, post_guard, post_A, post_c) -> Mode:
    """Mode applying `pre` then an affine update guarded in post-`pre` coords."""
    guard = list(pre.guard)
    for h in post_guard:
        guard.append(Halfspace(pre.matrix.T @ h.normal, h.offset - float(h.normal @ pre.offset)))
    return Mode(tuple(guard), post_A @ pre.matrix, post_A @ pre.offset + post_c)


class BouncingBall(PiecewiseAffineEnv):
    """Ball with height p and velocity v; the paddle can smash it downward.

    Step order: the paddle effect (v -= 4 when p in the hit zone), then
    either a ground bounce (p == 0 and v < 0: v <- -restitution * v, no fall
    this step) or a semi-implicit Euler fall with the height clamped at the
    ground. The episode fails once the ball sits near the ground with too
    little speed for the paddle to reach it.
    """

    def __init__(self, constants: dict):
        super().__init__("bouncing_ball", constants)
        dt = constants["dt"]
        g = constants["gravity"]
        rest = constants["restitution"]
        z_lo, z_hi = constants["hit_zone"]
        dv = constants["hit_delta_v"]

        self.fail_region = [[
            Halfspace(np.array([1.0, 0.0]), float(constants["fail_p_max"])),
            Halfspace(np.array([0.0, 1.0]), float(constants["fail_v_abs_max"])),
            Halfspace(np.array([0.0, -1.0]), float(constants["fail_v_abs_max"])),
        ]]

        # Landing sub-modes in (p, v) coordinates, applied after any paddle
        # shift. Bounce has priority and consumes the step.
        bounce = ([Halfspace(np.array([1.0, 0.0]), 0.0),      # p <= 0
                   Halfspace(np.array([0.0, 1.0]), 0.0)],     # v <= 0
                  np.array([[1.0, 0.0], [0.0, -rest]]), np.zeros(2))
        air = ([Halfspace(np.array([-1.0, -dt]), -(g * dt * dt))],   # p + v dt >= g dt^2
               np.array([[1.0, dt], [0.0, 1.0]]), np.array([-g * dt * dt, -g * dt]))
        land = ([Halfspace(np.array([1.0, dt]), g * dt * dt)],        # p + v dt <= g dt^2
                np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([0.0, -g * dt]))
        landing = [bounce, air, land]

        identity = Mode((), np.eye(2), np.zeros(2))
        noop_modes = [_compose(identity, *m) for m in landing]

        hit_in = Mode((Halfspace(np.array([-1.0, 0.0]), -z_lo),
                       Halfspace(np.array([1.0, 0.0]), z_hi)),
                      np.eye(2), np.array([0.0, dv]))
        hit_low = Mode((Halfspace(np.array([1.0, 0.0]), z_lo),), np.eye(2), np.zeros(2))
        hit_high = Mode((Halfspace(np.array([-1.0, 0.0]), -z_hi),), np.eye(2), np.zeros(2))
        hit_modes = []
        for zone in (hit_in, hit_low, hit_high):
            hit_modes.extend(_compose(zone, *m) for m in landing)

        self.modes = [noop_modes, hit_modes]


class CruiseControl(PiecewiseAffineEnv):
    """Relative-coordinate adaptive cruise control.

    State is (x_rel, v_ego) with the lead car at constant speed; the agent
    accelerates or decelerates at a fixed magnitude. Failing means the ego
    car reaches the lead one (x_rel < 0).
    """

    kind = "linear"

    def __init__(self, constants: dict):
        super().__init__("cruise_control", constants)
        dt = constants["dt"]
        lead = constants["lead_speed"]
        mag = constants["accel_mag"]
        self.fail_region = [[Halfspace(np.array([1.0, 0.0]), 0.0)]]  # x_rel <= 0
        self.modes = []
        for name in self.action_names:
            a = mag if name == "accelerate" else -mag
            A = np.array([[1.0, -dt], [0.0, 1.0]])
            c = np.array([lead * dt - 0.5 * a * dt * dt, a * dt])
            self.modes.append([Mode((), A, c)])


def _interval_sin(lo: float, hi: float) -> tuple[float, float]:
    """Tight enclosure of sin over [lo, hi]."""
    if hi - lo >= 2.0 * np.pi:
        return -1.0, 1.0
    vals = [np.sin(lo), np.sin(hi)]
    # Interior extrema at odd multiples of pi/2.
    k = np.ceil((lo - np.pi / 2.0) / np.pi)
    while True:
        crit = np.pi / 2.0 + k * np.pi
        if crit > hi:
            break
        vals.append(1.0 if k % 2 == 0 else -1.0)
        k += 1
    return float(min(vals)), float(max(vals))


class InvertedPendulum(Environment):
    """Discrete-action pendulum swing-up kept near the upright position."""

    kind = "nonlinear"

    def __init__(self, constants: dict):
        super().__init__("inverted_pendulum", constants)
        self.dt = constants["dt"]
        g, m, length = constants["gravity"], constants["mass"], constants["length"]
        self.sin_gain = 3.0 * g / (2.0 * length)
        self.torque_gain = 3.0 / (m * length * length)
        self.torques = list(constants["torques"])
        self.omega_max = constants["omega_max"]
        th = float(constants["fail_theta_abs"])
        om = float(constants["fail_omega_abs"])
        self.fail_region = [
            [Halfspace(np.array([-1.0, 0.0]), -th)],  # theta >= th
            [Halfspace(np.array([1.0, 0.0]), -th)],   # theta <= -th
            [Halfspace(np.array([0.0, -1.0]), -om)],
            [Halfspace(np.array([0.0, 1.0]), -om)],
        ]

    def _step_batch_raw(self, states: np.ndarray, action: int) -> np.ndarray:
        theta, omega = states[:, 0], states[:, 1]
        u = self.torques[action]
        omega_new = omega + (self.sin_gain * np.sin(theta) + self.torque_gain * u) * self.dt
        omega_new = np.clip(omega_new, -self.omega_max, self.omega_max)
        theta_new = theta + omega_new * self.dt
        return np.stack([theta_new, omega_new], axis=1)

    def abstract_post(self, p: Polyhedron, action: int,
                      tols: Tolerances = DEFAULT) -> list[Polyhedron]:
        """Single enclosing polyhedron via angle subdivision.

        sin(theta) is relaxed to an interval variable per angle subrange;
        the velocity clamp contributes three further linear modes.
        """
        if p.is_empty:
            raise EmptyInput("abstract post of an empty polyhedron")
        box_lo, box_hi = p.box()
        t_lo, t_hi = float(box_lo[0]), float(box_hi[0])
        width = float(self.constants["sin_subdiv_width"])
        pieces = max(1, int(np.ceil((t_hi - t_lo) / width))) if t_hi > t_lo else 1
        edges = np.linspace(t_lo, t_hi, pieces + 1)
        u = self.torques[action]
        dt = self.dt
        base_rows = [(np.concatenate([h.normal, [0.0]]), "<=", float(h.offset))
                     for h in p.with_rows()]
        k_u = self.torque_gain * u * dt

        # omega_pre = omega + sin_gain*dt*sigma + k_u, over vars (theta, omega, sigma)
        pre_row = np.array([0.0, 1.0, self.sin_gain * dt])
        clamp_modes = (
            # (guard rows, omega' as (coeffs, const))
            ([(pre_row, "<=", self.omega_max - k_u), (-pre_row, "<=", self.omega_max + k_u)],
             (pre_row, k_u)),
            ([(-pre_row, "<=", -(self.omega_max - k_u))],
             (np.zeros(3), self.omega_max)),
            ([(pre_row, "<=", -self.omega_max - k_u)],
             (np.zeros(3), -self.omega_max)),
        )

        best = np.full(len(p.template), -np.inf)
        feasible = False
        for i in range(pieces):
            lo_e, hi_e = float(edges[i]), float(edges[i + 1])
            s_lo, s_hi = _interval_sin(lo_e, hi_e)
            rows_piece = base_rows + [
                (np.array([1.0, 0.0, 0.0]), "<=", hi_e),
                (np.array([-1.0, 0.0, 0.0]), "<=", -lo_e),
                (np.array([0.0, 0.0, 1.0]), "<=", s_hi),
                (np.array([0.0, 0.0, -1.0]), "<=", -s_lo),
            ]
            for guard, (w_coef, w_const) in clamp_modes:
                rows = rows_piece + list(guard)
                # theta' = theta + omega'*dt
                th_coef = np.array([1.0, 0.0, 0.0]) + dt * w_coef
                th_const = dt * w_const
                ok = True
                cand = np.empty(len(p.template))
                for j, d in enumerate(p.template.directions):
                    obj = d[0] * th_coef + d[1] * w_coef
                    const = d[0] * th_const + d[1] * w_const
                    res = solve_lp(LinearProgram(objective=obj, rows=rows), tols)
                    if res.status is Status.INFEASIBLE:
                        ok = False
                        break
                    if res.status is not Status.OPTIMAL:
                        raise RuntimeError("unbounded pendulum post")
                    cand[j] = res.optimum + const
                if ok:
                    feasible = True
                    best = np.maximum(best, cand)
        if not feasible:
            raise RuntimeError("pendulum post found no feasible mode")
        return [Polyhedron(p.template, best, _canonical=True, tols=tols)]


_FACTORIES = {
    "bouncing_ball": BouncingBall,
    "cruise_control": CruiseControl,
    "inverted_pendulum": InvertedPendulum,
}


def make_environment(name: str, overrides: dict | None = None) -> Environment:
    constants = load_constants(name, overrides)
    return _FACTORIES[name](constants)


@dataclass
class Trace:
    """Concrete execution fragment: (state, action, next state) per step."""

    steps: list[tuple[np.ndarray, int, np.ndarray]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def check_chained(self) -> bool:
        return all(np.array_equal(self.steps[i][2], self.steps[i + 1][0])
                   for i in range(len(self.steps) - 1))

    def dump_lines(self) -> list[str]:
        out = []
        for s, a, s2 in self.steps:
            coords = " ".join(repr(float(x)) for x in s)
            coords2 = " ".join(repr(float(x)) for x in s2)
            out.append(f"{coords} {a} {coords2}")
        return out
