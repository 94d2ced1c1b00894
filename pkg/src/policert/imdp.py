"""Interval-MDP abstraction of a policy's execution, and its solution.

The abstraction is a horizon-bounded unfolding: every explored abstract
state is partitioned by the refinement module, each partition piece becomes
one nondeterministic choice, and each (piece, action, dynamics-mode) yields
a successor polyhedron that is matched against previously visited states
(exact bounds, or full containment when the containment optimisation is
on). Transition intervals sum the certified per-action probability bounds
over the actions reaching the same successor.

Robust value iteration then computes, by backward induction, the maximum
probability of reaching a fail-labelled state within the horizon, with the
interval nondeterminism resolved adversarially (max-max) or favourably
(max-min) by a greedy order-based inner solution.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import PolicyAbstraction
from .config import RunConfig
from .environments import Environment
from .geometry import Polyhedron, Template, custom, octagon, rectangle
from .network import Network
from .refinement import Leaf, refine_to_threshold
from .rng import derive_seed
from .tolerances import DEFAULT, Tolerances


class InfeasibleIntervals(Exception):
    """Interval rows cannot form a distribution; abstraction bug."""


@dataclass
class Choice:
    piece: Polyhedron
    intervals: PolicyAbstraction
    transitions: list[tuple[int, float, float]]  # (target id, lower, upper)
    saturated: bool = False


@dataclass
class AbstractState:
    id: int
    polyhedron: Polyhedron
    fail: bool
    depth: int
    choices: list[Choice] | None = None   # None: not expanded (absorbing)
    pending_leaves: list[Leaf] | None = None


@dataclass
class Imdp:
    states: list[AbstractState]
    initial_ids: list[int]
    horizon: int
    flags: set[str] = field(default_factory=set)
    stats: dict = field(default_factory=dict)

    def fail_ids(self) -> list[int]:
        return [s.id for s in self.states if s.fail]

    def covering_initial_state(self, point) -> int | None:
        for sid in self.initial_ids:
            if self.states[sid].polyhedron.member(point):
                return sid
        return None

    def dump_lines(self) -> list[str]:
        """Line-oriented text dump: headers plus one line per transition."""
        lines = [
            "initial " + " ".join(str(i) for i in self.initial_ids),
            "fail " + " ".join(str(i) for i in self.fail_ids()),
        ]
        for st in self.states:
            for j, choice in enumerate(st.choices or []):
                for target, lo, hi in choice.transitions:
                    lines.append(f"{st.id} {j} {target} {lo:.17g} {hi:.17g}")
        return lines


def make_template(kind: str, dimension: int, directions=None) -> Template:
    if kind == "rect":
        return rectangle(dimension)
    if kind == "oct":
        return octagon(dimension)
    if kind == "custom":
        return custom(directions)
    raise ValueError(f"unknown template kind {kind!r}")


class _Builder:
    def __init__(self, env: Environment, net: Network, config: RunConfig,
                 tols: Tolerances):
        self.env = env
        self.net = net
        self.config = config
        self.tols = tols
        self.template = make_template(config.template_kind, env.dimension,
                                      config.template_directions)
        self.states: list[AbstractState] = []
        self.key_index: dict = {}
        self.bounds_rows: list[np.ndarray] = []
        self.flags: set[str] = set()
        self.containment_merges = 0
        self.pieces = 0
        self.post_cache: dict = {}

    # -- state store ---------------------------------------------------------

    def new_state(self, poly: Polyhedron, depth: int) -> AbstractState:
        st = AbstractState(len(self.states), poly, self.env.label_fail(poly, self.tols), depth)
        self.states.append(st)
        self.key_index[poly.dedup_key()] = st.id
        self.bounds_rows.append(poly.bounds)
        return st

    def _eligible_target(self, st: AbstractState, lands_at_horizon: bool) -> bool:
        # Unexpanded non-fail states are only valid at the horizon, where
        # their value is determined by the fail label alone.
        return st.fail or st.depth < self.config.horizon or lands_at_horizon

    def resolve_target(self, poly: Polyhedron, depth: int) -> int:
        lands_at_horizon = depth >= self.config.horizon
        key = poly.dedup_key()
        hit = self.key_index.get(key)
        if hit is not None and self._eligible_target(self.states[hit], lands_at_horizon):
            return hit
        if self.config.containment and self.states:
            matrix = np.stack(self.bounds_rows)
            covered = np.all(matrix >= poly.bounds - self.tols.containment, axis=1)
            for sid in np.flatnonzero(covered):
                st = self.states[int(sid)]
                if self._eligible_target(st, lands_at_horizon):
                    if st.id != hit:
                        self.containment_merges += 1
                    return st.id
        return self.new_state(poly, depth).id


    # -- expansion --------------------------------------------------------------

    def partition(self, st: AbstractState) -> list[Leaf]:
        if st.pending_leaves is not None:
            leaves = st.pending_leaves
            st.pending_leaves = None
            return leaves
        cfg = self.config
        return refine_to_threshold(
            self.net, st.polyhedron, cfg.phi, cfg.leaf_budget,
            samples=cfg.samples, min_frac=cfg.min_frac, bins=cfg.bins,
            seed=derive_seed(cfg.seed, st.id + 1),
            node_budget=cfg.node_budget, tols=self.tols)

    def successor_polys(self, piece: Polyhedron, action: int) -> list[Polyhedron]:
        key = (piece.dedup_key(), action)
        if key not in self.post_cache:
            self.post_cache[key] = self.env.abstract_post(piece, action, self.tols)
        return self.post_cache[key]

    def expand(self, st: AbstractState, leaves: list[Leaf]) -> list[int]:
        """Build st's choices from its partition; returns new state ids."""
        before = len(self.states)
        self.pieces += len(leaves)
        clamp = self.tols.interval_lower_clamp
        choices = []
        for leaf in leaves:
            if leaf.saturated:
                self.flags.add("saturated")
            if not leaf.abstraction.certified:
                self.flags.add("uncertified")
            targets_per_action = []
            for action in range(self.env.action_count):
                posts = self.successor_polys(leaf.polyhedron, action)
                ids = sorted({self.resolve_target(q, st.depth + 1) for q in posts})
                targets_per_action.append(ids)
            lowers: dict[int, float] = {}
            uppers: dict[int, float] = {}
            for action, ids in enumerate(targets_per_action):
                iv = leaf.abstraction.intervals[action]
                for t in ids:
                    uppers[t] = uppers.get(t, 0.0) + iv.upper
                    # A concrete state routes all of the action's mass into
                    # exactly one mode, so multi-mode lowers collapse to ~0.
                    contrib = iv.lower if len(ids) == 1 else 0.0
                    lowers[t] = lowers.get(t, 0.0) + contrib
            transitions = [(t, max(lowers[t], clamp), min(uppers[t], 1.0))
                           for t in sorted(uppers)]
            low_sum = sum(lo for _, lo, _ in transitions)
            up_sum = sum(hi for _, _, hi in transitions)
            if low_sum > 1.0 + 1e-6 or up_sum < 1.0 - 1e-6:
                raise InfeasibleIntervals(
                    f"choice interval sums [{low_sum}, {up_sum}] exclude 1")
            choices.append(Choice(leaf.polyhedron, leaf.abstraction, transitions,
                                  leaf.saturated))
        st.choices = choices
        return list(range(before, len(self.states)))

    def build(self) -> Imdp:
        cfg = self.config
        lo, hi = self.env.initial_box(cfg.initial_region)
        root = Polyhedron.from_box(self.template, lo, hi, self.tols)
        root_leaves = refine_to_threshold(
            self.net, root, cfg.phi, cfg.leaf_budget,
            samples=cfg.samples, min_frac=cfg.min_frac, bins=cfg.bins,
            seed=derive_seed(cfg.seed, 0), node_budget=cfg.node_budget,
            tols=self.tols)
        self.pieces += len(root_leaves)
        initial_ids = []
        for leaf in root_leaves:
            if leaf.saturated:
                self.flags.add("saturated")
            if not leaf.abstraction.certified:
                self.flags.add("uncertified")
            key = leaf.polyhedron.dedup_key()
            if key in self.key_index:
                sid = self.key_index[key]
            else:
                st = self.new_state(leaf.polyhedron, 0)
                st.pending_leaves = [leaf]
                sid = st.id
            if sid not in initial_ids:
                initial_ids.append(sid)

        frontier = [sid for sid in initial_ids if not self.states[sid].fail]
        exhausted = False
        for depth in range(cfg.horizon):
            if not frontier:
                break
            # Partitions are pure given (net, polyhedron, seed); compute the
            # whole wave up front, in parallel when allowed. Assembly below
            # stays sequential so state ids and merges are deterministic.
            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    futures = [(sid, pool.submit(self.partition, self.states[sid]))
                               for sid in frontier]
                    parts = {sid: fut.result() for sid, fut in futures}
            else:
                parts = {sid: self.partition(self.states[sid]) for sid in frontier}
            created: list[int] = []
            for sid in frontier:
                if len(self.states) >= cfg.state_budget:
                    exhausted = True
                    break
                created.extend(self.expand(self.states[sid], parts[sid]))
            if exhausted:
                # Conservatively treat everything not yet expanded as fail.
                survivors = [s for s in frontier if self.states[s].choices is None]
                for sid in survivors + created:
                    st = self.states[sid]
                    if st.choices is None and not st.fail:
                        st.fail = True
                self.flags.add("budget_exhausted")
                break
            frontier = [sid for sid in created
                        if not self.states[sid].fail and depth + 1 < cfg.horizon]

        stats = {
            "polyhedra": len(self.states) + self.pieces,
            "containment_merges": self.containment_merges,
            "imdp_states": len(self.states),
        }
        return Imdp(self.states, initial_ids, cfg.horizon, self.flags, stats)


def build_abstraction(env: Environment, net: Network, config: RunConfig,
                      tols: Tolerances = DEFAULT) -> Imdp:
    """Breadth-first k-step unfolding from the refined initial region."""
    return _Builder(env, net, config, tols).build()


# -- robust value iteration ------------------------------------------------------


def robust_step(values: np.ndarray, transitions, mode: str,
                tols: Tolerances = DEFAULT) -> float:
    """Inner optimum of sum p(t) values(t) over the interval simplex.

    Sorts targets by value (descending for maxmax, ascending for maxmin) and
    greedily raises probabilities from their lower to their upper bounds in
    that order; this order-based transportation solution is exact.
    """
    targets = np.array([t for t, _, _ in transitions], dtype=int)
    lowers = np.array([lo for _, lo, _ in transitions])
    uppers = np.array([hi for _, _, hi in transitions])
    v = np.asarray(values)[targets]
    slack = 1.0 - lowers.sum()
    if slack < -1e-9:
        raise InfeasibleIntervals("lower bounds already exceed 1")
    if uppers.sum() < 1.0 - 1e-9:
        raise InfeasibleIntervals("upper bounds cannot reach 1")
    order = np.argsort(-v if mode == "maxmax" else v, kind="stable")
    p = lowers.copy()
    for i in order:
        if slack <= 0.0:
            break
        add = min(uppers[i] - lowers[i], slack)
        p[i] += add
        slack -= add
    return float(p @ v)


def conservative_step(values: np.ndarray, transitions) -> float:
    """Non-normalised bound: all transitions at their upper ends, capped."""
    total = sum(hi * float(values[t]) for t, _, hi in transitions)
    return min(1.0, total)


def robust_value_iteration(m: Imdp, k: int, mode: str = "maxmax",
                           conservative: bool = False,
                           return_history: bool = False):
    """k backward-induction sweeps; fail states absorb with value 1.

    Returns per-state values after k sweeps (and each sweep's values when
    return_history is set). States without choices at a nonzero remaining
    horizon keep their fail-label value, which is only reachable for
    horizon-frontier states by construction of the builder.
    """
    if mode not in ("maxmax", "maxmin"):
        raise ValueError("mode must be maxmax or maxmin")
    fail = np.array([s.fail for s in m.states])
    values = np.where(fail, 1.0, 0.0)
    history = [values.copy()]
    for _ in range(k):
        new = np.where(fail, 1.0, 0.0)
        for st in m.states:
            if st.fail or not st.choices:
                continue
            best = 0.0
            for choice in st.choices:
                if conservative:
                    val = conservative_step(values, choice.transitions)
                else:
                    val = robust_step(values, choice.transitions, mode)
                best = max(best, val)
            new[st.id] = best
        values = new
        history.append(values.copy())
    return (values, history) if return_history else values


# -- verification driver -----------------------------------------------------------


@dataclass
class VerifyReport:
    config: dict
    bounds: list[dict]
    global_maxmax: float
    global_maxmin: float
    stats: dict
    flags: list[str]
    passed: bool | None

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "bounds": self.bounds,
            "global_maxmax": self.global_maxmax,
            "global_maxmin": self.global_maxmin,
            "stats": self.stats,
            "flags": self.flags,
            "passed": self.passed,
        }


def verify(env: Environment, net: Network, config: RunConfig,
           tols: Tolerances = DEFAULT) -> tuple[VerifyReport, Imdp]:
    """Build the abstraction and bound the failure probability both ways.

    maxmax is the certified upper bound used against p_safe; maxmin is
    reported as refinement guidance only (it is not a lower bound on the
    true failure probability).
    """
    start = time.perf_counter()
    imdp = build_abstraction(env, net, config, tols)
    maxmax = robust_value_iteration(imdp, config.horizon, "maxmax",
                                    conservative=config.conservative)
    maxmin = robust_value_iteration(imdp, config.horizon, "maxmin")
    bounds = [{
        "initial_state_id": sid,
        "maxmax": float(maxmax[sid]),
        "maxmin": float(maxmin[sid]),
    } for sid in imdp.initial_ids]
    global_maxmax = max((b["maxmax"] for b in bounds), default=0.0)
    global_maxmin = max((b["maxmin"] for b in bounds), default=0.0)
    passed = None if config.p_safe is None else bool(global_maxmax <= config.p_safe)
    stats = dict(imdp.stats)
    stats["wall_clock_s"] = time.perf_counter() - start
    report = VerifyReport(
        config=config.resolved_dict(),
        bounds=bounds,
        global_maxmax=global_maxmax,
        global_maxmin=global_maxmin,
        stats=stats,
        flags=sorted(imdp.flags),
        passed=passed,
    )
    return report, imdp
