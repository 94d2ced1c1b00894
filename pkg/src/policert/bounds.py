"""Certified action-probability intervals for a policy over a polyhedron.

Logit extrema are computed exactly with branch-and-bound over the binary
ReLU indicators of a big-M encoding; LP relaxations are solved per node.
Softmax bounds then come from the monotone worst-case logit assignment,
which is sound for any concrete logit vector inside the certified boxes.

An interval pre-pass over the polyhedron's bounding box fixes provably
stable ReLUs (those never get indicators) and sizes the per-layer big-M
constants, so after refinement most pieces need few or no branches.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .geometry import EmptyInput, Polyhedron
from .linprog import LinearProgram, Status, solve_lp
from .network import Network, forward_logits, softmax
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True)
class ProbInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"inverted interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class LogitBounds:
    lower: np.ndarray
    upper: np.ndarray
    certified: bool
    big_m_enlarged: bool = False


@dataclass
class PolicyAbstraction:
    intervals: list[ProbInterval]
    spread: float
    certified: bool

    @property
    def lowers(self) -> np.ndarray:
        return np.array([iv.lower for iv in self.intervals])

    @property
    def uppers(self) -> np.ndarray:
        return np.array([iv.upper for iv in self.intervals])


def interval_prepass(net: Network, lo: np.ndarray, hi: np.ndarray):
    """Box bounds on every hidden pre-activation, layer by layer."""
    pre_bounds = []
    cur_lo, cur_hi = np.asarray(lo, float), np.asarray(hi, float)
    for layer in net.layers[:-1]:
        W, b = layer.weights, layer.bias
        Wp, Wm = np.maximum(W, 0.0), np.minimum(W, 0.0)
        pre_lo = Wp @ cur_lo + Wm @ cur_hi + b
        pre_hi = Wp @ cur_hi + Wm @ cur_lo + b
        pre_bounds.append((pre_lo, pre_hi))
        cur_lo, cur_hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
    return pre_bounds


class _MilpModel:
    """Reduced big-M LP over (input vars, unstable posts, indicators).

    Stable neurons are substituted symbolically, so LP size scales with the
    number of unstable ReLUs, not network width.
    """

    def __init__(self, net: Network, p: Polyhedron, big_m: float | None,
                 tols: Tolerances):
        self.tols = tols
        self.net = net
        n = net.input_dim
        lo, hi = p.box()
        pre_bounds = interval_prepass(net, lo, hi)

        self.unstable: list[tuple[int, int]] = []
        for li, (pl, ph) in enumerate(pre_bounds):
            for ni in range(pl.shape[0]):
                if pl[ni] < -tols.feasibility and ph[ni] > tols.feasibility:
                    self.unstable.append((li, ni))
        U = len(self.unstable)
        self.num_unstable = U
        nv = n + 2 * U  # x | y (unstable posts) | s (indicators)
        self.nv = nv
        y_col = {un: n + i for i, un in enumerate(self.unstable)}
        self.s_col = {un: n + U + i for i, un in enumerate(self.unstable)}

        self.big_m_enlarged = False
        layer_m = []
        for li, (pl, ph) in enumerate(pre_bounds):
            idx = [ni for (lj, ni) in self.unstable if lj == li]
            if not idx:
                layer_m.append(0.0)
                continue
            need = max(float(np.max(ph[idx])), float(np.max(-pl[idx])), 0.0)
            m_val = tols.big_m_safety * need
            if big_m is not None:
                if big_m < need:
                    self.big_m_enlarged = True
                else:
                    m_val = float(big_m)
            layer_m.append(m_val)

        rows: list[tuple[np.ndarray, str, float]] = []
        for d, bd in zip(p.template.directions, p.bounds):
            row = np.zeros(nv)
            row[:n] = d
            rows.append((row, "<=", float(bd)))

        var_lo = [None] * nv
        var_hi = [None] * nv
        # Affine expression of the running layer's post-activations in terms
        # of LP variables: post = C @ v + c.
        C = np.zeros((n, nv))
        C[:, :n] = np.eye(n)
        c = np.zeros(n)
        for li, layer in enumerate(net.layers[:-1]):
            W, b = layer.weights, layer.bias
            preC = W @ C
            prec = W @ c + b
            pl, ph = pre_bounds[li]
            h = W.shape[0]
            newC = np.zeros((h, nv))
            newc = np.zeros(h)
            for ni in range(h):
                if (li, ni) not in self.s_col:
                    if ph[ni] <= tols.feasibility:   # always off
                        continue
                    newC[ni] = preC[ni]              # always on
                    newc[ni] = prec[ni]
                    continue
                yj = y_col[(li, ni)]
                sj = self.s_col[(li, ni)]
                M = layer_m[li]
                e_row, e_const = preC[ni], prec[ni]
                # y - e >= 0
                r = -e_row.copy(); r[yj] += 1.0
                rows.append((r, ">=", float(e_const)))
                # y - e <= M s
                r = -e_row.copy(); r[yj] += 1.0; r[sj] -= M
                rows.append((r, "<=", float(e_const)))
                # y <= M (1 - s)
                r = np.zeros(nv); r[yj] = 1.0; r[sj] = M
                rows.append((r, "<=", M))
                # Interval rows on the pre-activation tighten the relaxation.
                rows.append((e_row.copy(), ">=", float(pl[ni] - e_const)))
                rows.append((e_row.copy(), "<=", float(ph[ni] - e_const)))
                # Convex upper envelope y <= slope (e - l).
                slope = ph[ni] / (ph[ni] - pl[ni])
                r = -slope * e_row; r[yj] += 1.0
                rows.append((r, "<=", float(slope * (e_const - pl[ni]))))
                var_lo[yj], var_hi[yj] = 0.0, float(max(ph[ni], 0.0))
                var_lo[sj], var_hi[sj] = 0.0, 1.0
                newC[ni, yj] = 1.0
            C, c = newC, newc
        # The final vector is affine too: logits = outC @ v + outc.
        W, b = net.layers[-1].weights, net.layers[-1].bias
        self.out_coef = W @ C
        self.out_const = W @ c + b
        self.rows = rows
        self.base_var_lo = var_lo
        self.base_var_hi = var_hi
        self.n = n

    def solve_node(self, obj: np.ndarray, fixed: dict[int, int]):
        var_lo = list(self.base_var_lo)
        var_hi = list(self.base_var_hi)
        for s_idx, val in fixed.items():
            var_lo[s_idx] = float(val)
            var_hi[s_idx] = float(val)
        bounds = list(zip(var_lo, var_hi))
        lp = LinearProgram(objective=obj, rows=self.rows, bounds=bounds, maximize=True)
        return solve_lp(lp, self.tols)


def _bnb_maximize(model: _MilpModel, coef: np.ndarray, const: float,
                  action: int, sign: float, node_budget: int,
                  tols: Tolerances):
    """Certified max of sign*logit_action; returns (upper, certified)."""
    obj = coef.copy()
    incumbent = -np.inf
    closed_ub = -np.inf
    counter = 0
    heap: list[tuple[float, int, dict]] = [(-np.inf, counter, {})]
    nodes = 0
    gap = tols.bnb_gap

    while heap:
        neg_parent_bound, _, fixed = heapq.heappop(heap)
        parent_bound = -neg_parent_bound
        if parent_bound <= incumbent + gap and np.isfinite(parent_bound):
            closed_ub = max(closed_ub, parent_bound)
            continue
        if nodes >= node_budget:
            # Sound but unclosed: open nodes inherit their parents' bounds.
            open_ub = parent_bound
            while heap:
                b, _, _ = heapq.heappop(heap)
                open_ub = max(open_ub, -b)
            upper = max(incumbent, closed_ub, open_ub) + const
            return upper, False
        nodes += 1
        res = model.solve_node(obj, fixed)
        if res.status is Status.INFEASIBLE:
            continue
        if res.status is not Status.OPTIMAL:
            raise RuntimeError("relaxation unbounded: template must bound inputs")
        node_ub = res.optimum
        x = res.witness[: model.n]
        feas_val = sign * forward_logits(model.net, x)[action] - const
        incumbent = max(incumbent, feas_val)
        if node_ub <= incumbent + gap:
            closed_ub = max(closed_ub, node_ub)
            continue
        s_vals = {s: res.witness[s] for s in model.s_col.values() if s not in fixed}
        fractional = {s: v for s, v in s_vals.items() if min(v, 1.0 - v) > 1e-7}
        if not fractional:
            # Integral indicators: the relaxation optimum is MILP-feasible.
            incumbent = max(incumbent, node_ub)
            closed_ub = max(closed_ub, node_ub)
            continue
        branch = min(fractional, key=lambda s: (abs(fractional[s] - 0.5), s))
        for val in (0, 1):
            child = dict(fixed)
            child[branch] = val
            counter += 1
            heapq.heappush(heap, (-node_ub, counter, child))

    upper = max(incumbent, closed_ub) + const
    return upper, True


def logit_bounds(net: Network, p: Polyhedron, big_m: float | None = None,
                 node_budget: int = 10000, tols: Tolerances = DEFAULT) -> LogitBounds:
    """Certified per-action logit intervals over p.

    Branch-and-bound on ReLU indicators; most-fractional branching with
    (layer, neuron) tie order; nodes are pruned once they cannot improve the
    incumbent by more than the certification gap. On node-budget exhaustion
    the loosest open relaxation bound is returned, flagged uncertified (it
    still over-approximates).
    """
    if p.is_empty:
        raise EmptyInput("logit bounds of an empty polyhedron")
    model = _MilpModel(net, p, big_m, tols)
    k = net.action_count
    lower = np.empty(k)
    upper = np.empty(k)
    certified = True
    for j in range(k):
        coef = model.out_coef[j]
        const = float(model.out_const[j])
        ub, ok_u = _bnb_maximize(model, coef, const, j, +1.0, node_budget, tols)
        neg_lb, ok_l = _bnb_maximize(model, -coef, -const, j, -1.0, node_budget, tols)
        lower[j] = -neg_lb
        upper[j] = ub
        certified = certified and ok_u and ok_l
        if upper[j] < lower[j]:  # certification gap noise on point regions
            mid = 0.5 * (upper[j] + lower[j])
            lower[j] = upper[j] = mid
    return LogitBounds(lower, upper, certified, model.big_m_enlarged)


def softmax_intervals(lb: LogitBounds) -> list[ProbInterval]:
    """Sound per-action probability intervals from logit boxes.

    The upper bound for action j evaluates softmax at (x_ub_j, x_lb_i for
    i != j); the lower bound at (x_lb_j, x_ub_i for i != j). These are the
    assignments that extremise softmax under the order-preserving
    exponential, so any concrete logit vector inside the boxes yields a
    probability inside the interval.
    """
    k = lb.lower.shape[0]
    out = []
    for j in range(k):
        v = lb.lower.copy()
        v[j] = lb.upper[j]
        hi = float(softmax(v)[j])
        w = lb.upper.copy()
        w[j] = lb.lower[j]
        lo = float(softmax(w)[j])
        if lo > hi:  # touching bounds can invert by a rounding ulp
            lo, hi = hi, lo
        out.append(ProbInterval(lo, hi))
    return out


def policy_abstraction(net: Network, p: Polyhedron, big_m: float | None = None,
                       node_budget: int = 10000,
                       tols: Tolerances = DEFAULT) -> PolicyAbstraction:
    """Certified action-probability intervals plus their maximum spread."""
    lb = logit_bounds(net, p, big_m, node_budget, tols)
    intervals = softmax_intervals(lb)
    spread = max(iv.width for iv in intervals)
    return PolicyAbstraction(intervals, spread, lb.certified)
