"""Spread-driven partitioning of abstract states.

A piece is split until the certified per-action probability spread falls
below the threshold phi. Sampled probabilities (cheap) act as an
underestimate of the true spread: pieces whose sampled spread already
exceeds phi are split without certifying; only borderline pieces pay for
the exact branch-and-bound check. Split positions minimise a weighted
cross-entropy along candidate template directions: each side of a cut is
scored by how well its mean predicts the sampled one-vs-all probabilities,
with inverse-bin-count sample weighting so skewed probability clouds
cannot hide a good boundary.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .bounds import PolicyAbstraction, policy_abstraction
from .geometry import (
    DegenerateGeometry,
    DegenerateSplit,
    Polyhedron,
    bisect,
    direction_extent,
    hit_and_run_sample,
)
from .network import Network, action_distribution
from .rng import derive_seed
from .tolerances import DEFAULT, Tolerances


class NoValidCut(Exception):
    """Every admissible cut is empty on every direction."""


@dataclass
class SampleSet:
    points: np.ndarray  # (m, n)
    probs: np.ndarray   # (m, k), rows are distributions

    @property
    def sampled_spread(self) -> float:
        return float(np.max(self.probs.max(axis=0) - self.probs.min(axis=0)))

    def spread_action(self) -> int:
        spreads = self.probs.max(axis=0) - self.probs.min(axis=0)
        return int(np.argmax(spreads))


@dataclass
class SplitChoice:
    direction: int
    boundary: float
    loss: float
    action: int


@dataclass
class Leaf:
    polyhedron: Polyhedron
    abstraction: PolicyAbstraction
    saturated: bool = False

    @property
    def certified(self) -> bool:
        return self.abstraction.certified


def sample_action_probs(net: Network, p: Polyhedron, count: int = 1000,
                        seed: int = 0, tols: Tolerances = DEFAULT) -> SampleSet:
    """Hit & Run points paired with their full action distributions."""
    points = hit_and_run_sample(p, count, seed, tols=tols)
    return SampleSet(points, action_distribution(net, points))


def _bin_weights(y: np.ndarray, bins: int) -> np.ndarray:
    idx = np.minimum((y * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    w = 1.0 / counts[idx]
    return w / w.sum()


def cross_entropy_split(samples: SampleSet, p: Polyhedron, min_frac: float,
                        bins: int = 10, tols: Tolerances = DEFAULT) -> SplitChoice:
    """Best (direction, boundary) under weighted cross-entropy.

    For the widest-spread action, points are sorted by their projection on
    each template direction and every admissible cut index is scored by the
    cross-entropy of predicting each side's sampled probabilities with that
    side's (weighted) mean; samples are weighted inversely to their
    probability-bin population so skewed clouds cannot drown the boundary.
    The boundary is the midpoint between the neighbouring projections. Ties
    go to the smallest direction index, then the smallest cut index.
    """
    m = samples.points.shape[0]
    if m < 2:
        raise NoValidCut("need at least two samples")
    action = samples.spread_action()
    y_raw = samples.probs[:, action]
    clip = tols.prob_clip
    y = np.clip(y_raw, clip, 1.0 - clip)
    w = _bin_weights(y_raw, bins)

    def group_loss(mass, mean_num):
        # -sum_i w_i (y_i log mu + (1-y_i) log(1-mu)) with mu the group's
        # weighted mean; mass = sum w_i, mean_num = sum w_i y_i.
        mu = np.clip(mean_num / np.maximum(mass, 1e-300), clip, 1.0 - clip)
        return -(mean_num * np.log(mu) + (mass - mean_num) * np.log1p(-mu))

    best: SplitChoice | None = None
    for j, delta in enumerate(p.template.directions):
        lo, hi = direction_extent(p, j)
        extent = hi - lo
        if extent < tols.width_floor:
            continue
        lo_adm = lo + min_frac * extent
        hi_adm = hi - min_frac * extent
        t = samples.points @ delta
        order = np.argsort(t, kind="stable")
        ts = t[order]
        ws = w[order]
        wy = ws * y[order]
        mass1 = np.cumsum(ws)
        num1 = np.cumsum(wy)
        total_mass = float(mass1[-1])
        total_num = float(num1[-1])
        cuts = np.arange(1, m)  # split after sorted index k-1
        boundaries = 0.5 * (ts[cuts - 1] + ts[cuts])
        admissible = (
            (boundaries >= lo_adm)
            & (boundaries <= hi_adm)
            & (ts[cuts] - ts[cuts - 1] > 1e-12)
        )
        if not admissible.any():
            continue
        losses = (group_loss(mass1[cuts - 1], num1[cuts - 1])
                  + group_loss(total_mass - mass1[cuts - 1], total_num - num1[cuts - 1]))
        losses[~admissible] = np.inf
        k = int(np.argmin(losses))
        cand = SplitChoice(j, float(boundaries[k]), float(losses[k]), action)
        if best is None or cand.loss < best.loss - 1e-15:
            best = cand
    if best is None:
        raise NoValidCut("no admissible cut on any direction")
    return best


def refine_to_threshold(net: Network, p: Polyhedron, phi: float, budget: int = 4096,
                        *, samples: int = 1000, min_frac: float = 0.1, bins: int = 10,
                        seed: int = 0, node_budget: int = 10000,
                        big_m: float | None = None,
                        tols: Tolerances = DEFAULT) -> list[Leaf]:
    """Partition p until every piece's certified spread is <= phi.

    Returns the leaves with their certified abstractions. Pieces that stop
    early (leaf budget, degenerate geometry, no valid cut) are flagged
    saturated; their intervals are still certified over-approximations, so
    the result stays sound.
    """
    if not 0.0 < phi <= 1.0:
        raise ValueError("phi must lie in (0, 1]")
    if budget < 1:
        raise ValueError("budget must be >= 1")

    leaves: list[Leaf] = []
    work: deque[tuple[Polyhedron, int]] = deque([(p, 1)])

    def milp(piece: Polyhedron) -> PolicyAbstraction:
        return policy_abstraction(net, piece, big_m=big_m,
                                  node_budget=node_budget, tols=tols)

    while work:
        piece, path = work.popleft()
        budget_left = budget - (len(leaves) + len(work) + 1)
        can_split = budget_left >= 1

        try:
            sampled = sample_action_probs(net, piece, samples,
                                          derive_seed(seed, path), tols=tols)
        except DegenerateGeometry:
            # Zero-volume piece: certify directly, never split further.
            abstraction = milp(piece)
            leaves.append(Leaf(piece, abstraction, saturated=abstraction.spread > phi))
            continue

        abstraction = None
        if sampled.sampled_spread <= phi:
            abstraction = milp(piece)
            if abstraction.spread <= phi:
                leaves.append(Leaf(piece, abstraction))
                continue
        if not can_split:
            abstraction = abstraction or milp(piece)
            leaves.append(Leaf(piece, abstraction, saturated=True))
            continue
        try:
            choice = cross_entropy_split(sampled, piece, min_frac, bins, tols)
            low, high = bisect(piece, choice.direction, choice.boundary, min_frac, tols)
        except (NoValidCut, DegenerateSplit, ValueError):
            abstraction = abstraction or milp(piece)
            leaves.append(Leaf(piece, abstraction, saturated=abstraction.spread > phi))
            continue
        work.append((low, path * 2))
        work.append((high, path * 2 + 1))
    return leaves
