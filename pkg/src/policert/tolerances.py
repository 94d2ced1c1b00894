"""Shared numeric tolerances.

Every module that compares floats (LP feasibility, containment of support
bounds, branch-and-bound gaps) reads from the same record so the meaning of
"equal" never drifts between subsystems.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # LP: constraint satisfaction and reduced-cost threshold.
    feasibility: float = 1e-9
    optimality: float = 1e-9
    # Minimum acceptable simplex pivot magnitude; below this the solve is
    # numerically unreliable and the solver gives up.
    pivot_floor: float = 1e-12
    # Degenerate pivots tolerated before switching to Bland's rule.
    degenerate_pivot_limit: int = 1000
    # Componentwise slack on support bounds for containment tests.
    containment: float = 1e-9
    # Branch-and-bound certifies a bound once the gap closes to this.
    bnb_gap: float = 1e-6
    # Transition intervals with a zero lower end are clamped up to this so
    # every existing transition has a strictly positive lower bound.
    interval_lower_clamp: float = 1e-12
    # Sampled probabilities are clipped into [clip, 1-clip] inside logs.
    prob_clip: float = 1e-7
    # Absolute extent floor below which a bisection is refused.
    width_floor: float = 1e-7
    # Multiplier applied to interval-propagated neuron magnitudes when
    # choosing per-layer big-M constants.
    big_m_safety: float = 1.05


DEFAULT = Tolerances()
