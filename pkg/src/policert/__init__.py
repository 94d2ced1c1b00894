"""Certified failure-probability bounds for softmax neural control policies.

The toolkit abstracts a policy's closed-loop execution into an interval
Markov decision process over template polyhedra and solves it by robust
value iteration, yielding a sound upper bound on the probability of
reaching an unsafe state within a bounded horizon.
"""

from .bounds import (
    LogitBounds,
    PolicyAbstraction,
    ProbInterval,
    logit_bounds,
    policy_abstraction,
    softmax_intervals,
)
from .config import RunConfig, load_config, parse_config
from .environments import Environment, Trace, load_constants, make_environment
from .geometry import (
    Halfspace,
    Polyhedron,
    Template,
    bisect,
    contains,
    custom,
    hit_and_run_sample,
    intersects_region,
    octagon,
    rectangle,
    support_value,
)
from .imdp import (
    AbstractState,
    Choice,
    Imdp,
    VerifyReport,
    build_abstraction,
    robust_step,
    robust_value_iteration,
    verify,
)
from .linprog import LinearProgram, LpResult, Status, solve_lp
from .network import Network, action_distribution, forward_logits, load_network
from .refinement import (
    Leaf,
    SampleSet,
    SplitChoice,
    cross_entropy_split,
    refine_to_threshold,
    sample_action_probs,
)
from .simulation import (
    McEstimate,
    exact_tree_probability,
    mc_failure_estimate,
    simulate_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AbstractState", "Choice", "Environment", "Halfspace", "Imdp", "Leaf",
    "LinearProgram", "LogitBounds", "LpResult", "McEstimate", "Network",
    "PolicyAbstraction", "Polyhedron", "ProbInterval", "RunConfig",
    "SampleSet", "SplitChoice", "Status", "Template", "Trace",
    "VerifyReport", "action_distribution", "bisect", "build_abstraction",
    "contains", "cross_entropy_split", "custom", "exact_tree_probability",
    "forward_logits", "hit_and_run_sample", "intersects_region",
    "load_config", "load_constants", "load_network", "logit_bounds",
    "make_environment", "mc_failure_estimate", "octagon", "parse_config",
    "policy_abstraction", "rectangle", "refine_to_threshold", "robust_step",
    "robust_value_iteration", "sample_action_probs", "simulate_trace",
    "softmax_intervals", "solve_lp", "support_value", "verify",
]
