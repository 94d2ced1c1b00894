import math

import numpy as np
import pytest

from policert.bounds import (
    LogitBounds,
    logit_bounds,
    policy_abstraction,
    softmax_intervals,
)
from policert.geometry import Polyhedron, bisect, hit_and_run_sample, rectangle
from policert.network import action_distribution, network_from_arrays

from oracles import enumerate_logit_bounds, random_box, random_small_net

RECT2 = rectangle(2)


def box(lo, hi):
    return Polyhedron.from_box(RECT2, lo, hi)


def test_zero_weight_net_bounds_are_output_bias():
    bias = np.array([0.7, -1.3])
    net = network_from_arrays(
        [np.zeros((3, 2)), np.zeros((2, 3))],
        [np.zeros(3), bias],
    )
    lb = logit_bounds(net, box([-5, -5], [5, 5]))
    assert lb.certified
    assert np.allclose(lb.lower, bias, atol=1e-9)
    assert np.allclose(lb.upper, bias, atol=1e-9)


def test_identity_layer_bounds_are_box_supports():
    net = network_from_arrays([np.eye(2)], [np.zeros(2)])
    lb = logit_bounds(net, box([0, 0], [1, 1]))
    assert np.allclose(lb.lower, [0.0, 0.0], atol=1e-8)
    assert np.allclose(lb.upper, [1.0, 1.0], atol=1e-8)


def test_hand_net_matches_pattern_enumeration():
    weights = [np.array([[1.0, -2.0], [2.0, 1.0], [-1.0, 1.0]]),
               np.array([[1.0, 1.0, -2.0], [-1.0, 2.0, 1.0]])]
    biases = [np.array([0.0, -1.0, 1.0]), np.array([0.5, 0.0])]
    net = network_from_arrays(weights, biases)
    p = box([-1, -1], [1, 1])
    lb = logit_bounds(net, p)
    ref_lo, ref_hi = enumerate_logit_bounds(net, p)
    assert lb.certified
    assert np.allclose(lb.lower, ref_lo, atol=1e-6)
    assert np.allclose(lb.upper, ref_hi, atol=1e-6)


@pytest.mark.parametrize("trial", range(8))
def test_random_nets_match_enumeration(trial):
    rng = np.random.default_rng(500 + trial)
    net = random_small_net(rng)
    p = random_box(rng, RECT2)
    lb = logit_bounds(net, p)
    ref_lo, ref_hi = enumerate_logit_bounds(net, p)
    assert lb.certified
    assert np.allclose(lb.lower, ref_lo, atol=1e-6)
    assert np.allclose(lb.upper, ref_hi, atol=1e-6)


def test_budget_exhaustion_stays_sound():
    rng = np.random.default_rng(99)
    net = random_small_net(rng, hidden_total=10)
    p = box([-2, -2], [2, 2])
    lb = logit_bounds(net, p, node_budget=1)
    ref_lo, ref_hi = enumerate_logit_bounds(net, p)
    assert not lb.certified
    assert np.all(lb.lower <= ref_lo + 1e-9)
    assert np.all(lb.upper >= ref_hi - 1e-9)


def test_tiny_big_m_is_enlarged():
    rng = np.random.default_rng(5)
    net = random_small_net(rng, hidden_total=6)
    lb = logit_bounds(net, box([-3, -3], [3, 3]), big_m=1e-6)
    assert lb.big_m_enlarged
    ref_lo, ref_hi = enumerate_logit_bounds(net, box([-3, -3], [3, 3]))
    assert np.all(lb.lower <= ref_lo + 1e-6)
    assert np.all(lb.upper >= ref_hi - 1e-6)


# -- softmax interval combination ---------------------------------------------


def test_softmax_intervals_symmetric_points():
    k = 4
    lb = LogitBounds(np.full(k, 0.3), np.full(k, 0.3), True)
    for iv in softmax_intervals(lb):
        assert iv.lower == pytest.approx(1 / k, abs=1e-12)
        assert iv.upper == pytest.approx(1 / k, abs=1e-12)


def test_softmax_intervals_unit_boxes():
    lb = LogitBounds(np.array([0.0, 0.0]), np.array([1.0, 1.0]), True)
    ivs = softmax_intervals(lb)
    lo = 1.0 / (1.0 + math.e)
    hi = math.e / (1.0 + math.e)
    for iv in ivs:
        assert iv.lower == pytest.approx(lo, abs=1e-12)
        assert iv.upper == pytest.approx(hi, abs=1e-12)


def test_softmax_intervals_degenerate_point():
    lb = LogitBounds(np.array([5.0, 0.0]), np.array([5.0, 0.0]), True)
    ivs = softmax_intervals(lb)
    sigma5 = 1.0 / (1.0 + math.exp(-5.0))
    assert ivs[0].lower == pytest.approx(sigma5, abs=1e-12)
    assert ivs[0].upper == pytest.approx(sigma5, abs=1e-12)


@pytest.mark.parametrize("trial", range(20))
def test_softmax_interval_sums_bracket_one(trial):
    rng = np.random.default_rng(700 + trial)
    k = int(rng.integers(2, 6))
    lo = rng.normal(scale=3.0, size=k)
    hi = lo + rng.uniform(0.0, 2.0, size=k)
    ivs = softmax_intervals(LogitBounds(lo, hi, True))
    assert sum(iv.lower for iv in ivs) <= 1.0 + 1e-9
    assert sum(iv.upper for iv in ivs) >= 1.0 - 1e-9


# -- policy abstraction ----------------------------------------------------------


def test_point_polyhedron_degenerates_to_distribution():
    rng = np.random.default_rng(17)
    net = random_small_net(rng, hidden_total=5)
    s = np.array([0.37, -0.4])
    p = Polyhedron.from_box(RECT2, s, s)
    pa = policy_abstraction(net, p)
    probs = action_distribution(net, s)
    assert pa.spread == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(pa.lowers, probs, atol=1e-6)
    assert np.allclose(pa.uppers, probs, atol=1e-6)


def test_identity_net_spread():
    net = network_from_arrays([np.eye(2)], [np.zeros(2)])
    pa = policy_abstraction(net, box([0, 0], [1, 1]))
    expected = math.e / (1 + math.e) - 1 / (1 + math.e)
    assert pa.spread == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("trial", range(10))
def test_sampled_probabilities_inside_intervals(trial):
    rng = np.random.default_rng(900 + trial)
    net = random_small_net(rng)
    p = random_box(rng, RECT2)
    pa = policy_abstraction(net, p)
    pts = hit_and_run_sample(p, 1000, seed=trial)
    probs = action_distribution(net, pts)
    assert np.all(probs >= pa.lowers[None, :] - 1e-9)
    assert np.all(probs <= pa.uppers[None, :] + 1e-9)


@pytest.mark.parametrize("trial", range(6))
def test_halves_never_widen_bounds(trial):
    rng = np.random.default_rng(1100 + trial)
    net = random_small_net(rng)
    p = random_box(rng, RECT2)
    parent = logit_bounds(net, p)
    lo_ext, hi_ext = p.box()
    for half in bisect(p, 0, 0.5 * (lo_ext[0] + hi_ext[0]), 0.1):
        child = logit_bounds(net, half)
        assert np.all(child.lower >= parent.lower - 1e-6)
        assert np.all(child.upper <= parent.upper + 1e-6)
