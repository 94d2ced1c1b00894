import numpy as np
import pytest

from policert.environments import (
    BouncingBall,
    Halfspace,
    Mode,
    PiecewiseAffineEnv,
    Trace,
    load_constants,
    make_environment,
)
from policert.geometry import Polyhedron, octagon, rectangle

RECT2 = rectangle(2)


@pytest.fixture(scope="module")
def ball():
    return make_environment("bouncing_ball")


@pytest.fixture(scope="module")
def cruise():
    return make_environment("cruise_control")


@pytest.fixture(scope="module")
def pendulum():
    return make_environment("inverted_pendulum")


ENV_NAMES = ["bouncing_ball", "cruise_control", "inverted_pendulum"]


# -- constants manifest -------------------------------------------------------


def test_manifest_covers_all_environments():
    manifest = load_constants()
    assert set(ENV_NAMES) <= set(manifest)


def test_override_replaces_constant():
    env = make_environment("bouncing_ball", {"gravity": 5.0})
    assert env.constants["gravity"] == 5.0
    with pytest.raises(KeyError):
        make_environment("bouncing_ball", {"not_a_constant": 1.0})


# -- concrete steps ------------------------------------------------------------


def test_cruise_step_matches_hand_euler(cruise):
    # Full-state view: lead at x=10 v=28, ego at x=0 v=28, accelerate.
    # Reduced state (x_rel, v_ego) = (10, 28).
    nxt = cruise.concrete_step([10.0, 28.0], 0)
    assert cruise.action_names[0] == "accelerate"
    assert nxt[0] == pytest.approx(10.0 + (28.0 - 28.0) * 0.1 - 0.5 * 1.0 * 0.01, abs=1e-12)
    assert nxt[1] == pytest.approx(28.1, abs=1e-12)


def test_ball_bounce_reflects_velocity(ball):
    nxt = ball.concrete_step([0.0, -2.0], 0)
    assert nxt[0] == pytest.approx(0.0, abs=1e-12)
    assert nxt[1] == pytest.approx(1.8, abs=1e-12)


def test_ball_free_fall_and_ground_clamp(ball):
    nxt = ball.concrete_step([5.0, 0.0], 0)
    assert nxt[1] == pytest.approx(-0.981, abs=1e-12)
    assert nxt[0] == pytest.approx(5.0 - 0.981 * 0.1, abs=1e-12)
    low = ball.concrete_step([0.05, -3.0], 0)
    assert low[0] == 0.0  # clamped at the ground


def test_ball_hit_only_in_zone(ball):
    hit = ball.concrete_step([5.0, 0.0], 1)
    assert hit[1] == pytest.approx(-4.0 - 0.981, abs=1e-12)
    out_of_reach = ball.concrete_step([2.0, 0.0], 1)
    noop = ball.concrete_step([2.0, 0.0], 0)
    assert np.allclose(out_of_reach, noop)


def test_pendulum_equilibrium_fixed_point(pendulum):
    assert np.allclose(pendulum.concrete_step([0.0, 0.0], 0), [0.0, 0.0])


def test_pendulum_torque_signs(pendulum):
    left = pendulum.concrete_step([0.0, 0.0], 1)
    right = pendulum.concrete_step([0.0, 0.0], 2)
    assert left[1] < 0 < right[1]


def test_pendulum_omega_clamp(pendulum):
    nxt = pendulum.concrete_step([0.2, 7.99], 2)
    assert nxt[1] == pytest.approx(8.0, abs=1e-12)


# -- fail labels ----------------------------------------------------------------


def test_cruise_fail_labels(cruise):
    crash = Polyhedron.from_box(RECT2, [-1.0, 26.0], [0.5, 32.0])
    safe = Polyhedron.from_box(RECT2, [1.0, 26.0], [5.0, 32.0])
    assert cruise.label_fail(crash)
    assert not cruise.label_fail(safe)


def test_pendulum_fail_label_on_angle(pendulum):
    tipped = Polyhedron.from_box(RECT2, [0.6, 0.0], [0.7, 0.1])
    assert 0.6 > pendulum.constants["fail_theta_abs"]
    assert pendulum.label_fail(tipped)
    upright = Polyhedron.from_box(RECT2, [-0.1, -0.1], [0.1, 0.1])
    assert not pendulum.label_fail(upright)


def test_ball_fail_mask_on_states(ball):
    assert ball.is_fail_state([0.05, 0.2])
    assert not ball.is_fail_state([0.05, -3.0])
    assert not ball.is_fail_state([5.0, 0.0])


# -- abstract post -----------------------------------------------------------------


def test_identity_dynamics_post_is_identity():
    consts = load_constants("cruise_control")
    env = PiecewiseAffineEnv("identity", consts)
    env.modes = [[Mode((), np.eye(2), np.zeros(2))]]
    p = Polyhedron.from_box(octagon(2), [0.3, -1.0], [1.0, 2.0])
    (post,) = env.abstract_post(p, 0)
    assert np.allclose(post.bounds, p.bounds, atol=1e-9)


def test_cruise_post_matches_interval_arithmetic(cruise):
    p = Polyhedron.from_box(RECT2, [3.0, 26.0], [10.0, 32.0])
    a = 1  # decelerate
    (post,) = cruise.abstract_post(p, a)
    dt, lead, mag = 0.1, 28.0, 1.0
    acc = -mag
    # Componentwise monotone affine image of a box.
    x_hi = 10.0 - dt * 26.0 + lead * dt - 0.5 * acc * dt * dt
    x_lo = 3.0 - dt * 32.0 + lead * dt - 0.5 * acc * dt * dt
    v_hi = 32.0 + acc * dt
    v_lo = 26.0 + acc * dt
    lo, hi = post.box()
    assert hi[0] == pytest.approx(x_hi, abs=1e-9)
    assert lo[0] == pytest.approx(x_lo, abs=1e-9)
    assert hi[1] == pytest.approx(v_hi, abs=1e-9)
    assert lo[1] == pytest.approx(v_lo, abs=1e-9)


@pytest.mark.parametrize("env_name", ENV_NAMES)
def test_post_soundness_sampled(env_name):
    env = make_environment(env_name)
    rng = np.random.default_rng(hash(env_name) % (2**32))
    lo, hi = env.initial_box()
    for action in range(env.action_count):
        for _ in range(3):
            sub_lo = rng.uniform(lo, hi)
            sub_hi = rng.uniform(sub_lo, hi)
            p = Polyhedron.from_box(RECT2, sub_lo, sub_hi)
            posts = env.abstract_post(p, action)
            assert posts
            states = rng.uniform(sub_lo, sub_hi, size=(1000, 2))
            succ = env.step_batch(states, action)
            misses = sum(1 for s in succ if not any(q.member(s) for q in posts))
            assert misses == 0


def test_ball_mode_posts_cover_bounce_boundary(ball):
    # A piece straddling the landing guard must produce multiple modes whose
    # union still covers every sampled concrete successor.
    p = Polyhedron.from_box(RECT2, [0.0, -10.5], [1.5, -9.0])
    posts = ball.abstract_post(p, 0)
    assert len(posts) >= 2
    rng = np.random.default_rng(3)
    states = rng.uniform([0.0, -10.5], [1.5, -9.0], size=(1000, 2))
    succ = ball.step_batch(states, 0)
    assert all(any(q.member(s) for q in posts) for s in succ)


def test_pendulum_post_tightens_with_subdivision():
    consts_coarse = {"sin_subdiv_width": 0.56 / 4}
    consts_fine = {"sin_subdiv_width": 0.56 / 16}
    env4 = make_environment("inverted_pendulum", consts_coarse)
    env16 = make_environment("inverted_pendulum", consts_fine)
    p = Polyhedron.from_box(RECT2, [-0.28, -0.4], [0.28, 0.4])
    for action in range(3):
        (post4,) = env4.abstract_post(p, action)
        (post16,) = env16.abstract_post(p, action)
        assert np.all(post16.bounds <= post4.bounds + 1e-9)


def test_pendulum_post_contains_samples(pendulum):
    p = Polyhedron.from_box(RECT2, [-0.05, -0.05], [0.05, 0.05])
    rng = np.random.default_rng(5)
    states = rng.uniform([-0.05, -0.05], [0.05, 0.05], size=(1000, 2))
    for action in range(3):
        (post,) = pendulum.abstract_post(p, action)
        succ = pendulum.step_batch(states, action)
        assert all(post.member(s) for s in succ)


def test_trace_chaining(ball):
    s0 = np.array([5.0, 0.0])
    s1 = ball.concrete_step(s0, 0)
    s2 = ball.concrete_step(s1, 0)
    trace = Trace([(s0, 0, s1), (s1, 0, s2)])
    assert trace.check_chained()
    assert len(trace.dump_lines()) == 2


def test_fail_region_is_halfspace_data(ball):
    assert all(isinstance(h, Halfspace) for conj in ball.fail_region for h in conj)
