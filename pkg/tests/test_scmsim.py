import numpy as np
import pytest
from scipy import stats

from citris.scmsim import (BallInBoxes, BernoulliPolicy, Causal3DState,
                           Causal3DTeapot, GroupedPolicy, PongState,
                           ZeroPolicy, chain4, make_env, parse_policy, stream)
from citris.scmsim.environments import _hue_goal
from citris.scmsim.factors import TWO_PI
from citris.scmsim.policies import CAUSAL3D_SIX_SETS, pong_policy


def test_goal_chase_formula():
    # f(a, b, c) = (a - b) / 2 + c, checked through the pos_x mechanism
    env = Causal3DTeapot()
    state = env.initial_state(stream(0, 0))
    state[0] = 0.0          # pos_x
    state[4] = np.pi / 2.0  # rot_beta -> goal 1.5*sin = 1.5

    class NoNoise:
        def normal(self, mu, sd):
            return 0.0

        def random(self):
            return 1.0

        def integers(self, a, b):
            return 0

        def uniform(self, a, b, size=None):
            return np.zeros(size) if size else 0.0

    new = env.step(state, np.zeros(env.n_targets, dtype=np.uint8), NoNoise())
    assert np.isclose(new[0], (1.5 - 0.0) / 2.0)  # f(1.5, 0, 0) = 0.75
    # and the spec's literal example f(1.0, 0.0, 0.0) = 0.5
    assert np.isclose((1.0 - 0.0) / 2.0 + 0.0, 0.5)


def test_hue_goal_table():
    assert _hue_goal(0, 1.0, 2.0) == 0.0                       # teapot
    hs, hb = 0.4, 1.1
    avg = np.arctan2((np.sin(hs) + np.sin(hb)) / 2,
                     (np.cos(hs) + np.cos(hb)) / 2)
    assert np.isclose(_hue_goal(2, hs, hb), avg)               # hare
    assert np.isclose(_hue_goal(4, hs, hb), np.pi + avg)       # dragon
    assert np.isclose(_hue_goal(1, hs, hb), TWO_PI / 5)        # armadillo


def test_causal3d_full_intervention_uniform():
    env = Causal3DTeapot()
    rng = stream(3, 0)
    state = env.initial_state(rng)
    targets = np.ones(env.n_targets, dtype=np.uint8)
    n = 10_000
    draws = np.empty((n, env.state_dim))
    for i in range(n):
        state = env.step(state, targets, rng)
        draws[i] = state
    # positions uniform on [-2, 2]; angles uniform on [0, 2pi)
    for col, (lo, hi) in [(0, (-2, 2)), (1, (-2, 2)), (2, (-2, 2)),
                          (3, (0, TWO_PI)), (6, (0, TWO_PI))]:
        u = (draws[:, col] - lo) / (hi - lo)
        assert stats.kstest(u, "uniform").pvalue > 0.01


def test_causal3d_respects_parent_structure():
    env = Causal3DTeapot()
    g = env.reference_graph
    assert g.shape == (6, 6)
    names = [f.name for f in env.factors]
    assert names == ["pos_o", "rot_o", "rot_s", "hue_s", "hue_b", "hue_o"]
    assert g[names.index("hue_b"), names.index("rot_o")] == 1.0
    assert g[names.index("hue_s"), names.index("hue_o")] == 1.0
    assert g[names.index("rot_s"), names.index("pos_o")] == 0.0


def test_pong_velocity_decomposition():
    env = PongState()

    class NoNoise:
        def normal(self, mu, sd):
            return mu if mu else 0.0

        def random(self):
            return 1.0

        def uniform(self, a, b, size=None):
            return 0.0

    state = np.array([0.0, 0.0, 0.0, 0.9, 0.9, 0.0, 0.0])  # vel_dir=0: rightward
    new = env.step(state, np.zeros(5, dtype=np.uint8), NoNoise())
    assert np.isclose(new[0], env.speed)
    assert np.isclose(new[1], 0.0)


def test_pong_score_reset_at_five():
    env = PongState()
    rng = stream(0, 9)
    # ball one step from the left border, moving left
    state = np.array([-0.95, 0.0, np.pi, 0.0, 0.0, 4.0, 2.0])
    new = env.step(state, np.zeros(5, dtype=np.uint8), rng)
    assert new[5] == 0.0 and new[6] == 0.0  # 5th goal resets both scores
    assert new[0] == 0.0  # ball recentered (before interventions)
    state = np.array([-0.95, 0.0, np.pi, 0.0, 0.0, 2.0, 2.0])
    new = env.step(state, np.zeros(5, dtype=np.uint8), rng)
    assert new[5] == 3.0 and new[6] == 2.0


def test_pong_wall_bounce_mirrors_angle():
    env = PongState()

    class NoNoise:
        def normal(self, mu, sd):
            return mu if mu else 0.0

        def random(self):
            return 1.0

        def uniform(self, a, b, size=None):
            return 0.0

    vd = np.pi / 2.0  # straight down in the +y sense
    state = np.array([0.0, 0.95, vd, -0.9, -0.9, 0.0, 0.0])
    new = env.step(state, np.zeros(5, dtype=np.uint8), NoNoise())
    assert np.isclose(new[1], 2.0 - (0.95 + env.speed))
    assert np.isclose(new[2], TWO_PI - vd)  # sign of the y-velocity flipped


def test_pong_paddle_collision_reflects_x():
    env = PongState()

    class NoNoise:
        def normal(self, mu, sd):
            return mu if mu else 0.0

        def random(self):
            return 1.0

        def uniform(self, a, b, size=None):
            return 0.0

    # ball just right of the left paddle plane, moving left, paddle aligned
    state = np.array([-0.65, 0.0, np.pi, 0.0, 0.9, 0.0, 0.0])
    new = env.step(state, np.zeros(5, dtype=np.uint8), NoNoise())
    crossed = -0.65 - env.speed
    assert np.isclose(new[0], -2 * env.paddle_plane - crossed)
    assert np.isclose(new[2], 0.0)  # pi - pi = 0: x-velocity mirrored


def test_pong_score_never_intervened():
    env = PongState()
    policy = env.default_policy()
    rng = stream(1, 0)
    k = env.n_targets
    assert k == 5  # score is not a target
    counts = np.zeros(k)
    for _ in range(5000):
        counts += policy.sample(rng, k)
    assert np.all(counts > 0)
    rates = counts / 5000
    np.testing.assert_allclose(rates, 0.13, atol=0.02)


def test_ball_in_boxes_intervention_semantics():
    env = BallInBoxes()
    rng = stream(5, 0)
    state = np.array([0.0, 0.3, 0.5])
    # box flip leaves the within-box position on its observational path
    twin = stream(77, 1)
    s_int = env.step(state, np.array([1, 0], dtype=np.uint8), stream(42, 0))
    s_obs = env.step(state, np.array([0, 0], dtype=np.uint8), stream(42, 0))
    assert s_int[0] == 1.0 and s_obs[0] == 0.0
    assert s_int[1] == s_obs[1]  # same rng stream, same truncated-Gaussian move
    assert twin is not None
    # without intervention the box id never changes
    s = state
    for _ in range(200):
        s = env.step(s, np.zeros(2, dtype=np.uint8), rng)
        assert s[0] == 0.0


def test_ball_in_boxes_truncation():
    env = BallInBoxes()
    rng = stream(6, 0)
    s = np.array([1.0, 0.05, 0.98])
    for _ in range(10_000):
        s = env.step(s, np.zeros(2, dtype=np.uint8), rng)
        assert 0.0 <= s[1] <= 1.0 and 0.0 <= s[2] <= 1.0


def test_grouped_policy_emits_only_declared_sets():
    rng = stream(7, 0)
    seen = set()
    for _ in range(3000):
        bits = CAUSAL3D_SIX_SETS.sample(rng, 6)
        seen.add(tuple(bits))
    declared = {tuple(1 if i in s else 0 for i in range(6))
                for s in CAUSAL3D_SIX_SETS.sets}
    assert seen == declared


def test_joint_only_policy_makes_targets_indistinguishable():
    # the unidentifiability precondition: jointly-or-never intervened bits
    # are perfectly correlated, carrying no separating information
    policy = GroupedPolicy([frozenset(), {0, 1}], [0.5, 0.5])
    rng = stream(8, 0)
    bits = np.array([policy.sample(rng, 2) for _ in range(2000)])
    assert np.array_equal(bits[:, 0], bits[:, 1])


def test_policy_parsing():
    assert isinstance(parse_policy("bernoulli:0.1"), BernoulliPolicy)
    assert isinstance(parse_policy("independent-eval"), ZeroPolicy)
    assert parse_policy("grouped:causal3d-6sets") is CAUSAL3D_SIX_SETS
    with pytest.raises(ValueError):
        parse_policy("bogus")


def test_bernoulli_excludes_never_fire():
    policy = BernoulliPolicy(0.9, exclude=(1,))
    rng = stream(9, 0)
    bits = np.array([policy.sample(rng, 3) for _ in range(500)])
    assert bits[:, 1].sum() == 0
    assert bits[:, 0].sum() > 300


def test_stationarity_and_no_instantaneous_edges():
    # stepping from the same state with the same stream is time-invariant
    env = chain4()
    state = np.array([0.1, -0.5, 1.0, 0.3])
    a = env.step(state, np.zeros(4, dtype=np.uint8), stream(10, 0))
    b = env.step(state, np.zeros(4, dtype=np.uint8), stream(10, 0))
    np.testing.assert_array_equal(a, b)


def test_make_env_rejects_unknown():
    with pytest.raises(ValueError):
        make_env("atari-breakout")
    env = make_env("causal3d-state")
    assert isinstance(env, Causal3DState) and env.n_targets == 7


def test_pong_policy_rest_rate():
    policy = pong_policy()
    rng = stream(11, 0)
    none = sum(policy.sample(rng, 5).sum() == 0 for _ in range(4000))
    assert abs(none / 4000 - 0.35) < 0.03
