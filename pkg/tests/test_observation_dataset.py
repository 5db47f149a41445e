import numpy as np
import pytest

from citris.scmsim import (BallInBoxes, BernoulliPolicy, ObservationMap,
                           PongState, chain4, generate_dataset, load,
                           sample_independent_factors, stream,
                           train_eval_split)
from citris.scmsim.dataset import deserialize, serialize
from citris.scmsim.observation import ObservationMapError


def test_zero_layers_is_identity_concat():
    env = BallInBoxes()
    omap = ObservationMap(env.factors, seed=1, n_layers=0, noise_dim=2)
    state = np.array([[1.0, 0.25, 0.75]])
    noise = np.array([[0.1, -0.2]])
    obs = omap.observe(state, noise)
    # continuous encoding rescales to [-1, 1]
    np.testing.assert_allclose(obs, [[1.0, -0.5, 0.5, 0.1, -0.2]])


def test_round_trip_within_tolerance():
    env = PongState()
    omap = ObservationMap(env.factors, seed=2, n_layers=3, noise_dim=2)
    rng = stream(0, 0)
    states = env.sample_independent(rng, 200)
    noise = omap.sample_noise(rng, 200)
    obs = omap.observe(states, noise)
    states_rec, noise_rec = omap.invert_to_state(obs)
    assert np.max(np.abs(noise_rec - noise)) <= 1e-8
    assert np.max(np.abs(states_rec - states)) <= 1e-8


def test_distinct_states_distinct_observations():
    env = BallInBoxes()
    omap = ObservationMap(env.factors, seed=3)
    rng = stream(1, 0)
    a = env.sample_independent(rng, 10_000)
    b = env.sample_independent(rng, 10_000)
    noise = np.zeros((10_000, omap.noise_dim))
    dist = np.linalg.norm(omap.observe(a, noise) - omap.observe(b, noise), axis=1)
    same = np.all(a == b, axis=1)
    assert np.all(dist[~same] > 0)


def test_newton_inverse_rejects_corrupted_input():
    env = BallInBoxes()
    omap = ObservationMap(env.factors, seed=4)
    bad = np.full((1, omap.obs_dim), np.nan)
    with np.errstate(invalid="ignore"), pytest.raises(ObservationMapError):
        omap.invert(bad)


def test_circular_decode_wraps():
    env = PongState()
    omap = ObservationMap(env.factors, seed=5, n_layers=0, noise_dim=0)
    state = env.sample_independent(stream(2, 0), 1)
    state[0, 2] = 6.2  # close to 2pi
    rec, _ = omap.invert_to_state(omap.observe(state, np.zeros((1, 0))))
    assert abs(rec[0, 2] - 6.2) < 1e-8


def test_dataset_deterministic_bytes():
    env = BallInBoxes()
    a = generate_dataset(env, env.default_policy(), steps=500, seed=7)
    b = generate_dataset(env, env.default_policy(), steps=500, seed=7)
    assert serialize(a) == serialize(b)
    c = generate_dataset(env, env.default_policy(), steps=500, seed=8)
    assert serialize(a) != serialize(c)


def test_dataset_round_trip(tmp_path):
    env = chain4()
    ds = generate_dataset(env, env.default_policy(), steps=300, seed=1)
    path = tmp_path / "chain.ctrs"
    ds.save(path)
    back = load(path)
    assert back.env_name == "chain4-state"
    np.testing.assert_array_equal(back.states, ds.states)
    np.testing.assert_array_equal(back.interventions, ds.interventions)
    np.testing.assert_array_equal(back.observations, ds.observations)
    assert [f.name for f in back.factors] == ["z1", "z2", "z3", "z4"]
    assert back.fingerprint() == ds.fingerprint()


def test_intervention_frequency_within_binomial_bound():
    env = BallInBoxes()
    ds = generate_dataset(env, BernoulliPolicy(0.2), steps=100_000, seed=9)
    rates = ds.intervention_rates()
    sigma = np.sqrt(0.2 * 0.8 / ds.n_steps)
    assert np.all(np.abs(rates - 0.2) < 3 * sigma + 0.2 / ds.n_steps)


def test_pong_factor_table_has_score_but_five_targets():
    env = PongState()
    ds = generate_dataset(env, env.default_policy(), steps=50, seed=3)
    raw = serialize(ds)
    back = deserialize(raw)
    assert back.n_targets == 5
    assert [f.name for f in back.factors][-1] == "score"
    assert back.states.shape[1] == 7


def test_independent_factors_uncorrelated():
    env = PongState()
    ds = sample_independent_factors(env, n=25_000, seed=11)
    corr = np.corrcoef(ds.states.T)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) <= 0.05
    assert np.all(ds.interventions == 0)


def test_train_eval_split_fractions():
    tr, ev = train_eval_split(25_000)
    assert len(tr) == 10_000 and len(ev) == 15_000
    assert tr[-1] + 1 == ev[0]


def test_magic_validation():
    with pytest.raises(ValueError):
        deserialize(b"NOTMAGIC" + b"\x00" * 64)
