import numpy as np
import pytest

from citris.diffcore import tensor as T
from citris.diffcore.distributions import (
    bernoulli_cross_entropy,
    gaussian_log_prob,
    gumbel_softmax_sample,
    kl_diag_gaussian,
)

from gradcheck import assert_grads_close


def test_gaussian_log_prob_values():
    lp = gaussian_log_prob(T.constant(0.0), T.constant(0.0), T.constant(0.0))
    assert np.isclose(lp.item(), -0.918939, atol=1e-6)
    lp = gaussian_log_prob(T.constant(1.0), T.constant(0.0), T.constant(0.0))
    assert np.isclose(lp.item(), -1.418939, atol=1e-6)
    # x == mu: -log sigma - 0.5 ln(2 pi)
    ls = 0.37
    lp = gaussian_log_prob(T.constant(2.0), T.constant(2.0), T.constant(ls))
    assert np.isclose(lp.item(), -ls - 0.5 * np.log(2 * np.pi))


def test_gaussian_log_prob_gradients():
    rng = np.random.default_rng(0)
    x = T.constant(rng.standard_normal(6))
    mu = T.Tensor(rng.standard_normal(6), requires_grad=True)
    ls = T.Tensor(rng.uniform(-0.5, 0.5, 6), requires_grad=True)
    assert_grads_close(lambda: T.tsum(gaussian_log_prob(x, mu, ls)), [mu, ls])


def test_kl_identical_is_zero():
    mu = T.constant(np.array([0.3, -1.2]))
    ls = T.constant(np.array([0.1, -0.4]))
    kl = kl_diag_gaussian(mu, ls, mu, ls)
    np.testing.assert_allclose(kl.data, 0.0, atol=1e-15)


def test_kl_unit_shift_is_half():
    kl = kl_diag_gaussian(T.constant(1.0), T.constant(0.0),
                          T.constant(0.0), T.constant(0.0))
    assert np.isclose(kl.item(), 0.5)


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(42)
    mu1, ls1 = 0.7, 0.2
    mu2, ls2 = -0.3, -0.1
    closed = kl_diag_gaussian(T.constant(mu1), T.constant(ls1),
                              T.constant(mu2), T.constant(ls2)).item()
    # Monte-Carlo oracle: E_x~p1[log p1 - log p2]
    x = rng.normal(mu1, np.exp(ls1), size=1_000_000)

    def logpdf(x, mu, ls):
        s = np.exp(ls)
        return -0.5 * ((x - mu) / s) ** 2 - ls - 0.5 * np.log(2 * np.pi)

    mc = np.mean(logpdf(x, mu1, ls1) - logpdf(x, mu2, ls2))
    assert abs(closed - mc) / abs(closed) < 0.02


def test_kl_gradients():
    rng = np.random.default_rng(1)
    mu1 = T.Tensor(rng.standard_normal(4), requires_grad=True)
    ls1 = T.Tensor(rng.uniform(-0.3, 0.3, 4), requires_grad=True)
    mu2 = T.Tensor(rng.standard_normal(4), requires_grad=True)
    ls2 = T.Tensor(rng.uniform(-0.3, 0.3, 4), requires_grad=True)
    assert_grads_close(
        lambda: T.tsum(kl_diag_gaussian(mu1, ls1, mu2, ls2)), [mu1, ls1, mu2, ls2]
    )


def test_gumbel_softmax_rows_are_probability_vectors():
    rng = np.random.default_rng(2)
    logits = T.constant(rng.standard_normal((40, 5)))
    y = gumbel_softmax_sample(logits, 1.0, rng)
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(y.data > 0) and np.all(y.data < 1)


def test_gumbel_softmax_uniform_logits_marginals():
    rng = np.random.default_rng(3)
    k = 4
    logits = T.constant(np.zeros((100_000, k)))
    y = gumbel_softmax_sample(logits, 1.0, rng)
    np.testing.assert_allclose(y.data.mean(axis=0), 1.0 / k, atol=0.01)


def test_gumbel_softmax_dominant_logit():
    rng = np.random.default_rng(4)
    logits = T.constant(np.tile([20.0, -20.0, -20.0], (2000, 1)))
    y = gumbel_softmax_sample(logits, 1.0, rng)
    assert np.mean(y.data[:, 0] > 0.999) > 0.999


def test_gumbel_softmax_argmax_matches_noisy_logits():
    logits = np.random.default_rng(5).standard_normal((64, 6))
    from citris.diffcore.distributions import sample_gumbel

    g_rng = np.random.default_rng(99)
    noise = sample_gumbel(g_rng, logits.shape)
    y_rng = np.random.default_rng(99)
    y = gumbel_softmax_sample(T.constant(logits), 0.37, y_rng)
    np.testing.assert_array_equal(
        y.data.argmax(axis=-1), (logits + noise).argmax(axis=-1)
    )


def test_gumbel_softmax_rejects_bad_temperature():
    with pytest.raises(ValueError):
        gumbel_softmax_sample(T.constant(np.zeros((1, 2))), 0.0,
                              np.random.default_rng(0))


def test_gumbel_softmax_differentiable():
    rng = np.random.default_rng(6)
    logits = T.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    noise_rng = np.random.default_rng(7)

    def loss():
        local = np.random.default_rng(7)
        return T.tsum(T.square(gumbel_softmax_sample(logits, 1.0, local)))

    assert_grads_close(loss, [logits])
    assert noise_rng is not None


def test_bernoulli_cross_entropy_matches_reference():
    rng = np.random.default_rng(8)
    logits = rng.standard_normal(10)
    targets = rng.uniform(0, 1, 10)
    ce = bernoulli_cross_entropy(T.constant(logits), targets)
    p = 1.0 / (1.0 + np.exp(-logits))
    ref = -(targets * np.log(p) + (1 - targets) * np.log(1 - p))
    np.testing.assert_allclose(ce.data, ref, atol=1e-12)
