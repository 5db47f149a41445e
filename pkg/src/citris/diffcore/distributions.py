"""Differentiable distribution pieces: Gaussian terms, KL, Gumbel-Softmax."""

import numpy as np

from . import tensor as T

LOG_2PI = float(np.log(2.0 * np.pi))

# soft saturation range for log-sigma heads before exponentiation
LOG_SIGMA_RANGE = (-7.0, 5.0)


def clamp_log_sigma(log_sigma):
    return T.softclamp(log_sigma, *LOG_SIGMA_RANGE)


def gaussian_log_prob(x, mu, log_sigma):
    """Elementwise log N(x; mu, exp(log_sigma)^2)."""
    z = (x - mu) * T.exp(T.neg(log_sigma))
    return T.constant(-0.5 * LOG_2PI) - log_sigma - 0.5 * T.square(z)


def kl_diag_gaussian(mu1, log_sigma1, mu2, log_sigma2):
    """Elementwise KL(N(mu1, s1) || N(mu2, s2)) in closed form."""
    var_ratio = T.exp(2.0 * (log_sigma1 - log_sigma2))
    delta = mu1 - mu2
    scaled = T.square(delta) * T.exp(-2.0 * log_sigma2)
    return log_sigma2 - log_sigma1 + 0.5 * (var_ratio + scaled) - 0.5


def sample_gumbel(rng, shape):
    u = rng.uniform(low=np.finfo(np.float64).tiny, high=1.0, size=shape)
    return -np.log(-np.log(u))


def gumbel_softmax_sample(logits, temperature, rng):
    """Reparameterized sample of soft one-hot rows.

    Differentiable w.r.t. ``logits``; the hard argmax of the returned sample
    equals argmax(logits + gumbel noise) for any positive temperature.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = T.constant(logits)
    g = sample_gumbel(rng, logits.shape)
    return T.softmax_last((logits + g) / temperature)


def bernoulli_cross_entropy(logits, targets):
    """Elementwise CE against (possibly soft) targets, stable via softplus."""
    targets = T.constant(targets)
    return targets * T.softplus(T.neg(logits)) + (1.0 - targets) * T.softplus(logits)
