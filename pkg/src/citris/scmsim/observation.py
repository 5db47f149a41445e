"""Constructed bijective observation map with an analytic inverse.

Each layer applies a seeded orthogonal matrix followed by the strictly
monotone nonlinearity x + 0.5 * tanh(x). Orthogonality makes the linear part
an isometry, and the nonlinearity's slope lives in [1, 1.5], so the whole map
is a well-conditioned bijection: the inverse is a transpose plus a Newton
solve per coordinate.
"""

import numpy as np

from . import factors as F
from .rng import stream

TANH_GAIN = 0.5


class ObservationMapError(RuntimeError):
    pass


class ObservationMap:
    def __init__(self, factor_list, seed, n_layers=3, noise_dim=2):
        self.factors = list(factor_list)
        self.seed = int(seed)
        self.n_layers = int(n_layers)
        self.noise_dim = int(noise_dim)
        self.encoded_dim = F.encoded_dim(self.factors)
        self.obs_dim = self.encoded_dim + self.noise_dim
        rng = stream(self.seed, 0xB5)
        self.matrices = [
            _orthogonal(rng, self.obs_dim) for _ in range(self.n_layers)
        ]

    def observe(self, states, noise):
        """Apply the map to raw states plus per-sample noise dims."""
        enc = F.encode_state(self.factors, states)
        noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
        if noise.shape != (enc.shape[0], self.noise_dim):
            raise ValueError(f"noise shape {noise.shape} != "
                             f"({enc.shape[0]}, {self.noise_dim})")
        v = np.concatenate([enc, noise], axis=1)
        for q in self.matrices:
            v = _nonlin(v @ q.T)
        return v

    def invert(self, observations, tol=1e-12, max_iter=50):
        """Recover (state encoding, noise) from observations."""
        v = np.atleast_2d(np.asarray(observations, dtype=np.float64))
        for q in reversed(self.matrices):
            v = _nonlin_inverse(v, tol=tol, max_iter=max_iter) @ q
        return v[:, : self.encoded_dim], v[:, self.encoded_dim:]

    def invert_to_state(self, observations):
        enc, noise = self.invert(observations)
        return F.decode_state(self.factors, enc), noise

    def sample_noise(self, rng, n):
        return rng.uniform(-1.0, 1.0, size=(n, self.noise_dim))


def _orthogonal(rng, n):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def _nonlin(x):
    return x + TANH_GAIN * np.tanh(x)


def _nonlin_inverse(y, tol, max_iter):
    x = y.copy()
    for _ in range(max_iter):
        t = np.tanh(x)
        resid = x + TANH_GAIN * t - y
        if np.max(np.abs(resid)) <= tol:
            return x
        x -= resid / (1.0 + TANH_GAIN * (1.0 - t * t))
    raise ObservationMapError("Newton inversion did not converge; "
                              "observation not produced by this map?")
