"""Deterministic autoencoder pretrained on observations alone.

Trained with plain MSE; small Gaussian noise is added to the latents before
decoding during training only, keeping the latent distribution from
collapsing onto delta peaks. After pretraining the weights are frozen and a
normalizing flow disentangles the latent space.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..diffcore import tensor as T
from ..diffcore.nn import MLP
from ..diffcore.optim import ParamStore, warmup_cosine_lr
from ..scmsim.rng import stream
from .validation import check_array, check_is_fitted


class StateAutoencoder(BaseEstimator, TransformerMixin):
    checkpoint_kind = "ae"

    def __init__(self, latent_dim=16, hidden_dim=64, latent_noise_std=0.05,
                 learning_rate=1e-3, batch_size=512, epochs=40,
                 warmup_steps=100, seed=0):
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.latent_noise_std = latent_noise_std
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_steps = warmup_steps
        self.seed = seed

    def _build(self, obs_dim):
        store = ParamStore()
        rng = stream(self.seed, 400)
        h, m = self.hidden_dim, self.latent_dim
        self.encoder_ = MLP(store, "enc", rng, [obs_dim, h, h, m])
        self.decoder_ = MLP(store, "dec", rng, [m, h, h, obs_dim])
        self.store_ = store
        self.obs_dim_ = obs_dim

    def fit(self, X, y=None, log_fn=None):
        X = check_array(X)
        self._build(X.shape[1])
        n = X.shape[0]
        rng = stream(self.seed, 401)
        per_epoch = (n + self.batch_size - 1) // self.batch_size
        total = per_epoch * self.epochs
        history = []
        step = 0
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                lr = warmup_cosine_lr(step, total, self.learning_rate,
                                      self.warmup_steps)
                x = X[idx]
                z = self.encoder_(T.constant(x))
                z_noisy = z + rng.normal(0.0, self.latent_noise_std,
                                         size=(len(idx), self.latent_dim))
                x_hat = self.decoder_(z_noisy)
                loss = T.mean(T.sum_last(T.square(x_hat - T.constant(x))))
                loss.backward()
                self.store_.adam_step(lr)
                self.store_.zero_grad()
                entry = {"step": step, "loss": float(loss.item()), "lr": lr}
                history.append(entry)
                if log_fn is not None:
                    log_fn(entry)
                step += 1
        self.history_ = history
        return self

    def transform(self, X):
        """Deterministic latents; pretraining noise is never applied here."""
        check_is_fitted(self, "store_")
        return self.encoder_(T.constant(check_array(X))).data.copy()

    def inverse_transform(self, Z):
        check_is_fitted(self, "store_")
        return self.decoder_(T.constant(check_array(Z))).data.copy()

    def reconstruction_mse(self, X):
        X = check_array(X)
        x_hat = self.inverse_transform(self.transform(X))
        return float(np.mean(np.sum((x_hat - X) ** 2, axis=1)))

    def save(self, path):
        from .checkpoint import save_checkpoint
        save_checkpoint(path, self)

    @classmethod
    def load(cls, path):
        from .checkpoint import load_checkpoint
        est = load_checkpoint(path)
        if not isinstance(est, cls):
            raise TypeError(f"checkpoint holds {type(est).__name__}")
        return est

    def _fitted_meta(self):
        return {"obs_dim": self.obs_dim_,
                "step_count": int(self.store_.step_count)}

    def _restore(self, meta, arrays):
        self._build(meta["obs_dim"])
        self.store_.load_state_arrays(arrays)
        self.store_.step_count = meta["step_count"]
        return self
