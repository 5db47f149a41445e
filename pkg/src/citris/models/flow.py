"""Normalizing flow that disentangles a frozen autoencoder's latent space.

The flow maps entangled latents v to a causal space z through blocks of
activation normalization, an LU-parameterized invertible linear mixing, and
an affine autoregressive transform, with a fixed index reversal between
blocks so dependence directions alternate. Training maximizes the
block-factorized transition likelihood of the flowed latents plus the flow's
log-determinant, with the same assignment and target-classifier machinery as
the VAE.
"""

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from ..diffcore import tensor as T
from ..diffcore.nn import MADE
from ..diffcore.optim import ParamStore, warmup_cosine_lr
from ..scmsim.rng import stream
from .assignment import AssignmentPsi
from .classifier import TargetClassifier, classifier_losses, conditional_marginals
from .transition import TransitionPrior
from .validation import check_is_fitted, check_array, check_sequence_pair

SCALE_CLAMP = 5.0


class ActNorm:
    """Per-dim shift and log-scale, initialized from the first batch so the
    outputs start at zero mean and unit variance."""

    def __init__(self, store, name, dim):
        self.shift = store.add(f"{name}.shift", np.zeros(dim))
        self.log_scale = store.add(f"{name}.log_scale", np.zeros(dim))
        self.initialized = False

    def initialize_from(self, v):
        self.shift.data[:] = v.mean(axis=0)
        self.log_scale.data[:] = np.log(v.std(axis=0) + 1e-8)
        self.initialized = True

    def forward(self, v):
        z = (v - self.shift) * T.exp(T.neg(self.log_scale))
        return z, T.neg(T.tsum(self.log_scale))

    def inverse(self, z):
        return z * np.exp(self.log_scale.data) + self.shift.data


class InvertibleLinear:
    """LU-parameterized square mixing with a fixed permutation, initialized
    from a seeded random rotation."""

    def __init__(self, store, name, rng, dim):
        self.dim = dim
        q = _orthogonal(rng, dim)
        p, l, u = scipy.linalg.lu(q)
        s = np.diag(u)
        self.perm = p
        self.sign = np.sign(s)
        self.lower = store.add(f"{name}.lower", np.tril(l, -1))
        self.upper = store.add(f"{name}.upper", np.triu(u, 1))
        self.log_s = store.add(f"{name}.log_s", np.log(np.abs(s)))
        self.lower_mask = np.tril(np.ones((dim, dim)), -1)
        self.upper_mask = np.triu(np.ones((dim, dim)), 1)

    def _weight(self):
        l = T.mask_mul(self.lower, self.lower_mask) + np.eye(self.dim)
        u = T.mask_mul(self.upper, self.upper_mask) \
            + T.diag_embed(T.exp(self.log_s) * self.sign)
        return T.matmul(T.constant(self.perm), T.matmul(l, u))

    def forward(self, v):
        w = self._weight()
        return T.matmul(v, T.transpose2d(w)), T.tsum(self.log_s)

    def inverse(self, z):
        l = np.tril(self.lower.data, -1) + np.eye(self.dim)
        u = np.triu(self.upper.data, 1) + np.diag(self.sign * np.exp(self.log_s.data))
        w = self.perm @ l @ u
        return np.linalg.solve(w, z.T).T


class AffineAutoregressive:
    """Per-dim affine transform conditioned on strictly earlier dims.

    Zero-initialized heads make the layer start as the identity with zero
    log-determinant. Scales are softly clamped to |s| <= 5 pre-exponential.
    """

    def __init__(self, store, name, rng, dim, units_per_dim=16):
        self.dim = dim
        self.made = MADE(store, name, rng, n_dims=dim, cond_dim=0,
                         units_per_dim=units_per_dim, zero_heads=True)

    def forward(self, v):
        mu, s_raw = self.made(v)
        s = T.softclamp(s_raw, -SCALE_CLAMP, SCALE_CLAMP)
        z = (v - mu) * T.exp(T.neg(s))
        return z, T.neg(T.sum_last(s))

    def inverse(self, z):
        v = np.zeros_like(z)
        for d in range(self.dim):
            mu, s_raw = self.made(T.constant(v))
            s = T.softclamp(s_raw, -SCALE_CLAMP, SCALE_CLAMP)
            v[:, d] = z[:, d] * np.exp(s.data[:, d]) + mu.data[:, d]
        return v


class Reverse:
    """Fixed index reversal so successive autoregressive layers mix both
    dependence directions."""

    def forward(self, v):
        return T.flip_last(v), None

    def inverse(self, z):
        return z[:, ::-1].copy()


class Flow:
    def __init__(self, store, rng, dim, n_blocks=4, units_per_dim=16):
        self.dim = dim
        self.layers = []
        for b in range(n_blocks):
            name = f"flow.b{b}"
            self.layers.append(ActNorm(store, f"{name}.actnorm", dim))
            self.layers.append(InvertibleLinear(store, f"{name}.linear", rng, dim))
            self.layers.append(AffineAutoregressive(store, f"{name}.affine", rng,
                                                    dim, units_per_dim))
            if b < n_blocks - 1:
                self.layers.append(Reverse())

    def initialize_actnorm(self, v):
        """Data-dependent init, propagating the first batch layer by layer."""
        h = T.constant(np.asarray(v, dtype=np.float64))
        for layer in self.layers:
            if isinstance(layer, ActNorm) and not layer.initialized:
                layer.initialize_from(h.data)
            h, _ = layer.forward(h)

    def forward(self, v):
        """(z, per-sample log|det dz/dv|)."""
        log_det = None
        h = v
        for layer in self.layers:
            h, ld = layer.forward(h)
            if ld is not None:
                log_det = ld if log_det is None else log_det + ld
        return h, log_det

    def inverse(self, z):
        h = np.asarray(z, dtype=np.float64)
        for layer in reversed(self.layers):
            h = layer.inverse(h)
        return h

    def transform_array(self, v):
        z, _ = self.forward(T.constant(np.asarray(v, dtype=np.float64)))
        return z.data.copy()


def _orthogonal(rng, n):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


class CitrisNF(BaseEstimator):
    """Flow-based disentangler over a frozen pretrained autoencoder."""

    checkpoint_kind = "nf"

    def __init__(self, autoencoder=None, n_blocks=4, beta=1.0,
                 lambda_noncausal=0.1, classifier_weight=2.0,
                 classifier_hidden=128, temperature=1.0, prior_units=16,
                 psi_lr_scale=1.0, per_sample_assignment=True,
                 learning_rate=1e-3, batch_size=512,
                 epochs=30, warmup_steps=100, seed=0):
        self.autoencoder = autoencoder
        self.n_blocks = n_blocks
        self.beta = beta
        self.lambda_noncausal = lambda_noncausal
        self.classifier_weight = classifier_weight
        self.classifier_hidden = classifier_hidden
        self.temperature = temperature
        self.prior_units = prior_units
        self.psi_lr_scale = psi_lr_scale
        self.per_sample_assignment = per_sample_assignment
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_steps = warmup_steps
        self.seed = seed

    @property
    def latent_dim(self):
        return self.autoencoder.latent_dim

    def _build(self, n_targets):
        if self.autoencoder is None or getattr(self.autoencoder, "store_", None) is None:
            raise ValueError("CitrisNF requires a fitted StateAutoencoder")
        store = ParamStore()
        rng = stream(self.seed, 500)
        m = self.latent_dim
        self.flow_ = Flow(store, rng, m, n_blocks=self.n_blocks)
        self.psi_ = AssignmentPsi(store, m, n_targets, self.temperature,
                                  lr_scale=self.psi_lr_scale)
        self.prior_ = TransitionPrior(store, "prior", rng, m, n_targets,
                                      units_per_dim=self.prior_units)
        self.classifier_ = TargetClassifier(store, "clf", rng, m, n_targets,
                                            hidden=self.classifier_hidden)
        self.store_ = store
        self.n_targets_ = n_targets

    def _block_weights(self):
        w = np.ones(self.n_targets_ + 1)
        w[0] = 1.0 - self.lambda_noncausal
        return w

    def _batch_loss(self, v_t, v_n, i_n, rng):
        z_t, _ = self.flow_.forward(T.constant(v_t))
        z_n, log_det = self.flow_.forward(T.constant(v_n))
        z_t_detached = z_t.detach()
        batch = v_t.shape[0] if self.per_sample_assignment else None
        soft = self.psi_.sample_soft(rng, batch=batch)
        lp_blocks = self.prior_.log_prob_blocks(z_n, z_t_detached, i_n, soft)
        weighted = T.sum_last(lp_blocks * self._block_weights())
        nll = T.mean(T.neg(weighted + log_det)) * self.beta
        loss_clf, loss_lat = classifier_losses(
            self.classifier_, z_t, z_n, i_n, soft,
            self._marginal_table_, self._marginal_)
        total = nll + self.classifier_weight * (loss_clf + loss_lat)
        parts = {"nll": nll.item(), "classifier": loss_clf.item(),
                 "latents": loss_lat.item()}
        return total, parts

    def fit(self, X, interventions, log_fn=None):
        X, I = check_sequence_pair(X, interventions)
        self._build(I.shape[1])
        ae_before = {k: a.copy() for k, a in self.autoencoder.store_.state_arrays().items()}
        V = self.autoencoder.transform(X)
        self._marginal_table_, self._marginal_ = conditional_marginals(I)
        v_t, v_n, i_n = V[:-1], V[1:], I[1:]
        self.flow_.initialize_actnorm(v_n[: min(len(v_n), 1024)])

        n = v_t.shape[0]
        rng = stream(self.seed, 501)
        per_epoch = (n + self.batch_size - 1) // self.batch_size
        total_steps = per_epoch * self.epochs
        history = []
        step = 0
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                lr = warmup_cosine_lr(step, total_steps, self.learning_rate,
                                      self.warmup_steps)
                try:
                    loss, parts = self._batch_loss(v_t[idx], v_n[idx],
                                                   i_n[idx], rng)
                    loss.backward()
                except FloatingPointError as err:
                    from .vae import TrainingError
                    raise TrainingError(
                        f"non-finite loss at step {step}: {err}") from err
                self.store_.adam_step(lr)
                self.store_.zero_grad()
                entry = {"step": step, "loss": float(loss.item()), "lr": lr,
                         "psi_entropy": self.psi_.entropy(), **parts}
                history.append(entry)
                if log_fn is not None:
                    log_fn(entry)
                step += 1
        self.history_ = history
        ae_after = self.autoencoder.store_.state_arrays()
        assert all(np.array_equal(ae_before[k], ae_after[k]) for k in ae_before), \
            "autoencoder parameters changed during flow training"
        return self

    def transform(self, X):
        """Disentangled latents: frozen encoder followed by the flow."""
        check_is_fitted(self, "store_")
        return self.flow_.transform_array(self.autoencoder.transform(X))

    def inverse_transform(self, Z):
        check_is_fitted(self, "store_")
        Z = check_array(Z)
        return self.autoencoder.inverse_transform(self.flow_.inverse(Z))

    def hard_assignment(self):
        check_is_fitted(self, "store_")
        return self.psi_.hard()

    def prior_log_prob_blocks(self, z_next, z_prev, interventions,
                              assignment=None):
        check_is_fitted(self, "store_")
        if assignment is None:
            assignment = self.psi_.one_hot_hard()
        out = self.prior_.log_prob_blocks(
            T.constant(z_next), T.constant(z_prev), interventions, assignment)
        return out.data.copy()

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
        return {"n_targets": self.n_targets_,
                "step_count": int(self.store_.step_count),
                "marginal_table": self._marginal_table_.tolist(),
                "marginal": self._marginal_.tolist(),
                "actnorm_initialized": True}

    def _restore(self, meta, arrays):
        self._build(meta["n_targets"])
        self._marginal_table_ = np.asarray(meta["marginal_table"])
        self._marginal_ = np.asarray(meta["marginal"])
        self.store_.load_state_arrays(arrays)
        self.store_.step_count = meta["step_count"]
        for layer in self.flow_.layers:
            if isinstance(layer, ActNorm):
                layer.initialized = True
        return self
