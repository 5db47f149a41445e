"""Variational models over temporal intervened sequences.

``CitrisVAE`` learns a Gaussian encoder/decoder, a latent-to-block
assignment, a block-factorized autoregressive transition prior, and an
auxiliary intervention-target classifier. ``IVAEStar`` is the ablation that
conditions a single unstructured prior on (z_t, I_{t+1}) with no assignment
and no classifier. Both follow the scikit-learn estimator protocol:
hyperparameters in ``__init__``, fitted state on trailing-underscore
attributes, ``fit(X, interventions)`` over an observation sequence.
"""

import numpy as np
from sklearn.base import BaseEstimator

from ..diffcore import tensor as T
from ..diffcore.distributions import clamp_log_sigma
from ..diffcore.nn import MLP
from ..diffcore.optim import ParamStore, warmup_cosine_lr
from ..scmsim.rng import stream
from .assignment import AssignmentPsi
from .classifier import TargetClassifier, classifier_losses, conditional_marginals
from .transition import BaselinePrior, TransitionPrior
from .validation import check_array, check_is_fitted, check_sequence_pair


class TrainingError(RuntimeError):
    pass


def reparameterize(mu, log_sigma, rng):
    eps = rng.standard_normal(mu.shape)
    return mu + T.exp(log_sigma) * eps


class GaussianEncoder:
    def __init__(self, store, name, rng, obs_dim, latent_dim, hidden):
        self.latent_dim = latent_dim
        self.net = MLP(store, name, rng, [obs_dim, hidden, hidden, 2 * latent_dim])

    def __call__(self, x):
        out = self.net(x)
        mu = T.slice_last(out, 0, self.latent_dim)
        ls = clamp_log_sigma(T.slice_last(out, self.latent_dim,
                                          2 * self.latent_dim))
        return mu, ls


def _iterate_batches(n, batch_size, epochs, rng):
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def _total_steps(n, batch_size, epochs):
    per_epoch = (n + batch_size - 1) // batch_size
    return per_epoch * epochs


class CitrisVAE(BaseEstimator):
    """Causally disentangling VAE over (x_t, x_{t+1}, I_{t+1}) tuples.

    Parameters mirror the reference configuration: KL weight ``beta``,
    block-0 down-weighting ``lambda_noncausal``, classifier weight 2.0,
    Gumbel-Softmax temperature 1.0, Adam at 1e-3 with 100 warmup steps.
    """

    checkpoint_kind = "vae"

    def __init__(self, latent_dim=8, hidden_dim=64, beta=1.0,
                 lambda_noncausal=0.01, classifier_weight=2.0,
                 classifier_hidden=128, temperature=1.0, prior_units=16,
                 recon_weight=1.0, psi_lr_scale=1.0, per_sample_assignment=True,
                 psi_delay_frac=0.15, learning_rate=1e-3, batch_size=512,
                 epochs=30, warmup_steps=100, seed=0):
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.beta = beta
        self.lambda_noncausal = lambda_noncausal
        self.classifier_weight = classifier_weight
        self.classifier_hidden = classifier_hidden
        self.temperature = temperature
        self.prior_units = prior_units
        self.recon_weight = recon_weight
        self.psi_lr_scale = psi_lr_scale
        self.per_sample_assignment = per_sample_assignment
        self.psi_delay_frac = psi_delay_frac
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_steps = warmup_steps
        self.seed = seed

    # -- construction -----------------------------------------------------

    def _build(self, obs_dim, n_targets):
        store = ParamStore()
        rng = stream(self.seed, 100)
        m = self.latent_dim
        self.encoder_ = GaussianEncoder(store, "enc", rng, obs_dim, m,
                                        self.hidden_dim)
        self.decoder_ = MLP(store, "dec", rng, [m, self.hidden_dim,
                                                self.hidden_dim, obs_dim])
        self.psi_ = AssignmentPsi(store, m, n_targets, self.temperature,
                                  lr_scale=self.psi_lr_scale)
        self.prior_ = TransitionPrior(store, "prior", rng, m, n_targets,
                                      units_per_dim=self.prior_units)
        self.classifier_ = TargetClassifier(store, "clf", rng, m, n_targets,
                                            hidden=self.classifier_hidden)
        self.store_ = store
        self.obs_dim_ = obs_dim
        self.n_targets_ = n_targets

    # -- loss -------------------------------------------------------------

    def _block_weights(self):
        w = np.ones(self.n_targets_ + 1)
        w[0] = 1.0 - self.lambda_noncausal
        return w

    def _loss_terms(self, x_t, x_n, i_n, rng, assignment=None):
        mu_t, ls_t = self.encoder_(T.constant(x_t))
        z_t = reparameterize(mu_t, ls_t, rng)
        z_t_detached = z_t.detach()
        mu_n, ls_n = self.encoder_(T.constant(x_n))
        z_n = reparameterize(mu_n, ls_n, rng)

        x_hat = self.decoder_(z_n)
        recon = T.mean(T.sum_last(T.square(x_hat - T.constant(x_n)))) \
            * self.recon_weight

        if assignment is not None:
            soft = assignment
        else:
            batch = x_t.shape[0] if self.per_sample_assignment else None
            soft = self.psi_.sample_soft(rng, batch=batch)
        kl_cols = self.prior_.kl_blocks(mu_n, ls_n, z_n, z_t_detached, i_n, soft)
        kl = T.mean(T.sum_last(kl_cols * self._block_weights()))

        loss_clf, loss_lat = classifier_losses(
            self.classifier_, z_t, z_n, i_n, soft,
            self._marginal_table_, self._marginal_)
        return recon, kl, loss_clf, loss_lat

    def _batch_loss(self, x_t, x_n, i_n, rng):
        recon, kl, loss_clf, loss_lat = self._loss_terms(x_t, x_n, i_n, rng)
        total = recon + self.beta * kl \
            + self.classifier_weight * (loss_clf + loss_lat)
        parts = {"recon": recon.item(), "kl": kl.item(),
                 "classifier": loss_clf.item(), "latents": loss_lat.item()}
        return total, parts

    # -- estimator API ------------------------------------------------------

    def fit(self, X, interventions, log_fn=None):
        X, I = check_sequence_pair(X, interventions)
        self._build(X.shape[1], I.shape[1])
        self._marginal_table_, self._marginal_ = conditional_marginals(I)
        x_t, x_n, i_n = X[:-1], X[1:], I[1:]
        _run_training(self, x_t, x_n, i_n, log_fn)
        return self

    def transform(self, X):
        """Posterior means of the latents for each observation."""
        check_is_fitted(self, "store_")
        X = check_array(X)
        mu, _ = self.encoder_(T.constant(X))
        return mu.data.copy()

    def inverse_transform(self, Z):
        check_is_fitted(self, "store_")
        Z = check_array(Z)
        return self.decoder_(T.constant(Z)).data.copy()

    def encode_params(self, X):
        check_is_fitted(self, "store_")
        mu, ls = self.encoder_(T.constant(check_array(X)))
        return mu.data.copy(), ls.data.copy()

    def hard_assignment(self):
        check_is_fitted(self, "store_")
        return self.psi_.hard()

    def prior_log_prob_blocks(self, z_next, z_prev, interventions,
                              assignment=None):
        """Per-block prior log-likelihood with a hard (or given) assignment."""
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
            raise TypeError(f"checkpoint holds {type(est).__name__}, not {cls.__name__}")
        return est

    # checkpoint plumbing
    def _fitted_meta(self):
        return {"obs_dim": self.obs_dim_, "n_targets": self.n_targets_,
                "step_count": int(self.store_.step_count),
                "marginal_table": self._marginal_table_.tolist(),
                "marginal": self._marginal_.tolist()}

    def _restore(self, meta, arrays):
        self._build(meta["obs_dim"], meta["n_targets"])
        self._marginal_table_ = np.asarray(meta["marginal_table"])
        self._marginal_ = np.asarray(meta["marginal"])
        self.store_.load_state_arrays(arrays)
        self.store_.step_count = meta["step_count"]
        return self


class IVAEStar(BaseEstimator):
    """Baseline with an unstructured conditional prior and no assignment."""

    checkpoint_kind = "ivae-star"

    def __init__(self, latent_dim=8, hidden_dim=64, beta=1.0, prior_hidden=128,
                 learning_rate=1e-3, batch_size=512, epochs=30,
                 warmup_steps=100, seed=0):
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.beta = beta
        self.prior_hidden = prior_hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_steps = warmup_steps
        self.seed = seed

    def _build(self, obs_dim, n_targets):
        store = ParamStore()
        rng = stream(self.seed, 200)
        m = self.latent_dim
        self.encoder_ = GaussianEncoder(store, "enc", rng, obs_dim, m,
                                        self.hidden_dim)
        self.decoder_ = MLP(store, "dec", rng, [m, self.hidden_dim,
                                                self.hidden_dim, obs_dim])
        self.prior_ = BaselinePrior(store, "prior", rng, m, n_targets,
                                    hidden=self.prior_hidden)
        self.store_ = store
        self.obs_dim_ = obs_dim
        self.n_targets_ = n_targets

    def _batch_loss(self, x_t, x_n, i_n, rng):
        mu_t, ls_t = self.encoder_(T.constant(x_t))
        z_t = reparameterize(mu_t, ls_t, rng).detach()
        mu_n, ls_n = self.encoder_(T.constant(x_n))
        z_n = reparameterize(mu_n, ls_n, rng)
        x_hat = self.decoder_(z_n)
        recon = T.mean(T.sum_last(T.square(x_hat - T.constant(x_n))))
        kl = T.mean(self.prior_.kl(mu_n, ls_n, z_t, i_n))
        total = recon + self.beta * kl
        return total, {"recon": recon.item(), "kl": kl.item()}

    def fit(self, X, interventions, log_fn=None):
        X, I = check_sequence_pair(X, interventions)
        self._build(X.shape[1], I.shape[1])
        _run_training(self, X[:-1], X[1:], I[1:], log_fn)
        return self

    def transform(self, X):
        check_is_fitted(self, "store_")
        mu, _ = self.encoder_(T.constant(check_array(X)))
        return mu.data.copy()

    def inverse_transform(self, Z):
        check_is_fitted(self, "store_")
        return self.decoder_(T.constant(check_array(Z))).data.copy()

    def prior_log_prob(self, z_next, z_prev, interventions):
        check_is_fitted(self, "store_")
        return self.prior_.log_prob(T.constant(z_next), T.constant(z_prev),
                                    interventions).data.copy()

    def hard_assignment(self):
        return None

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
        return {"obs_dim": self.obs_dim_, "n_targets": self.n_targets_,
                "step_count": int(self.store_.step_count)}

    def _restore(self, meta, arrays):
        self._build(meta["obs_dim"], meta["n_targets"])
        self.store_.load_state_arrays(arrays)
        self.store_.step_count = meta["step_count"]
        return self


def _run_training(model, x_t, x_n, i_n, log_fn):
    n = x_t.shape[0]
    rng = stream(model.seed, 300)
    total_steps = _total_steps(n, model.batch_size, model.epochs)
    # hold the assignment still until the classifier has a usable signal
    psi_release = int(getattr(model, "psi_delay_frac", 0.0) * total_steps)
    if psi_release > 0:
        model.store_.set_lr_scale("psi.logits", 0.0)
    history = []
    step = 0
    for idx in _iterate_batches(n, model.batch_size, model.epochs, rng):
        if psi_release > 0 and step == psi_release:
            model.store_.set_lr_scale("psi.logits", model.psi_lr_scale)
        lr = warmup_cosine_lr(step, total_steps, model.learning_rate,
                              model.warmup_steps)
        try:
            loss, parts = model._batch_loss(x_t[idx], x_n[idx], i_n[idx], rng)
            loss.backward()
        except FloatingPointError as err:
            raise TrainingError(
                f"non-finite loss at step {step}: {err}") from err
        model.store_.adam_step(lr)
        model.store_.zero_grad()
        entry = {"step": step, "loss": float(loss.item()), "lr": lr, **parts}
        if isinstance(model, CitrisVAE):
            entry["psi_entropy"] = model.psi_.entropy()
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)
        step += 1
    model.history_ = history
    return model
