"""Temporal causal graph recovery over latent blocks.

Edge probabilities between blocks are parameterized by a logit matrix gamma
with sigma(gamma[i, j]) the probability of block i at time t parenting block
j at time t+1. A masked autoregressive prior is fitted under graphs sampled
from the current probabilities, and gamma ascends a likelihood-difference
estimator on held-out data: for each edge, the per-target negative
log-likelihood with the edge forced off minus forced on (common random
numbers across the pair), minus a constant sparsity penalty. Edges whose
presence reduces held-out NLL grow; uninformative edges decay below 0.5.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .diffcore import tensor as T
from .diffcore.optim import ParamStore, warmup_cosine_lr
from .models.assignment import blocks_from_assignment
from .models.transition import TransitionPrior
from .models.validation import check_array, check_is_fitted
from .scmsim.rng import stream


def _sigmoid(x):
    return 0.5 * np.tanh(0.5 * x) + 0.5


class GraphLearner(BaseEstimator):
    """Fits edge probabilities for z_block_i^t -> z_block_j^{t+1}."""

    def __init__(self, rounds=100, sparsity=0.05, gamma_lr=1.0,
                 mask_samples=2, units_per_dim=16, learning_rate=1e-3,
                 batch_size=512, heldout_fraction=0.25, heldout_batch=512,
                 gamma_clip=6.0, seed=0):
        self.rounds = rounds
        self.sparsity = sparsity
        self.gamma_lr = gamma_lr
        self.mask_samples = mask_samples
        self.units_per_dim = units_per_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.heldout_fraction = heldout_fraction
        self.heldout_batch = heldout_batch
        self.gamma_clip = gamma_clip
        self.seed = seed

    # -- internals ---------------------------------------------------------

    def _latent_masks(self, block_masks):
        """Block-level parent masks (n_blocks, n_blocks) -> latent level.

        Row i gives the mask applied to z^t when predicting target block i:
        latent j is visible iff its block is a sampled parent of block i.
        """
        return block_masks[:, self._assignment_blocks].astype(np.float64)

    def _nll_blocks(self, z_next, z_prev, interventions, block_masks):
        prev_masks = self._latent_masks(block_masks)
        lp = self.prior_.log_prob_blocks(
            T.constant(z_next), T.constant(z_prev), interventions,
            self._one_hot, prev_masks=prev_masks)
        return lp

    def _fit_prior_round(self, z_t, z_n, i_n, rng, lr):
        n = z_t.shape[0]
        order = rng.permutation(n)
        probs = _sigmoid(self.gamma_)
        for start in range(0, n, self.batch_size):
            idx = order[start:start + self.batch_size]
            block_masks = (rng.random(self.gamma_.shape) < probs).T
            # row i of block_masks: parents of target block i
            lp = self._nll_blocks(z_n[idx], z_t[idx], i_n[idx], block_masks)
            loss = T.neg(T.mean(T.sum_last(lp)))
            loss.backward()
            self.store_.adam_step(lr)
            self.store_.zero_grad()

    def _gamma_round(self, z_t, z_n, i_n, rng):
        n_blocks = self.n_blocks_
        idx = rng.choice(z_t.shape[0], size=min(self.heldout_batch,
                                                z_t.shape[0]), replace=False)
        zt, zn, ii = z_t[idx], z_n[idx], i_n[idx]
        grad = np.zeros_like(self.gamma_)
        probs = _sigmoid(self.gamma_)
        for _ in range(self.mask_samples):
            base = rng.random((n_blocks, n_blocks)) < probs  # [parent, child]
            for parent in range(n_blocks):
                on = base.copy()
                off = base.copy()
                on[parent, :] = True
                off[parent, :] = False
                nll_on = -self._nll_blocks(zn, zt, ii, on.T).data.mean(axis=0)
                nll_off = -self._nll_blocks(zn, zt, ii, off.T).data.mean(axis=0)
                grad[parent, :] += (nll_off - nll_on) - self.sparsity
        grad /= self.mask_samples
        sig_prime = probs * (1.0 - probs)
        self.gamma_ += self.gamma_lr * sig_prime * grad
        np.clip(self.gamma_, -self.gamma_clip, self.gamma_clip, out=self.gamma_)

    # -- estimator API -------------------------------------------------------

    def fit(self, Z, interventions, assignment, log_fn=None):
        """Learn the block graph from a latent sequence.

        ``Z`` is the (T, M) latent sequence of a frozen model (or raw causal
        states in oracle mode), ``interventions`` the aligned (T, K) targets,
        ``assignment`` the per-latent block ids.
        """
        Z = check_array(Z)
        I = np.asarray(interventions, dtype=np.float64)
        assignment = np.asarray(assignment, dtype=int)
        if assignment.shape != (Z.shape[1],):
            raise ValueError("assignment must give one block per latent dim")
        n_targets = I.shape[1]
        self.n_blocks_ = n_targets + 1
        self._assignment_blocks = assignment
        self._one_hot = np.zeros((Z.shape[1], self.n_blocks_))
        self._one_hot[np.arange(Z.shape[1]), assignment] = 1.0

        store = ParamStore()
        rng = stream(self.seed, 800)
        self.prior_ = TransitionPrior(store, "masked_prior", rng, Z.shape[1],
                                      n_targets,
                                      units_per_dim=self.units_per_dim)
        self.store_ = store
        self.gamma_ = np.zeros((self.n_blocks_, self.n_blocks_))

        z_t, z_n, i_n = Z[:-1], Z[1:], I[1:]
        cut = int(len(z_t) * (1.0 - self.heldout_fraction))
        train = slice(0, cut)
        held = slice(cut, len(z_t))
        for rnd in range(self.rounds):
            lr = warmup_cosine_lr(rnd, self.rounds, self.learning_rate,
                                  warmup_steps=5)
            self._fit_prior_round(z_t[train], z_n[train], i_n[train], rng, lr)
            self._gamma_round(z_t[held], z_n[held], i_n[held], rng)
            if log_fn is not None:
                log_fn({"round": rnd,
                        "edge_probs": _sigmoid(self.gamma_).tolist()})
        self.edge_probabilities_ = _sigmoid(self.gamma_)
        self.graph_ = self.edge_probabilities_ > 0.5  # boundary excluded
        return self

    def factor_graph(self):
        """Adjacency over named factor blocks (block 0 excluded)."""
        check_is_fitted(self, "graph_")
        return self.graph_[1:, 1:]

    def result(self, reference=None):
        check_is_fitted(self, "graph_")
        out = {
            "edge_probabilities": self.edge_probabilities_.tolist(),
            "adjacency": self.graph_.astype(int).tolist(),
            "factor_adjacency": self.factor_graph().astype(int).tolist(),
        }
        if reference is not None:
            out["reference"] = np.asarray(reference, dtype=float).astype(int).tolist()
            out["shd"] = int(shd(self.factor_graph(), reference))
        return out


def shd(graph, reference):
    """Structural Hamming distance: edge disagreements, no orientation
    ambiguity in a temporal graph."""
    g = np.asarray(graph, dtype=bool)
    r = np.asarray(reference, dtype=bool)
    if g.shape != r.shape:
        raise ValueError(f"graph shapes differ: {g.shape} vs {r.shape}")
    return int(np.sum(g != r))
