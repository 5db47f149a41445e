"""Intervention-target classifier and its two-sided training losses.

The classifier reads [z_t, z_{t+1} masked to one block, the block mask] and
predicts all intervention targets. Its own parameters train against the true
targets (inputs detached). The latents and assignment train against a mixed
label: the block's own target keeps its true value, every other target is
replaced by its empirical conditional marginal, so a block is pushed to be
informative about exactly one intervention bit.
"""

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.distributions import bernoulli_cross_entropy
from ..diffcore.nn import linear_init


class TargetClassifier:
    """Single hidden layer (width 128) with layer normalization and SiLU."""

    def __init__(self, store, name, rng, n_latents, n_targets, hidden=128):
        self.n_latents = n_latents
        self.n_targets = n_targets
        in_dim = 3 * n_latents
        w1, b1 = linear_init(rng, in_dim, hidden)
        w2, b2 = linear_init(rng, hidden, n_targets)
        self.w1 = store.add(f"{name}.l0.w", w1)
        self.b1 = store.add(f"{name}.l0.b", b1)
        self.gain = store.add(f"{name}.ln.gain", np.ones(hidden))
        self.bias = store.add(f"{name}.ln.bias", np.zeros(hidden))
        self.w2 = store.add(f"{name}.l1.w", w2)
        self.b2 = store.add(f"{name}.l1.b", b2)

    def logits(self, inputs, freeze=False):
        """Forward pass; ``freeze=True`` treats the weights as constants so
        gradients flow into the inputs only."""
        def p(t):
            return t.detach() if freeze else t

        h = T.matmul(inputs, p(self.w1)) + p(self.b1)
        mu = T.mean_last(h)
        centered = h - T.reshape(mu, mu.shape + (1,))
        var = T.mean_last(T.square(centered))
        normed = centered / T.reshape(T.sqrt(var + 1e-5), var.shape + (1,))
        h = T.silu(normed * p(self.gain) + p(self.bias))
        return T.matmul(h, p(self.w2)) + p(self.b2)


def conditional_marginals(interventions):
    """Empirical p(I_j = 1 | I_i = v) table, shape (K, 2, K), plus marginals.

    Estimated once from the training targets. Conditioning values that never
    occur fall back to the unconditional marginal.
    """
    I = np.asarray(interventions, dtype=np.float64)
    k = I.shape[1]
    marginal = I.mean(axis=0)
    table = np.empty((k, 2, k))
    for i in range(k):
        for v in (0, 1):
            rows = I[I[:, i] == v]
            table[i, v] = rows.mean(axis=0) if len(rows) else marginal
    return table, marginal


def classifier_losses(clf, z_prev, z_next, interventions, assignment,
                      marginal_table, marginal):
    """(classifier loss, latent/assignment loss) for one batch.

    The first trains only the classifier (detached inputs); the second only
    the latents and assignment (frozen classifier weights). All K+1 block
    views are stacked into a single pass.
    """
    from .transition import assignment_big_mask

    batch = z_prev.shape[0]
    I = np.asarray(interventions, dtype=np.float64)
    k = clf.n_targets
    n_blocks = k + 1

    big_mask = assignment_big_mask(assignment, n_blocks, batch)
    z_prev_t = T.tile_rows(z_prev, n_blocks)
    masked_next = T.tile_rows(z_next, n_blocks) * big_mask
    live = T.concat([z_prev_t, masked_next, big_mask], axis=-1)

    truth = np.tile(I, (n_blocks, 1))
    ce_true = bernoulli_cross_entropy(clf.logits(live.detach()), truth)
    loss_clf = T.mean(T.sum_last(ce_true)) * n_blocks

    # block 0 pushes every target to its marginal; block i keeps its own
    # target's truth and pushes the rest to p(I_j | I_i)
    labels = np.repeat(marginal[None, :], n_blocks * batch, axis=0)
    for i in range(1, n_blocks):
        own = I[:, i - 1].astype(int)
        rows = marginal_table[i - 1, own, :].copy()
        rows[:, i - 1] = I[:, i - 1]
        labels[i * batch:(i + 1) * batch] = rows
    ce_soft = bernoulli_cross_entropy(clf.logits(live, freeze=True), labels)
    loss_latents = T.mean(T.sum_last(ce_soft)) * n_blocks
    return loss_clf, loss_latents
