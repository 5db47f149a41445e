"""Transition priors over latents: the block-factorized autoregressive prior
and the unstructured baseline prior.

The factorized prior evaluates one autoregressive pass per block i, feeding
the block-masked next-step latents as autoregressive input and conditioning
on the previous latents, the single intervention bit I_i (structurally zero
for block 0), and the block's mask row. Flipping any other bit I_j cannot
change block i's output, bit for bit, because I_j never enters the pass. The
K+1 passes are stacked into one batch for speed; soft assignment masks stay
differentiable, which is how the assignment logits receive gradient from the
density terms.
"""

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.distributions import (clamp_log_sigma, gaussian_log_prob,
                                      kl_diag_gaussian)
from ..diffcore.nn import MADE, MLP


def assignment_big_mask(assignment, n_blocks, batch):
    """Stacked per-block mask rows, shape (n_blocks*batch, n_latents).

    Accepts a shared (n_latents, n_blocks) assignment or a per-sample
    (batch, n_latents, n_blocks) tensor; segments are block-major to match
    ``tile_rows``.
    """
    a = T.constant(assignment)
    if len(a.shape) == 2:
        expand = np.repeat(np.eye(n_blocks), batch, axis=0)
        return T.matmul(T.constant(expand), T.transpose2d(a))
    cols = [T.reshape(T.slice_last(a, i, i + 1), (batch, a.shape[1]))
            for i in range(n_blocks)]
    return T.concat(cols, axis=0)


class TransitionPrior:
    def __init__(self, store, name, rng, n_latents, n_targets,
                 units_per_dim=16, n_hidden_layers=2):
        self.n_latents = n_latents
        self.n_targets = n_targets
        # conditioning: previous latents + one intervention bit + mask row
        cond_dim = n_latents + 1 + n_latents
        self.made = MADE(store, name, rng, n_dims=n_latents, cond_dim=cond_dim,
                         units_per_dim=units_per_dim,
                         n_hidden_layers=n_hidden_layers)

    def _stacked_inputs(self, z_next, z_prev, interventions, assignment,
                        prev_masks=None):
        """Tile the batch once per block and build per-segment conditioning."""
        batch = z_next.shape[0]
        n_blocks = self.n_targets + 1
        big_mask = assignment_big_mask(assignment, n_blocks, batch)
        z_next_t = T.tile_rows(z_next, n_blocks)
        z_prev_t = T.tile_rows(z_prev, n_blocks)
        if prev_masks is not None:
            z_prev_t = T.mask_mul(z_prev_t, np.repeat(prev_masks, batch, axis=0))
        I = np.asarray(interventions, dtype=np.float64)
        bits = np.zeros((n_blocks * batch, 1))
        for i in range(1, n_blocks):
            bits[i * batch:(i + 1) * batch, 0] = I[:, i - 1]
        z_in = z_next_t * big_mask
        cond = T.concat([z_prev_t, T.constant(bits), big_mask], axis=-1)
        mu, ls = self.made(z_in, cond)
        return z_next_t, mu, clamp_log_sigma(ls), big_mask, batch, n_blocks

    @staticmethod
    def _per_block(values, batch, n_blocks):
        """((n_blocks*B,)) -> (B, n_blocks) column per block."""
        return T.transpose2d(T.reshape(values, (n_blocks, batch)))

    def log_prob_blocks(self, z_next, z_prev, interventions, assignment,
                        prev_masks=None):
        """Per-block log-likelihood, shape (batch, K+1).

        ``assignment`` is an (n_latents, K+1) matrix with probability rows:
        soft during training, one-hot at evaluation. Each latent's Gaussian
        term is weighted by its block membership, so with a hard assignment
        the block values sum to the total latent log-likelihood.
        """
        z_next_t, mu, ls, big_mask, batch, n_blocks = self._stacked_inputs(
            z_next, z_prev, interventions, assignment, prev_masks)
        lp = T.sum_last(gaussian_log_prob(z_next_t, mu, ls) * big_mask)
        return self._per_block(lp, batch, n_blocks)

    def kl_blocks(self, q_mu, q_log_sigma, z_next_sample, z_prev,
                  interventions, assignment):
        """Per-block KL(q || p), shape (batch, K+1).

        The prior's per-latent parameters are evaluated on the sampled
        next-step latents (the autoregressive context), after which every
        latent admits a closed-form Gaussian KL.
        """
        _, mu_p, ls_p, big_mask, batch, n_blocks = self._stacked_inputs(
            z_next_sample, z_prev, interventions, assignment)
        q_mu_t = T.tile_rows(q_mu, n_blocks)
        q_ls_t = T.tile_rows(q_log_sigma, n_blocks)
        kl = T.sum_last(kl_diag_gaussian(q_mu_t, q_ls_t, mu_p, ls_p) * big_mask)
        return self._per_block(kl, batch, n_blocks)


class BaselinePrior:
    """Unstructured conditional Gaussian p(z_next | z_prev, I): an MLP head
    over the concatenated conditioning, no block structure, no masking.
    Flipping any intervention bit may move every latent's likelihood."""

    def __init__(self, store, name, rng, n_latents, n_targets, hidden=128):
        self.n_latents = n_latents
        self.n_targets = n_targets
        self.net = MLP(store, name, rng,
                       [n_latents + n_targets, hidden, hidden, 2 * n_latents])

    def params(self, z_prev, interventions):
        if self.n_targets > 0:
            cond = T.concat([z_prev, T.constant(np.asarray(interventions,
                                                           dtype=np.float64))],
                            axis=-1)
        else:
            cond = z_prev
        out = self.net(cond)
        mu = T.slice_last(out, 0, self.n_latents)
        ls = clamp_log_sigma(T.slice_last(out, self.n_latents, 2 * self.n_latents))
        return mu, ls

    def log_prob(self, z_next, z_prev, interventions):
        mu, ls = self.params(z_prev, interventions)
        return T.sum_last(gaussian_log_prob(z_next, mu, ls))

    def kl(self, q_mu, q_log_sigma, z_prev, interventions):
        mu, ls = self.params(z_prev, interventions)
        return T.sum_last(kl_diag_gaussian(q_mu, q_log_sigma, mu, ls))
