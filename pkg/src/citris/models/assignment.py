"""Learned latent-to-block assignment via a Gumbel-Softmax relaxation.

Each latent dimension carries a categorical over blocks {0..K}: block 0 is
the intervention-independent slot, block i >= 1 belongs to target i. During
training a soft assignment is sampled fresh per batch; at evaluation the
argmax per row gives a total hard assignment (exact ties resolve to the
lowest block index via argmax's first-occurrence rule).
"""

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.distributions import gumbel_softmax_sample


class AssignmentPsi:
    def __init__(self, store, n_latents, n_targets, temperature=1.0,
                 lr_scale=1.0, block0_bias=0.0):
        self.n_latents = n_latents
        self.n_targets = n_targets
        self.temperature = float(temperature)
        init = np.zeros((n_latents, n_targets + 1))
        init[:, 0] = block0_bias
        self.logits = store.add("psi.logits", init, lr_scale=lr_scale)

    def sample_soft(self, rng, batch=None):
        """Soft assignment sample(s), rows sum to 1 over blocks.

        With ``batch=None`` one (n_latents, K+1) matrix is shared by the
        whole batch; otherwise a (batch, n_latents, K+1) tensor carries an
        independent sample per row, which cuts the assignment-gradient
        variance by roughly the batch size.
        """
        if batch is None:
            return gumbel_softmax_sample(self.logits, self.temperature, rng)
        tiled = T.reshape(self.logits, (1, self.n_latents, self.n_targets + 1))
        logits = tiled * np.ones((batch, 1, 1))
        return gumbel_softmax_sample(logits, self.temperature, rng)

    def probabilities(self):
        x = self.logits.data / self.temperature
        x = x - x.max(axis=1, keepdims=True)
        e = np.exp(x)
        return e / e.sum(axis=1, keepdims=True)

    def hard(self):
        return self.logits.data.argmax(axis=1)

    def one_hot_hard(self):
        h = self.hard()
        out = np.zeros((self.n_latents, self.n_targets + 1))
        out[np.arange(self.n_latents), h] = 1.0
        return out

    def entropy(self):
        p = self.probabilities()
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(p), 0.0)
        return float(-terms.sum(axis=1).mean())

    def peak_fraction(self, threshold=0.99):
        """Fraction of latents whose max block probability exceeds threshold."""
        return float((self.probabilities().max(axis=1) >= threshold).mean())


def blocks_from_assignment(hard, n_targets):
    """Block id -> list of latent dims, for all blocks 0..K (may be empty)."""
    return {i: np.flatnonzero(hard == i) for i in range(n_targets + 1)}
