"""Dense network building blocks on top of the autodiff tensors.

All parameters live in a ParamStore so optimizers and checkpoints see a flat
named view. Modules are thin: they hold parameter references plus fixed
metadata (masks, dims) and expose ``__call__`` building the forward graph.
"""

import numpy as np

from . import tensor as T


def linear_init(rng, fan_in, fan_out, scale=1.0):
    """Uniform Kaiming-style init, deterministic under the given generator."""
    bound = scale * np.sqrt(1.0 / max(fan_in, 1))
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return w, b


class Linear:
    def __init__(self, store, name, rng, fan_in, fan_out, scale=1.0, zero_init=False):
        if zero_init:
            w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
        else:
            w, b = linear_init(rng, fan_in, fan_out, scale)
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", b)

    def __call__(self, x):
        return T.matmul(x, self.w) + self.b


class MaskedLinear:
    """Linear layer whose effective weight is ``w * mask`` at every call."""

    def __init__(self, store, name, rng, fan_in, fan_out, mask):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (fan_in, fan_out):
            raise ValueError(f"mask shape {mask.shape} != ({fan_in}, {fan_out})")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        # scale by the effective fan-in per output so magnitudes stay sane
        eff = np.maximum(mask.sum(axis=0), 1.0)
        w = rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)) / np.sqrt(eff)
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", np.zeros(fan_out))
        self.mask = mask

    def __call__(self, x):
        return T.matmul(x, T.mask_mul(self.w, self.mask)) + self.b


class LayerNorm:
    def __init__(self, store, name, dim, eps=1e-5):
        self.gain = store.add(f"{name}.gain", np.ones(dim))
        self.bias = store.add(f"{name}.bias", np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        mu = T.mean_last(x)
        centered = x - T.reshape(mu, mu.shape + (1,))
        var = T.mean_last(T.square(centered))
        std = T.sqrt(var + self.eps)
        normed = centered / T.reshape(std, std.shape + (1,))
        return normed * self.gain + self.bias


class MLP:
    """Plain MLP with SiLU hidden activations and a linear head."""

    def __init__(self, store, name, rng, dims, layer_norm=False, zero_last=False):
        self.layers = []
        self.norms = []
        for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
            last = i == len(dims) - 2
            self.layers.append(
                Linear(store, f"{name}.l{i}", rng, fi, fo, zero_init=zero_last and last)
            )
            if layer_norm and not last:
                self.norms.append(LayerNorm(store, f"{name}.ln{i}", fo))
            else:
                self.norms.append(None)

    def __call__(self, x):
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < n - 1:
                if self.norms[i] is not None:
                    x = self.norms[i](x)
                x = T.silu(x)
        return x


def made_masks(n_dims, units_per_dim, n_hidden_layers, cond_dim):
    """Connectivity masks for an autoregressive network over ``n_dims`` inputs.

    Input column layout is [z_1..z_n, conditioning]. Hidden units come in
    ``n_dims`` groups of ``units_per_dim``; the group for dimension d sees the
    strictly earlier inputs z_1..z_{d-1} plus all conditioning columns. The
    output for dimension d reads groups 1..d, so it depends on z_{<d} only.
    """
    hidden = n_dims * units_per_dim
    group = np.repeat(np.arange(1, n_dims + 1), units_per_dim)  # degree+1 per unit

    m_in = np.zeros((n_dims + cond_dim, hidden))
    for j in range(n_dims):  # z_j (1-based j+1) feeds groups with g-1 >= j+1
        m_in[j, :] = (group > j + 1).astype(float)
    m_in[n_dims:, :] = 1.0  # conditioning visible everywhere

    m_hidden = (group[None, :] >= group[:, None]).astype(float)

    m_out = np.zeros((hidden, n_dims))
    for d in range(n_dims):  # output d+1 reads groups g <= d+1
        m_out[:, d] = (group <= d + 1).astype(float)

    masks = [m_in] + [m_hidden] * (n_hidden_layers - 1) + [m_out]
    return masks


class MADE:
    """Autoregressive conditioner: per-dim (mu, log_sigma) heads.

    Output d depends on input dims < d plus the unmasked conditioning, which
    the mask construction guarantees exactly (not just approximately).
    """

    def __init__(self, store, name, rng, n_dims, cond_dim, units_per_dim=16,
                 n_hidden_layers=2, zero_heads=False):
        self.n_dims = n_dims
        self.cond_dim = cond_dim
        masks = made_masks(n_dims, units_per_dim, n_hidden_layers, cond_dim)
        hidden = n_dims * units_per_dim
        self.hidden_layers = []
        fan_in = n_dims + cond_dim
        for i, m in enumerate(masks[:-1]):
            self.hidden_layers.append(
                MaskedLinear(store, f"{name}.h{i}", rng, fan_in, hidden, m)
            )
            fan_in = hidden
        m_out = masks[-1]
        self.head_mu = MaskedLinear(store, f"{name}.mu", rng, hidden, n_dims, m_out)
        self.head_ls = MaskedLinear(store, f"{name}.ls", rng, hidden, n_dims, m_out)
        if zero_heads:
            self.head_mu.w.data[:] = 0.0
            self.head_ls.w.data[:] = 0.0

    def __call__(self, z, cond=None):
        if cond is not None:
            h = T.concat([z, cond], axis=-1)
        else:
            if self.cond_dim != 0:
                raise ValueError("conditioning expected but not provided")
            h = z
        for layer in self.hidden_layers:
            h = T.silu(layer(h))
        return self.head_mu(h), self.head_ls(h)
