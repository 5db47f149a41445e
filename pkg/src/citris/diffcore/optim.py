"""Named parameter store with Adam updates and the warmup-cosine schedule."""

import math

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Owns named parameter tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params = {}
        self.m = {}
        self.v = {}
        self.lr_scale = {}
        self.step_count = 0

    def add(self, name, value, lr_scale=1.0):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        self.lr_scale[name] = float(lr_scale)
        return p

    def __getitem__(self, name):
        return self.params[name]

    def names(self):
        return list(self.params.keys())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def set_lr_scale(self, name, value):
        if name not in self.params:
            raise KeyError(name)
        self.lr_scale[name] = float(value)

    def n_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def state_arrays(self):
        """Name -> value copies, insertion-ordered (checkpoint payload)."""
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays):
        for name, value in arrays.items():
            p = self.params[name]
            if p.data.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{p.data.shape} vs {value.shape}")
            p.data[...] = value

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Standard bias-corrected Adam on all parameters with a gradient."""
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * self.lr_scale[name] * (m / c1) / (np.sqrt(v / c2) + eps)


def warmup_cosine_lr(step, total_steps, base_lr, warmup_steps=100):
    """Linear warmup to ``base_lr`` then cosine decay to zero."""
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return base_lr
    progress = (step - warmup_steps) / max(total_steps - warmup_steps, 1)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))
