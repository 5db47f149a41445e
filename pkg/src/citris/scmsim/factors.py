"""Causal factor declarations and the state <-> encoded-vector layout.

Encoding feeds the observation map: continuous dims are rescaled to [-1, 1],
circular dims become (sin, cos) pairs, categorical dims become one-hots. The
encoding is invertible on valid states, which keeps the full observation
function bijective.
"""

from dataclasses import dataclass

import numpy as np

CONTINUOUS, CIRCULAR, CATEGORICAL = "continuous", "circular", "categorical"
KIND_CODES = {CONTINUOUS: 0, CIRCULAR: 1, CATEGORICAL: 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FactorSpec:
    name: str
    kind: str
    dim: int = 1
    low: float = 0.0
    high: float = 1.0
    cardinality: int = 0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("factor dim must be positive")
        if self.kind == CONTINUOUS and not self.low < self.high:
            raise ValueError(f"continuous factor {self.name}: low must be < high")
        if self.kind == CATEGORICAL and self.cardinality < 2:
            raise ValueError(f"categorical factor {self.name}: cardinality >= 2")

    @property
    def encoded_dim(self):
        if self.kind == CONTINUOUS:
            return self.dim
        if self.kind == CIRCULAR:
            return 2 * self.dim
        return self.cardinality * self.dim


def state_dim(factors):
    return sum(f.dim for f in factors)


def encoded_dim(factors):
    return sum(f.encoded_dim for f in factors)


def factor_slices(factors):
    """Per-factor column ranges in the raw state vector."""
    out = {}
    col = 0
    for f in factors:
        out[f.name] = slice(col, col + f.dim)
        col += f.dim
    return out


def encode_state(factors, states):
    """Map raw states (n, state_dim) to encoder inputs (n, encoded_dim)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    cols = []
    i = 0
    for f in factors:
        x = states[:, i:i + f.dim]
        i += f.dim
        if f.kind == CONTINUOUS:
            cols.append(2.0 * (x - f.low) / (f.high - f.low) - 1.0)
        elif f.kind == CIRCULAR:
            cols.append(np.concatenate([np.sin(x), np.cos(x)], axis=1))
        else:
            for d in range(f.dim):
                onehot = np.zeros((states.shape[0], f.cardinality))
                idx = np.clip(np.rint(x[:, d]).astype(int), 0, f.cardinality - 1)
                onehot[np.arange(states.shape[0]), idx] = 1.0
                cols.append(onehot)
    return np.concatenate(cols, axis=1)


def decode_state(factors, encoded):
    """Inverse of ``encode_state``; categorical blocks decode by argmax."""
    encoded = np.atleast_2d(np.asarray(encoded, dtype=np.float64))
    cols = []
    i = 0
    for f in factors:
        if f.kind == CONTINUOUS:
            x = encoded[:, i:i + f.dim]
            i += f.dim
            cols.append((x + 1.0) * 0.5 * (f.high - f.low) + f.low)
        elif f.kind == CIRCULAR:
            s = encoded[:, i:i + f.dim]
            c = encoded[:, i + f.dim:i + 2 * f.dim]
            i += 2 * f.dim
            cols.append(np.mod(np.arctan2(s, c), TWO_PI))
        else:
            for _ in range(f.dim):
                block = encoded[:, i:i + f.cardinality]
                i += f.cardinality
                cols.append(block.argmax(axis=1)[:, None].astype(np.float64))
    return np.concatenate(cols, axis=1)


def wrap_angle(theta):
    return np.mod(theta, TWO_PI)


def circular_distance(a, b):
    """Shortest angular distance in [0, pi]."""
    d = np.mod(a - b, TWO_PI)
    return np.minimum(d, TWO_PI - d)
