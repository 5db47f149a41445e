"""Intervention-target sampling policies (regime variable included)."""

import numpy as np


class InterventionPolicy:
    """Base: samples a binary target vector per step."""

    def sample(self, rng, n_targets):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class ZeroPolicy(InterventionPolicy):
    """Observational only; also used for independent evaluation sets."""

    def sample(self, rng, n_targets):
        return np.zeros(n_targets, dtype=np.uint8)

    def describe(self):
        return "none"


class BernoulliPolicy(InterventionPolicy):
    """Independent Bernoulli(p) per target; excluded targets never fire."""

    def __init__(self, p, exclude=()):
        if not 0.0 <= p <= 1.0:
            raise ValueError("intervention probability must be in [0, 1]")
        self.p = float(p)
        self.exclude = frozenset(exclude)

    def sample(self, rng, n_targets):
        bits = (rng.random(n_targets) < self.p).astype(np.uint8)
        for i in self.exclude:
            bits[i] = 0
        return bits

    def describe(self):
        return f"bernoulli:{self.p:g}"


class GroupedPolicy(InterventionPolicy):
    """Confounded regime: one of a fixed list of target sets per step."""

    def __init__(self, sets, probs, name="grouped"):
        probs = np.asarray(probs, dtype=np.float64)
        if len(sets) != len(probs):
            raise ValueError("sets and probs length mismatch")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("group probabilities must sum to 1")
        self.sets = [frozenset(s) for s in sets]
        self.probs = probs
        self.name = name

    def sample(self, rng, n_targets):
        regime = rng.choice(len(self.sets), p=self.probs)
        bits = np.zeros(n_targets, dtype=np.uint8)
        for i in self.sets[regime]:
            bits[i] = 1
        return bits

    def describe(self):
        return self.name


# Six-regime preset on the single-shape 3D scene: observational; object
# position; object rotation; {spotlight rotation, spotlight hue};
# {object hue, spotlight hue}; {object hue, background hue}.
# Factor order: pos_o, rot_o, rot_s, hue_s, hue_b, hue_o.
CAUSAL3D_SIX_SETS = GroupedPolicy(
    sets=[frozenset(), {0}, {1}, {2, 3}, {5, 3}, {5, 4}],
    probs=[1.0 / 6.0] * 6,
    name="grouped:causal3d-6sets",
)


def pong_policy():
    """No intervention with probability 0.35, else one of five single targets."""
    sets = [frozenset()] + [frozenset({i}) for i in range(5)]
    probs = [0.35] + [0.13] * 5
    return GroupedPolicy(sets, probs, name="grouped:pong-default")


def parse_policy(text):
    """Parse CLI policy strings: bernoulli:p | grouped:<preset> | independent-eval."""
    if text == "independent-eval" or text == "none":
        return ZeroPolicy()
    if text.startswith("bernoulli:"):
        return BernoulliPolicy(float(text.split(":", 1)[1]))
    if text == "grouped:causal3d-6sets":
        return CAUSAL3D_SIX_SETS
    if text == "grouped:pong-default":
        return pong_policy()
    raise ValueError(f"unknown policy {text!r}")
