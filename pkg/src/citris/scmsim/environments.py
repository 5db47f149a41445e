"""State-level simulated causal processes with intervention semantics.

Every environment is a pure step function: next state depends only on the
time-t state, the sampled intervention targets for t+1, and an explicit
random generator. Mechanisms are stationary and there are no instantaneous
edges, so the temporal graph is the one declared in ``reference_graph``.
"""

from dataclasses import dataclass

import numpy as np

from .factors import (CATEGORICAL, CIRCULAR, CONTINUOUS, TWO_PI, FactorSpec,
                      factor_slices, state_dim, wrap_angle)
from .policies import BernoulliPolicy, pong_policy


@dataclass(frozen=True)
class EvalFactor:
    """A ground-truth quantity probes must recover, with its expected block.

    ``block`` indexes the latent grouping: 0 is the intervention-independent
    slot, block i >= 1 belongs to intervention target i-1. Splitting a causal
    factor into (variable, invariant) parts, as in Ball-in-Boxes, yields eval
    factors that differ from the causal factor list.
    """
    name: str
    kind: str
    cols: tuple
    block: int
    low: float = 0.0
    high: float = 1.0
    cardinality: int = 0

    def values(self, states):
        return np.atleast_2d(states)[:, list(self.cols)]


class Environment:
    name = "base"
    env_id = 0

    def __init__(self, factors, n_targets):
        self.factors = list(factors)
        self.n_targets = int(n_targets)
        self.slices = factor_slices(self.factors)
        self.state_dim = state_dim(self.factors)

    def default_policy(self):
        raise NotImplementedError

    def initial_state(self, rng):
        raise NotImplementedError

    def step(self, state, targets, rng):
        raise NotImplementedError

    def sample_independent(self, rng, n):
        """Factors drawn independently and uniformly over their domains."""
        cols = []
        for f in self.factors:
            if f.kind == CONTINUOUS:
                cols.append(rng.uniform(f.low, f.high, size=(n, f.dim)))
            elif f.kind == CIRCULAR:
                cols.append(rng.uniform(0.0, TWO_PI, size=(n, f.dim)))
            else:
                cols.append(rng.integers(0, f.cardinality,
                                         size=(n, f.dim)).astype(np.float64))
        return np.concatenate(cols, axis=1)

    def eval_factors(self):
        """Default: each causal factor is its own eval target."""
        out = []
        for i, f in enumerate(self.factors):
            block = i + 1 if i < self.n_targets else 0
            sl = self.slices[f.name]
            out.append(EvalFactor(f.name, f.kind, tuple(range(sl.start, sl.stop)),
                                  block, f.low, f.high, f.cardinality))
        return out

    @property
    def reference_graph(self):
        """Factor-level adjacency, entry [i, j] = 1 iff factor i -> factor j."""
        return None

    def check_state(self, state):
        state = np.asarray(state, dtype=np.float64)
        i = 0
        for f in self.factors:
            x = state[..., i:i + f.dim]
            i += f.dim
            if f.kind == CONTINUOUS:
                if np.any(x < f.low - 1e-9) or np.any(x > f.high + 1e-9):
                    raise ValueError(f"{f.name} out of [{f.low}, {f.high}]")
            elif f.kind == CIRCULAR:
                if np.any(x < 0.0) or np.any(x >= TWO_PI):
                    raise ValueError(f"{f.name} out of [0, 2pi)")
            else:
                if np.any((x < 0) | (x > f.cardinality - 1)):
                    raise ValueError(f"{f.name} out of category range")
        return state


def _truncated_normal(rng, mean, std, low, high):
    """Rejection sampler; acceptance is high for std well inside the box."""
    while True:
        x = rng.normal(mean, std)
        if low <= x <= high:
            return x


class BallInBoxes(Environment):
    """A ball in one of two boxes: the box flips only under intervention.

    State (b, u, y): box id, within-box position, vertical position. The
    intervention on the horizontal factor switches the box but leaves the
    within-box position evolving observationally, making the box id the
    manipulable part and the within-box position intervention-invariant.
    """

    name = "ball-in-boxes"
    env_id = 1
    noise_std = 0.1

    def __init__(self):
        super().__init__(
            factors=[
                FactorSpec("ball_x", CONTINUOUS, dim=2, low=0.0, high=1.0),
                FactorSpec("ball_y", CONTINUOUS, dim=1, low=0.0, high=1.0),
            ],
            n_targets=2,
        )

    def default_policy(self):
        return BernoulliPolicy(0.2)

    def initial_state(self, rng):
        return np.array([float(rng.integers(0, 2)), rng.random(), rng.random()])

    def step(self, state, targets, rng):
        b, u, y = state
        u = _truncated_normal(rng, u, self.noise_std, 0.0, 1.0)
        y = _truncated_normal(rng, y, self.noise_std, 0.0, 1.0)
        if targets[0]:
            b = 1.0 - b
        if targets[1]:
            y = rng.random()
        return np.array([b, u, y])

    def eval_factors(self):
        return [
            EvalFactor("ball_b", CATEGORICAL, (0,), block=1, cardinality=2),
            EvalFactor("ball_xin", CONTINUOUS, (1,), block=0, low=0.0, high=1.0),
            EvalFactor("ball_y", CONTINUOUS, (2,), block=2, low=0.0, high=1.0),
        ]

    @property
    def reference_graph(self):
        return np.eye(2)


class PongState(Environment):
    """State-level Pong with imperfect paddle interventions and a score.

    Engine order per step: move ball x by velocity; on a border hit, score
    and reset; otherwise paddles chase the previous ball y, the ball moves in
    y with wall bounces, paddle collisions reflect x and mirror the angle,
    and small Gaussian noise lands on ball x, y and angle. The score is never
    an intervention target.
    """

    name = "pong-state"
    env_id = 2
    speed = 0.12          # ball movement per step (border crossing ~15 steps)
    paddle_plane = 0.7    # |x| of the paddle face
    paddle_half_height = 0.15
    motion_noise = 0.015

    def __init__(self):
        super().__init__(
            factors=[
                FactorSpec("ball_x", CONTINUOUS, low=-1.0, high=1.0),
                FactorSpec("ball_y", CONTINUOUS, low=-1.0, high=1.0),
                FactorSpec("ball_vel_dir", CIRCULAR),
                FactorSpec("pleft_y", CONTINUOUS, low=-1.0, high=1.0),
                FactorSpec("pright_y", CONTINUOUS, low=-1.0, high=1.0),
                FactorSpec("score", CATEGORICAL, dim=2, cardinality=5),
            ],
            n_targets=5,
        )

    def default_policy(self):
        return pong_policy()

    def initial_state(self, rng):
        return np.array([
            rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
            rng.uniform(0.0, TWO_PI),
            rng.uniform(-0.66, 0.66), rng.uniform(-0.66, 0.66),
            0.0, 0.0,
        ])

    def step(self, state, targets, rng):
        bx, by, vd, pl, pr, sl, sr = state
        vx = self.speed * np.cos(vd)
        vy = self.speed * np.sin(vd)
        new_bx = bx + vx

        if abs(new_bx) >= 1.0:
            if new_bx <= -1.0:
                sl += 1.0
            else:
                sr += 1.0
            if sl >= 5.0 or sr >= 5.0:
                sl, sr = 0.0, 0.0
            new_bx, new_by = 0.0, 0.0
            vd = rng.uniform(0.0, TWO_PI)
            pl = rng.uniform(-0.66, 0.66)
            pr = rng.uniform(-0.66, 0.66)
        else:
            pl = self._paddle_step(pl, by, bool(targets[3]), rng)
            pr = self._paddle_step(pr, by, bool(targets[4]), rng)
            new_by = by + vy
            if new_by > 1.0:
                new_by = 2.0 - new_by
                vd = wrap_angle(-vd)
            elif new_by < -1.0:
                new_by = -2.0 - new_by
                vd = wrap_angle(-vd)
            p = self.paddle_plane
            if new_bx <= -p <= bx and abs(new_by - pl) <= self.paddle_half_height:
                new_bx = -2.0 * p - new_bx
                vd = wrap_angle(np.pi - vd)
            elif bx <= p <= new_bx and abs(new_by - pr) <= self.paddle_half_height:
                new_bx = 2.0 * p - new_bx
                vd = wrap_angle(np.pi - vd)
            new_bx = np.clip(new_bx + rng.normal(0.0, self.motion_noise), -1.0, 1.0)
            new_by = np.clip(new_by + rng.normal(0.0, self.motion_noise), -1.0, 1.0)
            vd = wrap_angle(vd + rng.normal(0.0, self.motion_noise))

        if targets[0]:
            new_bx = rng.uniform(-0.7, 0.7)
        if targets[1]:
            new_by = rng.uniform(-1.0, 1.0)
        if targets[2]:
            vd = rng.uniform(0.0, TWO_PI)
        return np.array([new_bx, new_by, vd, pl, pr, sl, sr])

    def _paddle_step(self, p, ball_y, intervened, rng):
        step = rng.normal(0.05, 0.017)
        direction = 1.0 if ball_y > p else -1.0
        if intervened and rng.random() < 0.5:
            direction = -direction
        return float(np.clip(p + direction * step, -1.0, 1.0))

    def eval_factors(self):
        out = super().eval_factors()
        # score has no intervention target: it belongs to block 0
        return out

    @property
    def reference_graph(self):
        g = np.eye(6)
        edges = [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5),
                 (1, 0), (1, 2), (1, 3), (1, 4),
                 (2, 0), (2, 1), (2, 3), (2, 4), (2, 5),
                 (3, 0), (4, 0)]
        for i, j in edges:
            g[i, j] = 1.0
        return g


# object-hue goal per shape: teapot, armadillo, hare, cow, dragon, head, horse
def _hue_goal(shape, hue_s, hue_b):
    avg = np.arctan2((np.sin(hue_s) + np.sin(hue_b)) / 2.0,
                     (np.cos(hue_s) + np.cos(hue_b)) / 2.0)
    table = [0.0, TWO_PI / 5.0, avg, 2.0 * TWO_PI / 5.0,
             np.pi + avg, 3.0 * TWO_PI / 5.0, 4.0 * TWO_PI / 5.0]
    return table[int(shape)]


class Causal3DState(Environment):
    """State-level dynamics of the 3D scene benchmark.

    Continuous factors drift toward parent-defined goals through
    f(a, b, c) = (a - b) / 2 + c with Gaussian noise (std 0.1 for positions,
    0.15 for angles and hues); the object shape is a noisy identity map
    resampled with probability 5%. Interventions are perfect: a uniform
    redraw over the factor's domain.
    """

    name = "causal3d-state"
    env_id = 3
    pos_noise = 0.1
    angle_noise = 0.15
    shape_resample_prob = 0.05
    n_shapes = 7

    def __init__(self, with_shape=True):
        self.with_shape = with_shape
        factors = [
            FactorSpec("pos_o", CONTINUOUS, dim=3, low=-2.0, high=2.0),
            FactorSpec("rot_o", CIRCULAR, dim=2),
            FactorSpec("rot_s", CIRCULAR),
            FactorSpec("hue_s", CIRCULAR),
            FactorSpec("hue_b", CIRCULAR),
            FactorSpec("hue_o", CIRCULAR),
        ]
        if with_shape:
            factors.append(FactorSpec("obj_s", CATEGORICAL, cardinality=7))
        super().__init__(factors, n_targets=len(factors))

    def default_policy(self):
        return BernoulliPolicy(0.1)

    def initial_state(self, rng):
        return self.sample_independent(rng, 1)[0]

    def step(self, state, targets, rng):
        pos = state[0:3]
        rot_a, rot_b = state[3], state[4]
        rot_s, hue_s, hue_b, hue_o = state[5], state[6], state[7], state[8]
        shape = state[9] if self.with_shape else 0.0

        def f(goal, current, noise_std):
            return (goal - current) / 2.0 + rng.normal(0.0, noise_std)

        new = np.empty_like(state)
        new[0] = np.clip(f(1.5 * np.sin(rot_b), pos[0], self.pos_noise), -2.0, 2.0)
        new[1] = np.clip(f(1.5 * np.sin(rot_a), pos[1], self.pos_noise), -2.0, 2.0)
        new[2] = np.clip(f(1.5 * np.cos(rot_a), pos[2], self.pos_noise), -2.0, 2.0)
        new[3] = wrap_angle(f(hue_b, rot_a, self.angle_noise))
        new[4] = wrap_angle(f(hue_o, rot_b, self.angle_noise))
        new[5] = wrap_angle(f(np.arctan2(pos[0], pos[1]), rot_s, self.angle_noise))
        new[6] = wrap_angle(f(TWO_PI - hue_b, hue_s, self.angle_noise))
        new[7] = wrap_angle(hue_b + rng.normal(0.0, self.angle_noise))
        new[8] = wrap_angle(f(_hue_goal(shape, hue_s, hue_b), hue_o, self.angle_noise))
        if self.with_shape:
            new[9] = shape if rng.random() >= self.shape_resample_prob \
                else float(rng.integers(0, self.n_shapes))

        for i, fac in enumerate(self.factors):
            if not targets[i]:
                continue
            sl = self.slices[fac.name]
            if fac.kind == CONTINUOUS:
                new[sl] = rng.uniform(fac.low, fac.high, size=fac.dim)
            elif fac.kind == CIRCULAR:
                new[sl] = rng.uniform(0.0, TWO_PI, size=fac.dim)
            else:
                new[sl] = float(rng.integers(0, fac.cardinality))
        return new

    @property
    def reference_graph(self):
        names = [f.name for f in self.factors]
        idx = {n: i for i, n in enumerate(names)}
        g = np.eye(len(names))
        edges = [("rot_o", "pos_o"), ("hue_b", "rot_o"), ("hue_o", "rot_o"),
                 ("pos_o", "rot_s"), ("hue_b", "hue_s"),
                 ("hue_s", "hue_o"), ("hue_b", "hue_o")]
        if self.with_shape:
            edges.append(("obj_s", "hue_o"))
        for a, b in edges:
            g[idx[a], idx[b]] = 1.0
        return g


class Causal3DTeapot(Causal3DState):
    """Single-shape variant: no shape factor, teapot hue goal."""

    name = "causal3d-teapot"
    env_id = 4

    def __init__(self):
        super().__init__(with_shape=False)


class SyntheticDbn(Environment):
    """Configurable linear-plus-tanh DBN, used as a graph-recovery oracle.

    Mechanism per factor: self_coef * z_j + strength * sum_parents tanh(z_p)
    plus Gaussian noise, clipped to the domain. Interventions redraw a factor
    uniformly over [-2, 2].
    """

    env_id = 5
    name = "chain4-state"

    def __init__(self, n_factors=4, edges=((0, 1), (1, 2), (2, 3)),
                 self_coef=0.5, strength=1.0, noise_std=0.2,
                 intervention_p=0.2, name=None, env_id=None):
        factors = [FactorSpec(f"z{i + 1}", CONTINUOUS, low=-3.0, high=3.0)
                   for i in range(n_factors)]
        super().__init__(factors, n_targets=n_factors)
        self.edges = tuple((int(a), int(b)) for a, b in edges)
        self.self_coef = float(self_coef)
        self.strength = float(strength)
        self.noise_std = float(noise_std)
        self.intervention_p = float(intervention_p)
        if name is not None:
            self.name = name
        if env_id is not None:
            self.env_id = env_id
        self._parents = [[] for _ in range(n_factors)]
        for a, b in self.edges:
            self._parents[b].append(a)

    def default_policy(self):
        return BernoulliPolicy(self.intervention_p)

    def initial_state(self, rng):
        return rng.uniform(-1.0, 1.0, size=self.state_dim)

    def step(self, state, targets, rng):
        new = np.empty_like(state)
        for j in range(self.state_dim):
            val = self.self_coef * state[j]
            for p in self._parents[j]:
                val += self.strength * np.tanh(state[p])
            new[j] = np.clip(val + rng.normal(0.0, self.noise_std), -3.0, 3.0)
        for j in range(self.state_dim):
            if targets[j]:
                new[j] = rng.uniform(-2.0, 2.0)
        return new

    @property
    def reference_graph(self):
        g = np.eye(self.state_dim) * (1.0 if self.self_coef != 0.0 else 0.0)
        for a, b in self.edges:
            if self.strength != 0.0:
                g[a, b] = 1.0
        return g


def chain4():
    return SyntheticDbn(name="chain4-state", env_id=5)


def indep4():
    return SyntheticDbn(edges=(), name="indep4-state", env_id=6, self_coef=0.7)


_REGISTRY = {
    "ball-in-boxes": BallInBoxes,
    "pong-state": PongState,
    "causal3d-state": Causal3DState,
    "causal3d-teapot": Causal3DTeapot,
    "chain4-state": chain4,
    "indep4-state": indep4,
}

ENV_IDS = {1: "ball-in-boxes", 2: "pong-state", 3: "causal3d-state",
           4: "causal3d-teapot", 5: "chain4-state", 6: "indep4-state"}


def make_env(name):
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; "
                         f"choose from {sorted(_REGISTRY)}") from None


def env_from_id(env_id):
    if env_id not in ENV_IDS:
        raise ValueError(f"unknown environment id {env_id}")
    return make_env(ENV_IDS[env_id])
