"""Trajectory generation and the bit-exact on-disk dataset format.

Layout (little-endian): magic "CITRISDS", version u32=1, env-id u32,
seed u64, obs-map seed u64, K u32, state-dim u32, obs-dim u32, T u64, then
one factor record per causal factor (name-len u32, UTF-8 name, kind u8,
dim u32, cardinality u32), then per step: state f64, intervention bytes u8,
observation f64. The factor table is delimited by the factor dims summing to
state-dim.
"""

import hashlib
import io
import struct
from dataclasses import dataclass

import numpy as np

from .environments import env_from_id
from .factors import KIND_CODES, KIND_NAMES, FactorSpec, state_dim
from .observation import ObservationMap
from .rng import stream

MAGIC = b"CITRISDS"
VERSION = 1


@dataclass
class Dataset:
    """One temporal intervened sequence plus everything needed to replay it."""

    env_name: str
    env_id: int
    seed: int
    obs_seed: int
    factors: list
    n_targets: int
    states: np.ndarray         # (T, state_dim) float64
    interventions: np.ndarray  # (T, K) uint8; row t targets the step into t
    observations: np.ndarray   # (T, obs_dim) float64

    @property
    def n_steps(self):
        return self.states.shape[0]

    @property
    def obs_dim(self):
        return self.observations.shape[1]

    def observation_map(self, n_layers=3, noise_dim=None):
        if noise_dim is None:
            noise_dim = self.obs_dim - sum(f.encoded_dim for f in self.factors)
        return ObservationMap(self.factors, self.obs_seed,
                              n_layers=n_layers, noise_dim=noise_dim)

    def environment(self):
        return env_from_id(self.env_id)

    def intervention_rates(self):
        return self.interventions.mean(axis=0)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(serialize(self))

    def fingerprint(self):
        return hashlib.sha256(serialize(self)).hexdigest()


def serialize(ds):
    buf = io.BytesIO()
    buf.write(MAGIC)
    k = ds.interventions.shape[1]
    sdim = ds.states.shape[1]
    odim = ds.observations.shape[1]
    buf.write(struct.pack("<IIQQIIIQ", VERSION, ds.env_id, ds.seed, ds.obs_seed,
                          k, sdim, odim, ds.n_steps))
    for f in ds.factors:
        name = f.name.encode("utf-8")
        buf.write(struct.pack("<I", len(name)))
        buf.write(name)
        buf.write(struct.pack("<BII", KIND_CODES[f.kind], f.dim, f.cardinality))
    state_fmt = f"<{sdim}d"
    obs_fmt = f"<{odim}d"
    intr_fmt = f"<{k}B"
    for t in range(ds.n_steps):
        buf.write(struct.pack(state_fmt, *ds.states[t]))
        buf.write(struct.pack(intr_fmt, *ds.interventions[t]))
        buf.write(struct.pack(obs_fmt, *ds.observations[t]))
    return buf.getvalue()


def deserialize(raw):
    if raw[:8] != MAGIC:
        raise ValueError("not a CITRISDS file")
    off = 8
    version, env_id, seed, obs_seed, k, sdim, odim, steps = struct.unpack_from(
        "<IIQQIIIQ", raw, off)
    off += struct.calcsize("<IIQQIIIQ")
    if version != VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    table = []
    dims_seen = 0
    while dims_seen < sdim:
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        kind_code, dim, card = struct.unpack_from("<BII", raw, off)
        off += struct.calcsize("<BII")
        table.append((name, KIND_NAMES[kind_code], dim, card))
        dims_seen += dim
    factors = _resolve_factors(env_id, table)
    states = np.empty((steps, sdim))
    interventions = np.empty((steps, k), dtype=np.uint8)
    observations = np.empty((steps, odim))
    state_sz, intr_sz, obs_sz = 8 * sdim, k, 8 * odim
    for t in range(steps):
        states[t] = np.frombuffer(raw, dtype="<f8", count=sdim, offset=off)
        off += state_sz
        interventions[t] = np.frombuffer(raw, dtype=np.uint8, count=k, offset=off)
        off += intr_sz
        observations[t] = np.frombuffer(raw, dtype="<f8", count=odim, offset=off)
        off += obs_sz
    env_name = _env_name_or_custom(env_id)
    return Dataset(env_name, env_id, seed, obs_seed, factors, k,
                   states, interventions, observations)


def _env_name_or_custom(env_id):
    from .environments import ENV_IDS
    return ENV_IDS.get(env_id, f"custom-{env_id}")


def _resolve_factors(env_id, table):
    """The file stores name/kind/dim/cardinality; continuous domains come
    from the environment registry, which must agree with the table."""
    try:
        env = env_from_id(env_id)
    except ValueError:
        return [FactorSpec(name, kind, dim=dim, low=-3.0, high=3.0,
                           cardinality=card) if kind != "categorical"
                else FactorSpec(name, kind, dim=dim, cardinality=card)
                for name, kind, dim, card in table]
    declared = [(f.name, f.kind, f.dim, f.cardinality) for f in env.factors]
    if declared != table:
        raise ValueError(f"factor table does not match environment "
                         f"{env.name!r}: {table} vs {declared}")
    return list(env.factors)


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def generate_dataset(env, policy, steps, seed, obs_seed=None, n_layers=3,
                     noise_dim=2):
    """Sample one long sequence under the given intervention policy."""
    if steps < 2:
        raise ValueError("need at least 2 steps")
    if obs_seed is None:
        obs_seed = seed
    obs_map = ObservationMap(env.factors, obs_seed, n_layers=n_layers,
                             noise_dim=noise_dim)
    dyn = stream(seed, 0)      # dynamics + policy, interleaved per step
    noise_rng = stream(seed, 1)
    k = env.n_targets
    states = np.empty((steps, env.state_dim))
    interventions = np.zeros((steps, k), dtype=np.uint8)
    states[0] = env.initial_state(dyn)
    for t in range(1, steps):
        interventions[t] = policy.sample(dyn, k)
        states[t] = env.step(states[t - 1], interventions[t], dyn)
    observations = obs_map.observe(states, obs_map.sample_noise(noise_rng, steps))
    return Dataset(env.name, env.env_id, int(seed), int(obs_seed),
                   list(env.factors), k, states, interventions, observations)


def sample_independent_factors(env, n, seed, obs_seed=None, n_layers=3,
                               noise_dim=2):
    """Factors drawn independently and uniformly; used by correlation probes."""
    if n < 1:
        raise ValueError("need at least 1 sample")
    if obs_seed is None:
        obs_seed = seed
    obs_map = ObservationMap(env.factors, obs_seed, n_layers=n_layers,
                             noise_dim=noise_dim)
    rng = stream(seed, 2)
    noise_rng = stream(seed, 3)
    states = env.sample_independent(rng, n)
    observations = obs_map.observe(states, obs_map.sample_noise(noise_rng, n))
    interventions = np.zeros((n, env.n_targets), dtype=np.uint8)
    return Dataset(env.name, env.env_id, int(seed), int(obs_seed),
                   list(env.factors), env.n_targets, states, interventions,
                   observations)


def train_eval_split(n, train_fraction=0.4):
    """Deterministic index split: first 40% for probe training, rest to eval."""
    cut = int(round(n * train_fraction))
    return np.arange(cut), np.arange(cut, n)
