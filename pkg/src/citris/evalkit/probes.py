"""Per-block probes mapping latents to every ground-truth factor.

Each probe is a two-layer MLP (width 128) trained with a per-kind loss:
plain MSE for continuous targets, cosine distance on a predicted 2-vector
for circular targets (with a small norm regularizer), and cross-entropy for
categorical targets. The evaluated model stays frozen; probes only ever see
its latents as fixed inputs.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.nn import MLP
from ..diffcore.optim import ParamStore, warmup_cosine_lr
from ..scmsim.factors import CATEGORICAL, CIRCULAR, CONTINUOUS, wrap_angle
from ..scmsim.rng import stream

NORM_REG = 0.05


def worker_count():
    """Thread cap for parallel probe training (CITRIS_THREADS wins)."""
    env = os.environ.get("CITRIS_THREADS")
    if env:
        return max(1, int(env))
    return min(2, os.cpu_count() or 1)


class _Head:
    def __init__(self, factor, offset):
        self.factor = factor
        if factor.kind == CONTINUOUS:
            width = factor_dim(factor)
        elif factor.kind == CIRCULAR:
            width = 2 * factor_dim(factor)
        else:
            width = factor.cardinality * factor_dim(factor)
        self.slice = slice(offset, offset + width)
        self.width = width


def factor_dim(factor):
    return len(factor.cols)


class LatentProbe:
    """Predicts all eval factors from one latent block (possibly empty)."""

    def __init__(self, eval_factors, n_inputs, hidden=128, seed=0,
                 learning_rate=1e-3, epochs=40, batch_size=512):
        self.eval_factors = list(eval_factors)
        self.n_inputs = int(n_inputs)
        self.empty = self.n_inputs == 0
        self.hidden = hidden
        self.seed = seed
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.heads = []
        off = 0
        for f in self.eval_factors:
            head = _Head(f, off)
            self.heads.append(head)
            off += head.width
        self.out_dim = off
        store = ParamStore()
        rng = stream(seed, 600)
        in_dim = max(self.n_inputs, 1)  # empty block probes see a constant
        self.net = MLP(store, "probe", rng, [in_dim, hidden, hidden, self.out_dim])
        self.store = store

    def _inputs(self, Z):
        if self.empty:
            return np.zeros((Z.shape[0], 1))
        return np.asarray(Z, dtype=np.float64)

    def _loss(self, out, states):
        total = None
        for head in self.heads:
            pred = T.slice_last(out, head.slice.start, head.slice.stop)
            values = head.factor.values(states)
            term = _head_loss(head.factor, pred, values)
            total = term if total is None else total + term
        return total

    def fit(self, Z, states):
        Z = self._inputs(Z)
        n = Z.shape[0]
        rng = stream(self.seed, 601)
        per_epoch = (n + self.batch_size - 1) // self.batch_size
        total_steps = per_epoch * self.epochs
        step = 0
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                lr = warmup_cosine_lr(step, total_steps, self.learning_rate, 50)
                out = self.net(T.constant(Z[idx]))
                loss = self._loss(out, states[idx])
                loss.backward()
                self.store.adam_step(lr)
                self.store.zero_grad()
                step += 1
        return self

    def predict(self, Z):
        """Per-factor predictions: continuous raw, circular decoded angles,
        categorical argmax labels."""
        out = self.net(T.constant(self._inputs(Z))).data
        preds = {}
        for head in self.heads:
            f = head.factor
            block = out[:, head.slice]
            d = factor_dim(f)
            if f.kind == CONTINUOUS:
                preds[f.name] = block.copy()
            elif f.kind == CIRCULAR:
                s, c = block[:, :d], block[:, d:]
                preds[f.name] = wrap_angle(np.arctan2(s, c))
            else:
                labels = np.empty((block.shape[0], d))
                for k in range(d):
                    probs = block[:, k * f.cardinality:(k + 1) * f.cardinality]
                    labels[:, k] = probs.argmax(axis=1)
                preds[f.name] = labels
        return preds


def _head_loss(factor, pred, values):
    d = factor_dim(factor)
    if factor.kind == CONTINUOUS:
        return T.mean(T.sum_last(T.square(pred - values)))
    if factor.kind == CIRCULAR:
        target = np.concatenate([np.sin(values), np.cos(values)], axis=1)
        total = None
        for k in range(d):
            v = T.concat([T.slice_last(pred, k, k + 1),
                          T.slice_last(pred, d + k, d + k + 1)], axis=-1)
            t_k = target[:, [k, d + k]]
            dot = T.sum_last(v * t_k)
            norm = T.sqrt(T.sum_last(T.square(v)) + 1e-12)
            cosdist = T.mean(1.0 - dot / norm)
            reg = T.mean(T.square(norm - 1.0)) * NORM_REG
            term = cosdist + reg
            total = term if total is None else total + term
        return total
    total = None
    for k in range(d):
        logits = T.slice_last(pred, k * factor.cardinality,
                              (k + 1) * factor.cardinality)
        onehot = np.zeros((values.shape[0], factor.cardinality))
        idx = np.clip(np.rint(values[:, k]).astype(int), 0,
                      factor.cardinality - 1)
        onehot[np.arange(values.shape[0]), idx] = 1.0
        ce = T.neg(T.sum_last(T.mask_mul(T.log_softmax_last(logits), onehot)))
        term = T.mean(ce)
        total = term if total is None else total + term
    return total


def train_probes(Z, states, blocks, eval_factors, seed=0, **probe_kw):
    """One probe per latent block, trained in parallel (independent graphs).

    ``blocks`` maps block id to the latent dims it owns; empty blocks get a
    constant-input probe so their row still appears in the report.
    """
    def build_and_fit(item):
        block_id, dims = item
        probe = LatentProbe(eval_factors, len(dims), seed=seed + block_id,
                            **probe_kw)
        Zb = Z[:, dims] if len(dims) else np.zeros((Z.shape[0], 0))
        return block_id, probe.fit(Zb, states)

    items = sorted(blocks.items())
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        fitted = dict(pool.map(build_and_fit, items))
    return fitted


def probe_predictions(probes, Z, blocks):
    return {block_id: probe.predict(Z[:, blocks[block_id]]
                                    if len(blocks[block_id])
                                    else np.zeros((Z.shape[0], 0)))
            for block_id, probe in probes.items()}
