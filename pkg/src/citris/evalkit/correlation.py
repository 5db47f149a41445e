"""Correlation matrices between latent blocks and ground-truth factors.

R-squared is kind-aware: continuous uses the usual residual ratio against
the mean predictor, circular replaces squared differences with cosine
distances against the circular-mean predictor, categorical compares error
rate against the majority class. Spearman ranks predictions against truth,
with circular factors scored as the average rank correlation of their sine
and cosine transforms. Matrix rows are latent blocks (0..K), columns are
ground-truth factors; multidimensional factors average their per-dim
scores.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..scmsim.factors import CATEGORICAL, CIRCULAR, CONTINUOUS


def r2_continuous(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    denom = np.sum((truth - truth.mean()) ** 2)
    if denom <= 1e-12:
        return None
    return 1.0 - float(np.sum((truth - pred) ** 2) / denom)


def circular_mean(angles):
    return np.arctan2(np.mean(np.sin(angles)), np.mean(np.cos(angles)))


def r2_circular(truth, pred):
    """Cosine-distance numerator against the circular-mean baseline."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    num = np.sum(1.0 - np.cos(truth - pred))
    base = circular_mean(truth)
    denom = np.sum(1.0 - np.cos(truth - base))
    if denom <= 1e-12:
        return None
    return 1.0 - float(num / denom)


def r2_categorical(truth, pred):
    truth = np.rint(np.asarray(truth)).astype(int)
    pred = np.rint(np.asarray(pred)).astype(int)
    values, counts = np.unique(truth, return_counts=True)
    majority_err = 1.0 - counts.max() / truth.size
    if majority_err <= 1e-12:
        return None
    err = float(np.mean(truth != pred))
    return 1.0 - err / majority_err


def spearman_continuous(truth, pred):
    if np.ptp(truth) <= 1e-12 or np.ptp(pred) <= 1e-12:
        return None
    rho = stats.spearmanr(truth, pred).statistic
    return float(rho) if np.isfinite(rho) else None

def spearman_circular(truth, pred):
    """Average Spearman of the sine and cosine transforms."""
    parts = []
    for f in (np.sin, np.cos):
        r = spearman_continuous(f(truth), f(pred))
        if r is not None:
            parts.append(r)
    return float(np.mean(parts)) if parts else None


def metric_entry(kind, metric, truth_dims, pred_dims):
    """Average of per-dim scores; None when every dim is degenerate."""
    scores = []
    for k in range(truth_dims.shape[1]):
        t, p = truth_dims[:, k], pred_dims[:, k]
        if metric == "r2":
            fn = {CONTINUOUS: r2_continuous, CIRCULAR: r2_circular,
                  CATEGORICAL: r2_categorical}[kind]
        else:
            fn = {CONTINUOUS: spearman_continuous, CIRCULAR: spearman_circular,
                  CATEGORICAL: spearman_continuous}[kind]
        s = fn(t, p)
        if s is not None:
            scores.append(s)
    return float(np.mean(scores)) if scores else None


@dataclass
class CorrelationReport:
    """Latent-block x factor correlation matrix with diag/sep summaries.

    ``diag`` averages each factor's entry at its matched block; block 0
    participates only through factors explicitly matched to it. ``sep``
    averages, over blocks 1..K, the highest entry among factors not matched
    to that block; block 0's unmatched maximum is reported separately. R2
    entries are floored at 0 and Spearman entries taken in absolute value
    before the summaries.
    """

    metric: str
    matrix: np.ndarray
    row_labels: list
    col_labels: list
    matched_block: list
    flags: list = field(default_factory=list)

    def _summary_matrix(self):
        m = np.array(self.matrix, dtype=np.float64)
        m = np.where(np.isnan(m), 0.0, m)
        if self.metric == "r2":
            return np.clip(m, 0.0, None)
        return np.abs(m)

    @property
    def diag(self):
        m = self._summary_matrix()
        vals = [m[blk, j] for j, blk in enumerate(self.matched_block)]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def sep(self):
        m = self._summary_matrix()
        vals = []
        for blk in range(1, m.shape[0]):
            others = [m[blk, j] for j, mb in enumerate(self.matched_block)
                      if mb != blk]
            if others:
                vals.append(max(others))
        return float(np.mean(vals)) if vals else 0.0

    @property
    def block0_max_unmatched(self):
        m = self._summary_matrix()
        others = [m[0, j] for j, mb in enumerate(self.matched_block) if mb != 0]
        return float(max(others)) if others else 0.0

    def to_dict(self):
        matrix = [[None if np.isnan(v) else float(v) for v in row]
                  for row in np.asarray(self.matrix, dtype=np.float64)]
        return {
            "metric": self.metric,
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "matrix": matrix,
            "matched_block": [int(b) for b in self.matched_block],
            "diag": self.diag,
            "sep": self.sep,
            "block0_max_unmatched": self.block0_max_unmatched,
            "flags": list(self.flags),
        }


def correlation_report(metric, predictions, states, eval_factors, n_blocks):
    """Build the matrix from per-block probe predictions on the eval split."""
    matrix = np.full((n_blocks, len(eval_factors)), np.nan)
    flags = []
    for blk in range(n_blocks):
        preds = predictions.get(blk)
        if preds is None:
            flags.append(f"block {blk}: no probe")
            continue
        for j, f in enumerate(eval_factors):
            entry = metric_entry(f.kind, metric, f.values(states), preds[f.name])
            if entry is None:
                flags.append(f"block {blk}, factor {f.name}: degenerate")
            else:
                matrix[blk, j] = entry
    return CorrelationReport(
        metric=metric,
        matrix=matrix,
        row_labels=[f"block{b}" for b in range(n_blocks)],
        col_labels=[f.name for f in eval_factors],
        matched_block=[f.block for f in eval_factors],
        flags=flags,
    )


def summaries_from_matrix(matrix, matched_block, metric="r2"):
    """Recompute diag/sep from a raw matrix (report self-consistency)."""
    rep = CorrelationReport(metric=metric, matrix=np.asarray(matrix, float),
                            row_labels=[], col_labels=[],
                            matched_block=list(matched_block))
    return rep.diag, rep.sep
