"""Multi-label evaluation metrics.

Rankings break score ties by ascending label index. Any ratio whose
denominator is zero evaluates to 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class MetricConfig:
    top_r: int = 1

    def __post_init__(self):
        if self.top_r < 1:
            raise ValueError("top_r must be >= 1")


@dataclass
class EvalReport:
    average_precision: float
    micro_f1: float
    macro_f1: float
    per_class_precision: list
    per_class_recall: list
    map: float
    skipped_instances: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self) -> dict:
        """Flat scalar metrics for one CSV row."""
        return {
            "ap": self.average_precision,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "map": self.map,
        }


def default_top_r(labels) -> int:
    """Label cardinality rounded to the nearest integer (at least 1)."""
    card = float(np.asarray(labels).sum(axis=1).mean())
    return max(1, int(np.floor(card + 0.5)))


def _pair(a, b, name_a="pred", name_b="truth"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"shape mismatch: {name_a} {a.shape} vs {name_b} {b.shape}")
    return a, b


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def rank_order(scores) -> np.ndarray:
    """Label indices per row, best first; equal scores keep index order."""
    S = np.asarray(scores, dtype=np.float64)
    return np.argsort(-S, axis=1, kind="stable")


def average_precision(scores, truth, return_skipped: bool = False):
    """Instance-wise ranking average precision.

    For each instance and each relevant label at rank ``rho`` the precision
    is (relevant labels ranked at or above ``rho``) / ``rho``; the instance
    score averages these. Instances without relevant labels are skipped.
    The mean is computed exactly and rounded once.
    """
    S, T = _pair(scores, truth, "scores")
    order = rank_order(S)
    rel = np.take_along_axis(T.astype(bool), order, axis=1)
    hits = np.cumsum(rel, axis=1)
    ranks = np.broadcast_to(np.arange(1, S.shape[1] + 1), S.shape)
    n_rel = rel.sum(axis=1)
    keep = n_rel > 0
    skipped = int((~keep).sum())
    # instance i contributes sum_j hits_j / (rank_j * n_rel_i) to the total
    rows, cols = np.nonzero(rel & keep[:, None])
    num = hits[rows, cols]
    den = ranks[rows, cols] * n_rel[rows]
    n_kept = int(keep.sum())
    if n_kept == 0:
        ap = 0.0
    else:
        pairs, counts = np.unique(np.stack([num, den]), axis=1, return_counts=True)
        total = sum(Fraction(int(c) * int(a), int(b)) for (a, b), c in zip(pairs.T, counts))
        ap = float(total / n_kept)
    return (ap, skipped) if return_skipped else ap


def top_r_binarize(scores, r: int) -> np.ndarray:
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError("scores must be 2-D")
    if not 1 <= r <= S.shape[1]:
        raise ValueError(f"r={r} outside [1, {S.shape[1]}]")
    out = np.zeros(S.shape, dtype=np.int8)
    np.put_along_axis(out, rank_order(S)[:, :r], 1, axis=1)
    return out


def _confusion(pred, truth, axis=None):
    P = np.asarray(pred).astype(bool)
    T = np.asarray(truth).astype(bool)
    tp = (P & T).sum(axis=axis)
    fp = (P & ~T).sum(axis=axis)
    fn = (~P & T).sum(axis=axis)
    return tp, fp, fn


def micro_f1(pred, truth) -> float:
    P, T = _pair(pred, truth)
    tp, fp, fn = _confusion(P, T)
    return float(_ratio(2 * tp, 2 * tp + fp + fn))


def macro_f1(pred, truth) -> float:
    P, T = _pair(pred, truth)
    tp, fp, fn = _confusion(P, T, axis=0)
    den = 2 * tp + fp + fn
    return float(sum(Fraction(int(2 * a), int(b)) for a, b in zip(tp, den) if b) / len(den))


def per_class_average_precision(scores, truth) -> np.ndarray:
    """Column-wise ranking AP (instances ranked per label); 0 for empty columns."""
    S, T = _pair(scores, truth, "scores")
    return np.array([
        average_precision(S[:, j][None, :], T[:, j][None, :]) for j in range(S.shape[1])
    ])


def per_class_report(pred, truth, scores=None):
    """Per-label precision and recall plus a mean average precision.

    ``map`` is the mean column-wise AP when ``scores`` is given, otherwise
    the mean per-class precision.
    """
    P, T = _pair(pred, truth)
    tp, fp, fn = _confusion(P, T, axis=0)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if scores is not None:
        mean_ap = float(per_class_average_precision(scores, T).mean())
    else:
        mean_ap = float(precision.mean())
    return precision, recall, mean_ap


def evaluate(scores, truth, top_r: int, pred: Optional[np.ndarray] = None) -> EvalReport:
    """Full report; F1 scores use top-``r`` binarized ``scores`` unless ``pred`` is given."""
    S, T = _pair(scores, truth, "scores")
    if pred is None:
        pred = top_r_binarize(S, min(top_r, S.shape[1]))
    ap, skipped = average_precision(S, T, return_skipped=True)
    precision, recall, mean_ap = per_class_report(pred, T, S)
    return EvalReport(
        ap,
        micro_f1(pred, T),
        macro_f1(pred, T),
        precision.tolist(),
        recall.tolist(),
        mean_ap,
        skipped,
    )
