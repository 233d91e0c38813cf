"""ML-KNN decoding of label vectors by maximum a posteriori estimation.

For every label the model keeps a prior ``p(y_j = b)`` and, for each
neighbour count ``m`` in ``0..k``, the likelihood of seeing ``m`` of the
``k`` nearest training neighbours carry label ``j`` given ``y_j = b``. Both
are Laplace-smoothed frequency estimates from the training set, where each
training point is scored against its ``k`` nearest *other* training points.

Neighbour search is an exact Euclidean scan; ties at equal distance go to
the lower training index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regressor import squared_distances


@dataclass(frozen=True, eq=False)
class MlknnModel:
    k: int
    smoothing: float
    priors: np.ndarray  # K x 2, [:, b] = p(y_j = b)
    posteriors: np.ndarray  # K x 2 x (k+1), [j, b, m] = p(m neighbours | y_j = b)
    counts: np.ndarray  # K x 2 x (k+1) integer tallies behind the posteriors
    reference_points: np.ndarray
    reference_labels: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.priors.shape[0]


def nearest_neighbors(queries, points, k: int, exclude_self: bool = False) -> np.ndarray:
    """Indices of the ``k`` nearest ``points`` for each query row.

    With ``exclude_self`` the queries are the points themselves and each row
    skips its own index.
    """
    D = squared_distances(queries, points)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    return order[:, :k]


def neighbor_label_counts(neighbors: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``m[t, j]``: how many of query ``t``'s neighbours carry label ``j``."""
    return labels[neighbors].sum(axis=1).astype(np.int64)


def train_mlknn(points, labels, k: int = 10, smoothing: float = 1.0) -> MlknnModel:
    P = np.asarray(points, dtype=np.float64)
    Y = np.asarray(labels).astype(np.int64)
    n, K = Y.shape
    if P.shape[0] != n:
        raise ValueError("points and labels must be row-aligned")
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")

    priors = np.empty((K, 2))
    priors[:, 1] = (smoothing + Y.sum(axis=0)) / (2 * smoothing + n)
    priors[:, 0] = 1.0 - priors[:, 1]

    m = neighbor_label_counts(nearest_neighbors(P, P, k, exclude_self=True), Y)
    counts = np.zeros((K, 2, k + 1), dtype=np.int64)
    for j in range(K):
        for b in (0, 1):
            counts[j, b] = np.bincount(m[Y[:, j] == b, j], minlength=k + 1)
    denom = (k + 1) * smoothing + counts.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        posteriors = np.where(denom > 0, (smoothing + counts) / denom, 1.0 / (k + 1))

    for a in (priors, posteriors, counts, P, Y):
        a.setflags(write=False)
    return MlknnModel(k, smoothing, priors, posteriors, counts, P, Y)


def decode(model: MlknnModel, query_points):
    """MAP label vectors and posterior scores for each query row.

    Returns ``(labels, scores)`` where ``scores[t, j] = p(y_j = 1 | m)``.
    Exact ties predict the label.
    """
    Q = np.asarray(query_points, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != model.reference_points.shape[1]:
        raise ValueError(
            f"dimension mismatch: model has {model.reference_points.shape[1]} dims, got {Q.shape}"
        )
    K = model.n_labels
    if Q.shape[0] == 0:
        return np.zeros((0, K), dtype=np.int8), np.zeros((0, K))
    m = neighbor_label_counts(nearest_neighbors(Q, model.reference_points, model.k), model.reference_labels)
    cols = np.arange(K)
    p1 = model.priors[:, 1] * model.posteriors[cols, 1, m]
    p0 = model.priors[:, 0] * model.posteriors[cols, 0, m]
    labels = (p1 >= p0).astype(np.int8)
    total = p1 + p0
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(total > 0, p1 / total, 0.5)
    return labels, scores
