"""Label-space embedding by Student-t distribution alignment.

Pairwise similarities between binary label vectors are turned into a joint
distribution ``Q`` with a one-degree-of-freedom Student-t kernel. Dense
latent codes ``Z`` are then optimized so that the same construction applied
to ``Z`` (the distribution ``U``) matches ``Q`` in KL divergence.

All pairwise quantities are computed from explicit coordinate differences
rather than through a matrix product, so results do not depend on BLAS
threading.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Optional

import numpy as np

EPSILON_FLOOR = 1e-12


class EncoderDivergenceError(FloatingPointError):
    """The optimizer produced a non-finite loss it could not recover from.

    ``trace`` holds the KL values of every accepted iteration.
    """

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True, eq=False)
class PairDistribution:
    """Symmetric n x n joint distribution over ordered pairs ``i != j``."""

    probs: np.ndarray
    epsilon_floor: float = EPSILON_FLOOR

    def __post_init__(self):
        self.probs.setflags(write=False)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True, eq=False)
class LatentCodes:
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.float64, copy=True)
        if codes.ndim != 2 or codes.shape[1] < 1:
            raise ValueError("latent codes must be an n x r matrix with r >= 1")
        if not np.isfinite(codes).all():
            raise ValueError("latent codes contain non-finite entries")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def dim(self) -> int:
        return self.codes.shape[1]

    @property
    def n(self) -> int:
        return self.codes.shape[0]


def default_latent_dim(n_labels: int) -> int:
    return max(2, math.ceil(n_labels / 2))


@dataclass(frozen=True)
class EncoderConfig:
    """Optimizer settings.

    ``min_iters`` keeps the step-size stopping rule from firing during the
    first iterations, when codes start near zero and every step is tiny.
    """

    latent_dim: Optional[int] = None
    learning_rate: float = 10.0
    # momentum(t) = momentum_start for t < momentum_switch, else momentum_final
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    max_iters: int = 5000
    min_iters: int = 100
    tol: float = 1e-6
    init_scale: float = 1e-4
    seed: int = 0
    max_halvings: int = 30
    # a step raising KL by more than this fraction counts as divergence; None disables
    rise_tol: Optional[float] = 0.0

    def __post_init__(self):
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.learning_rate <= 0 or self.tol <= 0 or self.init_scale <= 0:
            raise ValueError("learning_rate, tol and init_scale must be positive")
        if self.max_iters < 1 or self.min_iters < 0:
            raise ValueError("max_iters must be >= 1 and min_iters >= 0")
        if not (0 <= self.momentum_start < 1 and 0 <= self.momentum_final < 1):
            raise ValueError("momentum values must lie in [0, 1)")

    def momentum(self, t: int) -> float:
        return self.momentum_start if t < self.momentum_switch else self.momentum_final


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


def _sq_distances(Z: np.ndarray, tmp: np.ndarray) -> np.ndarray:
    n = Z.shape[0]
    d2 = np.zeros((n, n))
    for k in range(Z.shape[1]):
        np.subtract.outer(Z[:, k], Z[:, k], out=tmp)
        tmp *= tmp
        d2 += tmp
    return d2


def _student_t_weights(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    w = _sq_distances(points, np.empty((n, n)))
    w += 1.0
    np.reciprocal(w, out=w)
    np.fill_diagonal(w, 0.0)
    return w


def _normalize(w: np.ndarray, floor: float) -> np.ndarray:
    p = w / w.sum()
    return _apply_floor(p, floor)


def _apply_floor(p: np.ndarray, floor: float) -> np.ndarray:
    """Raise off-diagonal entries below ``floor`` to it and rescale the rest."""
    off = ~np.eye(p.shape[0], dtype=bool)
    low = off & (p < floor)
    while low.any():
        p = p.copy()
        p[low] = floor
        rest = off & ~low
        p[rest] *= (1.0 - floor * low.sum()) / p[rest].sum()
        new_low = off & (p < floor)
        if not (new_low & ~low).any():
            break
        low = new_low
    return p


def _integer_distance_probs(d2: np.ndarray) -> np.ndarray:
    """Correctly rounded probabilities when every squared distance is an integer.

    The normalizer is summed exactly as a fraction over the distinct
    distance values, so e.g. weights (1, 1/3, 1/3) give exactly 0.3 and 0.1.
    """
    n = d2.shape[0]
    off = ~np.eye(n, dtype=bool)
    d = d2.astype(np.int64)
    tally = np.bincount(d[off])
    total = sum(Fraction(int(c), v + 1) for v, c in enumerate(tally) if c)
    table = np.array([float(1 / ((v + 1) * total)) for v in range(tally.size)])
    p = table[d]
    p[~off] = 0.0
    return p


def _check_points(points, name):
    a = np.asarray(points, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if a.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 rows")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def compute_label_distribution(labels, epsilon_floor: float = EPSILON_FLOOR) -> PairDistribution:
    """Student-t pair distribution of the rows of a binary label matrix.

    >>> Q = compute_label_distribution([[1, 0], [1, 0], [0, 1]])
    >>> Q.probs.tolist()
    [[0.0, 0.3, 0.1], [0.3, 0.0, 0.1], [0.1, 0.1, 0.0]]
    """
    Y = _check_points(labels, "labels")
    if np.array_equal(Y, np.round(Y)):
        d2 = _sq_distances(Y, np.empty((Y.shape[0], Y.shape[0])))
        return PairDistribution(_apply_floor(_integer_distance_probs(d2), epsilon_floor), epsilon_floor)
    w = _student_t_weights(Y)
    return PairDistribution(_normalize(w, epsilon_floor), epsilon_floor)


def compute_latent_distribution(z, epsilon_floor: float = EPSILON_FLOOR) -> PairDistribution:
    """Same construction as :func:`compute_label_distribution`, on latent codes."""
    codes = z.codes if isinstance(z, LatentCodes) else z
    Z = _check_points(codes, "latent codes")
    w = _student_t_weights(Z)
    return PairDistribution(_normalize(w, epsilon_floor), epsilon_floor)


def _probs(p):
    return p.probs if isinstance(p, PairDistribution) else np.asarray(p, dtype=np.float64)


def kl_divergence(q, u) -> float:
    """KL(q || u) summed over ordered pairs i != j."""
    q, u = _probs(q), _probs(u)
    if q.shape != u.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {u.shape}")
    off = ~np.eye(q.shape[0], dtype=bool)
    qo, uo = q[off], u[off]
    pos = qo > 0
    return float(np.sum(qo[pos] * np.log(qo[pos] / uo[pos])))


def cross_entropy_loss(q, z) -> float:
    """The optimized objective ``-sum q_ij log u_ij`` (KL up to a constant)."""
    q = _probs(q)
    u = compute_latent_distribution(z).probs
    off = ~np.eye(q.shape[0], dtype=bool)
    return float(-np.sum(q[off] * np.log(u[off])))


def _gradient_and_loss(q: np.ndarray, Z: np.ndarray, floor: float = EPSILON_FLOOR):
    """Gradient and value of ``-sum q log u`` in one O(n^2) pass."""
    tmp = np.empty((Z.shape[0], Z.shape[0]))
    d2 = _sq_distances(Z, tmp)
    np.log1p(d2, out=tmp)
    log_term = float(np.vdot(q, tmp))
    w = d2
    w += 1.0
    np.reciprocal(w, out=w)
    np.fill_diagonal(w, np.inf)
    w_min = w.min()
    np.fill_diagonal(w, 0.0)
    S = w.sum()
    if w_min / S >= floor:
        loss = log_term + math.log(S) * float(q.sum())
        coef = np.multiply(w, -1.0 / S, out=tmp)
    else:
        u = _normalize(w, floor)
        off = ~np.eye(q.shape[0], dtype=bool)
        loss = float(-np.sum(q[off] * np.log(u[off])))
        coef = np.negative(u, out=tmp)
    coef += q
    coef *= w
    # plain loops instead of a BLAS product keep the sum order fixed
    grad = Z * coef.sum(axis=1)[:, None] - np.einsum("ij,jk->ik", coef, Z)
    grad *= 4.0
    return grad, loss


def kl_gradient(q, z) -> np.ndarray:
    """Gradient of ``-sum q_ij log u_ij`` with respect to the codes.

    Row ``i`` is ``4 * sum_j (q_ij - u_ij) (z_i - z_j) / (1 + |z_i - z_j|^2)``.
    """
    q = _probs(q)
    Z = z.codes if isinstance(z, LatentCodes) else np.asarray(z, dtype=np.float64)
    if q.shape != (Z.shape[0], Z.shape[0]):
        raise ValueError(f"dimension mismatch: q is {q.shape}, codes have {Z.shape[0]} rows")
    grad, _ = _gradient_and_loss(q, Z)
    return grad


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class EncoderResult:
    codes: LatentCodes
    trace: list  # KL per iteration, index 0 is the initial layout
    step_norms: list  # squared step length per iteration, aligned with trace[1:]
    iterations: int
    converged: bool
    learning_rate: float

    def __iter__(self):
        # unpacks as (codes, trace)
        return iter((self.codes, self.trace))


def initial_codes(n: int, dim: int, scale: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((n, dim))


def optimize_latent(labels, cfg: EncoderConfig = EncoderConfig(), init=None) -> EncoderResult:
    """Minimize KL(Q || U) over latent codes with momentum gradient descent.

    The iteration is

        Z[t+1] = Z[t] - lr * grad + momentum(t+1) * (Z[t] - Z[t-1])

    and stops once ``|Z[t+1] - Z[t]|^2 <= tol`` (after ``min_iters``), when a
    step is exactly zero, or at ``max_iters``. A step with a non-finite loss,
    or one raising the loss by more than ``rise_tol`` (relative), is undone;
    the learning rate is halved and the momentum cleared. After
    ``max_halvings`` such events the run ends, raising
    :class:`EncoderDivergenceError` if the last loss was non-finite.
    """
    Y = _check_points(labels, "labels")
    n = Y.shape[0]
    dim = cfg.latent_dim or default_latent_dim(Y.shape[1])
    q = compute_label_distribution(Y).probs
    off = ~np.eye(n, dtype=bool)
    q_off = q[off]
    q_entropy = float(np.sum(q_off * np.log(q_off)))

    if init is None:
        Z = initial_codes(n, dim, cfg.init_scale, cfg.seed)
    else:
        Z = np.array(init.codes if isinstance(init, LatentCodes) else init, dtype=np.float64)
        if Z.shape[0] != n:
            raise ValueError("initial codes do not match the number of label rows")
    Z_prev = Z.copy()
    lr = cfg.learning_rate
    halvings = 0

    grad, loss = _gradient_and_loss(q, Z)
    trace = [q_entropy + loss]
    steps = []
    converged = False
    t = 0
    while t < cfg.max_iters:
        step = -lr * grad + cfg.momentum(t + 1) * (Z - Z_prev)
        Z_new = Z + step
        with np.errstate(over="ignore", invalid="ignore"):
            # non-finite results are detected and rolled back below
            grad_new, loss = _gradient_and_loss(q, Z_new)
        kl = q_entropy + loss
        finite = math.isfinite(kl) and bool(np.isfinite(grad_new).all())
        rose = cfg.rise_tol is not None and kl > trace[-1] * (1.0 + cfg.rise_tol)
        if not finite or rose:
            halvings += 1
            if halvings > cfg.max_halvings:
                if not finite:
                    raise EncoderDivergenceError(
                        f"non-finite loss at iteration {t + 1} (learning rate {lr:g})", trace
                    )
                break
            lr *= 0.5
            Z_prev = Z.copy()
            continue
        Z_prev, Z, grad = Z, Z_new, grad_new
        t += 1
        sq = float(np.sum(np.square(step)))
        trace.append(kl)
        steps.append(sq)
        if sq == 0.0 or (t >= cfg.min_iters and sq <= cfg.tol):
            converged = True
            break

    return EncoderResult(LatentCodes(Z), trace, steps, t, converged, lr)
