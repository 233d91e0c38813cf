"""Kernel logistic regression from features to latent codes.

Each latent dimension ``j`` gets its own function

    f_j(x) = sum_b kappa(x, basis_b) * c_jb

spanned by kernel features of a random subsample of the training rows (the
basis). In logistic mode the coefficients minimize

    sum_i log(1 + exp(-z_ij * f_j(x_i))) + lam * |c_j|^2

with the latent coordinate ``z_ij`` used directly as a real-valued margin
weight; ridge mode replaces the loss with squared error. Both objectives are
convex and are solved per dimension with damped Newton iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from .encoder import LatentCodes


class RegressorError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    rbf_gamma: Optional[float] = None  # None: median heuristic at training time

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.rbf_gamma is not None and not self.rbf_gamma > 0:
            raise ValueError("rbf_gamma must be positive")


@dataclass(frozen=True)
class RegressorConfig:
    lam: float = 0.01
    basis_size: Optional[int] = 500  # capped at n
    mode: str = "logistic"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    opt_tol: float = 1e-8
    max_opt_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("logistic", "ridge"):
            raise ValueError(f"unknown regression mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.basis_size is not None and self.basis_size < 1:
            raise ValueError("basis_size must be >= 1")


@dataclass(frozen=True, eq=False)
class KernelRegressor:
    kernel: KernelSpec  # rbf_gamma always resolved
    basis: np.ndarray  # s x d
    coeffs: np.ndarray  # s x r, column j spans dimension j
    lam: float
    mode: str
    # code = offset + scale * (model output), per dimension
    offset: np.ndarray
    scale: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def decision_function(self, features) -> np.ndarray:
        """Raw function values ``f_j(x)`` for every row and latent dimension."""
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.basis.shape[1]:
            raise ValueError(
                f"dimension mismatch: model expects {self.basis.shape[1]} features, got {X.shape}"
            )
        return kernel_matrix(X, self.basis, self.kernel) @ self.coeffs


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Exact pairwise squared Euclidean distances, accumulated per coordinate.

    Summing coordinate differences (rather than expanding the square) makes
    the result exactly symmetric and exactly zero for identical rows.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    out = np.zeros((A.shape[0], B.shape[0]))
    tmp = np.empty_like(out)
    for k in range(A.shape[1]):
        np.subtract.outer(A[:, k], B[:, k], out=tmp)
        tmp *= tmp
        out += tmp
    return out


def kernel_matrix(A, B, spec: KernelSpec) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if spec.kind == "linear":
        K = np.einsum("ik,jk->ij", A, B)
    else:
        if spec.rbf_gamma is None:
            raise ValueError("rbf kernel needs a resolved gamma")
        K = np.exp(-spec.rbf_gamma * squared_distances(A, B))
    if not np.isfinite(K).all():
        raise RegressorError("non-finite kernel entries")
    return K


def median_gamma(features, seed: int = 0, sample: int = 200) -> float:
    """``1 / median`` squared pairwise distance over a row sample."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] > sample:
        X = X[np.random.default_rng(seed).choice(X.shape[0], sample, replace=False)]
    d2 = squared_distances(X, X)[np.triu_indices(X.shape[0], 1)]
    med = float(np.median(d2)) if d2.size else 0.0
    return 1.0 / med if med > 0 else 1.0


def sample_basis(features, s: int, seed: int, return_index: bool = False):
    """Uniform sample of ``s`` rows without replacement."""
    X = np.asarray(features)
    n = X.shape[0]
    if not 1 <= s <= n:
        raise ValueError(f"basis size {s} outside [1, {n}]")
    idx = np.random.default_rng(seed).choice(n, size=s, replace=False)
    return (X[idx], idx) if return_index else X[idx]


# ---------------------------------------------------------------------------
# per-dimension objectives
# ---------------------------------------------------------------------------


def logistic_objective(c, K, z, lam) -> float:
    """``sum_i log(1 + exp(-z_i (K c)_i)) + lam |c|^2``."""
    f = K @ c
    return float(-np.sum(log_expit(z * f)) + lam * np.dot(c, c))


def logistic_gradient(c, K, z, lam) -> np.ndarray:
    f = K @ c
    return K.T @ (-z * expit(-z * f)) + 2.0 * lam * c


def logistic_hessian(c, K, z, lam) -> np.ndarray:
    m = z * (K @ c)
    curv = z * z * expit(m) * expit(-m)
    H = K.T @ (K * curv[:, None])
    H[np.diag_indices_from(H)] += 2.0 * lam
    return H


def ridge_objective(c, K, z, lam) -> float:
    r = K @ c - z
    return float(np.dot(r, r) + lam * np.dot(c, c))


def _solve(H, g):
    try:
        return np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, g, rcond=None)[0]


def fit_logistic_dimension(K, z, lam, tol=1e-8, max_iter=100, history=None):
    """Damped Newton with Armijo backtracking; returns the coefficient vector.

    Accepted steps never raise the objective. ``history``, if given, collects
    the objective after every accepted step.
    """
    c = np.zeros(K.shape[1])
    obj = logistic_objective(c, K, z, lam)
    if history is not None:
        history.append(obj)
    for _ in range(max_iter):
        g = logistic_gradient(c, K, z, lam)
        if not np.any(g):
            break
        H = logistic_hessian(c, K, z, lam)
        if lam == 0:
            H[np.diag_indices_from(H)] += 1e-10 * max(1.0, float(np.trace(H)) / len(H))
        step = _solve(H, g)
        slope = float(g @ step)
        if not slope > 0:
            step, slope = g, float(g @ g)
        t = 1.0
        while True:
            c_new = c - t * step
            obj_new = logistic_objective(c_new, K, z, lam)
            if obj_new <= obj - 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                obj_new = None
                break
        if obj_new is None:
            break
        if obj_new > obj * (1 + tol) + 1e-300:
            raise RegressorError("objective increased across an accepted step")
        rel = (obj - obj_new) / max(abs(obj), 1e-300)
        c, obj = c_new, obj_new
        if history is not None:
            history.append(obj)
        if rel < tol:
            break
    return c


def fit_ridge_dimension(K, z, lam):
    H = K.T @ K
    H[np.diag_indices_from(H)] += lam
    return _solve(H, K.T @ z)


# ---------------------------------------------------------------------------
# training / prediction
# ---------------------------------------------------------------------------


def _code_matrix(z):
    Z = z.codes if isinstance(z, LatentCodes) else np.asarray(z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    return Z


def train_regressor(features, z, cfg: RegressorConfig = RegressorConfig()) -> KernelRegressor:
    """Fit one kernel regression per latent dimension.

    Logistic mode rescales each code column to max-abs 1 before use as
    margin weights; ridge mode standardizes each column. The constants are
    kept on the model.
    """
    X = np.asarray(features, dtype=np.float64)
    Z = _code_matrix(z)
    if X.ndim != 2 or X.shape[0] != Z.shape[0]:
        raise ValueError("features and codes must be row-aligned")
    n = X.shape[0]
    s = min(n, cfg.basis_size or n)
    basis = sample_basis(X, s, cfg.seed)
    spec = cfg.kernel
    if spec.kind == "rbf" and spec.rbf_gamma is None:
        spec = KernelSpec("rbf", median_gamma(X, cfg.seed))
    K = kernel_matrix(X, basis, spec)

    r = Z.shape[1]
    coeffs = np.zeros((s, r))
    if cfg.mode == "logistic":
        offset = np.zeros(r)
        scale = np.abs(Z).max(axis=0)
        scale[scale == 0] = 1.0
        targets = Z / scale
        for j in range(r):
            coeffs[:, j] = fit_logistic_dimension(
                K, targets[:, j], cfg.lam, cfg.opt_tol, cfg.max_opt_iters
            )
    else:
        offset = Z.mean(axis=0)
        scale = Z.std(axis=0)
        scale[scale == 0] = 1.0
        targets = (Z - offset) / scale
        for j in range(r):
            coeffs[:, j] = fit_ridge_dimension(K, targets[:, j], cfg.lam)
    if not np.isfinite(coeffs).all():
        raise RegressorError("non-finite coefficients")
    for a in (basis, coeffs, offset, scale):
        a.setflags(write=False)
    return KernelRegressor(spec, basis, coeffs, cfg.lam, cfg.mode, offset, scale)


def predict_latent(model: KernelRegressor, features):
    """Predicted latent codes and per-dimension probabilities.

    Logistic mode returns ``probs = sigmoid(f)`` and maps each output back to
    code units as ``scale * (2 * probs - 1)``; ridge mode returns
    de-standardized outputs and an empty probability matrix.
    """
    f = model.decision_function(features)
    if model.mode == "logistic":
        probs = expit(f)
        codes = model.offset + model.scale * (2.0 * probs - 1.0)
    else:
        probs = np.empty((f.shape[0], 0))
        codes = model.offset + model.scale * f
    return codes, probs
