"""Gaussian-process regression surrogate with a Matérn 5/2 ARD kernel.

Hyperparameters are fitted by maximising the log marginal likelihood with
multi-start L-BFGS-B in log-parameter space, using analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

SQRT5 = math.sqrt(5.0)
JITTER_START = 1e-10
JITTER_MAX = 1e-4
NOISE_FLOOR = 1e-8

# log-space box for the optimiser (inputs live in the unit cube, y is standardised)
LOG_LS_BOUNDS = (math.log(5e-2), math.log(1e2))
LOG_SF2_BOUNDS = (math.log(1e-3), math.log(1e2))
LOG_SN2_BOUNDS = (math.log(NOISE_FLOOR), math.log(1.0))


class GPError(RuntimeError):
    """Raised when the covariance cannot be factorised even with maximal jitter."""


@dataclass(frozen=True)
class KernelParams:
    lengthscales: tuple[float, ...]
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        if any(not v > 0 for v in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        if not self.signal_variance > 0:
            raise ValueError("signal variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise variance must be non-negative")

    def to_log_vector(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_log_vector(cls, theta: np.ndarray) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(tuple(np.exp(theta[:-2])), float(np.exp(theta[-2])), float(np.exp(theta[-1])))


@dataclass(frozen=True)
class Posterior:
    mean: float
    std: float


@dataclass(frozen=True, eq=False)
class GPModel:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    kernel: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    seed: int = 0
    y_raw: np.ndarray | None = None  # targets as observed, kept for exact refits

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def matern52(A: np.ndarray, B: np.ndarray, kernel: KernelParams) -> np.ndarray:
    ls = np.asarray(kernel.lengthscales)
    a = A / ls
    b = B / ls
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    r = np.sqrt(np.maximum(sq, 0.0))
    s5r = SQRT5 * r
    return kernel.signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * np.exp(-s5r)


def _pairwise_diff(X: np.ndarray) -> np.ndarray:
    return X[:, None, :] - X[None, :, :]


def _train_cov(X: np.ndarray, kernel: KernelParams, diff: np.ndarray | None = None):
    """Training covariance and its derivatives w.r.t. log lengthscales.

    ``diff`` may carry precomputed pairwise differences of X.
    """
    ls = np.asarray(kernel.lengthscales)
    if diff is None:
        diff = _pairwise_diff(X)
    D = diff / ls  # n x n x d, scaled differences
    D2 = D * D
    r = np.sqrt(D2.sum(-1))
    s5r = SQRT5 * r
    e = np.exp(-s5r)
    K = kernel.signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * e
    # dk/dlog(l_i) = sf2 * 5/3 * (1 + sqrt5 r) exp(-sqrt5 r) * d_i^2 / l_i^2
    dK_dls = (kernel.signal_variance * 5.0 / 3.0 * (1.0 + s5r) * e)[:, :, None] * D2
    return K, dK_dls


def cholesky_with_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    jitter = JITTER_START
    eye = np.eye(A.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GPError("covariance matrix is not positive definite even with maximal jitter")


def log_marginal_likelihood(X, y, kernel: KernelParams, return_grad: bool = False,
                            _diff: np.ndarray | None = None):
    """LML of (already standardised) targets y; gradient is w.r.t. the log parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    K, dK_dls = _train_cov(X, kernel, _diff)
    L, _ = cholesky_with_jitter(K + kernel.noise_variance * np.eye(n))
    alpha = cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    if not return_grad:
        return lml
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n), check_finite=False)
    g_ls = 0.5 * np.einsum("ij,ijk->k", W, dK_dls)
    g_sf2 = 0.5 * np.sum(W * K)
    g_sn2 = 0.5 * np.trace(W) * kernel.noise_variance
    return lml, np.r_[g_ls, g_sf2, g_sn2]


def _check_inputs(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs")
    return X, y


def _bounds(d: int):
    return [LOG_LS_BOUNDS] * d + [LOG_SF2_BOUNDS, LOG_SN2_BOUNDS]


def _optimise(X, ys, seed: int, n_restarts: int) -> KernelParams:
    d = X.shape[1]
    bounds = _bounds(d)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    diff = _pairwise_diff(X)

    def negative(theta):
        try:
            lml, grad = log_marginal_likelihood(X, ys, KernelParams.from_log_vector(theta), True,
                                                diff)
        except GPError:
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    rng = np.random.default_rng(seed)
    starts = [np.r_[np.full(d, math.log(0.5)), 0.0, math.log(1e-4)]]
    starts += [rng.uniform(lo, hi) for _ in range(n_restarts - 1)]
    best_theta, best_val = starts[0], np.inf
    for x0 in starts:
        res = minimize(negative, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 200})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    return KernelParams.from_log_vector(np.clip(best_theta, lo, hi))


def fit(X, y, seed: int = 0, kernel: KernelParams | None = None, n_restarts: int = 10) -> GPModel:
    """Fit a GP to (X, y).  Passing ``kernel`` skips hyperparameter optimisation."""
    X, y = _check_inputs(X, y)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 0:
        y_std = 1.0
    ys = (y - y_mean) / y_std
    if kernel is None:
        kernel = _optimise(X, ys, seed, n_restarts) if X.shape[0] > 1 else \
            KernelParams((0.5,) * X.shape[1], 1.0, 0.0)
    elif len(kernel.lengthscales) != X.shape[1]:
        raise ValueError("kernel dimension does not match X")
    K = matern52(X, X, kernel)
    L, jitter = cholesky_with_jitter(K + kernel.noise_variance * np.eye(X.shape[0]))
    alpha = cho_solve((L, True), ys)
    return GPModel(X, ys, y_mean, y_std, kernel, L, alpha, jitter, seed, y)


def predict_many(model: GPModel, U) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at every row of U."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim}-dimensional inputs, got {U.shape[1]}")
    Ks = matern52(U, model.X, model.kernel)
    mean = Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True)
    var = np.maximum(model.kernel.signal_variance - np.einsum("ij,ij->j", v, v), 0.0)
    return mean * model.y_std + model.y_mean, np.sqrt(var) * model.y_std


def predict(model: GPModel, u) -> Posterior:
    u = np.asarray(u, dtype=float).ravel()
    mean, std = predict_many(model, u[None, :])
    return Posterior(float(mean[0]), float(std[0]))


def update(model: GPModel, u, value: float, kernel: KernelParams | None = None) -> GPModel:
    """Refit on the dataset augmented with (u, value)."""
    if not math.isfinite(value):
        raise ValueError("objective value must be finite")
    X = np.vstack([model.X, np.asarray(u, dtype=float).ravel()])
    y = np.r_[model.y_raw, value]
    return fit(X, y, seed=model.seed, kernel=kernel)

