"""Gaussian-process regression over the joint ``(x, y)`` space.

Zero prior mean, squared-exponential kernel, fixed observation noise. The
posterior mean and standard deviation are returned together with their
analytic gradients and Hessians, which the game residuals need.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

__all__ = [
    "Hyperparams",
    "Dataset",
    "GPSurrogate",
    "PosteriorEval",
    "NumericalError",
    "HyperparameterWarning",
    "kernel_with_derivs",
    "fit",
    "posterior_eval",
    "log_marginal_likelihood",
    "optimize_hyperparameters",
    "append_observation",
]

JITTER_START = 1e-10
JITTER_MAX = 1e-4
STD_FLOOR = 1e-8
VAR_ROUNDING = 16 * np.finfo(float).eps


class NumericalError(ArithmeticError):
    """Raised when a Gram matrix cannot be factorized even with jitter."""


class HyperparameterWarning(RuntimeWarning):
    """Every hyperparameter ascent failed; the initial guess was kept."""


@dataclass(frozen=True)
class Hyperparams:
    signal_variance: float
    length_scale: float
    noise_variance: float = 0.0

    def __post_init__(self):
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass(frozen=True)
class Dataset:
    """Observed joint points (rows of ``points``) and noisy values.

    ``lo``/``hi`` optionally carry the domain box the points live in.
    """

    points: np.ndarray
    observations: np.ndarray
    n_x: int
    n_y: int
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, self.n_x + self.n_y)
        obs = np.asarray(self.observations, dtype=float).reshape(-1)
        if pts.shape[1] != self.n_x + self.n_y:
            raise ValueError("point dimension does not match n_x + n_y")
        if pts.shape[0] != obs.shape[0]:
            raise ValueError("points and observations differ in length")
        if self.lo is not None:
            lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
            if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
                raise ValueError("dataset point outside the domain box")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "observations", obs)

    @property
    def dim(self):
        return self.n_x + self.n_y

    def __len__(self):
        return self.observations.shape[0]

    def with_point(self, p, r):
        p = np.asarray(p, dtype=float).reshape(1, -1)
        return Dataset(
            np.vstack([self.points, p]),
            np.append(self.observations, float(r)),
            self.n_x, self.n_y, self.lo, self.hi,
        )

    def diameter(self):
        if self.lo is not None:
            return float(np.linalg.norm(self.hi - self.lo))
        if len(self) < 2:
            return 1.0
        return float(np.linalg.norm(self.points.max(0) - self.points.min(0))) or 1.0


@dataclass(frozen=True)
class PosteriorEval:
    mean: float
    mean_grad: np.ndarray
    mean_hess: np.ndarray
    std: float
    std_grad: np.ndarray
    std_hess: np.ndarray


@dataclass(frozen=True)
class GPSurrogate:
    """Factorized GP posterior; immutable, build with :func:`fit`.

    ``chol`` is the lower Cholesky factor of ``K + (noise + jitter) I`` and
    ``weights`` solves that system against the observations.
    """

    hyperparams: Hyperparams
    dataset: Dataset
    chol: np.ndarray
    weights: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self):
        return self.dataset.dim


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


def kernel_with_derivs(xi, xj, hp: Hyperparams):
    """SE kernel value with gradient and Hessian with respect to ``xi``."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    diff = xi - xj
    inv_l2 = 1.0 / hp.length_scale**2
    value = hp.signal_variance * np.exp(-0.5 * inv_l2 * (diff @ diff))
    grad = -value * inv_l2 * diff
    hess = value * (inv_l2**2 * np.outer(diff, diff) - inv_l2 * np.eye(diff.size))
    return value, grad, hess


def _sq_dists(A, B):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def _gram(points, hp):
    return hp.signal_variance * np.exp(-0.5 * _sq_dists(points, points) / hp.length_scale**2)


def _factorize(K, base_diag, signal_variance):
    """Cholesky of ``K + base_diag I`` with escalating jitter."""
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + (base_diag + jitter) * np.eye(n))
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START * signal_variance if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * signal_variance * (1 + 1e-9):
            cond = np.linalg.cond(K + base_diag * np.eye(n)) if n else 0.0
            raise NumericalError(
                f"Gram matrix not positive definite after jitter {JITTER_MAX:g}*sigma_f^2 "
                f"(condition estimate {cond:.3g})"
            )


# ---------------------------------------------------------------------------
# Fitting and prediction
# ---------------------------------------------------------------------------


def fit(dataset: Dataset, hp: Hyperparams) -> GPSurrogate:
    """Factorize the Gram matrix of ``dataset`` and solve for the weights.

    An empty dataset gives the prior.
    """
    n = len(dataset)
    if n == 0:
        return GPSurrogate(hp, dataset, np.zeros((0, 0)), np.zeros(0), 0.0)
    K = _gram(dataset.points, hp)
    L, jitter = _factorize(K, hp.noise_variance, hp.signal_variance)
    weights = cho_solve((L, True), dataset.observations)
    return GPSurrogate(hp, dataset, L, weights, jitter)


def append_observation(s: GPSurrogate, p, r) -> GPSurrogate:
    """Add one observation, extending the Cholesky factor by a row.

    Falls back to a full refit when the extension loses positive
    definiteness.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (s.dim,):
        raise ValueError(f"expected a point of dimension {s.dim}")
    hp = s.hyperparams
    data = s.dataset.with_point(p, r)
    n = len(s.dataset)
    if n == 0:
        return fit(data, hp)
    k = hp.signal_variance * np.exp(
        -0.5 * _sq_dists(s.dataset.points, p[None, :])[:, 0] / hp.length_scale**2
    )
    row = solve_triangular(s.chol, k, lower=True)
    corner = hp.signal_variance + hp.noise_variance + s.jitter - row @ row
    if not corner > 1e-12 * hp.signal_variance:
        return fit(data, hp)
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = s.chol
    L[n, :n] = row
    L[n, n] = np.sqrt(corner)
    weights = cho_solve((L, True), data.observations)
    return GPSurrogate(hp, data, L, weights, s.jitter)


def posterior_eval(s: GPSurrogate, p, derivs=True) -> PosteriorEval:
    """Posterior mean and standard deviation at ``p`` with derivatives.

    Variances below the rounding level of ``k(p, p) - k^T K^-1 k`` are set
    to zero before the square root. Where the standard deviation drops
    below 1e-8 its derivatives are reported as zero.
    """
    p = np.asarray(p, dtype=float)
    d = s.dim
    if p.shape != (d,):
        raise ValueError(f"expected a point of dimension {d}, got shape {p.shape}")
    hp = s.hyperparams
    sf2, inv_l2 = hp.signal_variance, 1.0 / hp.length_scale**2
    X = s.dataset.points
    if X.shape[0] == 0:
        z = np.zeros(d)
        Z = np.zeros((d, d))
        return PosteriorEval(0.0, z, Z, float(np.sqrt(sf2)), z.copy(), Z.copy())

    diff = p[None, :] - X                      # (n, d)
    k = sf2 * np.exp(-0.5 * inv_l2 * np.einsum("ij,ij->i", diff, diff))
    mean = float(k @ s.weights)
    a = solve_triangular(s.chol, k, lower=True)
    var = sf2 - float(a @ a)
    # anything below the rounding error of the subtraction is zero
    if var <= VAR_ROUNDING * X.shape[0] * sf2:
        var = 0.0
    std = float(np.sqrt(var))
    if not derivs:
        z = np.zeros(d)
        Z = np.zeros((d, d))
        return PosteriorEval(mean, z, Z, std, z, Z)

    D = -inv_l2 * k[:, None] * diff            # rows are grad_p k(p, x_i)
    mean_grad = D.T @ s.weights
    ak = s.weights * k
    mean_hess = inv_l2**2 * (diff.T * ak) @ diff - inv_l2 * ak.sum() * np.eye(d)

    if std < STD_FLOOR:
        z = np.zeros(d)
        Z = np.zeros((d, d))
        return PosteriorEval(mean, mean_grad, mean_hess, std, z, Z)

    B = solve_triangular(s.chol, D, lower=True)
    w = solve_triangular(s.chol, a, lower=True, trans="T")
    var_grad = -2.0 * B.T @ a
    wk = w * k
    var_hess = -2.0 * (B.T @ B + inv_l2**2 * (diff.T * wk) @ diff - inv_l2 * wk.sum() * np.eye(d))
    std_grad = var_grad / (2.0 * std)
    std_hess = var_hess / (2.0 * std) - np.outer(var_grad, var_grad) / (4.0 * std**3)
    std_hess = 0.5 * (std_hess + std_hess.T)
    mean_hess = 0.5 * (mean_hess + mean_hess.T)
    return PosteriorEval(mean, mean_grad, mean_hess, std, std_grad, std_hess)


def mean_gradients(s: GPSurrogate, P):
    """Posterior-mean gradients at every row of ``P`` (vectorized)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    X = s.dataset.points
    if X.shape[0] == 0:
        return np.zeros_like(P)
    inv_l2 = 1.0 / s.hyperparams.length_scale**2
    Kw = s.hyperparams.signal_variance * np.exp(-0.5 * inv_l2 * _sq_dists(P, X)) * s.weights
    return -inv_l2 * (Kw.sum(1)[:, None] * P - Kw @ X)


# ---------------------------------------------------------------------------
# Marginal likelihood
# ---------------------------------------------------------------------------


def _lml_and_grad(points, r, log_sf2, log_l, noise):
    """Log marginal likelihood and its gradient in ``(log sf2, log l)``."""
    sf2, l = np.exp(log_sf2), np.exp(log_l)
    d2 = _sq_dists(points, points)
    E = sf2 * np.exp(-0.5 * d2 / l**2)
    L, _ = _factorize(E, noise, sf2)
    alpha = cho_solve((L, True), r)
    n = r.size
    lml = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    g_sf2 = 0.5 * np.sum(W * E)
    g_l = 0.5 * np.sum(W * (E * d2 / l**2))
    return float(lml), np.array([g_sf2, g_l])


def log_marginal_likelihood(dataset: Dataset, hp: Hyperparams) -> float:
    """``log p(r | X, hp)`` for the zero-mean GP."""
    if len(dataset) == 0:
        raise ValueError("log marginal likelihood needs a nonempty dataset")
    K = _gram(dataset.points, hp)
    L, _ = _factorize(K, hp.noise_variance, hp.signal_variance)
    r = dataset.observations
    alpha = cho_solve((L, True), r)
    return float(-0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(r) * np.log(2 * np.pi))


def optimize_hyperparameters(dataset: Dataset, init: Hyperparams, restarts=5, rng=None):
    """Maximize the log marginal likelihood over signal variance and length scale.

    L-BFGS-B ascent in log space from ``init`` plus ``restarts`` log-uniform
    draws (signal variance in ``[1e-2, 1e2]`` times the mean squared
    observation, length scale in ``[0.05, 2]`` times the domain diameter).
    The noise variance stays at ``init.noise_variance``. The best candidate
    is returned and is never worse than ``init``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit hyperparameters to an empty dataset")
    if restarts < 0:
        raise ValueError("restarts must be >= 0")
    rng = np.random.default_rng(rng)
    X, r = dataset.points, dataset.observations
    noise = init.noise_variance
    scale = max(float(r @ r) / r.size, 1e-12)
    diam = dataset.diameter()
    bounds = [
        (np.log(1e-4 * scale), np.log(1e4 * scale)),
        (np.log(1e-3 * diam), np.log(10.0 * diam)),
    ]

    def neg(theta):
        try:
            v, g = _lml_and_grad(X, r, theta[0], theta[1], noise)
        except NumericalError:
            return 1e300, np.zeros(2)
        return -v, -g

    starts = [np.array([np.log(init.signal_variance), np.log(init.length_scale)])]
    for _ in range(restarts):
        starts.append(np.array([
            rng.uniform(np.log(1e-2 * scale), np.log(1e2 * scale)),
            rng.uniform(np.log(0.05 * diam), np.log(2.0 * diam)),
        ]))

    try:
        best_val = -log_marginal_likelihood(dataset, init)
    except NumericalError:
        best_val = np.inf
    best = init
    failures = 0
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            res = minimize(neg, x0, jac=True, method="L-BFGS-B", bounds=bounds)
        except (ValueError, FloatingPointError):
            failures += 1
            continue
        if not (np.all(np.isfinite(res.x)) and res.fun < 1e300):
            failures += 1
        elif res.fun < best_val:
            best_val = float(res.fun)
            best = Hyperparams(float(np.exp(res.x[0])), float(np.exp(res.x[1])), noise)
    if failures == len(starts):
        warnings.warn("all hyperparameter ascents failed; keeping the initial guess",
                      HyperparameterWarning, stacklevel=2)
    return best
