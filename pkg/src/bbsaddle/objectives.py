"""Benchmark saddle-point objectives.

Every analytic objective returns ``(value, grad, hess)`` at a point. The
:class:`Objective` wrapper adds a domain box, a noisy zeroth-order sampler
and the ground-truth derivative oracle used for evaluation only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Objective",
    "ArimaParams",
    "MpcParams",
    "decaying_poly",
    "bertsimas_poly",
    "highdim_poly",
    "quadratic_saddle",
    "arima_generate",
    "mpc_track_cost",
    "mpc_track_costs",
    "arima_generate_innovations",
    "arima_mpc_eval",
    "noisy_sample",
    "fd_oracle",
    "make_objective",
    "OBJECTIVE_IDS",
    "BERTSIMAS_BOX",
]

BERTSIMAS_BOX = (np.array([-0.95, -0.45]), np.array([3.2, 4.4]))


# ---------------------------------------------------------------------------
# Analytic test functions
# ---------------------------------------------------------------------------


def decaying_poly(p):
    """Decaying polynomial ``exp(-0.01 |p|^2) ((0.3x^2 + y)^2 + (0.5y^2 + x)^2)``."""
    p = np.asarray(p, dtype=float)
    x, y = p
    a = 0.3 * x**2 + y
    b = 0.5 * y**2 + x
    g = a**2 + b**2
    dg = np.array([1.2 * x * a + 2.0 * b, 2.0 * a + 2.0 * y * b])
    hg = np.array(
        [
            [1.2 * a + 0.72 * x**2 + 2.0, 1.2 * x + 2.0 * y],
            [1.2 * x + 2.0 * y, 2.0 + 2.0 * y**2 + 2.0 * b],
        ]
    )
    e = np.exp(-0.01 * (x**2 + y**2))
    de = -0.02 * p * e
    he = e * (-0.02 * np.eye(2) + 0.0004 * np.outer(p, p))
    value = e * g
    grad = e * dg + g * de
    hess = e * hg + np.outer(de, dg) + np.outer(dg, de) + g * he
    return value, grad, hess


def _bertsimas_terms(x, y):
    value = (
        -2 * x**6 + 12.2 * x**5 - 21.2 * x**4 - 6.2 * x + 6.4 * x**3 + 4.7 * x**2
        - y**6 + 11 * y**5 - 43.3 * y**4 + 10 * y + 74.8 * y**3 - 56.9 * y**2
        + 4.1 * x * y + 0.1 * y**2 * x**2 - 0.4 * y**2 * x - 0.4 * x**2 * y
    )
    fx = (
        -12 * x**5 + 61 * x**4 - 84.8 * x**3 - 6.2 + 19.2 * x**2 + 9.4 * x
        + 4.1 * y + 0.2 * y**2 * x - 0.4 * y**2 - 0.8 * x * y
    )
    fy = (
        -6 * y**5 + 55 * y**4 - 173.2 * y**3 + 10 + 224.4 * y**2 - 113.8 * y
        + 4.1 * x + 0.2 * x**2 * y - 0.8 * x * y - 0.4 * x**2
    )
    fxx = -60 * x**4 + 244 * x**3 - 254.4 * x**2 + 38.4 * x + 9.4 + 0.2 * y**2 - 0.8 * y
    fyy = -30 * y**4 + 220 * y**3 - 519.6 * y**2 + 448.8 * y - 113.8 + 0.2 * x**2 - 0.8 * x
    fxy = 4.1 + 0.4 * x * y - 0.8 * y - 0.8 * x
    return value, fx, fy, fxx, fyy, fxy


def bertsimas_poly(p):
    """Sixth-order polynomial of Bertsimas et al. on (x, y)."""
    x, y = np.asarray(p, dtype=float)
    value, fx, fy, fxx, fyy, fxy = _bertsimas_terms(x, y)
    return float(value), np.array([fx, fy]), np.array([[fxx, fxy], [fxy, fyy]])


def highdim_poly(p):
    """Sum of :func:`bertsimas_poly` over the pairs ``(x_i, y_i)``.

    ``p`` is laid out as ``(x_1..x_n, y_1..y_n)``.
    """
    p = np.asarray(p, dtype=float)
    n = p.size // 2
    if p.size != 2 * n:
        raise ValueError("highdim_poly needs an even number of coordinates")
    x, y = p[:n], p[n:]
    value, fx, fy, fxx, fyy, fxy = _bertsimas_terms(x, y)
    grad = np.concatenate([fx, fy])
    hess = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    hess[idx, idx] = fxx
    hess[n + idx, n + idx] = fyy
    hess[idx, n + idx] = fxy
    hess[n + idx, idx] = fxy
    return float(np.sum(value)), grad, hess


def quadratic_saddle(a, b, c):
    """Return the convex-concave quadratic ``a x^2 + b x y - c y^2``."""
    if min(a, b, c) <= 0:
        raise ValueError("quadratic_saddle needs a, b, c > 0")
    hess = np.array([[2.0 * a, b], [b, -2.0 * c]])

    def f(p):
        p = np.asarray(p, dtype=float)
        x, y = p
        return a * x**2 + b * x * y - c * y**2, hess @ p, hess.copy()

    return f


# ---------------------------------------------------------------------------
# ARIMA vs MPC game
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArimaParams:
    alpha: float = 0.0
    beta: float = 0.0
    mean: float = 0.0
    innovation_sd: float = 0.1
    s0: float = 0.0
    horizon: int = 20

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("ARIMA horizon must be >= 1")
        if self.innovation_sd < 0:
            raise ValueError("innovation_sd must be nonnegative")


@dataclass(frozen=True)
class MpcParams:
    A: float = 0.0
    B: float = 1.0
    Q: float = 1.0
    R: float = 0.1
    u_min: float = -2.0
    u_max: float = 2.0
    s0_hat: float = 0.0

    def __post_init__(self):
        if not self.u_min <= self.u_max:
            raise ValueError("u_min must not exceed u_max")
        if self.Q <= 0 or self.R <= 0:
            raise ValueError("Q and R must be positive")


def arima_generate(params: ArimaParams, seed=None, innovations=None):
    """Simulate ``s_{t+1} = mean + alpha s_t + beta w_{t-1} + w_t``.

    Returns ``s_1 .. s_F``. Innovations are drawn from ``seed`` unless an
    explicit array of ``F`` draws is given; ``w_{-1}`` is zero.
    """
    F = params.horizon
    if innovations is None:
        rng = np.random.default_rng(seed)
        w = params.innovation_sd * rng.standard_normal(F)
    else:
        w = np.asarray(innovations, dtype=float)
        if w.shape != (F,):
            raise ValueError(f"expected {F} innovations, got shape {w.shape}")
    out = np.empty(F)
    s, w_prev = params.s0, 0.0
    for t in range(F):
        s = params.mean + params.alpha * s + params.beta * w_prev + w[t]
        out[t] = s
        w_prev = w[t]
    return out


def _rollout_matrices(A, B, F, s0_hat):
    # s_hat[t] (t = 1..F) = A^t s0_hat + sum_{k<t} A^(t-1-k) B u_k
    powers = A ** np.arange(F + 1)
    lag = np.arange(F)[:, None] - np.arange(F)[None, :]
    phi = np.where(lag >= 0, B * powers[np.clip(lag, 0, F)], 0.0)
    free = powers[1:] * s0_hat
    return phi, free


def mpc_track_cost(mpc: MpcParams, series, max_iter=10_000, tol=1e-8, return_controls=False):
    """Optimal box-constrained tracking cost of ``series`` under model ``(A, B)``.

    Minimizes ``sum_t Q (s_hat_t - s_t)^2 + R u_t^2`` over controls
    ``u_0..u_{F-1}`` with the states eliminated by rollout, using
    accelerated projected gradient (monotone variant). The control-
    independent ``t = 0`` tracking term is left out.
    """
    s = np.asarray(series, dtype=float)
    F = s.size
    phi, free = _rollout_matrices(mpc.A, mpc.B, F, mpc.s0_hat)
    H = mpc.Q * phi.T @ phi + mpc.R * np.eye(F)
    c = mpc.Q * phi.T @ (free - s)
    const = mpc.Q * float((free - s) @ (free - s))
    lo, hi = mpc.u_min, mpc.u_max

    def cost(u):
        return float(u @ H @ u + 2.0 * c @ u + const)

    # warm start at the clipped unconstrained optimum
    u = np.clip(np.linalg.solve(H, -c), lo, hi)
    best_u, best = u, cost(u)
    step = 1.0 / (2.0 * np.linalg.eigvalsh(H)[-1])
    z, t = u.copy(), 1.0
    for _ in range(max_iter):
        grad = 2.0 * (H @ best_u + c)
        if np.max(np.abs(best_u - np.clip(best_u - grad, lo, hi))) < tol:
            break
        u_new = np.clip(z - step * 2.0 * (H @ z + c), lo, hi)
        val = cost(u_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if val <= best:
            z = u_new + ((t - 1.0) / t_new) * (u_new - best_u)
            best_u, best = u_new, val
        else:
            # restart momentum with a plain projected-gradient step, which
            # cannot increase the cost beyond rounding
            best_u = np.clip(best_u - step * grad, lo, hi)
            best = cost(best_u)
            z, t_new = best_u.copy(), 1.0
        t = t_new
    best = max(best, 0.0)
    if return_controls:
        return best, best_u
    return best


def mpc_track_costs(mpc: MpcParams, series_batch, max_iter=10_000, tol=1e-8):
    """Optimal tracking costs for many series under one model.

    Column-wise version of :func:`mpc_track_cost` for an ``(n, F)`` batch;
    all series share the rollout matrices, so one factorization serves the
    whole batch.
    """
    S = np.atleast_2d(np.asarray(series_batch, dtype=float))
    n, F = S.shape
    phi, free = _rollout_matrices(mpc.A, mpc.B, F, mpc.s0_hat)
    H = mpc.Q * phi.T @ phi + mpc.R * np.eye(F)
    resid = free[:, None] - S.T  # (F, n)
    C = mpc.Q * phi.T @ resid
    const = mpc.Q * np.einsum("ij,ij->j", resid, resid)
    lo, hi = mpc.u_min, mpc.u_max

    def cost(U, cols):
        return (np.einsum("ij,ij->j", U, H @ U) + 2.0 * np.einsum("ij,ij->j", C[:, cols], U)
                + const[cols])

    every = np.arange(n)
    best = np.clip(np.linalg.solve(H, -C), lo, hi)
    best_val = cost(best, every)
    step = 1.0 / (2.0 * np.linalg.eigvalsh(H)[-1])
    Z, t = best.copy(), np.ones(n)
    # iterate only on the columns that have not converged yet
    active = every
    for _ in range(max_iter):
        B_ = best[:, active]
        G = 2.0 * (H @ B_ + C[:, active])
        done = np.max(np.abs(B_ - np.clip(B_ - G, lo, hi)), axis=0) < tol
        active = active[~done]
        if active.size == 0:
            break
        Za, ta, Ba = Z[:, active], t[active], best[:, active]
        U = np.clip(Za - step * 2.0 * (H @ Za + C[:, active]), lo, hi)
        val = cost(U, active)
        ok = val <= best_val[active]
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ta * ta))
        # rejected columns restart with a projected-gradient step
        P = np.clip(Ba - step * G[:, ~done], lo, hi)
        Z[:, active] = np.where(ok, U + ((ta - 1.0) / t_new) * (U - Ba), P)
        t[active] = np.where(ok, t_new, 1.0)
        best[:, active] = np.where(ok, U, P)
        best_val[active] = np.where(ok, val, cost(P, active))
    return np.maximum(best_val, 0.0)


def arima_mpc_eval(protagonist, antagonist, arima: ArimaParams, mpc: MpcParams, innovations):
    """Game value ``f((A, B), (alpha, beta))`` with frozen innovations."""
    A, B = (float(v) for v in protagonist)
    alpha, beta = (float(v) for v in antagonist)
    if max(abs(A), abs(B), abs(alpha), abs(beta)) > 1.0 + 1e-12:
        raise ValueError("ARIMA-MPC parameters must lie in [-1, 1]")
    series = arima_generate(
        ArimaParams(alpha, beta, arima.mean, arima.innovation_sd, arima.s0, arima.horizon),
        innovations=innovations,
    )
    return mpc_track_cost(
        MpcParams(A, B, mpc.Q, mpc.R, mpc.u_min, mpc.u_max, mpc.s0_hat), series
    )


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def fd_oracle(fun, p, h=1e-4, lo=None, hi=None):
    """Central-difference gradient and Hessian of a scalar function.

    The step on coordinate ``i`` is ``h (1 + |p_i|)``. When a box is given
    and a central stencil would leave it, that coordinate falls back to a
    one-sided stencil and the returned flag is set.

    Returns
    -------
    grad, hess, one_sided : ndarray, ndarray, bool
    """
    p = np.asarray(p, dtype=float)
    d = p.size
    steps = h * (1.0 + np.abs(p))
    # direction multiplier per coordinate: +-1 central, 1 forward, -1 backward
    shift = np.zeros(d)
    one_sided = False
    if lo is not None and hi is not None:
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
        for i in range(d):
            if p[i] - 2 * steps[i] < lo[i]:
                shift[i] = 2 * steps[i]
                one_sided = True
            elif p[i] + 2 * steps[i] > hi[i]:
                shift[i] = -2 * steps[i]
                one_sided = True
    # evaluate on a stencil centred at p + shift; for shifted coordinates the
    # derivative at p is recovered by first-order extrapolation
    c = p + shift
    f0 = fun(c)
    E = np.diag(steps)
    fp = np.array([fun(c + E[i]) for i in range(d)])
    fm = np.array([fun(c - E[i]) for i in range(d)])
    grad_c = (fp - fm) / (2 * steps)
    hess = np.empty((d, d))
    for i in range(d):
        hess[i, i] = (fp[i] - 2 * f0 + fm[i]) / steps[i] ** 2
        for j in range(i + 1, d):
            fpp = fun(c + E[i] + E[j])
            fpm = fun(c + E[i] - E[j])
            fmp = fun(c - E[i] + E[j])
            fmm = fun(c - E[i] - E[j])
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * steps[i] * steps[j])
    grad = grad_c - hess @ shift
    return grad, hess, one_sided


def _fd_gradient(fun, p, h):
    p = np.asarray(p, dtype=float)
    steps = h * (1.0 + np.abs(p))
    E = np.diag(steps)
    return np.array([(fun(p + E[i]) - fun(p - E[i])) / (2 * steps[i]) for i in range(p.size)])


# ---------------------------------------------------------------------------
# Objective wrapper
# ---------------------------------------------------------------------------


@dataclass
class Objective:
    """A black-box saddle problem ``min_x max_y f(x, y)`` on a box.

    ``true_eval`` returns ``(value, grad, hess)`` and is only used for
    evaluation metrics, never by the optimizers themselves.
    """

    name: str
    n_x: int
    n_y: int
    lo: np.ndarray
    hi: np.ndarray
    value: Callable
    noise_variance: float
    true_eval: Optional[Callable] = None
    init_sampler: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != (self.dim,) or self.hi.shape != (self.dim,):
            raise ValueError("domain box does not match n_x + n_y")

    @property
    def dim(self):
        return self.n_x + self.n_y

    def contains(self, p, tol=1e-12):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def sample_init(self, n, rng):
        """Draw ``n`` initial design points."""
        if self.init_sampler is not None:
            return self.init_sampler(n, rng)
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))


def noisy_sample(obj: Objective, p, rng):
    """Noisy observation ``f(p) + z`` with ``z ~ N(0, noise_variance)``."""
    p = np.asarray(p, dtype=float)
    if not obj.contains(p):
        raise ValueError(f"point {p} lies outside the domain box of {obj.name!r}")
    noise = np.sqrt(obj.noise_variance) * rng.standard_normal() if obj.noise_variance > 0 else 0.0
    return float(obj.value(p)) + noise


def _annulus_sampler(r_min, r_max):
    def sample(n, rng):
        theta = rng.uniform(0.0, 2 * np.pi, n)
        # uniform over the annulus area
        r = np.sqrt(rng.uniform(r_min**2, r_max**2, n))
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    return sample


OBJECTIVE_IDS = ("decaying", "highdim", "quadratic", "arima-mpc")


def make_objective(name, *, seed=0, noise_variance=None, **kw):
    """Build a benchmark :class:`Objective` from its string id.

    Keyword overrides: ``n`` (highdim pairs), ``a, b, c`` (quadratic),
    ``box`` (quadratic half-width), ``arima``/``mpc`` parameter objects.
    ``seed`` freezes the ARIMA innovations.
    """
    if name == "decaying":
        # the strict local saddles of the polynomial are maxima in x and
        # minima in y, so the game is posed on its negation
        def neg_decaying(p):
            v, g, H = decaying_poly(p)
            return -v, -g, -H

        return Objective(
            "decaying", 1, 1, [-20.0, -20.0], [20.0, 20.0],
            value=lambda p: -decaying_poly(p)[0],
            noise_variance=1.0 if noise_variance is None else noise_variance,
            true_eval=neg_decaying,
            init_sampler=_annulus_sampler(9.0, 18.0),
        )
    if name == "highdim":
        n = kw.get("n", 5)
        lo = np.concatenate([np.full(n, BERTSIMAS_BOX[0][0]), np.full(n, BERTSIMAS_BOX[0][1])])
        hi = np.concatenate([np.full(n, BERTSIMAS_BOX[1][0]), np.full(n, BERTSIMAS_BOX[1][1])])
        return Objective(
            "highdim", n, n, lo, hi,
            value=lambda p: highdim_poly(p)[0],
            noise_variance=0.003 if noise_variance is None else noise_variance,
            true_eval=highdim_poly,
        )
    if name == "quadratic":
        a, b, c = kw.get("a", 1.0), kw.get("b", 0.5), kw.get("c", 1.0)
        half = kw.get("box", 2.0)
        f = quadratic_saddle(a, b, c)
        return Objective(
            "quadratic", 1, 1, [-half, -half], [half, half],
            value=lambda p: f(p)[0],
            noise_variance=0.01 if noise_variance is None else noise_variance,
            true_eval=f,
            meta={"a": a, "b": b, "c": c},
        )
    if name == "arima-mpc":
        arima = kw.get("arima", ArimaParams())
        mpc = kw.get("mpc", MpcParams())
        innovations = arima_generate_innovations(arima, seed)

        def value(p):
            return arima_mpc_eval(p[:2], p[2:], arima, mpc, innovations)

        def true_eval(p):
            grad, hess, _ = fd_oracle(value, p, h=1e-4, lo=-np.ones(4), hi=np.ones(4))
            return value(p), grad, hess

        return Objective(
            "arima-mpc", 2, 2, -np.ones(4), np.ones(4),
            value=value,
            noise_variance=0.01 if noise_variance is None else noise_variance,
            true_eval=true_eval,
            meta={"arima": arima, "mpc": mpc, "innovations": innovations},
        )
    raise ValueError(f"unknown objective id {name!r}; expected one of {OBJECTIVE_IDS}")


def arima_generate_innovations(arima: ArimaParams, seed):
    """Innovation draws ``w_0..w_{F-1}`` frozen for one experiment seed."""
    rng = np.random.default_rng(seed)
    return arima.innovation_sd * rng.standard_normal(arima.horizon)
