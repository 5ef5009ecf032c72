"""Comparison methods: uniform random search and GDA with finite differences.

Both return :class:`~bbsaddle.bsp.RunRecord` objects with the same row
layout as the BSP driver so the harness can treat every method alike.
Baselines have no surrogate, so ``merit_mu`` and ``std`` hold NaN unless
noted otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bsp import EvalRow, RunRecord, verify_second_order
from .game import Target, evaluate
from .newton import NewtonConfig, NonDescentError, _feasible, wolfe_linesearch
from .objectives import Objective, noisy_sample

__all__ = ["Method", "BaselineConfig", "random_search", "gda_fd"]


class Method(enum.Enum):
    RANDOM = "random"
    GDA_FD = "gda-fd"


@dataclass(frozen=True)
class BaselineConfig:
    method: Method = Method.RANDOM
    budget: int = 150
    fd_step: float = 1e-3
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


def _true_merit(obj, oracle, p):
    if oracle is None:
        return None
    return evaluate(Target.true_f(oracle), None, p, n_x=obj.n_x).merit


def random_search(obj: Objective, cfg: BaselineConfig, oracle=None, rng=None) -> RunRecord:
    """Uniform sampling over the domain box, keeping the best true merit.

    ``merit_f`` in each row is the running minimum of the true merit over
    the points drawn so far. The record never reports convergence.
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    oracle = obj.true_eval if oracle is None else oracle
    record = RunRecord(method=Method.RANDOM.value)
    best, best_p = np.inf, None
    for k in range(cfg.budget):
        p = obj.lo + (obj.hi - obj.lo) * rng.random(obj.dim)
        r = noisy_sample(obj, p, rng)
        m = _true_merit(obj, oracle, p)
        if m is not None and m < best:
            best, best_p = m, p.copy()
        record.eval_log.append(EvalRow(k, p, r, np.nan, None if m is None else best, np.nan))
    record.final_point = best_p if best_p is not None else record.eval_log[-1].point.copy()
    return record


class _BudgetExhausted(Exception):
    pass


def gda_fd(obj: Objective, start, cfg: BaselineConfig, oracle=None, rng=None) -> RunRecord:
    """Simultaneous gradient descent-ascent on finite-differenced gradients.

    Gradients come from central differences of noisy samples with step
    ``fd_step * (1 + |p_i|)`` (2d queries each). The step length is chosen
    by a strong-Wolfe search on the finite-differenced merit
    ``0.5 |G_hat|^2``; its slope along the step is estimated by one more
    directional difference of ``G_hat``. Every query is charged to
    ``cfg.budget`` and logged. In each row ``merit_mu`` holds the estimated
    merit and ``merit_f`` the true merit of the current iterate.
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    oracle = obj.true_eval if oracle is None else oracle
    ncfg = cfg.newton.with_box(obj.lo, obj.hi)
    lo, hi = obj.lo, obj.hi
    record = RunRecord(method=Method.GDA_FD.value)
    p = np.asarray(start, dtype=float).copy()
    if not obj.contains(p):
        raise ValueError("GDA start point lies outside the domain box")
    state = {"merit_hat": np.nan, "merit_f": _true_merit(obj, oracle, p)}

    def query(q):
        if record.n_evals >= cfg.budget:
            raise _BudgetExhausted
        q = np.clip(q, lo, hi)
        r = noisy_sample(obj, q, rng)
        record.eval_log.append(EvalRow(record.n_evals, q, r, state["merit_hat"],
                                       state["merit_f"], np.nan))
        return r

    def game_grad(q):
        # central differences, stencil kept inside the box
        steps = cfg.fd_step * (1.0 + np.abs(q))
        g = np.empty(q.size)
        for i in range(q.size):
            up, dn = q.copy(), q.copy()
            up[i] = min(q[i] + steps[i], hi[i])
            dn[i] = max(q[i] - steps[i], lo[i])
            g[i] = (query(up) - query(dn)) / (up[i] - dn[i])
        g[obj.n_x:] *= -1.0
        return g

    alpha_prev = 1.0
    try:
        G = game_grad(p)
        while True:
            state["merit_hat"] = 0.5 * float(G @ G)
            if state["merit_hat"] < ncfg.eps:
                record.converged = True
                record.first_converged_point = p.copy()
                source = oracle if oracle is not None else None
                if source is not None:
                    record.second_order_pass = verify_second_order(p, source, obj.n_x)
                break
            d, a_max = _feasible(p, -G, lo, hi)
            if not np.any(d):
                break
            eta = cfg.fd_step * (1.0 + float(np.max(np.abs(p))))
            cache = {}

            def merit_along(alpha, p=p, d=d, G=G):
                if alpha == 0.0:
                    Gq = G
                    q = p
                else:
                    q = np.clip(p + alpha * d, lo, hi)
                    Gq = game_grad(q)
                    cache[alpha] = (q, Gq)
                # directional difference of G_hat stands in for J d
                Jd = (game_grad(np.clip(q + eta * d, lo, hi)) - Gq) / eta
                return 0.5 * float(Gq @ Gq), float(Gq @ Jd)

            try:
                alpha = wolfe_linesearch(merit_along, ncfg, alpha_max=a_max,
                                         alpha0=min(alpha_prev, a_max))
            except NonDescentError:
                # noisy slope: fall back to the last accepted step length
                alpha = min(alpha_prev, a_max)
            if alpha in cache:
                p, G = cache[alpha]
            else:
                p = np.clip(p + alpha * d, lo, hi)
                G = game_grad(p)
            alpha_prev = max(alpha, 1e-8)
            state["merit_f"] = _true_merit(obj, oracle, p)
    except _BudgetExhausted:
        pass
    record.final_point = p.copy()
    return record
