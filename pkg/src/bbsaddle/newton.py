"""Regularized Newton root-finding on game residual systems.

The solver minimizes the merit ``0.5 |G|^2`` along Newton directions with a
strong-Wolfe linesearch and keeps every iterate inside a box.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

__all__ = [
    "NewtonConfig",
    "NewtonTrace",
    "Termination",
    "NonDescentError",
    "regularized_newton_step",
    "wolfe_linesearch",
    "ll_game",
]

ALPHA_STALL = 1e-12


class NonDescentError(ValueError):
    """The search direction does not decrease the merit."""


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_STEPS = "max_steps"
    STALLED = "stalled_linesearch"


@dataclass(frozen=True)
class NewtonConfig:
    lambda_reg: float = 0.01
    c1: float = 0.01
    c2: float = 0.7
    eps: float = 1e-4
    max_steps: int = 100
    max_linesearch: int = 20
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.lambda_reg >= 0:
            raise ValueError("lambda_reg must be nonnegative")
        if self.lo is not None:
            object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
            object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def with_box(self, lo, hi):
        return NewtonConfig(self.lambda_reg, self.c1, self.c2, self.eps,
                            self.max_steps, self.max_linesearch, lo, hi)


@dataclass
class NewtonTrace:
    iterates: List[np.ndarray] = field(default_factory=list)
    merits: List[float] = field(default_factory=list)
    steps_taken: int = 0
    terminated_by: Termination = Termination.MAX_STEPS
    directions: List[str] = field(default_factory=list)


def regularized_newton_step(g, j, lambda_reg, info=None):
    """Solve ``(J + lambda I) p = -g``.

    On a failed or ill-conditioned solve, lambda is raised tenfold up to
    ``1e3 * lambda``; the last resort is ``p = -g``. The path taken is
    written to ``info["path"]`` when a dict is passed.
    """
    g = np.asarray(g, dtype=float)
    j = np.asarray(j, dtype=float)
    if j.shape != (g.size, g.size):
        raise ValueError("Jacobian shape does not match the residual")
    eye = np.eye(g.size)
    lams = [lambda_reg] + ([lambda_reg * 10**k for k in (1, 2, 3)] if lambda_reg > 0 else [])
    for k, lam in enumerate(lams):
        M = j + lam * eye
        try:
            if np.linalg.cond(M) > 1e14:
                continue
            p = np.linalg.solve(M, -g)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(p)):
            if info is not None:
                info["path"] = "newton" if k == 0 else "newton_escalated"
                info["lambda"] = lam
            return p
    if info is not None:
        info["path"] = "neg_residual"
    return -g


def _cubic_min(a, fa, da, b, fb, db):
    # minimizer of the cubic interpolating (a, fa, da) and (b, fb, db)
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if np.isfinite(x) else None


def wolfe_linesearch(merit_along: Callable, cfg: NewtonConfig, alpha_max=np.inf, alpha0=1.0):
    """Step length satisfying the strong Wolfe conditions on a 1-D merit.

    ``merit_along(alpha)`` returns ``(phi, dphi)``. Bracketing starts at
    ``alpha0`` (capped at ``alpha_max``) and doubles; the zoom phase uses
    safeguarded cubic interpolation. When ``max_linesearch`` evaluations are
    used up, the last trial is returned. A trial at ``alpha_max`` meeting
    sufficient decrease is accepted even if curvature fails.
    """
    c1, c2 = cfg.c1, cfg.c2
    phi0, d0 = merit_along(0.0)
    if not d0 < 0:
        raise NonDescentError(f"directional derivative {d0:g} is not negative")
    budget = cfg.max_linesearch

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi, budget):
        alpha = lo
        while budget > 0:
            width = hi - lo
            alpha = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            a_min, a_max = min(lo, hi), max(lo, hi)
            if alpha is None or not (a_min + 0.1 * abs(width) <= alpha <= a_max - 0.1 * abs(width)):
                alpha = 0.5 * (lo + hi)
            phi, dphi = merit_along(alpha)
            budget -= 1
            if phi > phi0 + c1 * alpha * d0 or phi >= f_lo:
                hi, f_hi, d_hi = alpha, phi, dphi
            else:
                if abs(dphi) <= -c2 * d0:
                    return alpha
                if dphi * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = alpha, phi, dphi
            if abs(hi - lo) < 1e-16:
                break
        # budget exhausted: best point satisfying sufficient decrease, else last trial
        return lo if lo > 0 else alpha

    prev, f_prev, d_prev = 0.0, phi0, d0
    alpha = min(alpha0, alpha_max)
    first = True
    while budget > 0:
        phi, dphi = merit_along(alpha)
        budget -= 1
        if phi > phi0 + c1 * alpha * d0 or (not first and phi >= f_prev):
            return zoom(prev, f_prev, d_prev, alpha, phi, dphi, budget)
        if abs(dphi) <= -c2 * d0:
            return alpha
        if dphi >= 0:
            return zoom(alpha, phi, dphi, prev, f_prev, d_prev, budget)
        if alpha >= alpha_max:
            return alpha
        prev, f_prev, d_prev = alpha, phi, dphi
        alpha = min(2.0 * alpha, alpha_max)
        first = False
    return alpha


def _feasible(p, d, lo, hi):
    """Drop components that push through an active bound; return max step."""
    if lo is None:
        return d, np.inf
    d = d.copy()
    tol = 1e-12 * (1.0 + np.abs(p))
    d[(p <= lo + tol) & (d < 0)] = 0.0
    d[(p >= hi - tol) & (d > 0)] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(d > 0, (hi - p) / d, np.where(d < 0, (lo - p) / d, np.inf))
    return d, float(np.min(room)) if room.size else np.inf


def ll_game(p0, system: Callable, cfg: NewtonConfig):
    """Drive the merit of ``system`` below ``cfg.eps`` with damped Newton steps.

    ``system(p)`` returns a :class:`~bbsaddle.game.GameResidual`. Directions
    are tried in order: regularized Newton, ``-g``, ``-J^T g``; the first
    one that decreases the merit inside the box is searched.

    Returns
    -------
    p_star : ndarray
    trace : NewtonTrace
    """
    lo, hi = cfg.lo, cfg.hi
    p = np.asarray(p0, dtype=float).copy()
    if lo is not None:
        if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
            raise ValueError("starting point lies outside the domain box")
        p = np.clip(p, lo, hi)
    res = system(p)
    trace = NewtonTrace([p.copy()], [res.merit])

    while res.merit >= cfg.eps:
        if trace.steps_taken >= cfg.max_steps:
            trace.terminated_by = Termination.MAX_STEPS
            return p, trace
        grad_m = res.j.T @ res.g
        info = {}
        candidates = [
            ("newton", lambda: regularized_newton_step(res.g, res.j, cfg.lambda_reg, info)),
            ("neg_residual", lambda: -res.g),
            ("merit_gradient", lambda: -grad_m),
        ]
        chosen = None
        for name, make in candidates:
            d, a_max = _feasible(p, make(), lo, hi)
            if grad_m @ d < 0 and a_max > ALPHA_STALL:
                chosen = (info.get("path", name) if name == "newton" else name, d, a_max)
                break
        if chosen is None:
            trace.terminated_by = Termination.STALLED
            return p, trace
        label, d, a_max = chosen

        cache = {}

        def merit_along(alpha, p=p, d=d):
            if alpha == 0.0:
                return res.merit, float(grad_m @ d)
            q = p + alpha * d
            if lo is not None:
                q = np.clip(q, lo, hi)
            r = system(q)
            cache[alpha] = (q, r)
            return r.merit, float((r.j.T @ r.g) @ d)

        alpha = wolfe_linesearch(merit_along, cfg, alpha_max=a_max)
        if alpha not in cache:
            merit_along(alpha)
        q, r = cache[alpha]
        if alpha < ALPHA_STALL or not r.merit < res.merit:
            trace.terminated_by = Termination.STALLED
            return p, trace
        p, res = q, r
        trace.iterates.append(p.copy())
        trace.merits.append(res.merit)
        trace.directions.append(label)
        trace.steps_taken += 1
    trace.terminated_by = Termination.CONVERGED
    return p, trace
