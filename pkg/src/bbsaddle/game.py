"""Confidence-bound fields and game residual systems on a GP surrogate.

A residual system stacks the players' gradients ``[grad_x A; -grad_y B]``;
its roots are first-order Nash points of the game in which ``x`` minimizes
``A`` and ``y`` maximizes ``B``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .gp import GPSurrogate, posterior_eval

__all__ = [
    "Mode",
    "BoundConfig",
    "BoundEval",
    "Target",
    "GameResidual",
    "bounds_eval",
    "residual",
    "jacobian",
    "merit",
    "evaluate",
    "system",
]


class Mode(enum.Enum):
    EXPLORE = "explore"  # x minimizes LCB, y maximizes UCB
    EXPLOIT = "exploit"  # x minimizes UCB, y maximizes LCB


@dataclass(frozen=True)
class BoundConfig:
    beta: float = 2.0
    mode: Mode = Mode.EXPLORE

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")


class BoundEval(NamedTuple):
    value: float
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class Target:
    """Which residual system to evaluate.

    ``kind`` is ``"cb"``, ``"mu"`` or ``"truef"``. Confidence-bound targets
    carry a :class:`BoundConfig`; ``"truef"`` carries an oracle returning
    ``(value, grad, hess)`` of the true objective.
    """

    kind: str
    bound: Optional[BoundConfig] = None
    oracle: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("cb", "mu", "truef"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "cb" and self.bound is None:
            raise ValueError("confidence-bound target needs a BoundConfig")
        if self.kind == "truef" and self.oracle is None:
            raise ValueError("true-objective target needs a derivative oracle")

    @classmethod
    def cb(cls, mode=Mode.EXPLORE, beta=2.0):
        return cls("cb", bound=BoundConfig(beta, Mode(mode)))

    @classmethod
    def mu(cls):
        return cls("mu")

    @classmethod
    def true_f(cls, oracle):
        return cls("truef", oracle=oracle)


class GameResidual(NamedTuple):
    g: np.ndarray
    j: np.ndarray
    merit: float


def bounds_eval(s: GPSurrogate, cfg: BoundConfig, p):
    """Lower and upper confidence bounds ``mean -/+ beta std`` with derivatives."""
    post = posterior_eval(s, p)
    b = cfg.beta
    lcb = BoundEval(post.mean - b * post.std,
                    post.mean_grad - b * post.std_grad,
                    post.mean_hess - b * post.std_hess)
    ucb = BoundEval(post.mean + b * post.std,
                    post.mean_grad + b * post.std_grad,
                    post.mean_hess + b * post.std_hess)
    return lcb, ucb


def _player_fields(target: Target, s, p):
    """Return ``(grad_A, hess_A, grad_B, hess_B)`` for the target's players."""
    if target.kind == "truef":
        _, g, H = target.oracle(p)
        g, H = np.asarray(g, float), np.asarray(H, float)
        return g, H, g, H
    if target.kind == "mu":
        post = posterior_eval(s, p)
        return post.mean_grad, post.mean_hess, post.mean_grad, post.mean_hess
    lcb, ucb = bounds_eval(s, target.bound, p)
    if target.bound.mode is Mode.EXPLORE:
        return lcb.grad, lcb.hess, ucb.grad, ucb.hess
    return ucb.grad, ucb.hess, lcb.grad, lcb.hess


def _n_x(s, p, n_x):
    if n_x is not None:
        return n_x
    if s is None:
        raise ValueError("n_x is required when no surrogate is given")
    return s.dataset.n_x


def evaluate(target: Target, s: Optional[GPSurrogate], p, n_x=None) -> GameResidual:
    """Residual, Jacobian and merit at ``p`` from one posterior evaluation."""
    p = np.asarray(p, dtype=float)
    nx = _n_x(s, p, n_x)
    gA, hA, gB, hB = _player_fields(target, s, p)
    g = np.concatenate([gA[:nx], -gB[nx:]])
    j = np.vstack([hA[:nx, :], -hB[nx:, :]])
    return GameResidual(g, j, 0.5 * float(g @ g))


def residual(target: Target, s: Optional[GPSurrogate], p, n_x=None):
    """Stacked player gradients ``[grad_x A; -grad_y B]``."""
    return evaluate(target, s, p, n_x).g


def jacobian(target: Target, s: Optional[GPSurrogate], p, n_x=None):
    """Jacobian ``[[H_xx A, H_xy A], [-H_yx B, -H_yy B]]`` of :func:`residual`."""
    return evaluate(target, s, p, n_x).j


def merit(target: Target, s: Optional[GPSurrogate], p, n_x=None):
    """Half squared norm of the residual."""
    return evaluate(target, s, p, n_x).merit


def system(target: Target, s: Optional[GPSurrogate], n_x=None):
    """Bind a target to a surrogate: ``p -> GameResidual`` for the Newton solver."""
    nx = _n_x(s, None, n_x)
    return lambda p: evaluate(target, s, p, nx)
