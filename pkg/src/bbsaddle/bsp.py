"""The high-level sample-and-refine loop for black-box saddle points.

Each iteration solves the confidence-bound game on the current surrogate
(to convergence for the *efficient* variants, one Newton step for the
*expensive* ones), samples the objective at the result and refreshes the
surrogate. The loop stops once the surrogate mean has a first-order
saddle at the newest sample.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .game import Mode, Target, evaluate, system
from .gp import (
    Dataset,
    GPSurrogate,
    Hyperparams,
    append_observation,
    fit,
    mean_gradients,
    optimize_hyperparameters,
    posterior_eval,
)
from .newton import NewtonConfig, ll_game
from .objectives import Objective, noisy_sample

__all__ = [
    "Variant",
    "BspConfig",
    "EvalRow",
    "RunRecord",
    "select_initial_point",
    "verify_second_order",
    "run_bsp",
    "initial_hyperparams",
]


class Variant(enum.Enum):
    EF_XPLORE = "ef-xplore"
    EF_XPLOIT = "ef-xploit"
    EXP_XPLORE = "exp-xplore"
    EXP_XPLOIT = "exp-xploit"

    @property
    def efficient(self):
        return self in (Variant.EF_XPLORE, Variant.EF_XPLOIT)

    @property
    def mode(self):
        return Mode.EXPLORE if self in (Variant.EF_XPLORE, Variant.EXP_XPLORE) else Mode.EXPLOIT


@dataclass(frozen=True)
class BspConfig:
    variant: Variant = Variant.EF_XPLORE
    eps: float = 1e-4
    max_evals: int = 150
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    beta: float = 2.0
    refit_interval: int = 1
    reinit_limit: int = 3
    init_samples: int = 50
    seed: int = 0
    max_newton_steps: int = 3000
    hp_restarts: int = 5
    refit_restarts: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.max_evals < self.init_samples:
            raise ValueError("max_evals must be at least init_samples")
        if self.reinit_limit < 0 or self.refit_interval < 1:
            raise ValueError("reinit_limit >= 0 and refit_interval >= 1 required")
        if self.init_samples < 1:
            raise ValueError("need at least one initial sample")


@dataclass
class EvalRow:
    eval_index: int
    point: np.ndarray
    observation: float
    merit_mu: float
    merit_f: Optional[float]
    std: float


@dataclass
class RunRecord:
    """Per-seed trace shared by BSP and the baselines."""

    method: str
    eval_log: List[EvalRow] = field(default_factory=list)
    newton_steps_total: int = 0
    converged: bool = False
    second_order_pass: bool = False
    reinit_count: int = 0
    final_point: Optional[np.ndarray] = None
    first_converged_point: Optional[np.ndarray] = None
    final_second_order_pass: bool = False
    hyperparams: Optional[Hyperparams] = None
    error: Optional[str] = None

    @property
    def success(self):
        return bool(self.converged and self.second_order_pass)

    @property
    def n_evals(self):
        return len(self.eval_log)


def select_initial_point(s: GPSurrogate, dataset: Dataset, exclude=None):
    """Dataset point with the smallest surrogate-mean merit.

    Ties go to the lowest index. ``exclude`` is an optional boolean mask of
    rows to skip; if it masks everything it is ignored.
    """
    if len(dataset) == 0:
        raise ValueError("cannot select an initial point from an empty dataset")
    G = mean_gradients(s, dataset.points)
    G[:, dataset.n_x:] *= -1.0
    merits = 0.5 * np.einsum("ij,ij->i", G, G)
    if exclude is not None and not np.all(exclude):
        merits = np.where(exclude, np.inf, merits)
    return dataset.points[int(np.argmin(merits))].copy()


def verify_second_order(p, hess_source, n_x):
    """Strict local saddle test: ``H_xx`` positive and ``H_yy`` negative definite.

    ``hess_source`` is a :class:`GPSurrogate` (its mean is tested) or an
    oracle returning ``(value, grad, hess)``.
    """
    p = np.asarray(p, dtype=float)
    if isinstance(hess_source, GPSurrogate):
        H = posterior_eval(hess_source, p).mean_hess
    else:
        H = np.asarray(hess_source(p)[2], dtype=float)
    Hxx, Hyy = H[:n_x, :n_x], H[n_x:, n_x:]
    for block in (Hxx, -Hyy):
        try:
            np.linalg.cholesky(0.5 * (block + block.T))
        except np.linalg.LinAlgError:
            return False
    return True


def initial_hyperparams(dataset: Dataset, noise_variance):
    r = dataset.observations
    return Hyperparams(max(float(r @ r) / r.size, 1e-6), 0.2 * dataset.diameter(), noise_variance)


def _merit_f(obj: Objective, p):
    if obj.true_eval is None:
        return None
    return evaluate(Target.true_f(obj.true_eval), None, p, n_x=obj.n_x).merit


def _row(k, gp, obj, p, r):
    post = posterior_eval(gp, p)
    g = np.concatenate([post.mean_grad[:obj.n_x], -post.mean_grad[obj.n_x:]])
    return EvalRow(k, np.asarray(p, float).copy(), float(r), 0.5 * float(g @ g),
                   _merit_f(obj, p), post.std)


def run_bsp(objective: Objective, cfg: BspConfig, oracle=None, rng=None) -> RunRecord:
    """Run one seed of the BSP loop on ``objective``.

    ``oracle`` (default ``objective.true_eval``) is only used to classify the
    first converged point and to log the true merit; the optimizer itself
    sees noisy samples only.
    """
    obj = objective
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    oracle = obj.true_eval if oracle is None else oracle
    record = RunRecord(method=f"bsp:{cfg.variant.value}")
    ncfg = cfg.newton.with_box(obj.lo, obj.hi)
    step_cfg = ncfg if cfg.variant.efficient else replace(ncfg, max_steps=1)
    cb = Target.cb(cfg.variant.mode, cfg.beta)
    mu = Target.mu()

    try:
        X0 = obj.sample_init(cfg.init_samples, rng)
        r0 = [noisy_sample(obj, p, rng) for p in X0]
    except Exception as exc:  # sampler failure aborts the run
        record.error = f"sampler failure: {exc}"
        return record
    data = Dataset(X0, r0, obj.n_x, obj.n_y, obj.lo, obj.hi)
    hp = optimize_hyperparameters(data, initial_hyperparams(data, obj.noise_variance),
                                  restarts=cfg.hp_restarts, rng=rng)
    gp = fit(data, hp)
    for k, (p, r) in enumerate(zip(X0, r0)):
        record.eval_log.append(_row(k, gp, obj, p, r))

    rejected: List[np.ndarray] = []

    def start_point():
        mask = None
        if rejected:
            pts = gp.dataset.points
            radius = gp.hyperparams.length_scale
            mask = np.zeros(len(pts), dtype=bool)
            for q in rejected:
                mask |= np.linalg.norm(pts - q, axis=1) < radius
        return select_initial_point(gp, gp.dataset, mask)

    p = start_point()
    iteration = 0
    while True:
        if evaluate(mu, gp, p).merit < cfg.eps:
            first = not record.converged
            if first:
                record.converged = True
                record.first_converged_point = p.copy()
                source = oracle if oracle is not None else gp
                record.second_order_pass = verify_second_order(p, source, obj.n_x)
            # black-box acceptance uses the surrogate only
            accepted = verify_second_order(p, gp, obj.n_x)
            if accepted or record.reinit_count >= cfg.reinit_limit:
                record.final_second_order_pass = accepted
                break
            record.reinit_count += 1
            rejected.append(p.copy())
            p = start_point()
            continue
        if record.n_evals >= cfg.max_evals or record.newton_steps_total >= cfg.max_newton_steps:
            break

        remaining = cfg.max_newton_steps - record.newton_steps_total
        p_new, trace = ll_game(p, system(cb, gp),
                               replace(step_cfg, max_steps=min(step_cfg.max_steps, remaining)))
        record.newton_steps_total += trace.steps_taken
        try:
            r = noisy_sample(obj, p_new, rng)
        except Exception as exc:
            record.error = f"sampler failure: {exc}"
            break
        gp = append_observation(gp, p_new, r)
        iteration += 1
        if iteration % cfg.refit_interval == 0:
            hp = optimize_hyperparameters(gp.dataset, gp.hyperparams,
                                          restarts=cfg.refit_restarts, rng=rng)
            if hp != gp.hyperparams:
                gp = fit(gp.dataset, hp)
        record.eval_log.append(_row(record.n_evals, gp, obj, p_new, r))
        p = p_new

    record.final_point = p.copy()
    record.hyperparams = gp.hyperparams
    return record
