"""Black-box saddle-point search with Gaussian-process surrogates.

The main entry points are :func:`run_bsp` (the sample-and-refine loop),
:func:`make_objective` (benchmark problems) and
:func:`bbsaddle.harness.run_experiment` (seeded experiments).
"""

from .baselines import BaselineConfig, gda_fd, random_search
from .bsp import BspConfig, RunRecord, Variant, run_bsp, select_initial_point, verify_second_order
from .game import BoundConfig, Mode, Target, bounds_eval, evaluate, jacobian, merit, residual, system
from .gp import (
    Dataset,
    GPSurrogate,
    Hyperparams,
    HyperparameterWarning,
    NumericalError,
    append_observation,
    fit,
    kernel_with_derivs,
    log_marginal_likelihood,
    optimize_hyperparameters,
    posterior_eval,
)
from .newton import NewtonConfig, Termination, ll_game, regularized_newton_step, wolfe_linesearch
from .objectives import Objective, make_objective, noisy_sample

__version__ = "0.1.0"
