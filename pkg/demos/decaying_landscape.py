"""Why surrogate-guided search helps on the decaying polynomial.

The decaying polynomial is almost flat far from the origin and has a
stationary point at the origin that is not a saddle. This demo

* classifies a few stationary points with the exact Hessian,
* shows that random search and finite-difference GDA do not converge
  within the sample budget,
* runs two BSP variants on the same seeds for comparison.

Run with ``python demos/decaying_landscape.py [n_seeds]``.
"""

import sys

import numpy as np

from bbsaddle.bsp import verify_second_order
from bbsaddle.harness import ExperimentConfig, run_experiment
from bbsaddle.objectives import decaying_poly


def game_f(p):
    # the game is posed on -f (see README)
    return tuple(-np.asarray(t) for t in decaying_poly(p))


def main(n_seeds=5):
    print("stationary points:")
    for p in ([0.0, 0.0], [-11.427, 8.004], [12.395, -6.373], [-12.477, -8.678]):
        p = np.array(p)
        print(f"  {p}  |grad| {np.linalg.norm(decaying_poly(p)[1]):.2e}  "
              f"strict saddle: {verify_second_order(p, game_f, 1)}")

    print(f"\nlimited regime, {n_seeds} seeds:")
    for method, variant in (("random", "ef-xplore"), ("gda-fd", "ef-xplore"),
                            ("bsp", "ef-xplore"), ("bsp", "exp-xploit")):
        cfg = ExperimentConfig(problem="decaying", method=method, variant=variant, seeds=n_seeds)
        summary, records = run_experiment(cfg, write=False)
        label = variant if method == "bsp" else method
        finals = [r.eval_log[-1].merit_f for r in records]
        print(f"  {label:10s} success {summary['success_rate']:5.1f}%  "
              f"median final true merit {np.median(finals):.3g}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
