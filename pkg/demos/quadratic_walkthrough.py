"""Walk through one BSP run on a convex-concave quadratic.

The objective ``x^2 + 0.5 x y - y^2`` has its only saddle at the origin.
We only ever see noisy samples of it. The script

1. fits a GP surrogate to 50 random samples,
2. solves the confidence-bound game on that surrogate with the Newton
   root finder,
3. runs the full sample-and-refine loop for each of the four variants.

Run with ``python demos/quadratic_walkthrough.py``.
"""

import numpy as np

from bbsaddle.bsp import BspConfig, Variant, initial_hyperparams, run_bsp
from bbsaddle.game import Mode, Target, system
from bbsaddle.gp import Dataset, fit, optimize_hyperparameters, posterior_eval
from bbsaddle.newton import NewtonConfig, ll_game
from bbsaddle.objectives import make_objective, noisy_sample


def main():
    obj = make_objective("quadratic")
    rng = np.random.default_rng(7)

    # a surrogate from random samples
    X = obj.sample_init(50, rng)
    r = [noisy_sample(obj, p, rng) for p in X]
    data = Dataset(X, r, obj.n_x, obj.n_y, obj.lo, obj.hi)
    hp = optimize_hyperparameters(data, initial_hyperparams(data, obj.noise_variance), rng=rng)
    gp = fit(data, hp)
    print(f"fitted hyperparameters: signal variance {hp.signal_variance:.3g}, "
          f"length scale {hp.length_scale:.3g}, noise {hp.noise_variance:g}")
    post = posterior_eval(gp, np.zeros(2))
    print(f"at the true saddle: mean {post.mean:+.4f}, std {post.std:.4f}, "
          f"mean gradient {np.round(post.mean_grad, 4)}")

    # the low-level game on the optimistic (explore) bounds
    cfg = NewtonConfig(lambda_reg=0.01, c2=0.7).with_box(obj.lo, obj.hi)
    p, trace = ll_game(np.array([1.5, -1.0]), system(Target.cb(Mode.EXPLORE, 2.0), gp), cfg)
    print(f"\nNewton on the confidence-bound game from (1.5, -1.0): "
          f"{trace.steps_taken} steps, {trace.terminated_by.value}, ends at {np.round(p, 4)}")
    for k, m in enumerate(trace.merits[:6]):
        print(f"  step {k}: merit {m:.3e}")

    # the full loop, four variants
    print("\nfull BSP runs (seed 0):")
    for v in Variant:
        bcfg = BspConfig(variant=v, eps=1e-4, max_evals=100, seed=0,
                         newton=NewtonConfig(lambda_reg=0.01, c2=0.7))
        rec = run_bsp(obj, bcfg)
        last = rec.eval_log[-1]
        print(f"  {v.value:10s} evals {rec.n_evals:3d}  Newton steps {rec.newton_steps_total:3d}  "
              f"converged {rec.converged!s:5s}  saddle {rec.success!s:5s}  "
              f"final point {np.round(rec.final_point, 3)}  true merit {last.merit_f:.2e}")


if __name__ == "__main__":
    main()
