"""Seeded experiment runner and reporting.

One experiment is one (problem, method, variant, regime) cell run over
several seeds. Each seed writes a CSV trace; the experiment writes one
summary JSON that validates against :data:`SUMMARY_SCHEMA`. Reruns with
the same configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
from scipy.optimize import minimize

from .baselines import BaselineConfig, gda_fd, random_search
from .bsp import BspConfig, RunRecord, Variant, run_bsp
from .gp import Dataset, Hyperparams, append_observation, fit, posterior_eval
from .newton import NewtonConfig
from .objectives import (
    OBJECTIVE_IDS,
    ArimaParams,
    MpcParams,
    arima_generate,
    make_objective,
    mpc_track_costs,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PROBLEM_DEFAULTS",
    "SUMMARY_SCHEMA",
    "METHODS",
    "REGIMES",
    "derive_seeds",
    "run_seed",
    "run_experiment",
    "summarize",
    "write_csv",
    "csv_text",
    "variance_trace",
    "repeated_sampling_variance",
    "robust_mpc_eval",
]

METHODS = ("bsp", "random", "gda-fd")
REGIMES = ("limited", "large")
OUT_ENV = "BBSADDLE_OUT"

# Per-problem settings. ``max_evals`` is the limited-regime budget and
# counts initial samples; the large regime keeps the same number of
# post-initialization samples.
PROBLEM_DEFAULTS = {
    "decaying": dict(init={"limited": 50, "large": 1000}, max_evals=150,
                     eps=1.0, lambda_reg=0.01, c2=0.7),
    "highdim": dict(init={"limited": 50, "large": 500}, max_evals=300,
                    eps=1e-4, lambda_reg=0.01, c2=0.7),
    "quadratic": dict(init={"limited": 50, "large": 200}, max_evals=100,
                      eps=1e-4, lambda_reg=0.01, c2=0.7),
    "arima-mpc": dict(init={"limited": 10, "large": 500}, max_evals=100,
                      eps=1e-4, lambda_reg=0.001, c2=0.8),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment cell.

    ``None`` fields take the per-problem defaults in
    :data:`PROBLEM_DEFAULTS`. ``budget`` applies to the baselines and
    defaults to the BSP evaluation budget of the regime.
    """

    problem: str = "quadratic"
    method: str = "bsp"
    variant: str = "ef-xplore"
    regime: str = "limited"
    seeds: int = 20
    experiment_seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    eps: Optional[float] = None
    beta: float = 2.0
    max_evals: Optional[int] = None
    init_samples: Optional[int] = None
    budget: Optional[int] = None
    lambda_reg: Optional[float] = None
    c1: float = 0.01
    c2: Optional[float] = None
    max_steps: int = 100
    refit_interval: int = 1
    reinit_limit: int = 3
    hp_restarts: int = 5
    max_newton_steps: int = 3000
    fd_step: float = 1e-3
    noise_variance: Optional[float] = None

    def __post_init__(self):
        if self.problem not in OBJECTIVE_IDS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {OBJECTIVE_IDS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.variant not in [v.value for v in Variant]:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.seeds < 1 or self.workers < 1:
            raise ConfigError("seeds and workers must be at least 1")
        try:
            self.bsp_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict, **overrides):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path, **overrides):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data, **overrides)

    # resolved settings

    def _default(self, key):
        return PROBLEM_DEFAULTS[self.problem][key]

    @property
    def resolved_init(self):
        if self.init_samples is not None:
            return self.init_samples
        return self._default("init")[self.regime]

    @property
    def resolved_max_evals(self):
        if self.max_evals is not None:
            return self.max_evals
        limited = self._default("max_evals")
        return limited - self._default("init")["limited"] + self.resolved_init

    @property
    def resolved_eps(self):
        return self._default("eps") if self.eps is None else self.eps

    def newton_config(self):
        return NewtonConfig(
            lambda_reg=self._default("lambda_reg") if self.lambda_reg is None else self.lambda_reg,
            c1=self.c1,
            c2=self._default("c2") if self.c2 is None else self.c2,
            eps=self.resolved_eps,
            max_steps=self.max_steps,
        )

    def bsp_config(self, seed):
        return BspConfig(
            variant=Variant(self.variant),
            eps=self.resolved_eps,
            max_evals=self.resolved_max_evals,
            newton=self.newton_config(),
            beta=self.beta,
            refit_interval=self.refit_interval,
            reinit_limit=self.reinit_limit,
            init_samples=self.resolved_init,
            seed=seed,
            max_newton_steps=self.max_newton_steps,
            hp_restarts=self.hp_restarts,
        )

    def baseline_config(self, seed):
        return BaselineConfig(
            method=self.method,
            budget=self.budget if self.budget is not None else self.resolved_max_evals,
            fd_step=self.fd_step,
            newton=self.newton_config(),
            seed=seed,
        )

    def resolved(self):
        """Plain dict of the effective settings, for the summary."""
        out = asdict(self)
        out.pop("out")
        out.pop("workers")
        out.update(eps=self.resolved_eps, init_samples=self.resolved_init,
                   max_evals=self.resolved_max_evals)
        n = self.newton_config()
        out.update(lambda_reg=n.lambda_reg, c2=n.c2)
        if self.method != "bsp":
            out["budget"] = self.baseline_config(0).budget
        return out

    def out_dir(self):
        return Path(self.out or os.environ.get(OUT_ENV, "runs"))


def derive_seeds(experiment_seed, n):
    """Independent per-seed integers from one experiment seed."""
    children = np.random.SeedSequence(experiment_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def run_seed(cfg: ExperimentConfig, seed: int) -> RunRecord:
    """Run one seed of ``cfg``; errors are captured in the record."""
    obj = make_objective(cfg.problem, seed=seed, noise_variance=cfg.noise_variance)
    try:
        if cfg.method == "bsp":
            return run_bsp(obj, cfg.bsp_config(seed))
        bcfg = cfg.baseline_config(seed)
        if cfg.method == "random":
            return random_search(obj, bcfg)
        rng = np.random.default_rng(seed)
        start = obj.sample_init(1, rng)[0]
        return gda_fd(obj, start, bcfg, rng=rng)
    except ArithmeticError as exc:
        rec = RunRecord(method=cfg.method)
        rec.error = f"numerical error: {exc}"
        return rec


def _run_seed_star(args):
    return run_seed(*args)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

CSV_COMMENT = "# eval counts every objective query, initial samples included"


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def csv_text(record: RunRecord, n_x, n_y):
    buf = io.StringIO()
    buf.write(CSV_COMMENT + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eval"] + [f"x{i + 1}" for i in range(n_x)] + [f"y{i + 1}" for i in range(n_y)]
               + ["r", "merit_mu", "merit_f", "std"])
    for row in record.eval_log:
        w.writerow([row.eval_index] + [_fmt(v) for v in row.point]
                   + [_fmt(row.observation), _fmt(row.merit_mu), _fmt(row.merit_f), _fmt(row.std)])
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, record: RunRecord, n_x, n_y):
    _atomic_write(Path(path), csv_text(record, n_x, n_y))


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

_num_or_null = {"type": ["number", "null"]}
_point = {"type": ["array", "null"], "items": {"type": "number"}}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bbsaddle experiment summary",
    "type": "object",
    "required": ["schema_version", "config", "success_rate", "converged_rate",
                 "newton_steps_total", "seeds", "trajectory", "robust_mpc"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "config": {"type": "object"},
        "success_rate": {"type": "number", "minimum": 0, "maximum": 100},
        "converged_rate": {"type": "number", "minimum": 0, "maximum": 100},
        "newton_steps_total": {"type": "integer", "minimum": 0},
        "seeds": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["index", "seed", "csv", "n_evals", "newton_steps", "converged",
                             "success", "reinit_count", "final_point",
                             "first_converged_point", "final_merit_f", "error"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "seed": {"type": "integer", "minimum": 0},
                    "csv": {"type": "string"},
                    "n_evals": {"type": "integer", "minimum": 0},
                    "newton_steps": {"type": "integer", "minimum": 0},
                    "converged": {"type": "boolean"},
                    "success": {"type": "boolean"},
                    "reinit_count": {"type": "integer", "minimum": 0},
                    "final_point": _point,
                    "first_converged_point": _point,
                    "final_merit_f": _num_or_null,
                    "error": {"type": ["string", "null"]},
                },
            },
        },
        "trajectory": {
            "type": "object",
            "required": ["eval", "median", "q25", "q75"],
            "additionalProperties": False,
            "properties": {
                k: {"type": "array", "items": {"type": ["number", "null"]}}
                for k in ("eval", "median", "q25", "q75")
            },
        },
        "robust_mpc": {"type": ["object", "null"]},
    },
}


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _trajectory(records):
    """Quartiles of ``merit_f`` by evaluation index, last value carried forward."""
    traces = []
    for rec in records:
        t = [np.nan if r.merit_f is None else r.merit_f for r in rec.eval_log]
        traces.append(t)
    n = max((len(t) for t in traces), default=0)
    if n == 0:
        return {"eval": [], "median": [], "q25": [], "q75": []}
    M = np.full((len(traces), n), np.nan)
    for i, t in enumerate(traces):
        if t:
            M[i, :len(t)] = t
            M[i, len(t):] = t[-1]
    with np.errstate(all="ignore"):
        valid = ~np.all(np.isnan(M), axis=0)
        q = np.full((3, n), np.nan)
        if valid.any():
            q[:, valid] = np.nanpercentile(M[:, valid], [50, 25, 75], axis=0)
    return {"eval": list(range(n)), "median": q[0], "q25": q[1], "q75": q[2]}


def summarize(cfg: ExperimentConfig, seeds, records, csv_names, robust=None):
    per_seed = []
    for i, (s, rec, name) in enumerate(zip(seeds, records, csv_names)):
        per_seed.append({
            "index": i,
            "seed": s,
            "csv": name,
            "n_evals": rec.n_evals,
            "newton_steps": rec.newton_steps_total,
            "converged": rec.converged,
            "success": rec.success,
            "reinit_count": rec.reinit_count,
            "final_point": rec.final_point,
            "first_converged_point": rec.first_converged_point,
            "final_merit_f": rec.eval_log[-1].merit_f if rec.eval_log else None,
            "error": rec.error,
        })
    n = len(records)
    summary = {
        "schema_version": 1,
        "config": cfg.resolved(),
        "success_rate": 100.0 * sum(r.success for r in records) / n,
        "converged_rate": 100.0 * sum(r.converged for r in records) / n,
        "newton_steps_total": sum(r.newton_steps_total for r in records),
        "seeds": per_seed,
        "trajectory": _trajectory(records),
        "robust_mpc": robust,
    }
    summary = _clean(summary)
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    return summary


def _stem(cfg: ExperimentConfig):
    tag = cfg.variant if cfg.method == "bsp" else cfg.method
    return f"{cfg.problem}_{tag}_{cfg.regime}"


def run_experiment(cfg: ExperimentConfig, write=True):
    """Run all seeds of ``cfg``.

    Returns
    -------
    summary : dict
        Validated summary (see :data:`SUMMARY_SCHEMA`).
    records : list of RunRecord
    """
    seeds = derive_seeds(cfg.experiment_seed, cfg.seeds)
    jobs = [(cfg, s) for s in seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_seed_star, jobs))
    else:
        records = [run_seed(*job) for job in jobs]

    stem = _stem(cfg)
    names = [f"{stem}_seed{i:03d}.csv" for i in range(len(seeds))]
    obj = make_objective(cfg.problem)
    summary = summarize(cfg, seeds, records, names)
    if write:
        out = cfg.out_dir()
        for name, rec in zip(names, records):
            write_csv(out / name, rec, obj.n_x, obj.n_y)
        _atomic_write(out / f"{stem}_summary.json", dump_summary(summary))
    return summary, records


def dump_summary(summary):
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Variance traces
# ---------------------------------------------------------------------------


def variance_trace(cfg: ExperimentConfig, out=None):
    """Step length and posterior std at each sampled point of a BSP run.

    Only post-initialization samples are traced. Returns rows
    ``(eval, step, std)``; ``step`` is the distance to the previous sample.
    """
    if cfg.problem != "quadratic":
        raise ConfigError("variance traces are defined for the quadratic family")
    seed = derive_seeds(cfg.experiment_seed, 1)[0]
    rec = run_seed(replace(cfg, method="bsp"), seed)
    rows = []
    log = rec.eval_log
    for k in range(cfg.resolved_init, len(log)):
        step = float(np.linalg.norm(log[k].point - log[k - 1].point)) if k > 0 else float("nan")
        rows.append((log[k].eval_index, step, log[k].std))
    if out is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eval", "step", "std"])
        for e, s, sd in rows:
            w.writerow([e, _fmt(s), _fmt(sd)])
        _atomic_write(Path(out), buf.getvalue())
    return rows


def repeated_sampling_variance(hp: Hyperparams, m, point=(0.0, 0.0), value=0.0):
    """Posterior variance at one point after ``1..m`` repeated observations.

    Returns ``(observed, closed_form)`` arrays where the closed form is
    ``k - k^2 j / (k j + noise)`` with ``k = signal_variance``.
    """
    p = np.asarray(point, dtype=float)
    k, z = hp.signal_variance, hp.noise_variance
    observed, closed = [], []
    s = fit(Dataset([p], [value], 1, p.size - 1), hp)
    for j in range(1, m + 1):
        if j > 1:
            s = append_observation(s, p, value)
        observed.append(posterior_eval(s, p, derivs=False).std ** 2)
        closed.append(k - k * k * j / (k * j + z))
    return np.array(observed), np.array(closed)


# ---------------------------------------------------------------------------
# Robust MPC comparison
# ---------------------------------------------------------------------------


def _series(arima: ArimaParams, params, rng):
    F = arima.horizon
    out = np.empty((len(params), F))
    for i, (a, b) in enumerate(params):
        w = arima.innovation_sd * rng.standard_normal(F)
        out[i] = arima_generate(replace(arima, alpha=a, beta=b), innovations=w)
    return out


def _mean_cost(ab, mpc: MpcParams, S):
    A, B = np.clip(ab, -1.0, 1.0)
    return float(np.mean(mpc_track_costs(replace(mpc, A=float(A), B=float(B)), S)))


def fit_nominal(S, mpc: MpcParams = MpcParams(), grid=41):
    """(A, B) minimizing mean tracking cost over ``S``: grid search, then refinement."""
    axis = np.linspace(-1.0, 1.0, grid)
    best, best_ab = np.inf, None
    for A in axis:
        for B in axis:
            c = _mean_cost((A, B), mpc, S)
            if c < best:
                best, best_ab = c, np.array([A, B])
    res = minimize(_mean_cost, best_ab, args=(mpc, S), method="Nelder-Mead",
                   bounds=[(-1.0, 1.0), (-1.0, 1.0)],
                   options={"xatol": 1e-6, "fatol": 1e-10})
    if res.fun < best:
        best_ab = np.clip(res.x, -1.0, 1.0)
    return best_ab


def robust_mpc_eval(bsp_ab, arima: ArimaParams = ArimaParams(), mpc: MpcParams = MpcParams(),
                    n_series=500, grid=41, seed=0, ood=(-0.1, -1.2), nominal_ab=None):
    """Compare BSP-found MPC parameters with a nominal fit.

    The nominal ``(A, B)`` minimizes the mean cost over ``n_series``
    in-distribution series (``alpha, beta ~ U[-1, 1]``). Both parameter
    sets are then scored on fresh in-distribution and out-of-distribution
    (``alpha, beta = ood``) series. Improvements are percentages of the
    nominal cost; positive means the BSP parameters are cheaper.
    """
    rng = np.random.default_rng(seed)
    train = _series(arima, rng.uniform(-1.0, 1.0, (n_series, 2)), rng)
    test_in = _series(arima, rng.uniform(-1.0, 1.0, (n_series, 2)), rng)
    test_ood = _series(arima, [ood] * n_series, rng)
    nominal = fit_nominal(train, mpc, grid) if nominal_ab is None else np.asarray(nominal_ab, float)
    bsp_ab = np.asarray(bsp_ab, dtype=float)
    report = {
        "nominal_ab": nominal,
        "bsp_ab": bsp_ab,
        "ood_params": list(ood),
        "n_series": n_series,
        "nominal_in": _mean_cost(nominal, mpc, test_in),
        "bsp_in": _mean_cost(bsp_ab, mpc, test_in),
        "nominal_ood": _mean_cost(nominal, mpc, test_ood),
        "bsp_ood": _mean_cost(bsp_ab, mpc, test_ood),
    }
    report["improvement_in_pct"] = 100.0 * (report["nominal_in"] - report["bsp_in"]) / report["nominal_in"]
    report["improvement_ood_pct"] = 100.0 * (report["nominal_ood"] - report["bsp_ood"]) / report["nominal_ood"]
    return _clean(report)
