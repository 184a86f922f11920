"""Replicated runs, regret summaries and log-log exponent fits."""
from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .. import bandit, core, rl
from ..errors import InvalidInputError
from . import io
from .generate import InstanceSpec, generate_instance
from .rng import replication_seeds

ALGORITHMS = ("ucb", "etc", "doubling_ucb", "rl")


@dataclass
class ExperimentConfig:
    instance: dict | str                  # InstanceSpec fields or a JSON path
    algorithm: str = "ucb"
    T: list = field(default_factory=lambda: [1000])
    reps: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    out: str = "runs"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        self.T = [int(t) for t in np.atleast_1d(self.T)]
        if any(t < 1 for t in self.T):
            raise InvalidInputError("horizons must be positive")
        if self.reps < 1:
            raise InvalidInputError("reps must be at least 1")
        if isinstance(self.instance, str) and not os.path.exists(self.instance):
            raise InvalidInputError(f"instance file {self.instance} does not exist")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    @classmethod
    def from_file(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def load_or_generate(instance, algorithm):
    """Instance for a run. Bandit algorithms receive a BanditInstance."""
    if isinstance(instance, str):
        env = io.load_instance(instance)
        if algorithm == "rl":
            return env
        if env.H != 1:
            raise InvalidInputError("bandit algorithms need an H = 1 instance")
        iota = env.iota[0, 0] if env.iota is not None else None
        if iota is None:
            raise InvalidInputError("bandit instances need outcome rewards iota")
        return bandit.BanditInstance(env.P[0, 0], iota, env.c[0, 0], env.eta)
    inst, _ = generate_instance(InstanceSpec.from_dict(instance))
    return inst


def run_replication(inst, algorithm, T, seed, params=None):
    params = dict(params or {})
    if algorithm == "ucb":
        eps = params.pop("eps", T ** -0.5)
        sets = [bandit.MarginContractSet.exact(inst, a, eps) for a in range(inst.A)]
        return bandit.generic_ucb(inst, sets, T, seed=seed, **params)
    if algorithm == "etc":
        return bandit.explore_then_commit(inst, T, seed=seed, **params)
    if algorithm == "doubling_ucb":
        def factory(horizon, rng):
            sets = [bandit.MarginContractSet.exact(inst, a, horizon ** -0.5) for a in range(inst.A)]
            return bandit.generic_ucb(inst, sets, horizon, seed=rng, **params)
        return bandit.doubling_wrapper(factory, T, seed)
    if algorithm == "rl":
        return rl.contractual_rl(inst, T, seed=seed, **params)
    raise InvalidInputError(f"unknown algorithm {algorithm!r}")


def _job(args):
    inst, algorithm, T, seed, params = args
    try:
        return run_replication(inst, algorithm, T, seed, params), None
    except Exception:  # recorded per replication, the rest of the run continues
        return None, traceback.format_exc()


def workers():
    try:
        n = int(os.environ.get("PAMDP_LAB_THREADS", os.cpu_count() or 1))
    except ValueError:
        n = 1
    return max(1, n)


def map_jobs(jobs, n_workers=None):
    n_workers = workers() if n_workers is None else n_workers
    if n_workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(_job, jobs))


def log_checkpoints(T, n=20):
    return np.unique(np.round(np.logspace(0, np.log10(T), n)).astype(int))


def fit_exponent(T, R, level=0.95):
    """OLS fit of log R = a + b log T. Returns (b, (lo, hi), a).

    ``T`` and ``R`` are flat arrays of paired observations (replicates
    allowed). Non-positive regrets are clipped to 1e-12 before the log.
    """
    x = np.log(np.asarray(T, dtype=float))
    y = np.log(np.maximum(np.asarray(R, dtype=float), 1e-12))
    if np.unique(x).size < 2:
        raise InvalidInputError("exponent fit needs at least two distinct horizons")
    fit = stats.linregress(x, y)
    n = x.size
    if n > 2:
        q = stats.t.ppf(0.5 + level / 2, n - 2)
        ci = (fit.slope - q * fit.stderr, fit.slope + q * fit.stderr)
    else:
        ci = (np.nan, np.nan)
    return float(fit.slope), (float(ci[0]), float(ci[1])), float(fit.intercept)


def summarize(traces):
    """Mean and standard error of cumulative regret at log-spaced checkpoints."""
    T = len(traces[0])
    cps = log_checkpoints(T)
    cum = np.array([t.cum_regret[cps - 1] for t in traces])
    se = cum.std(axis=0, ddof=1) / np.sqrt(len(traces)) if len(traces) > 1 else np.zeros(cps.size)
    return {"checkpoints": cps.tolist(), "mean": cum.mean(0).tolist(), "stderr": se.tolist()}


def run_experiment(config: ExperimentConfig, n_workers=None):
    """Run every (T, replication), write CSVs and summary.json; return the summary."""
    inst = load_or_generate(config.instance, config.algorithm)
    seeds = replication_seeds(config.seed, config.reps)
    jobs = [(inst, config.algorithm, T, seeds[k], config.params) for T in config.T for k in range(config.reps)]
    results = map_jobs(jobs, n_workers)
    os.makedirs(config.out, exist_ok=True)
    io.save_instance(inst, os.path.join(config.out, "instance.json"))
    summary = {"algorithm": config.algorithm, "reps": config.reps, "seed": config.seed,
               "params": config.params, "instance_hash": io.instance_hash(inst), "horizons": {}, "errors": []}
    finals_T, finals_R = [], []
    for (_, _, T, seed, _), (trace, err), k in zip(jobs, results, [k for _ in config.T for k in range(config.reps)]):
        name = f"T{T}_rep{k:03d}.csv"
        if err is not None:
            summary["errors"].append({"T": T, "rep": k, "seed": seed, "traceback": err})
            continue
        io.save_trace(trace, os.path.join(config.out, name), inst, {"seed": seed, "rep": k})
        summary["horizons"].setdefault(str(T), []).append(trace)
        finals_T.append(T)
        finals_R.append(trace.total)
    for key, traces in list(summary["horizons"].items()):
        summary["horizons"][key] = {**summarize(traces), "final": [t.total for t in traces]}
    if len(set(finals_T)) >= 2:
        b, ci, a = fit_exponent(finals_T, finals_R)
        summary["exponent"] = {"slope": b, "ci95": list(ci), "intercept": a}
    with open(os.path.join(config.out, "summary.json"), "w") as f:
        f.write(io.dumps(summary))
    return summary


def verify_regret(inst, trace):
    """Recompute sum_t (V* - V^{x_t}) independently of the learner.

    V* comes from the planner on the true instance and each V^{x_t} from the
    core best response and evaluation. Returns (recomputed, reported).
    """
    from .. import planner
    if trace.contracts is None:
        raise InvalidInputError("trace carries no contracts to verify")
    if isinstance(inst, bandit.BanditInstance):
        env = inst.as_pamdp()
        n, S = trace.contracts.shape
        xs = np.broadcast_to(trace.contracts[:, None, None, :], (n, 1, S, S))
    else:
        env = inst
        xs = trace.contracts
    v_star = planner.benchmark_value(env)
    cache = {}
    total = 0.0
    for x in xs:
        key = x.tobytes()
        if key not in cache:
            cache[key] = core.principal_value(env, x)
        total += v_star - cache[key]
    return total, trace.total
