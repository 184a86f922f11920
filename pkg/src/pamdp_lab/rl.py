"""Contractual reinforcement learning with a warm start.

Phase 1 learns mu_h(s, a, a') = P_h(s, a) - P_h(s, a') with one simplex
search per (s, h). Phase 2 is optimistic: empirical estimates, bonuses, the
pooled transition estimator and one of two robust solvers (backward
induction over per-step incentive LPs, or one LP per agent policy).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import core, planner
from .bandit import RegretTrace
from .errors import InvalidInputError, NotInducible, PlanningInfeasible
from .simplexsearch import SearchConfig, recover_diffs, search_process


# ---------------------------------------------------------------- statistics

class EpisodeStats:
    """Visit counts and empirical means, indexed like the environment."""

    def __init__(self, H, S, A):
        self.H, self.S, self.A = H, S, A
        self.N_sa = np.zeros((H, S, A))
        self.N_sas = np.zeros((H, S, A, S))
        self.N_s = np.zeros((H, S))
        self.R_sum = np.zeros((H, S, A))
        self.episodes = 0

    def update(self, traj: core.Trajectory):
        for h, (s, a, s2, _, rew) in enumerate(traj.steps()):
            self.N_sa[h, s, a] += 1
            self.N_sas[h, s, a, s2] += 1
            self.N_s[h, s] += 1
            self.R_sum[h, s, a] += rew
        self.episodes += 1
        return self

    def P_hat(self):
        """Empirical transitions; rows with no data are uniform."""
        n = self.N_sa[..., None]
        return np.where(n > 0, self.N_sas / np.maximum(n, 1), 1.0 / self.S)

    def r_hat(self):
        return np.where(self.N_sa > 0, self.R_sum / np.maximum(self.N_sa, 1), 0.0)

    def log_term(self, T, delta):
        return math.log(self.S * self.A * self.H * T / delta)

    def bonus(self, T, delta):
        """(2H + 2) sqrt(ln(SAHT / delta) / N), infinite where N = 0."""
        with np.errstate(divide="ignore"):
            b = (2 * self.H + 2) * np.sqrt(self.log_term(T, delta) / self.N_sa)
        return np.where(self.N_sa > 0, b, np.inf)

    def l1_radius(self, T, delta):
        """2 sqrt(ln(SAHT / delta) / N) bound on ||P_hat - P||_1."""
        with np.errstate(divide="ignore"):
            rad = 2 * np.sqrt(self.log_term(T, delta) / self.N_sa)
        return np.where(self.N_sa > 0, rad, np.inf)


def update_stats(stats: EpisodeStats, trajectory: core.Trajectory) -> EpisodeStats:
    return stats.update(trajectory)


@dataclass
class MuEstimate:
    mu: np.ndarray               # (H, S, A, A, S)
    eps_mu: float
    resolved: np.ndarray | None = None   # (H, S, A, A)

    @classmethod
    def exact(cls, env: core.Pamdp):
        P = env.P
        mu = P[:, :, :, None, :] - P[:, :, None, :, :]
        return cls(mu, 0.0, np.ones(mu.shape[:4], dtype=bool))


def improved_P(stats: EpisodeStats, mu_hat: MuEstimate, T=None, delta=0.1):
    """Pool every action's samples at (h, s) through mu_hat.

    P_hat(s, a) = sum_a' N(s, a') / N(s) * (P_hat(s, a') + mu_hat(s, a, a')),
    clipped at zero and renormalized. Returns (P_hat, err, undefined) with
    err the l1 error bound 2 sqrt(ln(SAHT/delta) / N(s)) + eps_mu and
    undefined marking (h, s) with N(s) = 0 (left uniform).
    """
    Pe = stats.P_hat()
    Ns = stats.N_s
    w = np.where(Ns[..., None] > 0, stats.N_sa / np.maximum(Ns, 1)[..., None], 0.0)
    pooled = np.einsum("hsb,hsbt->hst", w, Pe)[:, :, None, :] + np.einsum("hsb,hsabt->hsat", w, mu_hat.mu)
    pooled = np.maximum(pooled, 0.0)
    sums = pooled.sum(-1, keepdims=True)
    undefined = Ns == 0
    P = np.where(undefined[..., None, None] | (sums <= 0), 1.0 / stats.S, pooled / np.where(sums > 0, sums, 1))
    T = max(stats.episodes, 1) if T is None else T
    with np.errstate(divide="ignore"):
        err = 2 * np.sqrt(stats.log_term(T, delta) / Ns) + mu_hat.eps_mu
    err = np.where(undefined, np.inf, err)
    return P, err, undefined


# ---------------------------------------------------------------- solvers

@dataclass
class SolverOutput:
    x: np.ndarray
    pi: np.ndarray
    value: float
    V: np.ndarray | None = None
    U: np.ndarray | None = None
    Q: np.ndarray | None = None
    margins: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def margin_schedule(H, eps, eps_prime, lam_s):
    """eps_h = min{H, eps lam^(h-H) + eps' lam^(h+1-H)} for h = 1..H."""
    h = np.arange(1, H + 1)
    return np.minimum(H, eps * lam_s ** (h - H) + eps_prime * lam_s ** (h + 1 - H))


def solver_vi(P_hat, r_hat, bonus, mu_hat, c, margins, eta):
    """Backward induction over robust incentive LPs with optimistic values."""
    P_hat = np.asarray(P_hat, dtype=float)
    mu = mu_hat.mu if isinstance(mu_hat, MuEstimate) else np.asarray(mu_hat, dtype=float)
    H, S, A, _ = P_hat.shape
    margins = np.broadcast_to(np.asarray(margins, dtype=float), (H,))
    V = np.zeros((H + 1, S))
    U = np.zeros((H + 1, S))
    Q = np.full((H, S, A), -np.inf)
    x = np.zeros((H, S, S))
    pi = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        for s in range(S):
            xa = np.zeros((A, S))
            for a in range(A):
                others = np.arange(A) != a
                rows = mu[h, s, a][others]
                rhs = c[h, s, a] - c[h, s, others] + margins[h] - rows @ U[h + 1]
                try:
                    xa[a], pay = planner.incentive_lp(P_hat[h, s, a], rows, rhs, eta)
                except NotInducible:
                    continue
                opt = min(H, r_hat[h, s, a] + bonus[h, s, a] + P_hat[h, s, a] @ V[h + 1])
                Q[h, s, a] = opt - pay
            if not np.isfinite(Q[h, s]).any():
                raise PlanningInfeasible(h, s)
            a = int(np.argmax(Q[h, s]))
            pi[h, s] = a
            x[h, s] = xa[a]
            V[h, s] = Q[h, s, a]
            U[h, s] = min(H, P_hat[h, s, a] @ (xa[a] + U[h + 1]) - c[h, s, a])
    return SolverOutput(x, pi, float("nan"), V, U, Q, margins.copy())


def _policy_forms(P_hat, c, P0, pi):
    """Linear form g with U^{x,pi} = g.x - C and the cost-to-go C, under P_hat."""
    H, S = pi.shape
    idx_h = np.arange(H)[:, None]
    idx_s = np.arange(S)[None, :]
    Ppi = P_hat[idx_h, idx_s, pi]
    rho = np.zeros((H + 1, S))
    rho[0] = P0
    for h in range(H):
        rho[h + 1] = rho[h] @ Ppi[h]
    g = rho[:-1, :, None] * Ppi
    C = float(np.sum(rho[:-1] * c[idx_h, idx_s, pi]))
    return g.reshape(-1), C, Ppi


def solver_lp(P_hat, r_hat, bonus, c, P0, eps, eta, cap=4096):
    """One robust LP per deterministic agent policy; return the best.

    For each pi: minimize U^{x,pi} subject to U^{x,pi} - U^{x,pi'} >= eps
    for all pi' != pi, with every U a linear form in x built from
    visitation measures under P_hat. The optimistic reward-to-go is capped
    at H at each step.
    """
    P_hat = np.asarray(P_hat, dtype=float)
    H, S, A, _ = P_hat.shape
    n_pol = A ** (S * H)
    if n_pol > cap:
        raise InvalidInputError(f"{n_pol} policies exceed the cap {cap}")
    pols = [np.array(f).reshape(H, S) for f in itertools.product(range(A), repeat=S * H)]
    forms = [_policy_forms(P_hat, c, P0, pi) for pi in pols]
    G = np.array([f[0] for f in forms])
    Cs = np.array([f[1] for f in forms])
    best = None
    for k, pi in enumerate(pols):
        # rivals that differ from pi only off the reachable set are the same
        # policy for both players and cannot be separated by any margin
        same = np.all(np.abs(G - G[k]) <= 1e-12, axis=1) & (np.abs(Cs - Cs[k]) <= 1e-12)
        others = ~same
        rows = G[k][None, :] - G[others]
        rhs = eps + Cs[k] - Cs[others]
        try:
            xk, pay = planner.incentive_lp(G[k], rows, rhs, eta)
        except NotInducible:
            continue
        Ppi = forms[k][2]
        R = np.zeros((H + 1, S))
        for h in range(H - 1, -1, -1):
            opt = r_hat[h, np.arange(S), pi[h]] + bonus[h, np.arange(S), pi[h]] + Ppi[h] @ R[h + 1]
            R[h] = np.minimum(H, opt)
        value = float(P0 @ R[0]) - pay
        if best is None or value > best[0] + 1e-12:
            best = (value, k, xk, pay)
    if best is None:
        raise PlanningInfeasible(-1, -1)
    value, k, xk, pay = best
    return SolverOutput(xk.reshape(H, S, S), pols[k], value, info={"payment": pay, "U": pay - Cs[k]})


# ---------------------------------------------------------------- warm start

def kappa0(env: core.Pamdp):
    """Half the smallest best-case reach probability: max_pi rho_h(s) >= 2 kappa0.

    Returns (kappa0, reach) with reach[h, s] = max_pi rho_h(s).
    """
    H, S = env.H, env.S
    best = np.zeros((H, S))
    best[0] = env.P0
    for target in range(S):
        for h in range(1, H):
            # maximize reach probability of (h, target) by backward induction
            val = np.zeros(S)
            val[target] = 1.0
            for k in range(h - 1, -1, -1):
                val = np.max(env.P[k] @ val, axis=1)
            best[h, target] = float(env.P0 @ val)
    return 0.5 * float(best.min()), best


@dataclass
class WarmStartResult:
    mu: MuEstimate
    episodes: int
    visits: np.ndarray             # (H, S) answered queries per subroutine
    finished: np.ndarray           # (H, S)
    contracts: list                # executed contract per episode
    estimates: dict = field(default_factory=dict)


def warm_start_mu(env: core.Pamdp, rounds: int, config_for, rng, sigma: float = 0.1,
                  k0: float | None = None, on_episode=None) -> WarmStartResult:
    """Run one simplex search per (s, h) inside real episodes.

    ``config_for(h, s)`` returns the SearchConfig of that subroutine. Each
    episode targets the unfinished (h, s) with the fewest answered queries;
    the contract pays scale * w + H max(c) / kappa0 at (h, s) and nothing
    elsewhere. The subroutine only advances when the episode visits (h, s).
    The phase ends after ``rounds`` episodes or when every search is done.
    """
    H, S, A = env.H, env.S, env.A
    if k0 is None:
        k0 = kappa0(env)[0]
    if k0 <= 0:
        raise InvalidInputError("warm start needs a weakly ergodic environment (kappa0 > 0)")
    shift = H * float(env.c.max()) / k0
    gens, pending, configs = {}, {}, {}
    memories = {}
    for h in range(H):
        for s in range(S):
            cfg = config_for(h, s)
            configs[h, s] = cfg
            g = search_process(cfg, np.random.default_rng(rng.integers(2 ** 63)))
            gens[h, s] = g
            pending[h, s] = next(g)
    visits = np.zeros((H, S), dtype=int)
    finished = np.zeros((H, S), dtype=bool)
    contracts = []
    ep = 0
    while ep < rounds and not finished.all():
        open_ = [(visits[h, s], h, s) for h in range(H) for s in range(S) if not finished[h, s]]
        _, h, s = min(open_)
        x = np.zeros((H, S, S))
        x[h, s] = configs[h, s].scale * pending[h, s] + shift
        pi, _ = core.agent_best_response(env, x)
        traj = core.simulate_episode(env, x, pi, rng, sigma)
        contracts.append(x)
        if on_episode is not None:
            on_episode(x, traj)
        ep += 1
        if traj.states[h] != s:
            continue
        visits[h, s] += 1
        try:
            pending[h, s] = gens[h, s].send(int(traj.actions[h]))
        except StopIteration as stop:
            memories[h, s] = stop.value
            finished[h, s] = True
    mu = np.zeros((H, S, A, A, S))
    resolved = np.zeros((H, S, A, A), dtype=bool)
    budgets = []
    estimates = {}
    for (h, s), mem in memories.items():
        cfg = configs[h, s]
        est = recover_diffs(mem, cfg.costs, cfg.eps, cfg.scale, S)
        estimates[h, s] = est
        known = est.known
        mu[h, s] = np.where(known[..., None], np.nan_to_num(est.delta), 0.0)
        resolved[h, s] = known
        budgets.append(10 * cfg.eps * math.sqrt(S) / cfg.theta if A > 1 else 0.0)
    eps_mu = max(budgets) if budgets and resolved.all() else np.inf
    if A == 1:
        eps_mu = 0.0
    return WarmStartResult(MuEstimate(mu, eps_mu, resolved), ep, visits, finished, contracts, estimates)


def default_search_configs(env: core.Pamdp, varsigma: float, num_lines: int = 2, scale=None):
    """config_for(h, s) with the closed-form constants and scale eta."""
    scale = env.eta if scale is None else scale

    def config_for(h, s):
        return SearchConfig.from_defaults(env.c[h, s], env.S, varsigma, num_lines, scale)
    return config_for


# ---------------------------------------------------------------- full learner

def contractual_rl(env: core.Pamdp, T: int, T1: int | None = None, delta: float = 0.1,
                   solver: str = "vi", seed=None, sigma: float = 0.1, *,
                   varsigma: float | None = None, lam_s: float | None = None,
                   eps: float | None = None, eps_prime: float | None = None,
                   num_lines: int = 2, warm_c: float = 150.0, v_star: float | None = None,
                   log_policies: bool = False) -> RegretTrace:
    """Warm start for up to T1 episodes, then optimistic robust contracts.

    Instantaneous regret is V* - V^{x_t} evaluated exactly on ``env``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    H, S, A = env.H, env.S, env.A
    certs = env.certificates or {}
    varsigma = varsigma if varsigma is not None else certs.get("varsigma", 0.2)
    lam_s = lam_s if lam_s is not None else certs.get("lambda_s", 0.3)
    if v_star is None:
        v_star = planner.benchmark_value(env)
    if T1 is None:
        T1 = int(math.ceil(warm_c * math.log(max(T, 2))))
    T1 = min(T1, T)
    rows, policies, contracts = [], [], []

    def record(x, traj):
        regret = v_star - core.principal_value(env, x)
        rows.append((int(traj.actions[0]), float(traj.payments.sum()), float(traj.rewards.sum()), regret))
        contracts.append(x)

    ws = warm_start_mu(env, T1, default_search_configs(env, varsigma, num_lines), rng, sigma,
                       on_episode=record)
    mu = ws.mu
    eps = lam_s / math.sqrt(T) if eps is None else eps
    eps_prime = (mu.eps_mu if np.isfinite(mu.eps_mu) else 0.0) if eps_prime is None else eps_prime
    margins = margin_schedule(H, eps, eps_prime, lam_s)
    stats = EpisodeStats(H, S, A)
    fallbacks = 0
    x_prev = env.zero_contract()
    for t in range(ws.episodes, T):
        P_hat, _, _ = improved_P(stats, mu, T, delta)
        r_hat = stats.r_hat()
        b = stats.bonus(T, delta)
        try:
            if solver == "vi":
                out = solver_vi(P_hat, r_hat, b, mu, env.c, margins, env.eta)
            elif solver == "lp":
                out = solver_lp(P_hat, r_hat, b, env.c, env.P0, eps, env.eta)
            else:
                raise InvalidInputError(f"unknown solver {solver!r}")
            x = out.x
        except PlanningInfeasible:
            fallbacks += 1
            x = x_prev
            out = None
        pi, _ = core.agent_best_response(env, x)
        traj = core.simulate_episode(env, x, pi, rng, sigma)
        stats.update(traj)
        record(x, traj)
        if log_policies:
            policies.append({"t": t + 1, "pi_hat": None if out is None else out.pi.tolist(),
                             "pi_agent": pi.tolist()})
        x_prev = x
    a, pay, rew, reg = (np.array(v) for v in zip(*rows)) if rows else [np.zeros(0)] * 4
    meta = {"algorithm": f"contractual_rl[{solver}]", "T": T, "T1": T1, "delta": delta,
            "warm_episodes": ws.episodes, "warm_finished": bool(ws.finished.all()),
            "eps": eps, "eps_prime": eps_prime, "eps_mu": mu.eps_mu, "v_star": v_star,
            "solver_fallbacks": fallbacks}
    if log_policies:
        meta["policies"] = policies
    return RegretTrace(a.astype(int), pay, rew, reg, meta, None,
                       np.array(contracts) if contracts else None)
