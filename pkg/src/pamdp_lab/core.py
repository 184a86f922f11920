"""Principal-agent MDP model, agent best response and value evaluation.

Array conventions (all 0-based):

    P      (H, S, A, S)   P[h, s, a, s'] transition / outcome distribution
    r, c   (H, S, A)      principal reward, agent cost
    P0     (S,)           initial state distribution
    x      (H, S, S)      contract policy, x[h, s, s'] paid on (s -> s')
    pi     (H, S)         deterministic action policy
    tables (H + 1, S)     value tables, the last row is the terminal zero row
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

TIE_TOL = 1e-9
ROW_TOL = 1e-6


def _check_stochastic(arr, name):
    if np.any(arr < 0):
        raise InvalidInputError(f"{name} has negative entries")
    sums = arr.sum(axis=-1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        raise InvalidInputError(f"{name} rows do not sum to 1 (worst {np.abs(sums - 1).max():.3g})")
    return arr / sums


@dataclass
class Pamdp:
    """Finite-horizon principal-agent MDP.

    ``iota`` is the optional deterministic outcome-reward table
    iota[h, s, s'] with r[h, s, a] = P[h, s, a] . iota[h, s]. When present the
    simulator draws rewards from it; otherwise rewards are r plus noise.
    """

    P: np.ndarray
    r: np.ndarray
    c: np.ndarray
    P0: np.ndarray
    eta: float
    iota: np.ndarray | None = None
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise InvalidInputError(f"P must have shape (H, S, A, S), got {P.shape}")
        H, S, A, _ = P.shape
        if min(H, S, A) < 1:
            raise InvalidInputError("S, A and H must be positive")
        self.P = _check_stochastic(P, "P")
        self.r = np.array(self.r, dtype=float)
        self.c = np.array(self.c, dtype=float)
        for name, arr in (("r", self.r), ("c", self.c)):
            if arr.shape != (H, S, A):
                raise InvalidInputError(f"{name} must have shape {(H, S, A)}, got {arr.shape}")
            if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        self.r = np.clip(self.r, 0.0, 1.0)
        self.c = np.clip(self.c, 0.0, 1.0)
        P0 = np.array(self.P0, dtype=float)
        if P0.shape != (S,):
            raise InvalidInputError(f"P0 must have shape ({S},)")
        self.P0 = _check_stochastic(P0, "P0")
        self.eta = float(self.eta)
        if not np.isfinite(self.eta) or self.eta <= 0:
            raise InvalidInputError("payment cap eta must be positive and finite")
        if self.iota is not None:
            iota = np.array(self.iota, dtype=float)
            if iota.shape != (H, S, S):
                raise InvalidInputError(f"iota must have shape {(H, S, S)}")
            implied = np.einsum("hsat,hst->hsa", self.P, iota)
            if np.abs(implied - self.r).max() > 1e-9:
                raise InvalidInputError("iota is inconsistent with r (E[iota] != r)")
            self.iota = iota

    @property
    def H(self):
        return self.P.shape[0]

    @property
    def S(self):
        return self.P.shape[1]

    @property
    def A(self):
        return self.P.shape[2]

    def zero_contract(self):
        return np.zeros((self.H, self.S, self.S))

    def check_contract(self, x, bounded=False):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.H, self.S, self.S):
            raise InvalidInputError(f"contract must have shape {(self.H, self.S, self.S)}, got {x.shape}")
        if np.any(x < -1e-12):
            raise InvalidInputError("contracts must be non-negative (non-liability)")
        if bounded and np.any(x > self.eta + 1e-9):
            raise InvalidInputError("contract exceeds the payment cap")
        return x

    def check_policy(self, pi):
        pi = np.asarray(pi)
        if pi.shape != (self.H, self.S):
            raise InvalidInputError(f"policy must have shape {(self.H, self.S)}, got {pi.shape}")
        if not np.issubdtype(pi.dtype, np.integer):
            if np.any(pi != np.round(pi)):
                raise InvalidInputError("policy entries must be integers")
            pi = pi.astype(int)
        if np.any(pi < 0) or np.any(pi >= self.A):
            raise InvalidInputError("policy entry out of range")
        return pi


def _take(arr, pi):
    """arr[h, s, pi[h, s], ...] for arrays indexed (H, S, A, ...)."""
    H, S = pi.shape
    return arr[np.arange(H)[:, None], np.arange(S)[None, :], pi]


def agent_best_response(env: Pamdp, x, tol: float = TIE_TOL):
    """Backward-induction best response of a far-sighted agent to ``x``.

    Ties within ``tol`` go to the action with the largest principal
    continuation value r + P.(V_{h+1} - x); remaining ties go to the lowest
    action index. Returns (pi, U) with U of shape (H + 1, S).
    """
    x = env.check_contract(x)
    H, S = env.H, env.S
    U = np.zeros((H + 1, S))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=int)
    rows = np.arange(S)
    for h in range(H - 1, -1, -1):
        W = np.einsum("sat,st->sa", env.P[h], x[h] + U[h + 1]) - env.c[h]
        Qp = env.r[h] + np.einsum("sat,st->sa", env.P[h], V[h + 1][None, :] - x[h])
        near = W >= W.max(axis=1, keepdims=True) - tol
        Qm = np.where(near, Qp, -np.inf)
        best = near & (Qm >= Qm.max(axis=1, keepdims=True) - tol)
        a = best.argmax(axis=1)
        pi[h] = a
        U[h] = W[rows, a]
        V[h] = Qp[rows, a]
    return pi, U


def evaluate_values(env: Pamdp, x, pi):
    """Principal and agent value tables (V, U) for contract x and policy pi."""
    x = env.check_contract(x)
    pi = env.check_policy(pi)
    H, S = env.H, env.S
    Ppi = _take(env.P, pi)          # (H, S, S)
    rpi = _take(env.r, pi)
    cpi = _take(env.c, pi)
    V = np.zeros((H + 1, S))
    U = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        V[h] = rpi[h] + np.einsum("st,st->s", Ppi[h], V[h + 1][None, :] - x[h])
        U[h] = np.einsum("st,st->s", Ppi[h], x[h] + U[h + 1][None, :]) - cpi[h]
    return V, U


def evaluate_reward_cost(env: Pamdp, pi):
    """Contract-free reward-to-go R and cost-to-go C of policy pi."""
    pi = env.check_policy(pi)
    Ppi = _take(env.P, pi)
    rpi = _take(env.r, pi)
    cpi = _take(env.c, pi)
    R = np.zeros((env.H + 1, env.S))
    C = np.zeros((env.H + 1, env.S))
    for h in range(env.H - 1, -1, -1):
        R[h] = rpi[h] + Ppi[h] @ R[h + 1]
        C[h] = cpi[h] + Ppi[h] @ C[h + 1]
    return R, C


def visitation(env: Pamdp, pi):
    """State distributions rho[h] for h = 0..H under pi, rho[0] = P0."""
    pi = env.check_policy(pi)
    Ppi = _take(env.P, pi)
    rho = np.zeros((env.H + 1, env.S))
    rho[0] = env.P0
    for h in range(env.H):
        rho[h + 1] = rho[h] @ Ppi[h]
    return rho


def agent_value_by_visitation(env: Pamdp, x, pi):
    """Aggregate agent utility sum_h <rho_h, P_h^pi . x_h - c_h^pi>."""
    x = env.check_contract(x)
    pi = env.check_policy(pi)
    rho = visitation(env, pi)
    Ppi = _take(env.P, pi)
    pay = np.einsum("hst,hst->hs", Ppi, x)
    return float(np.sum(rho[:-1] * (pay - _take(env.c, pi))))


def expected(env: Pamdp, table):
    """Aggregate a value table at the initial distribution."""
    return float(env.P0 @ np.asarray(table)[0])


def principal_value(env: Pamdp, x):
    """V^{x, pi(x)}: the principal's value when the agent best-responds to x."""
    pi, _ = agent_best_response(env, x)
    V, _ = evaluate_values(env, x, pi)
    return expected(env, V)


@dataclass
class Trajectory:
    states: np.ndarray      # (H + 1,)
    actions: np.ndarray     # (H,)
    payments: np.ndarray    # (H,)
    rewards: np.ndarray     # (H,)

    @property
    def H(self):
        return self.actions.size

    def steps(self):
        for h in range(self.H):
            yield (int(self.states[h]), int(self.actions[h]), int(self.states[h + 1]),
                   float(self.payments[h]), float(self.rewards[h]))


def reward_noise(rng, sigma, size=None):
    """Gaussian noise clipped at four standard deviations (still zero mean)."""
    if sigma <= 0:
        return np.zeros(size) if size is not None else 0.0
    return np.clip(rng.normal(0.0, sigma, size), -4 * sigma, 4 * sigma)


def simulate_episode(env: Pamdp, x, pi, rng_seed=None, sigma: float = 0.1) -> Trajectory:
    """Roll out one episode with the agent following pi under contract x."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=int)
    H = env.H
    states = np.zeros(H + 1, dtype=int)
    actions = np.zeros(H, dtype=int)
    payments = np.zeros(H)
    rewards = np.zeros(H)
    u = rng.random(H + 1)
    noise = reward_noise(rng, sigma, H)
    s = min(int(np.searchsorted(np.cumsum(env.P0), u[0], side="right")), env.S - 1)
    states[0] = s
    for h in range(H):
        a = pi[h, s]
        row = env.P[h, s, a]
        s2 = min(int(np.searchsorted(np.cumsum(row), u[h + 1], side="right")), env.S - 1)
        actions[h] = a
        payments[h] = x[h, s, s2]
        base = env.iota[h, s, s2] if env.iota is not None else env.r[h, s, a]
        rewards[h] = base + noise[h]
        states[h + 1] = s2
        s = s2
    return Trajectory(states, actions, payments, rewards)
