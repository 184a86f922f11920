"""Exact planning of optimal contract policies.

optimal_contract_policy runs the bi-level backward induction: at every
(h, s, a) the least payment inducing a is a small LP, and the principal then
picks the action with the best Q-value. least_payment_policy does the same
for a fixed agent policy, and brute_force_plan enumerates all policies.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import InvalidInputError, NotInducible, PlanningInfeasible
from .lpkit import solve_box_ge

FEAS_SLACK = 1e-12


def incentive_lp(p_target, diff_rows, rhs, eta):
    """min p_target . x  s.t.  diff_rows @ x >= rhs,  0 <= x <= eta.

    Rows are scaled to unit infinity-norm; an all-zero row is either
    trivially satisfied or makes the LP infeasible. Raises NotInducible when
    infeasible. Returns (x, value).
    """
    p_target = np.asarray(p_target, dtype=float)
    G = np.asarray(diff_rows, dtype=float).reshape(-1, p_target.size)
    h = np.asarray(rhs, dtype=float).reshape(-1)
    scale = np.abs(G).max(axis=1) if G.size else np.zeros(0)
    zero = scale <= 1e-14
    if np.any(h[zero] > FEAS_SLACK):
        raise NotInducible("a rival action has the same outcome distribution but lower cost")
    keep = ~zero
    G = G[keep] / scale[keep, None]
    h = h[keep] / scale[keep]
    sol = solve_box_ge(p_target, G, h, eta)
    if not sol.optimal:
        raise NotInducible(f"incentive LP is {sol.status}")
    return sol.x, float(p_target @ sol.x)


def least_payment_step(env: core.Pamdp, h, s, a, U_next):
    """Least-payment contract row x(s, .) inducing action a at (h, s).

    Returns (x_row, W) where W is the agent's continuation utility
    P_h(s, a) . (x + U_next) - c_h(s, a).
    """
    U_next = np.asarray(U_next, dtype=float)
    if U_next.shape != (env.S,):
        raise InvalidInputError(f"U_next must have length {env.S}")
    P = env.P[h, s]
    c = env.c[h, s]
    others = np.arange(env.A) != a
    D = P[a][None, :] - P[others]
    rhs = (c[a] - c[others]) - D @ U_next
    x, _ = incentive_lp(P[a], D, rhs, env.eta)
    W = float(P[a] @ (x + U_next) - c[a])
    return x, W


@dataclass
class PlanResult:
    x_star: np.ndarray       # (H, S, S)
    pi_star: np.ndarray      # (H, S)
    V_star: np.ndarray       # (H + 1, S)
    U_star: np.ndarray       # (H + 1, S)
    Q: np.ndarray | None = None          # (H, S, A), -inf where not inducible
    x_actions: np.ndarray | None = None  # (H, S, A, S), NaN where not inducible
    P0: np.ndarray | None = None

    @property
    def value(self):
        return float(self.P0 @ self.V_star[0])

    @property
    def agent_value(self):
        return float(self.P0 @ self.U_star[0])


def optimal_contract_policy(env: core.Pamdp) -> PlanResult:
    H, S, A = env.H, env.S, env.A
    V = np.zeros((H + 1, S))
    U = np.zeros((H + 1, S))
    Q = np.full((H, S, A), -np.inf)
    XA = np.full((H, S, A, S), np.nan)
    W = np.full((H, S, A), -np.inf)
    x_star = np.zeros((H, S, S))
    pi = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        for s in range(S):
            for a in range(A):
                try:
                    xa, w = least_payment_step(env, h, s, a, U[h + 1])
                except NotInducible:
                    continue
                XA[h, s, a] = xa
                W[h, s, a] = w
                Q[h, s, a] = env.r[h, s, a] + env.P[h, s, a] @ (V[h + 1] - xa)
            if not np.isfinite(Q[h, s]).any():
                raise PlanningInfeasible(h, s)
            a = int(np.argmax(Q[h, s]))
            pi[h, s] = a
            x_star[h, s] = XA[h, s, a]
            V[h, s] = Q[h, s, a]
            U[h, s] = W[h, s, a]
    return PlanResult(x_star, pi, V, U, Q, XA, env.P0.copy())


@dataclass
class LeastPaymentResult:
    x_pi: np.ndarray
    zeta: np.ndarray
    U_pi: np.ndarray
    V_pi: np.ndarray
    feasible: bool = True
    failed_at: tuple | None = None
    info: dict = field(default_factory=dict)


def least_payment_policy(env: core.Pamdp, pi, raise_on_infeasible: bool = True) -> LeastPaymentResult:
    """Cheapest contract policy making pi the agent's best response.

    zeta[h, s] is the expected payment-to-go; zeta = C + U holds.
    """
    pi = env.check_policy(pi)
    H, S = env.H, env.S
    x = np.zeros((H, S, S))
    zeta = np.zeros((H + 1, S))
    U = np.zeros((H + 1, S))
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        for s in range(S):
            a = pi[h, s]
            try:
                x[h, s], U[h, s] = least_payment_step(env, h, s, a, U[h + 1])
            except NotInducible:
                if raise_on_infeasible:
                    raise NotInducible(f"action {a} not inducible at h={h}, s={s}")
                return LeastPaymentResult(x, zeta, U, V, False, (h, s))
            p = env.P[h, s, a]
            zeta[h, s] = p @ (x[h, s] + zeta[h + 1])
            V[h, s] = env.r[h, s, a] + p @ (V[h + 1] - x[h, s])
    return LeastPaymentResult(x, zeta, U, V)


def brute_force_plan(env: core.Pamdp, cap: int = 100_000) -> PlanResult:
    """Exhaustive search over deterministic policies (testing oracle).

    Every policy is evaluated with the least-payment recursion. Policies
    sharing a suffix share its least-payment sub-solution, so the recursion
    is run once per (suffix, h, s, a) rather than once per full policy.
    """
    H, S, A = env.H, env.S, env.A
    if float(A) ** (S * H) > cap:
        raise InvalidInputError(f"{A}^{S * H} policies exceed the enumeration cap {cap}")
    # each tail entry: (pi_tail, x_tail, U_h, V_h) for steps h..H-1
    tails = [(np.zeros((0, S), dtype=int), np.zeros((0, S, S)), np.zeros(S), np.zeros(S))]
    for h in range(H - 1, -1, -1):
        new_tails = []
        for pi_t, x_t, U_next, V_next in tails:
            rows = {}
            for s in range(S):
                for a in range(A):
                    try:
                        xa, w = least_payment_step(env, h, s, a, U_next)
                    except NotInducible:
                        continue
                    v = env.r[h, s, a] + env.P[h, s, a] @ (V_next - xa)
                    rows[s, a] = (xa, w, v)
            for choice in itertools.product(range(A), repeat=S):
                if any((s, a) not in rows for s, a in enumerate(choice)):
                    continue
                xs = np.array([rows[s, a][0] for s, a in enumerate(choice)])
                Uh = np.array([rows[s, a][1] for s, a in enumerate(choice)])
                Vh = np.array([rows[s, a][2] for s, a in enumerate(choice)])
                new_tails.append((np.vstack([np.array(choice)[None], pi_t]),
                                  np.concatenate([xs[None], x_t]), Uh, Vh))
        tails = new_tails
    if not tails:
        raise PlanningInfeasible(-1, -1)
    vals = np.array([env.P0 @ t[3] for t in tails])
    best = int(np.argmax(vals))
    pi, x, _, _ = tails[best]
    lp = least_payment_policy(env, pi)
    return PlanResult(x, pi, lp.V_pi, lp.U_pi, None, None, env.P0.copy())


def enumerate_policy_values(env: core.Pamdp, cap: int = 100_000):
    """(policies, values) with NaN for non-inducible policies; exhaustive."""
    H, S, A = env.H, env.S, env.A
    if float(A) ** (S * H) > cap:
        raise InvalidInputError("policy count exceeds cap")
    pols, vals = [], []
    for flat in itertools.product(range(A), repeat=S * H):
        pi = np.array(flat).reshape(H, S)
        res = least_payment_policy(env, pi, raise_on_infeasible=False)
        pols.append(pi)
        vals.append(core.expected(env, res.V_pi) if res.feasible else np.nan)
    return pols, np.array(vals)


def benchmark_value(env: core.Pamdp, cap: int = 4096) -> float:
    """Best achievable principal value: brute force when enumerable, else the DP.

    The backward induction can fall short of the policy-level optimum when
    later choices change earlier incentive costs, so regret benchmarks use
    the exhaustive search whenever it fits under ``cap``.
    """
    if float(env.A) ** (env.S * env.H) <= cap:
        return brute_force_plan(env, cap).value
    return optimal_contract_policy(env).value
