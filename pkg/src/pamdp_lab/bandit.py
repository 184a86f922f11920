"""Contractual bandits (horizon one).

The principal posts a contract x over S outcomes, the agent picks
argmax_a P(a).x - c(a), an outcome s ~ P(a) is drawn, the principal earns
iota(s) + noise and pays x(s). Learners here: generic UCB over epsilon-margin
contract sets, direct-incentive cost bisection, cost-difference search along
preliminary contracts, explore-then-commit and the doubling wrapper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import core
from .errors import InvalidInputError, NotInducible
from .planner import incentive_lp

TIE_TOL = 1e-9


@dataclass
class BanditInstance:
    P: np.ndarray            # (A, S)
    iota: np.ndarray         # (S,)
    c: np.ndarray            # (A,)
    eta: float
    lam: float | None = None
    events: np.ndarray | None = None      # (A, S) inducibility witnesses e_a
    prelim: np.ndarray | None = None      # (A, S) preliminary contracts
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.atleast_2d(np.array(self.P, dtype=float))
        if np.any(P < 0) or np.any(np.abs(P.sum(1) - 1) > 1e-6):
            raise InvalidInputError("outcome distributions must be stochastic rows")
        self.P = P / P.sum(1, keepdims=True)
        self.iota = np.array(self.iota, dtype=float).reshape(self.S)
        self.c = np.array(self.c, dtype=float).reshape(self.A)
        if np.any(self.c < 0) or np.any(self.c > 1):
            raise InvalidInputError("costs must lie in [0, 1]")
        self.eta = float(self.eta)
        if not self.eta > 0:
            raise InvalidInputError("payment cap eta must be positive")
        if self.prelim is not None:
            self.prelim = np.array(self.prelim, dtype=float).reshape(self.A, self.S)
        if self.events is not None:
            self.events = np.array(self.events, dtype=float).reshape(self.A, self.S)

    @property
    def A(self):
        return self.P.shape[0]

    @property
    def S(self):
        return self.P.shape[1]

    @property
    def r(self):
        return self.P @ self.iota

    def respond(self, x):
        """Agent best response; ties favour the principal, then the lowest index."""
        x = np.asarray(x, dtype=float)
        util = self.P @ x - self.c
        near = util >= util.max() - TIE_TOL
        prin = np.where(near, self.r - self.P @ x, -np.inf)
        return int(np.flatnonzero(prin >= prin.max() - TIE_TOL)[0])

    def principal_utility(self, x):
        a = self.respond(x)
        return self.r[a] - self.P[a] @ x

    def least_payments(self):
        """Exact zeta(a) and minimizing contracts; NaN where not inducible."""
        zeta = np.full(self.A, np.nan)
        xs = np.full((self.A, self.S), np.nan)
        for a in range(self.A):
            try:
                xs[a], zeta[a] = incentive_lp(self.P[a], *_margin_rows(self.P, self.c, a, 0.0), self.eta)
            except NotInducible:
                pass
        return zeta, xs

    def optimum(self):
        """(V*, a*, x*) of the true instance."""
        zeta, xs = self.least_payments()
        vals = np.where(np.isnan(zeta), -np.inf, self.r - zeta)
        a = int(np.argmax(vals))
        return float(vals[a]), a, xs[a]

    def as_pamdp(self):
        """The same problem as an H = 1 PAMDP that starts in state 0."""
        S, A = self.S, self.A
        P = np.broadcast_to(self.P, (1, S, A, S))
        r = np.broadcast_to(self.r, (1, S, A))
        c = np.broadcast_to(self.c, (1, S, A))
        iota = np.broadcast_to(self.iota, (1, S, S))
        P0 = np.eye(S)[0]
        return core.Pamdp(P, r, c, P0, self.eta, iota=iota)


def example1(mu: float, eta: float = 1.0) -> BanditInstance:
    """Two outcomes with iota = [1, 0]; a1 costs 1/2 and always yields s1,
    a2 is free and yields s2 with probability mu."""
    if not 0 < mu <= 1:
        raise InvalidInputError("mu must lie in (0, 1]")
    P = np.array([[1.0, 0.0], [1.0 - mu, mu]])
    events = np.array([[1.0, 0.0], [0.0, 1.0]])
    inst = BanditInstance(P, [1.0, 0.0], [0.5, 0.0], eta, lam=mu, events=events)
    inst.prelim = preliminary_contracts(inst)
    return inst


def inducibility(P, a):
    """max_e min_{a'} [P(a) - P(a')].e over e in [0, 1]^S, with the witness e."""
    from .lpkit import LinearProgram, solve_lp
    A, S = P.shape
    others = [b for b in range(A) if b != a]
    if not others:
        return np.inf, np.ones(S)
    # variables (e, t); maximize t
    obj = np.zeros(S + 1)
    obj[-1] = -1.0
    cons = [(np.concatenate([P[a] - P[b], [-1.0]]), ">=", 0.0) for b in others]
    lower = np.concatenate([np.zeros(S), [-np.inf]])
    upper = np.concatenate([np.ones(S), [np.inf]])
    sol = solve_lp(LinearProgram.build(obj, cons, lower, upper))
    return float(-sol.objective_value), sol.x[:S]


def preliminary_contracts(inst: BanditInstance, slack: float = 0.05):
    """x^a = e_a (max_{a'} (c(a) - c(a')) + slack) / lambda, clipped below at 0.

    The slack keeps the preliminary contract strictly inside X^a so that the
    agent's choice does not hinge on tie-breaking.
    """
    if inst.lam is None or inst.events is None:
        lams, evs = zip(*(inducibility(inst.P, a) for a in range(inst.A)))
        inst.lam = float(min(lams))
        inst.events = np.array(evs)
    X = np.zeros((inst.A, inst.S))
    for a in range(inst.A):
        gap = max(0.0, float(np.max(inst.c[a] - inst.c))) if inst.A > 1 else 0.0
        X[a] = inst.events[a] * (gap + slack) / inst.lam if inst.A > 1 else 0.0
    return X


# ---------------------------------------------------------------- margin sets

def _margin_rows(P, c, a, eps):
    others = np.arange(P.shape[0]) != a
    return P[a][None, :] - P[others], c[a] - c[others] + eps


@dataclass
class MarginContractSet:
    """{x in [0, eta]^S : rows @ x >= rhs}; rows are P(a) - P(a') over rivals."""

    action: int
    rows: np.ndarray
    rhs: np.ndarray
    eta: float
    rivals: np.ndarray | None = None

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if np.any(x < -tol) or np.any(x > self.eta + tol):
            return False
        return bool(np.all(self.rows @ x >= self.rhs - tol))

    @classmethod
    def exact(cls, inst: BanditInstance, a, eps):
        """X^a(eps) built from the true instance."""
        rows, rhs = _margin_rows(inst.P, inst.c, a, eps)
        return cls(a, rows, rhs, inst.eta, np.flatnonzero(np.arange(inst.A) != a))


def robust_contract(a, P_hat, cset: MarginContractSet):
    """Minimize P_hat(a).x over the set. Returns (x_hat, zeta_hat)."""
    P_hat = np.atleast_2d(P_hat)
    return incentive_lp(P_hat[a], cset.rows, cset.rhs, cset.eta)


# ---------------------------------------------------------------- traces

@dataclass
class RegretTrace:
    action: np.ndarray
    payment: np.ndarray
    reward: np.ndarray
    inst_regret: np.ndarray
    meta: dict = field(default_factory=dict)
    outcome: np.ndarray | None = None
    contracts: np.ndarray | None = None    # executed contract per round

    @property
    def t(self):
        return np.arange(1, self.action.size + 1)

    @property
    def cum_regret(self):
        return np.cumsum(self.inst_regret)

    @property
    def total(self):
        return float(self.inst_regret.sum())

    def __len__(self):
        return self.action.size

    @classmethod
    def concat(cls, traces, meta=None):
        def cat(name):
            parts = [getattr(t, name) for t in traces]
            return np.concatenate(parts) if all(p is not None for p in parts) else None
        return cls(cat("action"), cat("payment"), cat("reward"), cat("inst_regret"),
                   meta or {}, cat("outcome"), cat("contracts"))


class _Recorder:
    """Plays rounds against the true instance and records regret."""

    def __init__(self, inst, rng, sigma, T):
        self.inst = inst
        self.rng = rng
        self.sigma = sigma
        self.v_star = inst.optimum()[0]
        self.cdf = np.cumsum(inst.P, axis=1)
        n = max(T, 1)
        self.u = rng.random(n)
        self.noise = core.reward_noise(rng, sigma, n)
        self.rows = []
        self.outcomes = []
        self.contracts = []

    def play(self, x):
        inst = self.inst
        k = len(self.rows)
        if k >= self.u.size:
            self.u = np.concatenate([self.u, self.rng.random(self.u.size)])
            self.noise = np.concatenate([self.noise, core.reward_noise(self.rng, self.sigma, self.noise.size)])
        a = inst.respond(x)
        s = min(int(np.searchsorted(self.cdf[a], self.u[k], side="right")), inst.S - 1)
        reward = inst.iota[s] + self.noise[k]
        regret = self.v_star - (inst.r[a] - inst.P[a] @ x)
        self.rows.append((a, float(x[s]), reward, regret))
        self.outcomes.append(s)
        self.contracts.append(np.array(x, dtype=float))
        return a, s, reward

    def trace(self, meta):
        if not self.rows:
            z = np.zeros(0)
            return RegretTrace(z.astype(int), z, z, z, meta)
        a, pay, rew, reg = map(np.array, zip(*self.rows))
        meta.setdefault("v_star", self.v_star)
        return RegretTrace(a.astype(int), pay, rew, reg, meta, np.array(self.outcomes),
                           np.array(self.contracts))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------- generic UCB

def confidence_radius(S, T, A, delta, n):
    """sqrt(S ln(TA/delta) / n), infinite for n = 0."""
    if n <= 0:
        return np.inf
    return math.sqrt(S * math.log(T * A / delta) / n)


def generic_ucb(inst: BanditInstance, sets, T: int, delta: float = 0.1, seed=None,
                sigma: float = 0.1) -> RegretTrace:
    """UCB over robust contracts: play argmax r_hat - zeta_hat + (1 + eta) eps_t.

    Actions whose set is empty under the current estimate are skipped.
    """
    rng = _rng(seed)
    A, S = inst.A, inst.S
    if len(sets) != A:
        raise InvalidInputError("need one margin set per action")
    rec = _Recorder(inst, rng, sigma, T)
    counts = np.zeros((A, S))
    n = np.zeros(A, dtype=int)
    rsum = np.zeros(A)
    zeta_hat = np.zeros(A)
    x_hat = np.zeros((A, S))
    usable = np.ones(A, dtype=bool)

    def refresh(a, P_hat):
        try:
            x_hat[a], zeta_hat[a] = robust_contract(a, P_hat, sets[a])
            usable[a] = True
        except NotInducible:
            usable[a] = False

    uniform = np.full((A, S), 1.0 / S)
    for a in range(A):
        refresh(a, uniform)
    for t in range(T):
        if not usable.any():
            raise NotInducible("every margin set is empty")
        fresh = usable & (n == 0)
        if fresh.any():
            a_t = int(np.flatnonzero(fresh)[0])
        else:
            eps_t = np.sqrt(S * math.log(T * A / delta) / np.maximum(n, 1))
            score = np.where(usable, rsum / np.maximum(n, 1) - zeta_hat + (1 + inst.eta) * eps_t, -np.inf)
            a_t = int(np.argmax(score))
        a, s, reward = rec.play(x_hat[a_t])
        counts[a, s] += 1
        n[a] += 1
        rsum[a] += reward
        refresh(a, counts / np.maximum(n, 1)[:, None])
    meta = {"algorithm": "generic_ucb", "T": T, "delta": delta, "sigma": sigma}
    return rec.trace(meta)


# ---------------------------------------------------------------- direct incentives

def direct_response(c, x):
    """Agent facing action-contingent payments x(a) with an idle option.

    Utilities are x(a) - c(a); idling earns 0 and is returned as -1. Ties go
    to the action the principal pays most for (the probed action), then to
    the lowest index; an action tied with idling is taken.
    """
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    util = x - c
    best = util.max()
    if best < -TIE_TOL:
        return -1
    near = np.flatnonzero(util >= best - TIE_TOL)
    return int(near[np.argmax(x[near])])


def binary_search_costs(c, eps, respond=None):
    """Recover each action's cost to within eps / 2 by bisection on its payment.

    ``respond(x)`` is the agent oracle (defaults to ``direct_response(c, .)``);
    ``c`` is only used by the default oracle and for the action count.
    Returns (c_hat, rounds).
    """
    c = np.asarray(c, dtype=float)
    A = c.size
    if respond is None:
        def respond(x):
            return direct_response(c, x)
    k = int(math.ceil(math.log2(1.0 / eps))) + 1
    c_hat = np.zeros(A)
    rounds = 0
    for a in range(A):
        lo, hi = 0.0, 1.0
        for _ in range(k):
            mid = 0.5 * (lo + hi)
            x = np.zeros(A)
            x[a] = mid
            rounds += 1
            if respond(x) == a:
                hi = mid
            else:
                lo = mid
        c_hat[a] = 0.5 * (lo + hi)
    return c_hat, rounds


# ---------------------------------------------------------------- cost differences

@dataclass
class CostDiffResult:
    sets: list
    d_hat: np.ndarray          # (A, A) estimates of c(a) - c(a'), NaN if unknown
    direct: np.ndarray         # (A, A) bool, measured at a boundary
    hops: np.ndarray           # (A, A) path length used
    queries: int


def cost_diff_search(inst: BanditInstance, P_hat, eps, query=None) -> CostDiffResult:
    """Learn sets sandwiched between X^a(eps) and X^a from agent responses.

    For each ordered pair (a, a') the segment between the preliminary
    contracts x^a and x^{a'} is bisected to infinity-norm precision
    eps / (10 eta A). At the boundary, with x the end that still induces a
    and a'' the action on the other side, d_hat(a, a'') = [P_hat(a) -
    P_hat(a'')].x. Unmeasured pairs are filled along fewest-hop paths.
    """
    A, S = inst.A, inst.S
    P_hat = np.atleast_2d(np.asarray(P_hat, dtype=float))
    if query is None:
        query = inst.respond
    if inst.prelim is None:
        raise InvalidInputError("cost_diff_search needs preliminary contracts")
    X = inst.prelim
    n_queries = 0
    for a in range(A):
        n_queries += 1
        if query(X[a]) != a:
            raise InvalidInputError(f"preliminary contract for action {a} does not induce it")
    d_hat = np.full((A, A), np.nan)
    direct = np.zeros((A, A), dtype=bool)
    np.fill_diagonal(d_hat, 0.0)
    prec = eps / (10.0 * inst.eta * A)
    for a in range(A):
        for b in range(A):
            if a == b:
                continue
            # alpha = 1 -> x^a (induces a), alpha = 0 -> x^b (induces b)
            span = np.abs(X[a] - X[b]).max()
            lo, hi = 0.0, 1.0
            other = b
            while (hi - lo) * span > prec:
                mid = 0.5 * (lo + hi)
                resp = query(mid * X[a] + (1 - mid) * X[b])
                n_queries += 1
                if resp == a:
                    hi = mid
                else:
                    lo = mid
                    other = resp
            if other == a:
                continue
            x_in = hi * X[a] + (1 - hi) * X[b]
            d_hat[a, other] = (P_hat[a] - P_hat[other]) @ x_in
            direct[a, other] = True
    # symmetric fill for pairs measured in one direction only
    for a in range(A):
        for b in range(A):
            if direct[a, b] and not direct[b, a]:
                d_hat[b, a] = -d_hat[a, b]
    known = direct | direct.T
    hops = np.where(known, 1, 0)
    if A > 1:
        dist, pred = shortest_path(known.astype(float), directed=False, unweighted=True,
                                   return_predecessors=True)
        for a in range(A):
            for b in range(A):
                if a == b or known[a, b] or not np.isfinite(dist[a, b]):
                    continue
                path = [b]
                while path[-1] != a:
                    path.append(pred[a, path[-1]])
                path = path[::-1]
                d_hat[a, b] = sum(d_hat[u, v] for u, v in zip(path[:-1], path[1:]))
                hops[a, b] = len(path) - 1
    sets = []
    for a in range(A):
        rivals = np.array([b for b in range(A) if b != a and np.isfinite(d_hat[a, b])], dtype=int)
        rows = P_hat[a][None, :] - P_hat[rivals]
        rhs = d_hat[a, rivals] + eps / 2.0
        sets.append(MarginContractSet(a, rows.reshape(-1, S), rhs, inst.eta, rivals))
    return CostDiffResult(sets, d_hat, direct, hops, n_queries)


# ---------------------------------------------------------------- explore then commit

def explore_then_commit(inst: BanditInstance, T: int, delta: float = 0.1, seed=None,
                        sigma: float = 0.1, eps_scale: float = 1.0) -> RegretTrace:
    """Round-robin preliminary contracts for T^(2/3) rounds, then search and commit."""
    rng = _rng(seed)
    A, S = inst.A, inst.S
    rec = _Recorder(inst, rng, sigma, T)
    n1 = min(T, int(math.ceil(T ** (2.0 / 3.0))))
    counts = np.zeros((A, S))
    n = np.zeros(A, dtype=int)
    rsum = np.zeros(A)
    for t in range(n1):
        a, s, reward = rec.play(inst.prelim[t % A])
        counts[a, s] += 1
        n[a] += 1
        rsum[a] += reward
    meta = {"algorithm": "explore_then_commit", "T": T, "delta": delta, "sigma": sigma,
            "explore_rounds": n1}
    if len(rec.rows) >= T:
        return rec.trace(meta)
    P_hat = np.where(n[:, None] > 0, counts / np.maximum(n, 1)[:, None], 1.0 / S)
    r_hat = np.where(n > 0, rsum / np.maximum(n, 1), 0.0)
    eps = eps_scale * T ** (-1.0 / 3.0)

    def query(x):
        if len(rec.rows) < T:
            return rec.play(x)[0]
        return inst.respond(x)

    res = cost_diff_search(inst, P_hat, eps, query=query)
    best, best_val, x_commit = None, -np.inf, None
    for a in range(A):
        try:
            x, z = robust_contract(a, P_hat, res.sets[a])
        except NotInducible:
            continue
        if r_hat[a] - z > best_val:
            best, best_val, x_commit = a, r_hat[a] - z, x
    if x_commit is None:
        raise NotInducible("no learned set is feasible")
    while len(rec.rows) < T:
        rec.play(x_commit)
    meta.update(committed_action=best, eps=eps, search_queries=res.queries)
    return rec.trace(meta)


# ---------------------------------------------------------------- doubling trick

def doubling_wrapper(factory, T: int, seed=None) -> RegretTrace:
    """Run ``factory(horizon, rng)`` on epochs of length 1, 2, 4, ...

    Epoch k covers rounds 2^k .. 2^(k+1) - 1 (1-indexed) and is told its
    horizon is 2^k; the last epoch is truncated at T.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    traces, starts = [], []
    done, k = 0, 0
    while done < T:
        horizon = 2 ** k
        child = np.random.default_rng(ss.spawn(1)[0])
        tr = factory(horizon, child)
        keep = min(horizon, T - done)
        traces.append(RegretTrace(tr.action[:keep], tr.payment[:keep], tr.reward[:keep],
                                  tr.inst_regret[:keep], {},
                                  None if tr.outcome is None else tr.outcome[:keep],
                                  None if tr.contracts is None else tr.contracts[:keep]))
        starts.append(done + 1)
        done += keep
        k += 1
    meta = {"algorithm": "doubling", "T": T, "restarts": starts}
    if "v_star" in tr.meta:
        meta["v_star"] = tr.meta["v_star"]
    return RegretTrace.concat(traces, meta)
