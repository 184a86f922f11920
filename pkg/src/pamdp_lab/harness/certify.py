"""Certifiers for the structural assumptions used by the learners.

Each certifier returns a Certificate: the measured constant, whether it
meets the requested target, and a witness (event vector, argmin tuple,
violating pair).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .. import core
from ..bandit import inducibility
from ..lpkit import LinearProgram, solve_lp


@dataclass
class Certificate:
    name: str
    value: float
    ok: bool
    witness: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, tuple):
                return [clean(u) for u in v]
            return v
        return {"name": self.name, "value": float(self.value), "ok": bool(self.ok),
                "witness": {k: clean(v) for k, v in self.witness.items()}}


def _check(name, value, target, witness):
    ok = True if target is None else value >= target - 1e-12
    return Certificate(name, float(value), bool(ok), witness)


def certify_kappa(env: core.Pamdp, target=None):
    """Mixing constant: the smallest transition probability."""
    idx = np.unravel_index(np.argmin(env.P), env.P.shape)
    return _check("kappa", env.P[idx], target, {"argmin": tuple(int(i) for i in idx)})


def certify_kappa0(env: core.Pamdp, target=None):
    """Weak ergodicity: max_pi rho_h(s) >= 2 kappa0 for all (h, s)."""
    from ..rl import kappa0
    k0, reach = kappa0(env)
    idx = np.unravel_index(np.argmin(reach), reach.shape)
    return _check("kappa0", k0, target, {"argmin": tuple(int(i) for i in idx), "reach": reach})


def certify_lambda_s(env: core.Pamdp, target=None):
    """Strong inducibility: min over (h, s, a) of the event LP value."""
    H, S, A = env.H, env.S, env.A
    lam = np.full((H, S, A), np.inf)
    events = np.zeros((H, S, A, S))
    for h, s, a in itertools.product(range(H), range(S), range(A)):
        lam[h, s, a], events[h, s, a] = inducibility(env.P[h, s], a)
    idx = np.unravel_index(np.argmin(lam), lam.shape)
    witness = {"argmin": tuple(int(i) for i in idx), "events": events}
    if lam[idx] <= 0:
        h, s, a = idx
        gaps = [(b, float(np.abs(env.P[h, s, a] - env.P[h, s, b]).sum())) for b in range(A) if b != a]
        witness["violating_pair"] = (int(a), int(min(gaps, key=lambda g: g[1])[0]))
    return _check("lambda_s", lam[idx], target, witness)


def certify_lambda(inst, target=None):
    """Bandit inducibility (H = 1) on a BanditInstance or an (A, S) matrix."""
    P = getattr(inst, "P", inst)
    lams, evs = zip(*(inducibility(np.asarray(P), a) for a in range(len(P))))
    a = int(np.argmin(lams))
    return _check("lambda", lams[a], target, {"argmin": a, "events": np.array(evs)})


def _policy_measures(env, pi):
    rho = core.visitation(env, pi)
    return rho[1:]


def certify_lambda_w(env: core.Pamdp, target=None, cap=4096):
    """Weak inducibility: min over pi of max_e min_{pi'} sum_h (rho_h^pi - rho_h^pi').e_h.

    Here rho_h ranges over steps 2..H+1 and e over [0, 1]^{H x S}.
    """
    H, S, A = env.H, env.S, env.A
    n = A ** (S * H)
    if n > cap:
        raise ValueError(f"{n} policies exceed the cap {cap}")
    pols = [np.array(f).reshape(H, S) for f in itertools.product(range(A), repeat=S * H)]
    R = np.array([_policy_measures(env, p).reshape(-1) for p in pols])
    m = H * S
    best = (np.inf, None, None)
    for k in range(n):
        obj = np.zeros(m + 1)
        obj[-1] = -1.0
        cons = [(np.concatenate([R[k] - R[j], [-1.0]]), ">=", 0.0) for j in range(n) if j != k]
        if not cons:
            continue
        lower = np.concatenate([np.zeros(m), [-np.inf]])
        upper = np.concatenate([np.ones(m), [np.inf]])
        sol = solve_lp(LinearProgram.build(obj, cons, lower, upper))
        val = -sol.objective_value
        if val < best[0]:
            best = (val, pols[k], sol.x[:m].reshape(H, S))
    return _check("lambda_w", best[0], target, {"policy": best[1], "events": best[2]})


def region_fractions(P, costs, scale, n=100_000, rng=None, dim=None):
    """Monte-Carlo share of the simplex where each action is the best response.

    The agent facing contract scale * w picks argmax scale * P.w - c; w is
    uniform on the probability simplex.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    P = np.asarray(P, dtype=float)
    W = rng.dirichlet(np.ones(P.shape[1]), size=n)
    util = scale * W @ P.T - np.asarray(costs)[None, :]
    picks = util.argmax(axis=1)
    return np.bincount(picks, minlength=P.shape[0]) / n


def certify_varsigma(P, costs, scale, target=None, n=100_000, rng=None):
    """Minimal volume ratio of the best-response regions (Monte-Carlo)."""
    frac = region_fractions(P, costs, scale, n, rng)
    a = int(np.argmin(frac))
    return _check("varsigma", frac[a], target, {"argmin": a, "fractions": frac, "samples": n})


def certify_theta(costs, target=None):
    """Minimal pairwise cost gap."""
    c = np.sort(np.asarray(costs, dtype=float))
    gap = float(np.min(np.diff(c))) if c.size > 1 else np.inf
    return _check("theta", gap, target, {})


def certify_varsigma_env(env: core.Pamdp, target=None, n=20_000, rng=None, scale=None):
    """Worst ς over every (h, s) of a PAMDP, contracts scaled by eta."""
    scale = env.eta if scale is None else scale
    rng = np.random.default_rng(0) if rng is None else rng
    worst = (np.inf, None)
    for h, s in itertools.product(range(env.H), range(env.S)):
        cert = certify_varsigma(env.P[h, s], env.c[h, s], scale, None, n, rng)
        if cert.value < worst[0]:
            worst = (cert.value, (h, s))
    return _check("varsigma", worst[0], target, {"argmin": worst[1], "samples": n})


def certify_assumption(instance, assumption: str, target=None, **kw) -> Certificate:
    """Dispatch by assumption id: kappa, kappa0, lambda, lambda_s, lambda_w, varsigma, theta."""
    if assumption == "kappa":
        return certify_kappa(instance, target)
    if assumption == "kappa0":
        return certify_kappa0(instance, target)
    if assumption == "lambda":
        return certify_lambda(instance, target)
    if assumption == "lambda_s":
        return certify_lambda_s(instance, target)
    if assumption == "lambda_w":
        return certify_lambda_w(instance, target, **kw)
    if assumption == "varsigma":
        if isinstance(instance, core.Pamdp):
            return certify_varsigma_env(instance, target, **kw)
        return certify_varsigma(instance.P, instance.c, kw.pop("scale", instance.eta), target, **kw)
    if assumption == "theta":
        if isinstance(instance, core.Pamdp):
            gaps = [certify_theta(instance.c[h, s]).value
                    for h in range(instance.H) for s in range(instance.S)]
            return _check("theta", min(gaps), target, {})
        return certify_theta(getattr(instance, "c", instance), target)
    raise ValueError(f"unknown assumption {assumption!r}")
