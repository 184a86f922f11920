"""Seeded instance generators with certification by rejection sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import bandit, core
from ..errors import GenerationFailed, InvalidInputError
from . import certify
from .rng import stream

GENERATORS = ("random", "mixing", "example1", "bandit", "planted_simplex")


@dataclass
class InstanceSpec:
    generator: str
    S: int = 2
    A: int = 2
    H: int = 2
    eta: float = 1.0
    targets: dict = field(default_factory=dict)   # kappa, kappa0, lambda, lambda_s, lambda_w, varsigma, theta
    params: dict = field(default_factory=dict)    # generator-specific (mu, scale, costs)
    seed: int = 0
    budget: int = 2000

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def random_pamdp(rng, S, A, H, eta=1.0, cost_scale=0.5):
    """Dirichlet(1) transitions, r ~ U[0, 1], c ~ U[0, cost_scale]."""
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    r = rng.random((H, S, A))
    c = cost_scale * rng.random((H, S, A))
    P0 = rng.dirichlet(np.ones(S))
    return core.Pamdp(P, r, c, P0, eta)


def mixing_pamdp(rng, S, A, H, kappa, eta=1.0, targets=None, budget=2000, reward_gap=0.0):
    """Every transition entry >= kappa; action 0 is a free idle action.

    Costs are sorted ascending in the action index and rewards are sorted
    the same way, so costlier actions are the productive ones. With
    ``reward_gap`` g > 0 the idle action's reward lies in [0, (1 - g) / 2]
    and every other action's in [(1 + g) / 2, 1]. Strong
    inducibility and region-volume targets are local to (h, s), so each
    block is rejection-sampled on its own.
    """
    if kappa * S > 1 + 1e-12:
        raise InvalidInputError(f"kappa = {kappa} is infeasible with S = {S} (needs kappa <= 1/S)")
    targets = targets or {}
    P = np.zeros((H, S, A, S))
    c = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for _ in range(budget):
                block = kappa + (1 - S * kappa) * rng.dirichlet(np.ones(S), size=A)
                cost = np.sort(rng.uniform(0.05, 0.4, A))
                cost[0] = 0.0
                if _block_ok(block, cost, eta, targets, rng):
                    break
            else:
                raise GenerationFailed(f"block (h={h}, s={s}) missed {targets} within {budget} draws")
            P[h, s], c[h, s] = block, cost
    half = (1.0 - reward_gap) / 2
    r = np.sort(rng.uniform(1.0 - half, 1.0, (H, S, A)), axis=-1)
    r[..., 0] = rng.uniform(0.0, half, (H, S))
    P0 = np.full(S, 1.0 / S)
    return core.Pamdp(P, r, c, P0, eta)


def _block_ok(block, cost, eta, targets, rng):
    if "lambda_s" in targets:
        lam = min(bandit.inducibility(block, a)[0] for a in range(len(block)))
        if lam < targets["lambda_s"]:
            return False
    if "theta" in targets and certify.certify_theta(cost).value < targets["theta"]:
        return False
    if "varsigma" in targets:
        # coarse screen; the full certificate is recomputed on the whole instance
        frac = certify.region_fractions(block, cost, eta, 4000, rng)
        if frac.min() < targets["varsigma"] + 0.01:
            return False
    return True


def random_bandit(rng, A, S, eta=1.0):
    """Outcome matrix with deterministic outcome rewards iota."""
    P = rng.dirichlet(np.ones(S), size=A)
    iota = rng.random(S)
    c = np.sort(rng.uniform(0.0, 0.5, A))
    c[0] = 0.0
    return bandit.BanditInstance(P, iota, c, eta)


def planted_simplex(rng, A=3, d=3, costs=None, scale=4.0):
    """(P, costs) for a d-outcome instance whose best-response regions are all visible."""
    costs = np.linspace(0.0, 0.3 * (A - 1), A) if costs is None else np.asarray(costs, float)
    P = rng.dirichlet(np.ones(d), size=A)
    return P, costs, scale


def _certs_ok(certs):
    return all(c.ok for c in certs.values())


def generate_instance(spec: InstanceSpec):
    """Rejection-sample until every requested certifier passes.

    Returns (instance, certificates) with certificates a dict of Certificate.
    Raises GenerationFailed with the best attempt's certificates when the
    budget runs out.
    """
    if spec.generator not in GENERATORS:
        raise InvalidInputError(f"unknown generator {spec.generator!r}; choose from {GENERATORS}")
    rng = stream(spec.seed, "generate", spec.generator)
    t = dict(spec.targets)
    if spec.generator == "example1":
        mu = float(spec.params.get("mu", 0.9))
        inst = bandit.example1(mu, spec.eta)
        certs = {"lambda": certify.certify_lambda(inst, t.get("lambda"))}
        if not _certs_ok(certs):
            raise GenerationFailed("Example 1 misses the requested inducibility", {k: v.to_dict() for k, v in certs.items()})
        _attach(inst, certs)
        return inst, certs
    last = None
    for _ in range(spec.budget):
        if spec.generator == "random":
            inst = random_pamdp(rng, spec.S, spec.A, spec.H, spec.eta, spec.params.get("cost_scale", 0.5))
        elif spec.generator == "mixing":
            inst = mixing_pamdp(rng, spec.S, spec.A, spec.H, t.get("kappa", 0.2), spec.eta, t, spec.budget,
                                spec.params.get("reward_gap", 0.0))
        elif spec.generator == "bandit":
            inst = random_bandit(rng, spec.A, spec.S, spec.eta)
        else:
            P, costs, scale = planted_simplex(rng, spec.A, spec.S, spec.params.get("costs"),
                                              spec.params.get("scale", 4.0))
            inst = PlantedSimplex(P, costs, scale)
        certs = _certify_all(inst, t)
        last = certs
        if _certs_ok(certs):
            _attach(inst, certs)
            return inst, certs
    raise GenerationFailed(f"no {spec.generator} instance met {t} within {spec.budget} draws",
                           {k: v.to_dict() for k, v in (last or {}).items()})


@dataclass
class PlantedSimplex:
    """Outcome matrix P (A x d), costs and the contract scale for a simplex search."""
    P: np.ndarray
    c: np.ndarray
    scale: float
    certificates: dict = field(default_factory=dict)

    @property
    def eta(self):
        return self.scale

    @property
    def delta(self):
        return self.P[:, None, :] - self.P[None, :, :]


def _certify_all(inst, targets):
    certs = {}
    cheap_first = ["kappa", "theta", "lambda", "lambda_s", "kappa0", "varsigma", "lambda_w"]
    for name in cheap_first:
        if name not in targets:
            continue
        if isinstance(inst, PlantedSimplex):
            if name == "varsigma":
                cert = certify.certify_varsigma(inst.P, inst.c, inst.scale, targets[name], n=20_000)
            elif name == "theta":
                cert = certify.certify_theta(inst.c, targets[name])
            elif name == "lambda":
                cert = certify.certify_lambda(inst.P, targets[name])
            else:
                raise InvalidInputError(f"{name} does not apply to planted simplex instances")
        elif isinstance(inst, bandit.BanditInstance) and name in ("varsigma",):
            cert = certify.certify_varsigma(inst.P, inst.c, inst.eta, targets[name], n=20_000)
        else:
            cert = certify.certify_assumption(inst, name, targets[name])
        certs[name] = cert
        if not cert.ok:
            break
    return certs


def _attach(inst, certs):
    flat = {k: v.value for k, v in certs.items()}
    if isinstance(inst, core.Pamdp):
        inst.certificates = {**inst.certificates, **flat}
    else:
        inst.certificates = {**(inst.certificates or {}), **flat}
