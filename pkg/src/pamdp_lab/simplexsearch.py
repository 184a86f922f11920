"""Hyperplane search on the probability simplex.

An agent facing contract ``scale * w`` (w on the simplex over d outcomes)
answers argmax_i <scale * w, p_i> - c_i. With costs known, each boundary
between the regions of actions i and j is the hyperplane
<scale * w, p_i - p_j> = c_i - c_j, so points located on it pin down
delta_ij = p_i - p_j (together with <1, delta_ij> = 0).

The search samples random chords, bisects them for switching points, drops
a small randomly rotated regular simplex at each switching point and bisects
its disagreeing edges. All of this is written as a generator that yields
query points and receives responses, so a caller can feed it answers as they
arrive (the RL warm start only gets an answer when a trajectory visits the
right state).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.stats import special_ortho_group

from .errors import InvalidInputError

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


# ---------------------------------------------------------------- configuration

def upsilon(varsigma, d):
    return varsigma ** (2 * d + 1) / (2 * 3 ** d * d ** (d + 1) * (d * varsigma + 4))


def xi_sq(c_d, eps, d):
    return c_d ** 2 / d ** 2 - d * eps ** 2 / 8


def tau(c_d, eps, d, varsigma):
    return (varsigma ** 2 / (3 * d)) ** d - d ** 2 * (1 + 4 / (d * varsigma)) * (c_d + eps)


def default_constants(varsigma, d):
    """(c_d, eps) from the closed forms: c_d = Y / 2, eps = Y / d^(3/2)."""
    ups = upsilon(varsigma, d)
    return ups / 2, ups / d ** 1.5


def min_cost_gap(costs):
    c = np.sort(np.asarray(costs, dtype=float))
    return float(np.min(np.diff(c))) if c.size > 1 else np.inf


@dataclass
class SearchConfig:
    num_lines: int
    eps: float
    c_d: float
    costs: np.ndarray
    dim: int
    scale: float = 1.0
    varsigma: float | None = None

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float).ravel()
        if self.dim < 2:
            raise InvalidInputError("the outcome simplex needs at least two outcomes")
        if self.eps <= 0 or self.c_d <= 0 or self.scale <= 0:
            raise InvalidInputError("eps, c_d and scale must be positive")

    @property
    def n_actions(self):
        return self.costs.size

    @property
    def theta(self):
        return min_cost_gap(self.costs)

    @classmethod
    def from_defaults(cls, costs, dim, varsigma, num_lines, scale=1.0):
        c_d, eps = default_constants(varsigma, dim)
        return cls(num_lines, eps, c_d, costs, dim, scale, varsigma)

    def conditions(self):
        """Positivity conditions and cost gap; tau is None without varsigma."""
        d = self.dim
        out = {"xi_sq": xi_sq(self.c_d, self.eps, d), "theta": self.theta, "tau": None}
        if self.varsigma is not None:
            out["tau"] = tau(self.c_d, self.eps, d, self.varsigma)
        return out

    def validate(self):
        cond = self.conditions()
        if cond["xi_sq"] <= 0:
            raise InvalidInputError(f"xi_d^2 = {cond['xi_sq']:.3g} must be positive")
        if cond["tau"] is not None and cond["tau"] <= 0:
            raise InvalidInputError(f"tau_d = {cond['tau']:.3g} must be positive")
        if self.n_actions > 1 and not cond["theta"] > 0:
            raise InvalidInputError("costs must be pairwise distinct")
        return cond

    def query_budget(self):
        """Upper bound on oracle queries for the whole search."""
        N, d = self.n_actions, self.dim
        line = N * (math.ceil(math.log2(1.0 / self.eps)) + 2)
        edge = max(math.ceil(math.log2(math.sqrt(2) * self.c_d / self.eps)), 0) + 1
        probe = d + d * (d - 1) // 2 * edge
        return self.num_lines * (line + (N - 1) * probe)

    def lemma_error_bound(self):
        """2 (N - 1) sqrt(d) eps / (xi_d^(d-1) theta); inf when xi_d^2 <= 0."""
        d, N = self.dim, self.n_actions
        xs = xi_sq(self.c_d, self.eps, d)
        if xs <= 0 or N < 2:
            return np.inf if N >= 2 else 0.0
        return 2 * (N - 1) * math.sqrt(d) * self.eps / (math.sqrt(xs) ** (d - 1) * self.theta)


# ---------------------------------------------------------------- memory

@dataclass
class BoundaryMemory:
    points: list = field(default_factory=list)
    responses: list = field(default_factory=list)
    tags: list = field(default_factory=list)
    pairs: list = field(default_factory=list)     # (u, w, a_u, a_w, tag)
    probes: int = 0
    probes_two_actions: int = 0
    probes_skipped: int = 0

    def add_point(self, w, a, tag):
        self.points.append(np.asarray(w, dtype=float).copy())
        self.responses.append(int(a))
        self.tags.append(tag)

    def add_pair(self, u, w, a_u, a_w, tag):
        self.pairs.append((np.asarray(u).copy(), np.asarray(w).copy(), int(a_u), int(a_w), tag))

    def extend(self, other):
        self.points += other.points
        self.responses += other.responses
        self.tags += other.tags
        self.pairs += other.pairs
        self.probes += other.probes
        self.probes_two_actions += other.probes_two_actions
        self.probes_skipped += other.probes_skipped

    def to_dict(self):
        return {
            "points": [p.tolist() for p in self.points],
            "responses": list(self.responses),
            "tags": list(self.tags),
            "pairs": [{"u": u.tolist(), "w": w.tolist(), "a_u": au, "a_w": aw, "tag": t}
                      for u, w, au, aw, t in self.pairs],
            "probes": self.probes,
            "probes_two_actions": self.probes_two_actions,
            "probes_skipped": self.probes_skipped,
        }

    @classmethod
    def from_dict(cls, d):
        m = cls()
        m.points = [np.array(p) for p in d["points"]]
        m.responses = list(d["responses"])
        m.tags = list(d["tags"])
        m.pairs = [(np.array(p["u"]), np.array(p["w"]), p["a_u"], p["a_w"], p["tag"]) for p in d["pairs"]]
        m.probes = d.get("probes", 0)
        m.probes_two_actions = d.get("probes_two_actions", 0)
        m.probes_skipped = d.get("probes_skipped", 0)
        return m


# ---------------------------------------------------------------- geometry

def sample_simplex(rng, d):
    z = rng.exponential(size=d)
    return z / z.sum()


def chord(z1, z2):
    """Endpoints of the line through z1, z2 clipped to the simplex."""
    v = z2 - z1
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = np.max(np.where(v > 0, -z1 / v, -np.inf))
        t_hi = np.min(np.where(v < 0, -z1 / v, np.inf))
    ends = []
    for t in (t_lo, t_hi):
        p = np.maximum(z1 + t * v, 0.0)
        ends.append(p / p.sum())
    return ends[0], ends[1]


def sample_search_line(rng, d):
    """(z1, z2, (start, end)) with z1, z2 uniform on the simplex."""
    while True:
        z1, z2 = sample_simplex(rng, d), sample_simplex(rng, d)
        if np.abs(z1 - z2).max() > 1e-12:
            return z1, z2, chord(z1, z2)


def probe_vertices(mid, c_d, rng, retries=5):
    """Regular simplex with d vertices and edge sqrt(2) c_d around ``mid``.

    The canonical simplex {c_d (e_k - 1/d)} is rotated at random inside the
    sum-zero subspace and shifted to ``mid``. If a vertex leaves the outer
    simplex the edge is halved, up to ``retries`` times; returns None if it
    never fits.
    """
    d = mid.size
    B = _sum_zero_basis(d)
    Q = special_ortho_group.rvs(d - 1, random_state=rng) if d > 2 else np.eye(1) * rng.choice([-1.0, 1.0])
    R = B @ Q @ B.T
    base = np.eye(d) - 1.0 / d
    size = c_d
    for _ in range(retries + 1):
        V = mid[None, :] + size * (base @ R.T)
        if np.all(V >= -SIMPLEX_TOL):
            V = np.maximum(V, 0.0)
            return V / V.sum(axis=1, keepdims=True)
        size /= 2
    return None


def _sum_zero_basis(d):
    """Orthonormal basis (d, d-1) of {v : <1, v> = 0}."""
    M = np.eye(d)[:, :d - 1] - 1.0 / d
    q, _ = np.linalg.qr(np.column_stack([np.ones(d), M]))
    return q[:, 1:]


# ---------------------------------------------------------------- search processes

def _bisect(p, q, rp, rq, eps):
    """Generator: shrink [p, q] with responses rp != rq to infinity-length eps.

    Returns (u, w, ru, rw) where u keeps response rp.
    """
    while np.abs(p - q).max() > eps:
        m = 0.5 * (p + q)
        rm = yield m
        if rm == rp:
            p = m
        else:
            q, rq = m, rm
    return p, q, rp, rq


def _switch_points(p, q, rp, rq, eps):
    """Generator: all switching segments on [p, q] in order."""
    if rp == rq:
        return []
    if np.abs(p - q).max() <= eps:
        return [(p, q, rp, rq)]
    m = 0.5 * (p + q)
    rm = yield m
    left = yield from _switch_points(p, m, rp, rm, eps)
    right = yield from _switch_points(m, q, rm, rq, eps)
    return left + right


def line_process(start, end, eps):
    """Generator form of find_switch_segments."""
    rs = yield start
    re_ = yield end
    segs = yield from _switch_points(start, end, rs, re_, eps)
    return segs, (rs, re_)


def probe_process(mid, c_d, rng, eps, memory):
    """Generator form of probe_simplex; appends to ``memory``."""
    V = probe_vertices(mid, c_d, rng)
    if V is None:
        log.warning("probe simplex does not fit inside the outcome simplex; skipped")
        memory.probes_skipped += 1
        return
    memory.probes += 1
    resp = []
    for v in V:
        a = yield v
        memory.add_point(v, a, "probe-vertex")
        resp.append(a)
    if len(set(resp)) == 2:
        memory.probes_two_actions += 1
    d = V.shape[0]
    for i in range(d):
        for j in range(i + 1, d):
            if resp[i] == resp[j]:
                continue
            u, w, ru, rw = yield from _bisect(V[i], V[j], resp[i], resp[j], eps)
            memory.add_pair(u, w, ru, rw, "probe-edge")


def search_process(config: SearchConfig, rng):
    """Generator for the full search; returns the BoundaryMemory."""
    memory = BoundaryMemory()
    for _ in range(config.num_lines):
        _, _, (start, end) = sample_search_line(rng, config.dim)
        segs, (rs, re_) = yield from line_process(start, end, config.eps)
        memory.add_point(start, rs, "line-end")
        memory.add_point(end, re_, "line-end")
        for x, y, rx, ry in segs:
            memory.add_point(x, rx, "line-switch")
            memory.add_point(y, ry, "line-switch")
            memory.add_pair(x, y, rx, ry, "line-switch")
        for x, y, _, _ in segs:
            yield from probe_process(0.5 * (x + y), config.c_d, rng, config.eps, memory)
    return memory


class CountingOracle:
    """Wraps a response oracle and counts calls."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.calls = 0

    def __call__(self, w):
        self.calls += 1
        return self.oracle(w)


def drive(gen, oracle):
    """Run a query generator against a synchronous oracle; return its result."""
    try:
        q = next(gen)
        while True:
            q = gen.send(oracle(q))
    except StopIteration as stop:
        return stop.value


def find_switch_segments(line, oracle, eps):
    """Segments (x, y, a_x, a_y) straddling each response change along ``line``."""
    start, end = (np.asarray(p, dtype=float) for p in line)
    segs, _ = drive(line_process(start, end, eps), oracle)
    return segs


def probe_simplex(midpoint, c_d, rng, oracle, eps, memory=None):
    memory = BoundaryMemory() if memory is None else memory
    drive(probe_process(np.asarray(midpoint, dtype=float), c_d, rng, eps, memory), oracle)
    return memory


# ---------------------------------------------------------------- recovery

@dataclass
class DiffEstimate:
    delta: np.ndarray          # (N, N, d), NaN where unknown
    resolved: np.ndarray       # (N, N) fitted directly
    known: np.ndarray          # (N, N) fitted or path-filled
    hops: np.ndarray           # (N, N)
    components: np.ndarray     # (N,)
    certificates: dict = field(default_factory=dict)
    memory: BoundaryMemory | None = None
    queries: int = 0

    def to_dict(self):
        return {
            "delta": np.where(np.isnan(self.delta), None, self.delta).tolist(),
            "resolved": self.resolved.tolist(),
            "known": self.known.tolist(),
            "hops": self.hops.tolist(),
            "components": self.components.tolist(),
            "certificates": self.certificates,
            "queries": self.queries,
        }

    @classmethod
    def from_dict(cls, d):
        delta = np.array([[[np.nan if v is None else v for v in row] for row in block]
                          for block in d["delta"]], dtype=float)
        return cls(delta, np.array(d["resolved"], dtype=bool), np.array(d["known"], dtype=bool),
                   np.array(d["hops"]), np.array(d["components"]), d.get("certificates", {}),
                   None, d.get("queries", 0))


def _fit_pair(mids, dc, scale, d, rank_tol=1e-7):
    """Least squares for <scale m_k, delta> = dc with <1, delta> = 0."""
    B = _sum_zero_basis(d)
    M = scale * mids @ B
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * max(sv[0], 1e-300))) if sv.size else 0
    if rank < d - 1:
        return None, rank
    y, *_ = np.linalg.lstsq(M, np.full(mids.shape[0], dc), rcond=None)
    return B @ y, rank


def recover_diffs(memory: BoundaryMemory, costs, eps, scale=1.0, dim=None) -> DiffEstimate:
    costs = np.asarray(costs, dtype=float)
    N = costs.size
    if dim is None:
        if memory.points:
            dim = memory.points[0].size
        elif memory.pairs:
            dim = memory.pairs[0][0].size
        else:
            raise InvalidInputError("memory is empty and no dimension given")
    d = dim
    delta = np.full((N, N, d), np.nan)
    for i in range(N):
        delta[i, i] = 0.0
    resolved = np.zeros((N, N), dtype=bool)
    certs = {}
    groups = {}
    for u, w, au, aw, _ in memory.pairs:
        if au == aw:
            continue
        i, j = (au, aw) if au < aw else (aw, au)
        inside_i, inside_j = (u, w) if au == i else (w, u)
        groups.setdefault((i, j), []).append((inside_i, inside_j))
    for (i, j), pts in sorted(groups.items()):
        U = np.array([p for p, _ in pts])
        W = np.array([q for _, q in pts])
        mids = 0.5 * (U + W)
        dc = costs[i] - costs[j]
        est, rank = _fit_pair(mids, dc, scale, d)
        key = f"{i}-{j}"
        if est is None:
            certs[key] = {"status": "unresolved", "rank": rank, "points": len(pts)}
            continue
        slack = scale * eps * np.abs(est).sum()
        viol_u = np.maximum(dc - scale * U @ est, 0.0)
        viol_w = np.maximum(scale * W @ est - dc, 0.0)
        resid = scale * mids @ est - dc
        certs[key] = {
            "status": "fitted",
            "points": len(pts),
            "rank": rank,
            "rms_residual": float(np.sqrt(np.mean(resid ** 2))),
            "max_violation": float(max(viol_u.max(), viol_w.max())),
            "violations_beyond_slack": int(np.sum(viol_u > slack) + np.sum(viol_w > slack)),
        }
        delta[i, j] = est
        delta[j, i] = -est
        resolved[i, j] = resolved[j, i] = True
    ncomp, labels = connected_components(resolved.astype(float), directed=False)
    known = resolved.copy()
    np.fill_diagonal(known, True)
    hops = np.where(resolved, 1, 0)
    if N > 1:
        _, pred = shortest_path(resolved.astype(float), directed=False, unweighted=True,
                                return_predecessors=True)
        for i in range(N):
            for j in range(N):
                if i == j or resolved[i, j] or labels[i] != labels[j]:
                    continue
                path = [j]
                while path[-1] != i:
                    path.append(pred[i, path[-1]])
                path = path[::-1]
                delta[i, j] = sum(delta[a, b] for a, b in zip(path[:-1], path[1:]))
                known[i, j] = True
                hops[i, j] = len(path) - 1
    return DiffEstimate(delta, resolved, known, hops, labels, certs, memory)


def run_simplex_search(config: SearchConfig, oracle, rng) -> DiffEstimate:
    """Full search against ``oracle(w) -> action`` for w on the simplex."""
    counter = CountingOracle(oracle)
    memory = drive(search_process(config, rng), counter)
    est = recover_diffs(memory, config.costs, config.eps, config.scale, config.dim)
    est.queries = counter.calls
    est.certificates["lemma_error_bound"] = config.lemma_error_bound()
    est.certificates["query_budget"] = config.query_budget()
    return est


def linear_oracle(P, costs, scale=1.0):
    """Response oracle for an agent with outcome distributions P (N, d)."""
    P = np.asarray(P, dtype=float)
    costs = np.asarray(costs, dtype=float)

    def oracle(w):
        util = scale * (P @ w) - costs
        return int(np.argmax(util))
    return oracle
