"""Small dense linear programs: min c.x subject to row constraints and box bounds.

The solver is a two-phase, bounded-variable primal simplex on a dense
tableau. Nonbasic variables sit at either their lower or upper bound, so box
constraints never become rows. Dantzig pricing is used until a run of
degenerate pivots is seen, after which Bland's rule takes over for the rest of
the solve, which guarantees termination.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidInputError, NumericalFailure

FEAS_TOL = 1e-8
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 20
ACCEPT_TOL = 1e-6

GE, LE, EQ = ">=", "<=", "=="
_SENSES = {GE: GE, LE: LE, EQ: EQ, "=": EQ, ">": GE, "<": LE}

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

DEGENERATE_SWITCH = 25


@dataclass
class LinearProgram:
    """min objective.x  s.t.  A[i].x (sense[i]) rhs[i],  lower <= x <= upper."""

    objective: np.ndarray
    A: np.ndarray
    sense: list
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.sense = [_SENSES.get(s, s) for s in self.sense]
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        m = self.A.shape[0]
        if self.rhs.size != m or len(self.sense) != m:
            raise InvalidInputError("constraint rows, senses and rhs disagree in length")
        if any(s not in (GE, LE, EQ) for s in self.sense):
            raise InvalidInputError(f"unknown constraint sense in {self.sense}")
        if np.any(self.lower > self.upper):
            raise InvalidInputError("lower bound exceeds upper bound")
        if np.any(np.isnan(self.A)) or np.any(np.isnan(self.rhs)) or np.any(np.isnan(self.objective)):
            raise InvalidInputError("NaN in LP data")

    @classmethod
    def build(cls, objective, constraints=(), lower=0.0, upper=np.inf):
        """Build from a list of ``(row, sense, rhs)`` triples."""
        objective = np.asarray(objective, dtype=float).ravel()
        rows, senses, rhs = [], [], []
        for row, sense, b in constraints:
            row = np.asarray(row, dtype=float).ravel()
            if row.size != objective.size:
                raise InvalidInputError(
                    f"constraint row has {row.size} entries, expected {objective.size}")
            rows.append(row)
            senses.append(sense)
            rhs.append(float(b))
        A = np.array(rows).reshape(len(rows), objective.size)
        return cls(objective, A, senses, np.array(rhs), lower, upper)

    @property
    def num_vars(self):
        return self.objective.size

    @property
    def constraints(self):
        return [(self.A[i], self.sense[i], self.rhs[i]) for i in range(self.A.shape[0])]

    def max_violation(self, x):
        """Largest constraint or bound violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        lhs = self.A @ x
        viol = [0.0]
        for i, s in enumerate(self.sense):
            if s == GE:
                viol.append(self.rhs[i] - lhs[i])
            elif s == LE:
                viol.append(lhs[i] - self.rhs[i])
            else:
                viol.append(abs(lhs[i] - self.rhs[i]))
        viol.append(np.max(self.lower - x, initial=0.0))
        viol.append(np.max(x - self.upper, initial=0.0))
        return float(max(viol))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective_value: float = np.nan
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _standardize(lp):
    """Map x = shift + M y with y in [0, uy], then add slacks.

    Returns the equality system (Af, b) over columns [y, slack], their upper
    bounds, the cost vector and the back-transformation.
    """
    n = lp.num_vars
    cols, shift, uy = [], np.zeros(n), []
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        e = np.zeros(n)
        if np.isfinite(lo):
            e[j] = 1.0
            shift[j] = lo
            cols.append(e)
            uy.append(up - lo)
        elif np.isfinite(up):
            e[j] = -1.0
            shift[j] = up
            cols.append(e)
            uy.append(np.inf)
        else:
            e[j] = 1.0
            cols.append(e)
            uy.append(np.inf)
            cols.append(-e)
            uy.append(np.inf)
    M = np.array(cols).T.reshape(n, len(cols))
    Ay = lp.A @ M
    b = lp.rhs - lp.A @ shift
    m = Ay.shape[0]
    slack_cols = []
    for i, s in enumerate(lp.sense):
        if s == EQ:
            continue
        col = np.zeros(m)
        col[i] = 1.0 if s == LE else -1.0
        slack_cols.append(col)
    S = np.array(slack_cols).T.reshape(m, len(slack_cols))
    Af = np.hstack([Ay, S])
    cost = np.concatenate([M.T @ lp.objective, np.zeros(S.shape[1])])
    upper = np.concatenate([np.array(uy, dtype=float), np.full(S.shape[1], np.inf)])
    return Af, b, upper, cost, M, shift


@njit(cache=True)
def _refresh(T, A, b, up, basis, is_basic, at_upper, xB, nf):
    m, N = A.shape
    rhs = b.copy()
    for j in range(N):
        if at_upper[j] and not is_basic[j]:
            for i in range(m):
                rhs[i] -= A[i, j] * up[j]
    for i in range(m):
        v = 0.0
        for k in range(m):
            v += T[i, nf + k] * rhs[k]
        if abs(v) < 1e-13:
            v = 0.0
        xB[i] = v


@njit(cache=True)
def _refactor(T, A, basis):
    """Rebuild the tableau B^-1 A from the basis to shed accumulated round-off."""
    B = np.empty((A.shape[0], A.shape[0]))
    for i in range(A.shape[0]):
        B[:, i] = A[:, basis[i]]
    T[:, :] = np.linalg.solve(B, A)


@njit(cache=True)
def _pivot(T, basis, is_basic, at_upper, r, j):
    m, N = T.shape
    p = T[r, j]
    for k in range(N):
        T[r, k] /= p
    for i in range(m):
        if i != r:
            f = T[i, j]
            if f != 0.0:
                for k in range(N):
                    T[i, k] -= f * T[r, k]
    leaving = basis[r]
    is_basic[leaving] = False
    is_basic[j] = True
    basis[r] = j
    at_upper[j] = False
    return leaving


@njit(cache=True)
def _run(T, A, b, up, basis, is_basic, at_upper, enterable, xB, cost, nf, iters, max_iter):
    """Bounded-variable primal simplex from the current basis.

    Status codes: 0 optimal, 2 unbounded, 3 iteration cap.
    """
    m, N = T.shape
    bland = False
    degenerate = 0
    d = np.empty(N)
    ratios = np.empty(m)
    while True:
        if iters >= max_iter:
            return 3, iters
        for k in range(N):
            v = cost[k]
            for i in range(m):
                v -= cost[basis[i]] * T[i, k]
            d[k] = v
        j = -1
        best = 0.0
        for k in range(N):
            if is_basic[k] or not enterable[k]:
                continue
            if (not at_upper[k] and d[k] < -OPT_TOL) or (at_upper[k] and d[k] > OPT_TOL):
                if bland:
                    j = k
                    break
                if abs(d[k]) > best:
                    best = abs(d[k])
                    j = k
        if j < 0:
            return 0, iters
        sgn = -1.0 if at_upper[j] else 1.0
        t_row = np.inf
        for i in range(m):
            a = sgn * T[i, j]
            ratios[i] = np.inf
            if a > PIVOT_TOL:
                ratios[i] = max(xB[i], 0.0) / a
            elif a < -PIVOT_TOL:
                ub = up[basis[i]]
                if ub < np.inf:
                    ratios[i] = max(ub - xB[i], 0.0) / -a
            if ratios[i] < t_row:
                t_row = ratios[i]
        t_flip = up[j]
        iters += 1
        if t_row == np.inf and t_flip == np.inf:
            return 2, iters
        if t_flip <= t_row:
            at_upper[j] = not at_upper[j]
            _refresh(T, A, b, up, basis, is_basic, at_upper, xB, nf)
            degenerate = 0
            continue
        # ties go to the smallest basis index under Bland's rule, otherwise
        # to the largest pivot element for stability
        r = -1
        for i in range(m):
            if ratios[i] <= t_row + 1e-12:
                if r < 0:
                    r = i
                elif bland:
                    if basis[i] < basis[r]:
                        r = i
                elif abs(T[i, j]) > abs(T[r, j]):
                    r = i
        to_upper = sgn * T[r, j] < 0
        leaving = _pivot(T, basis, is_basic, at_upper, r, j)
        at_upper[leaving] = to_upper
        if iters % REFACTOR_EVERY == 0:
            _refactor(T, A, basis)
        _refresh(T, A, b, up, basis, is_basic, at_upper, xB, nf)
        if t_row <= 1e-12:
            degenerate += 1
            if degenerate >= DEGENERATE_SWITCH:
                bland = True
        else:
            degenerate = 0


@njit(cache=True)
def _simplex_core(Af, b_in, upper, cost, max_iter):
    """Two-phase solve of  min cost.y  s.t.  Af y = b,  0 <= y <= upper.

    Returns (status, y, iterations) with status 0 optimal, 1 infeasible,
    2 unbounded, 3 cap in phase 1, 4 cap in phase 2.
    """
    m, nf = Af.shape
    N = nf + m
    A = np.zeros((m, N))
    b = b_in.copy()
    for i in range(m):
        s = 1.0
        if b[i] < 0:
            s = -1.0
            b[i] = -b[i]
        for j in range(nf):
            A[i, j] = s * Af[i, j]
        A[i, nf + i] = 1.0
    T = A.copy()
    up = np.empty(N)
    up[:nf] = upper
    up[nf:] = np.inf
    basis = np.arange(nf, N)
    is_basic = np.zeros(N, dtype=np.bool_)
    is_basic[nf:] = True
    at_upper = np.zeros(N, dtype=np.bool_)
    enterable = np.ones(N, dtype=np.bool_)
    xB = b.copy()
    iters = 0
    y = np.zeros(nf)
    if m > 0:
        c1 = np.zeros(N)
        c1[nf:] = 1.0
        st, iters = _run(T, A, b, up, basis, is_basic, at_upper, enterable, xB, c1, nf, 0, max_iter)
        if st == 3:
            return 3, y, iters
        infeas = 0.0
        bmax = 0.0
        for i in range(m):
            if basis[i] >= nf:
                infeas += xB[i]
            bmax = max(bmax, b[i])
        if infeas > FEAS_TOL * (1.0 + bmax):
            return 1, y, iters
        for r in range(m):
            if basis[r] < nf:
                continue
            j = -1
            best = 1e-9
            for k in range(nf):
                if not is_basic[k] and abs(T[r, k]) > best:
                    best = abs(T[r, k])
                    j = k
            if j >= 0:
                _pivot(T, basis, is_basic, at_upper, r, j)
                _refresh(T, A, b, up, basis, is_basic, at_upper, xB, nf)
        for k in range(nf, N):
            up[k] = 0.0
            enterable[k] = False
    c2 = np.zeros(N)
    c2[:nf] = cost
    st, iters = _run(T, A, b, up, basis, is_basic, at_upper, enterable, xB, c2, nf, iters, max_iter)
    for k in range(nf):
        if at_upper[k]:
            y[k] = up[k]
    for i in range(m):
        if basis[i] < nf:
            y[basis[i]] = xB[i]
    if st == 3:
        return 4, y, iters
    return st, y, iters


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp``; status is one of optimal, infeasible, unbounded.

    Raises NumericalFailure if the iteration cap is hit.
    """
    if not isinstance(lp, LinearProgram):
        raise InvalidInputError("solve_lp expects a LinearProgram")
    Af, b, upper, cost, M, shift = _standardize(lp)
    if max_iter is None:
        max_iter = 50 * (Af.shape[0] + Af.shape[1]) + 100
    st, y, iters = _simplex_core(Af, b, upper, cost, max_iter)
    if st == 1:
        return LpSolution(INFEASIBLE, iterations=iters)
    if st == 2:
        return LpSolution(UNBOUNDED, iterations=iters)
    if st == 3:
        raise NumericalFailure("simplex iteration cap hit in phase 1")
    x = np.clip(shift + M @ y[:M.shape[1]], lp.lower, lp.upper)
    if st == 4:
        raise NumericalFailure("simplex iteration cap hit in phase 2", best_point=x)
    viol = lp.max_violation(x)
    if viol > ACCEPT_TOL * (1.0 + np.abs(lp.rhs).max(initial=0.0)):
        raise NumericalFailure(f"simplex returned a point violating constraints by {viol:.3g}", best_point=x)
    return LpSolution(OPTIMAL, x, float(lp.objective @ x), iters)


@njit(cache=True)
def _box_ge_core(c, G, h, upper, max_iter):
    m, n = G.shape
    Af = np.zeros((m, n + m))
    Af[:, :n] = G
    for i in range(m):
        Af[i, n + i] = -1.0
    ub = np.full(n + m, np.inf)
    ub[:n] = upper
    cost = np.zeros(n + m)
    cost[:n] = c
    st, y, iters = _simplex_core(Af, h, ub, cost, max_iter)
    x = np.minimum(np.maximum(y[:n], 0.0), upper)
    return st, x, iters


def solve_box_ge(c, G, h, upper, max_iter=None):
    """Fast path for  min c.x  s.t.  G x >= h,  0 <= x <= upper.

    This is the shape of every incentive-compatibility LP in the package, so
    it skips the general standardization. Returns an LpSolution.
    """
    c = np.ascontiguousarray(c, dtype=float)
    n = c.size
    G = np.ascontiguousarray(G, dtype=float).reshape(-1, n)
    h = np.ascontiguousarray(h, dtype=float).reshape(-1)
    upper = np.ascontiguousarray(np.broadcast_to(np.asarray(upper, dtype=float), (n,)))
    if max_iter is None:
        max_iter = 50 * (2 * G.shape[0] + n) + 100
    st, x, iters = _box_ge_core(c, G, h, upper, max_iter)
    if st == 1:
        return LpSolution(INFEASIBLE, iterations=iters)
    if st == 2:
        return LpSolution(UNBOUNDED, iterations=iters)
    if st == 3:
        raise NumericalFailure("simplex iteration cap hit in phase 1")
    if st == 4:
        raise NumericalFailure("simplex iteration cap hit in phase 2", best_point=x)
    viol = float(np.max(h - G @ x, initial=0.0))
    if viol > ACCEPT_TOL * (1.0 + np.abs(h).max(initial=0.0)):
        raise NumericalFailure(f"simplex returned a point violating constraints by {viol:.3g}", best_point=x)
    return LpSolution(OPTIMAL, x, float(c @ x), iters)
