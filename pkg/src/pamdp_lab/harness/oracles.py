"""Slow, independent reference routines used by ``verify``."""
from __future__ import annotations

import itertools

import numpy as np

from ..lpkit import LinearProgram


def vertex_enumeration(lp: LinearProgram, tol=1e-9):
    """Optimum of a bounded LP by trying every basis of active constraints.

    Every constraint row and finite bound is a candidate hyperplane; each
    n-subset with a nonsingular system gives a candidate vertex. Returns
    (value, x) or (None, None) when no feasible vertex exists. Assumes the
    feasible set is bounded (every variable has finite bounds).
    """
    n = lp.objective.size
    rows, rhs = [], []
    for a, b in zip(lp.A, lp.rhs):
        rows.append(a)
        rhs.append(b)
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(lp.lower[j]):
            rows.append(eye[j])
            rhs.append(lp.lower[j])
        if np.isfinite(lp.upper[j]):
            rows.append(eye[j])
            rhs.append(lp.upper[j])
    rows = np.array(rows)
    rhs = np.array(rhs)
    best, arg = None, None
    for idx in itertools.combinations(range(len(rows)), n):
        M = rows[list(idx)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs[list(idx)])
        if lp.max_violation(x) > tol * 10:
            continue
        v = float(lp.objective @ x)
        if best is None or v < best - 1e-12:
            best, arg = v, x
    return best, arg
