"""Revised two-phase simplex for small equality-form linear programs.

Solves   minimize c @ x   subject to   A @ x = b,  x >= 0.

Moment-matching constraint matrices are heavily degenerate (most
right-hand sides are zero), which forces thousands of degenerate pivots.
A classical full-tableau update drifts badly over that many eliminations
-- enough here to report bounded problems as unbounded -- so this keeps
only the basis index set and re-solves against the original data at
every pivot: the working quantities are always accurate to one dense
solve, no matter how long the path.  Entering column is Dantzig's (most
negative reduced cost, basic columns masked out), and minimum-ratio ties
leave by the largest pivot element, which keeps the basis conditioning
in check through long degenerate stretches; the iteration budget is the
backstop against the (never observed) possibility of cycling.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalFailure

__all__ = ["simplex_solve"]

_RCOST_TOL = 1e-9  # reduced cost below -tol counts as improving
_PIVOT_TOL = 1e-10  # direction entries above tol are ratio-test eligible


def _run(c, A, b, basis, npriced, maxiter):
    """Dantzig-rule pivoting from a feasible basis until optimal.

    Only the first ``npriced`` columns may enter (phase one excludes the
    artificial columns, which start basic and must never come back).
    Returns the basic solution; mutates ``basis`` in place.
    """
    m = A.shape[0]
    for _ in range(maxiter):
        B = A[:, basis]
        try:
            xB = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            raise NumericalFailure(
                "simplex basis matrix is singular",
                diagnostics={"basis": list(basis)},
            )
        reduced = c[:npriced] - y @ A[:, :npriced]
        # a basic column's true reduced cost is zero; masking it out keeps
        # an ill-conditioned basis from re-admitting (and duplicating) it
        reduced[[j for j in basis if j < npriced]] = 0.0
        col = int(reduced.argmin())
        if reduced[col] >= -_RCOST_TOL:
            return xB
        d = np.linalg.solve(B, A[:, col])
        eligible = d > _PIVOT_TOL
        if not eligible.any():
            raise NumericalFailure(
                "linear program is unbounded",
                diagnostics={"column": col, "reduced_cost": float(reduced[col])},
            )
        ratios = np.full(m, np.inf)
        ratios[eligible] = np.maximum(xB[eligible], 0.0) / d[eligible]
        best = ratios.min()
        tied = ratios <= best + 1e-9 * (1.0 + best)
        row = int(np.where(tied, d, -np.inf).argmax())
        basis[row] = col
    raise NumericalFailure(
        "simplex exceeded its iteration budget",
        diagnostics={"maxiter": maxiter, "columns": int(npriced)},
    )


def simplex_solve(c, A, b, maxiter=None):
    """Minimize c @ x over {A x = b, x >= 0}; returns (x, value).

    Raises NumericalFailure for infeasible or unbounded problems.
    """
    A = np.array(A, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    c = np.asarray(c, dtype=float)
    if A.ndim != 2 or A.shape != (b.size, c.size):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
    m, n = A.shape
    if maxiter is None:
        maxiter = 200 * (m + n)

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase one: minimize the total artificial mass over [A | I]
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    xB = _run(c1, A1, b, basis, n, maxiter)
    if c1[basis] @ xB > 1e-7 * max(1.0, abs(b).max()):
        raise NumericalFailure(
            "linear program is infeasible",
            diagnostics={"phase1_objective": float(c1[basis] @ xB)},
        )

    # drive zero-level artificials out of the basis; an artificial whose
    # tableau row has no real entry marks a redundant constraint row.
    drop = []
    for k in range(m):
        if basis[k] < n:
            continue
        B = A1[:, basis]
        w = np.linalg.solve(B.T, np.eye(m)[k])
        vals = np.abs(w @ A)
        vals[[j for j in basis if j < n]] = 0.0
        col = int(vals.argmax())
        if vals[col] > _PIVOT_TOL:
            basis[k] = col
        else:
            drop.append(k)
    if drop:
        keeprow = np.ones(m, dtype=bool)
        keeprow[[basis[k] - n for k in drop]] = False
        A = A[keeprow]
        b = b[keeprow]
        basis = [basis[i] for i in range(m) if i not in drop]
        m = A.shape[0]

    xB = _run(c, A, b, basis, n, maxiter)
    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    return x, float(c @ x)
