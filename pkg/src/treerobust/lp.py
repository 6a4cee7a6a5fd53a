"""Dense two-phase tableau simplex.

The pivoting itself runs in :func:`treerobust._kernels.pivot_loop` (compiled
when available). Pricing is Dantzig's rule with lowest-index tie-breaks; after
a run of degenerate pivots the kernel switches to Bland's rule until progress
resumes, so the method terminates and is deterministic.
"""

from dataclasses import dataclass
import logging

import numpy as np

from . import _kernels
from .errors import Infeasible, IterationLimit, NumericError, Unbounded

log = logging.getLogger(__name__)

TOL = 1e-9
PIV_TOL = 1e-9
BLAND_AFTER = 50
DENSE_LIMIT = 1_500_000


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray | None = None
    iterations: int = 0
    residual: float = 0.0
    basis: np.ndarray | None = None


def _unit_columns(A):
    """Map row -> index of a column equal to that row's unit vector (or -1)."""
    m, n = A.shape
    owner = np.full(m, -1, dtype=np.int64)
    nz_count = np.count_nonzero(A, axis=0)
    for j in np.flatnonzero(nz_count == 1):
        i = int(np.flatnonzero(A[:, j])[0])
        if A[i, j] == 1.0 and owner[i] < 0:
            owner[i] = j
    return owner


def simplex_standard(c, A, b, max_iter=None, method="auto", start=None):
    """Solve ``min c@x  s.t.  A@x == b, x >= 0``.

    Returns an :class:`LPResult` whose ``duals`` are the simplex multipliers of
    the equality rows. Raises :class:`Infeasible`, :class:`Unbounded` or
    :class:`IterationLimit`.

    ``method`` picks the dense tableau (``"tableau"``), the sparse revised
    simplex (``"revised"``), or the tableau below ``DENSE_LIMIT`` tableau
    entries and the revised method above (``"auto"``).

    ``start`` is an optional list of ``m`` column indices forming a feasible
    basis; the tableau method then skips phase 1. An unusable start (singular
    or infeasible) is ignored.
    """
    m, n = np.shape(A)
    if method == "revised" or (method == "auto" and m * (n + m) > DENSE_LIMIT):
        from .revised import revised_simplex
        return revised_simplex(c, A, b, max_iter=max_iter)
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    iters = 0
    warm = _warm_tableau(A, b, start) if start is not None else None
    if warm is not None:
        T, basis = warm
        ncol, art_rows, start_col = n, np.zeros(0, dtype=np.int64), None
    else:
        owner = _unit_columns(A)
        art_rows = np.flatnonzero(owner < 0)
        n_art = art_rows.size
        ncol = n + n_art
        T = np.zeros((m + 1, ncol + 1))
        T[:m, :n] = A
        T[art_rows, n + np.arange(n_art)] = 1.0
        T[:m, -1] = b
        basis = owner.copy()
        basis[art_rows] = n + np.arange(n_art)
        # column that started as the unit vector of each row, for dual recovery
        start_col = basis.copy()
        bscale = max(1.0, float(np.abs(b).max(initial=0.0)))

        if n_art:
            T[m, :] = -T[art_rows].sum(axis=0)
            T[m, n:ncol] = 0.0
            status, k = _kernels.pivot_loop(T, basis, ncol, max_iter, TOL, PIV_TOL, BLAND_AFTER)
            iters += k
            if status == _kernels.ITERATION_LIMIT:
                raise IterationLimit(f"phase 1 hit {max_iter} pivots")
            if -T[m, -1] > 1e-8 * bscale:
                raise Infeasible(f"phase 1 optimum {-T[m, -1]:.3e} > 0")
            # drive zero-level artificials out of the basis where possible
            for r in np.flatnonzero(basis >= n):
                row = T[r, :n]
                cand = np.flatnonzero(np.abs(row) > 1e-7)
                if cand.size == 0:
                    continue
                e = int(cand[0])
                T[r] /= T[r, e]
                for i in range(m + 1):
                    if i != r and T[i, e] != 0.0:
                        T[i] -= T[i, e] * T[r]
                basis[r] = e

    cost = np.zeros(ncol)
    cost[:n] = c
    cb = cost[basis]
    T[m, :ncol] = cost - cb @ T[:m, :ncol]
    T[m, -1] = -cb @ T[:m, -1]
    status, k = _kernels.pivot_loop(T, basis, n, max_iter, TOL, PIV_TOL, BLAND_AFTER)
    iters += k
    if status == _kernels.UNBOUNDED:
        raise Unbounded("objective unbounded below")
    if status == _kernels.ITERATION_LIMIT:
        raise IterationLimit(f"phase 2 hit {max_iter} pivots")

    x = np.zeros(ncol)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:n], 0.0)
    y = None if start_col is None else cost[start_col] - T[m, start_col]
    x, y = _refine(A, b, c, art_rows, basis, x, y)
    duals = y * sign
    residual = float(np.abs(A @ x - b).max(initial=0.0))
    log.debug("simplex %dx%d: %d pivots, residual %.2e", m, n, iters, residual)
    final = basis.copy() if np.all(basis < n) else None
    return LPResult(x=x, objective=float(c @ x), duals=duals, iterations=iters, residual=residual, basis=final)


def _warm_tableau(A, b, start):
    """Phase-2 tableau ``B^-1 [A | b]`` for the basis ``start``, or ``None``."""
    m, n = A.shape
    start = np.asarray(start, dtype=np.int64)
    if start.shape != (m,) or np.unique(start).size != m or start.min() < 0 or start.max() >= n:
        return None
    try:
        body = np.linalg.solve(A[:, start], np.column_stack([A, b]))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(body)) or body[:, -1].min() < -1e-9 * max(1.0, float(np.abs(b).max())):
        return None
    T = np.zeros((m + 1, n + 1))
    T[:m] = body
    T[:m, -1] = np.maximum(body[:, -1], 0.0)
    T[np.arange(m), start] = 1.0
    return T, start.copy()


def _basis_errors(A, b, c, x, y):
    """Primal residual and dual infeasibility of a candidate pair."""
    return max(float(np.abs(A @ x - b).max(initial=0.0)), float(np.max(A.T @ y - c, initial=0.0)))


def _refine(A, b, c, art_rows, basis, x, y):
    """Recompute the basic solution and multipliers from the original data.

    Long pivot sequences let rounding build up in the tableau; solving with the
    final basis matrix removes it. The tableau values are kept when the basis
    matrix is singular or the recomputed pair is no better.
    """
    m, n = A.shape
    cols = np.zeros((m, m))
    struct = basis < n
    cols[:, struct] = A[:, basis[struct]]
    cols[art_rows[basis[~struct] - n], np.flatnonzero(~struct)] = 1.0
    cb = np.where(struct, c[np.minimum(basis, n - 1)], 0.0)
    try:
        xb = np.linalg.solve(cols, b)
        yr = np.linalg.solve(cols.T, cb)
    except np.linalg.LinAlgError:
        if y is None:
            raise NumericError("final basis is singular")
        return x, y
    xr = np.zeros(n)
    xr[basis[struct]] = np.maximum(xb[struct], 0.0)
    if not (np.all(np.isfinite(xr)) and np.all(np.isfinite(yr))):
        if y is None:
            raise NumericError("final basis is singular")
        return x, y
    if y is None or _basis_errors(A, b, c, xr, yr) <= _basis_errors(A, b, c, x, y):
        return xr, yr
    return x, y


def maximize_free(c, A, b, max_iter=None, start=None):
    """Solve ``max c@x  s.t.  A@x <= b`` with ``x`` free, through the dual.

    The dual ``min b@y, A.T@y == c, y >= 0`` has one row per variable, which is
    far smaller than the primal tableau when constraints outnumber variables.
    Raises :class:`Unbounded` when the dual is infeasible (the caller is
    expected to know the primal is feasible) and :class:`Infeasible` when the
    dual is unbounded.

    ``start`` lists constraint rows whose dual columns form a feasible basis,
    typically the ``basis`` of an earlier solve before rows were appended.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        res = simplex_standard(b, A.T, c, max_iter=max_iter, start=start)
    except Infeasible as exc:
        raise Unbounded("primal unbounded (dual infeasible)") from exc
    except Unbounded as exc:
        raise Infeasible("primal infeasible (dual unbounded)") from exc
    x = res.duals
    viol = float(np.max(A @ x - b, initial=0.0))
    return LPResult(x=x, objective=float(c @ x), duals=res.x, iterations=res.iterations, residual=viol,
                    basis=res.basis)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None,
            maximize=False, max_iter=None):
    """General dense LP front-end.

    ``lb``/``ub`` default to ``0``/``+inf``; use ``-np.inf`` for free
    variables. Returns an :class:`LPResult` in the original variables.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    lb = np.zeros(n) if lb is None else np.broadcast_to(np.asarray(lb, dtype=float), (n,))
    ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, dtype=float), (n,))
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    sense = -1.0 if maximize else 1.0

    # x = shift + M @ z, z >= 0
    cols = []
    shift = np.zeros(n)
    extra_rows = []
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    M = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    ub_rows = A_ub @ M
    ub_rhs = b_ub - A_ub @ shift
    if extra_rows:
        box = np.zeros((len(extra_rows), nz))
        for r, (k, cap) in enumerate(extra_rows):
            box[r, k] = 1.0
        ub_rows = np.vstack([ub_rows, box])
        ub_rhs = np.concatenate([ub_rhs, [cap for _, cap in extra_rows]])
    n_slack = ub_rows.shape[0]
    top = np.hstack([ub_rows, np.eye(n_slack)])
    bottom = np.hstack([A_eq @ M, np.zeros((A_eq.shape[0], n_slack))])
    A_std = np.vstack([top, bottom])
    b_std = np.concatenate([ub_rhs, b_eq - A_eq @ shift])
    c_std = np.concatenate([sense * (c @ M), np.zeros(n_slack)])

    res = simplex_standard(c_std, A_std, b_std, max_iter=max_iter)
    x = shift + M @ res.x[:nz]
    return LPResult(x=x, objective=float(c @ x), iterations=res.iterations, residual=res.residual)
