"""Pure-Python/numpy versions of the hot kernels.

Behaviour is identical to the compiled versions in ``_ckernels.pyx``: same pivot
rule, same tie-breaks, same stopping tests.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
TIE_PIV_FRAC = 1e-3


def pivot_loop(T, basis, n_enter, max_iter, tol, piv_tol, bland_after):
    """Run primal simplex pivots on the tableau ``T`` in place.

    ``T`` has one row per constraint plus a final reduced-cost row, and a final
    right-hand-side column. Only columns ``< n_enter`` may enter the basis.
    Returns ``(status, iterations)``.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    cost = T[m]
    degenerate_run = 0
    for it in range(max_iter):
        reduced = cost[:n_enter]
        if degenerate_run >= bland_after:
            cand = np.flatnonzero(reduced < -tol)
            if cand.size == 0:
                return OPTIMAL, it
            e = int(cand[0])
        else:
            e = int(np.argmin(reduced))
            if reduced[e] >= -tol:
                return OPTIMAL, it
        col = T[:m, e]
        rows = np.flatnonzero(col > piv_tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, rhs] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # among tied rows take the lowest basis index, skipping pivots far
        # smaller than the largest tied one (they wreck the tableau)
        ties = ties[col[ties] >= TIE_PIV_FRAC * col[ties].max()]
        r = int(ties[np.argmin(basis[ties])])

        if T[r, rhs] <= tol:
            degenerate_run += 1
        else:
            degenerate_run = 0

        T[r] /= T[r, e]
        prow = T[r]
        nzc = np.flatnonzero(prow)
        full_col = T[:, e]
        nzr = np.flatnonzero(full_col)
        nzr = nzr[nzr != r]
        if nzr.size:
            f = full_col[nzr].copy()
            T[np.ix_(nzr, nzc)] -= np.outer(f, prow[nzc])
            T[nzr, e] = 0.0
        basis[r] = e
    return ITERATION_LIMIT, max_iter


def dykstra(A, b, x0, sweeps, tol):
    """Euclidean projection of ``x0`` onto ``{x : A x <= b}`` by Dykstra's method.

    Returns ``(x, sweeps_used)``.
    """
    x = np.array(x0, dtype=float)
    k = A.shape[0]
    norms = np.einsum("ij,ij->i", A, A)
    incr = np.zeros_like(A)
    for sweep in range(sweeps):
        change = 0.0
        for i in range(k):
            if norms[i] == 0.0:
                continue
            a = A[i]
            y = x + incr[i]
            viol = a @ y - b[i]
            if viol > 0.0:
                new = y - (viol / norms[i]) * a
            else:
                new = y
            incr[i] = y - new
            change += float(np.sum((new - x) ** 2))
            x = new
        if change <= tol * tol:
            return x, sweep + 1
    return x, sweeps
