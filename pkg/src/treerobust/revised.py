"""Sparse revised simplex for LPs too large for a dense tableau.

Same problem, pricing rule and tie-breaks as the tableau method in
:mod:`treerobust.lp`; the basis is held as a sparse LU factorisation with
product-form eta updates and is refactorised every ``REFACTOR`` pivots.
"""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import Infeasible, IterationLimit, NumericError, Unbounded

log = logging.getLogger(__name__)

TOL = 1e-9
PIV_TOL = 1e-7  # relative to the largest entry of the entering column
BLAND_AFTER = 50
REFACTOR = 64


class _Basis:
    """LU of the basis matrix plus a list of eta updates."""

    def __init__(self, A, basis):
        self.A = A
        self.m = A.shape[0]
        self.refactor(basis)

    def refactor(self, basis):
        B = self.A[:, basis].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericError("singular basis in revised simplex") from exc
        self.etas = []

    def ftran(self, a):
        y = self.lu.solve(a)
        for r, alpha in self.etas:
            yr = y[r] / alpha[r]
            y -= alpha * yr
            y[r] = yr
        return y

    def btran(self, c):
        z = np.array(c, dtype=float)
        for r, alpha in reversed(self.etas):
            z[r] = (z[r] - alpha @ z + alpha[r] * z[r]) / alpha[r]
        return self.lu.solve(z, trans="T")

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))


def _run(A, b, cost, basis, allowed, art_mask, max_iter, iters):
    """Primal simplex from a feasible ``basis``; returns ``(status, iters, x_B, fact)``."""
    m, ncol = A.shape
    AT = A.T.tocsr()
    fact = _Basis(A, basis)
    xB = fact.ftran(b)
    degenerate = 0
    in_basis = np.zeros(ncol, dtype=bool)
    in_basis[basis] = True
    while True:
        if len(fact.etas) >= REFACTOR:
            fact.refactor(basis)
            xB = np.maximum(fact.ftran(b), 0.0)
        pi = fact.btran(cost[basis])
        d = cost - AT @ pi
        d[in_basis | ~allowed] = 0.0
        if degenerate >= BLAND_AFTER:
            cand = np.flatnonzero(d < -TOL)
            if cand.size == 0:
                return 0, iters, xB, fact
            e = int(cand[0])
        else:
            e = int(np.argmin(d))
            if d[e] >= -TOL:
                return 0, iters, xB, fact
        if iters >= max_iter:
            return 2, iters, xB, fact
        alpha = fact.ftran(A[:, [e]].toarray().ravel())
        piv_tol = PIV_TOL * max(1.0, float(np.abs(alpha).max()))
        pos = alpha > piv_tol
        # basic artificials sit at zero and must stay there in phase 2
        pinned = art_mask[basis] & (np.abs(alpha) > piv_tol)
        elig = pos | pinned
        if not elig.any():
            return 1, iters, xB, fact
        ratio = np.full(m, np.inf)
        ratio[pos] = xB[pos] / alpha[pos]
        ratio[pinned] = 0.0
        best = ratio.min()
        ties = np.flatnonzero(ratio <= best + TOL * max(1.0, abs(best)))
        r = int(ties[np.argmin(basis[ties])])
        step = max(ratio[r], 0.0)
        xB = xB - step * alpha
        xB[r] = step
        xB = np.maximum(xB, 0.0)
        in_basis[basis[r]] = False
        in_basis[e] = True
        basis[r] = e
        fact.update(r, alpha)
        degenerate = degenerate + 1 if step <= TOL else 0
        iters += 1


def revised_simplex(c, A, b, max_iter=None):
    """Solve ``min c@x  s.t.  A@x == b, x >= 0`` with sparse linear algebra.

    Returns the same :class:`~treerobust.lp.LPResult` as the dense method.
    """
    from .lp import LPResult

    c = np.asarray(c, dtype=float)
    A = sparse.csc_matrix(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = (sparse.diags(sign) @ A).tocsc()
    b = b * sign
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    # slack-like unit columns start in the basis, artificials cover the rest
    owner = np.full(m, -1, dtype=np.int64)
    nnz = np.diff(A.indptr)
    for j in np.flatnonzero(nnz == 1):
        i = A.indices[A.indptr[j]]
        if A.data[A.indptr[j]] == 1.0 and owner[i] < 0:
            owner[i] = j
    art_rows = np.flatnonzero(owner < 0)
    n_art = art_rows.size
    ncol = n + n_art
    art = sparse.csc_matrix((np.ones(n_art), (art_rows, np.arange(n_art))), shape=(m, n_art))
    Aa = sparse.hstack([A, art], format="csc")
    basis = owner.copy()
    basis[art_rows] = n + np.arange(n_art)
    art_mask = np.zeros(ncol, dtype=bool)
    art_mask[n:] = True
    iters = 0
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))

    if n_art:
        cost1 = np.where(art_mask, 1.0, 0.0)
        status, iters, xB, _ = _run(Aa, b, cost1, basis, np.ones(ncol, dtype=bool),
                                    np.zeros(ncol, dtype=bool), max_iter, iters)
        if status == 2:
            raise IterationLimit(f"phase 1 hit {max_iter} pivots")
        if float(xB[art_mask[basis]].sum()) > 1e-8 * bscale:
            raise Infeasible(f"phase 1 optimum {xB[art_mask[basis]].sum():.3e} > 0")

    cost = np.zeros(ncol)
    cost[:n] = c
    status, iters, xB, fact = _run(Aa, b, cost, basis, ~art_mask, art_mask, max_iter, iters)
    if status == 1:
        raise Unbounded("objective unbounded below")
    if status == 2:
        raise IterationLimit(f"phase 2 hit {max_iter} pivots")

    fact.refactor(basis)
    xB = fact.ftran(b)
    if xB.min(initial=0.0) < -1e-7 * bscale:
        raise NumericError(f"final basis infeasible by {-xB.min():.3e}")
    x = np.zeros(ncol)
    x[basis] = xB
    x = np.maximum(x[:n], 0.0)
    pi = fact.btran(cost[basis])
    # same convention as the tableau: multipliers of the starting unit columns
    duals = pi * sign
    residual = float(np.abs(A @ x - b).max(initial=0.0))
    log.debug("revised simplex %dx%d: %d pivots, residual %.2e", m, n, iters, residual)
    return LPResult(x=x, objective=float(c @ x), duals=duals, iterations=iters, residual=residual)
