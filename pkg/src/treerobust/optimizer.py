"""Worst-case expected utility over a model family, and its maximisation.

The objective ``phi -> min_S E[U(W_T^S(w0, phi))]`` is concave in the
strategy. For piecewise-linear ``U`` it is maximised exactly by the epigraph
LP::

    max tau
    s.t. tau <= sum_w P(w) u[S, w]                for every model S
         u[S, w] <= a_k * W_T^S(w) + b_k          for every piece k of U
         admissibility rows                       (mode dependent)

Scenarios in which a model's terminal wealth is the same affine function of
the strategy share one ``u`` variable. Smooth utilities go through projected
supergradient ascent, bracketed by LPs on piecewise-linear approximations.
"""

from dataclasses import dataclass, field
from enum import Enum
import itertools
import logging
import math

import numpy as np

from . import _kernels, lp
from .errors import DomainViolationAtStart, InputError, NumericError, TooManyDimensions
from .market import Strategy, gain_matrix, terminal_wealth, wealth_process
from .utility import PiecewiseLinear, pl_over_approximation, pl_under_approximation

log = logging.getLogger(__name__)

PULL_MARGIN = 1e-12
DEFAULT_BOX = 1e4
VALUE_TOL = 1e-9
CUT_PIECES = 16
CUT_TOL = 1e-10
MAX_PL_POINTS = 1 << 14


class AdmissibilityMode(str, Enum):
    INTERMEDIATE = "intermediate"
    TERMINAL = "terminal"
    UNCONSTRAINED = "unconstrained"


def as_mode(mode):
    try:
        return AdmissibilityMode(mode)
    except ValueError as exc:
        raise InputError(f"unknown admissibility mode {mode!r}") from exc


@dataclass
class ConstraintSystem:
    """Admissibility as ``A @ phi <= b`` over :meth:`Strategy.to_vector` coordinates."""

    A: np.ndarray
    b: np.ndarray
    mode: AdmissibilityMode

    def __len__(self):
        return self.A.shape[0]

    def feasible(self, x, tol=1e-9):
        return bool(np.all(self.A @ x <= self.b + tol))


@dataclass
class RobustSolution:
    strategy: Strategy
    value: float
    worst_models: list
    method: str
    gap_bound: float = 0.0
    touches_box: bool = False
    lp_reference: float | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)


def _distinct(G):
    uniq, inv = np.unique(G, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def constraint_system(family, w0, mode):
    """Linear admissibility constraints on the strategy vector.

    Intermediate mode keeps wealth non-negative at every date in every model,
    terminal mode only at the horizon; unconstrained mode has no rows.
    """
    mode = as_mode(mode)
    tree = family.tree
    n = family.strategy_size
    if mode is AdmissibilityMode.UNCONSTRAINED:
        return ConstraintSystem(np.zeros((0, n)), np.zeros(0), mode)
    depths = range(1, tree.horizon + 1) if mode is AdmissibilityMode.INTERMEDIATE else [tree.horizon]
    blocks = [_distinct(gain_matrix(m, tree, t))[0] for m in family for t in depths]
    G = np.unique(np.vstack(blocks), axis=0)
    G = G[np.any(G != 0.0, axis=1)]
    return ConstraintSystem(-G, np.full(G.shape[0], float(w0)), mode)


def evaluate_robust(phi, family, U, w0):
    """``min`` over models of expected utility of terminal wealth (may be ``-inf``)."""
    return robust_values(phi, family, U, w0).min()


def robust_values(phi, family, U, w0):
    """Expected utility of terminal wealth, one entry per model."""
    tree = family.tree
    vals = []
    for m in family:
        u = np.asarray(U(terminal_wealth(m, tree, w0, phi)), dtype=float)
        vals.append(-math.inf if np.isneginf(u).any() else float(tree.prob @ u))
    return np.array(vals)


def _worst(values, names, tol=1e-12):
    lo = values.min()
    if not math.isfinite(lo):
        return [n for n, v in zip(names, values) if v == lo]
    return [n for n, v in zip(names, values) if v <= lo + tol * max(1.0, abs(lo))]


def _pull_inside(x, cons, w0):
    """Shrink ``x`` toward the strictly admissible zero strategy.

    LP vertices can sit on ``W = 0`` up to rounding, and wealth recomputed
    along the tree may then come out slightly negative, which a utility with
    ``U = -inf`` below zero would punish. Every row is given a relative
    margin of ``PULL_MARGIN`` by the smallest shrink that achieves it.
    """
    if not len(cons) or w0 <= 0:
        return x
    ax = cons.A @ x
    margin = PULL_MARGIN * (np.abs(cons.b) + np.abs(cons.A) @ np.abs(x))
    over = ax > cons.b - margin
    if not over.any():
        return x
    lam = np.min((cons.b[over] - margin[over]) / ax[over])
    return max(lam, 0.0) * x


def _model_blocks(family):
    """Per model: distinct terminal-gain rows and their aggregated probability."""
    tree = family.tree
    out = []
    for m in family:
        rows, inv = _distinct(gain_matrix(m, tree, tree.horizon))
        out.append((rows, np.bincount(inv, weights=tree.prob, minlength=rows.shape[0])))
    return out


def solve_lp(family, U, w0, mode, box=None):
    """Exact robust optimum for a piecewise-linear utility.

    ``box`` bounds every strategy coordinate in absolute value; it defaults to
    ``1e4`` in unconstrained mode and is absent otherwise. Raises
    :class:`~treerobust.errors.Unbounded` when no finite optimum exists.
    """
    if not isinstance(U, PiecewiseLinear):
        raise InputError("solve_lp needs a piecewise-linear utility; use pl_under_approximation")
    mode = as_mode(mode)
    if mode is not AdmissibilityMode.UNCONSTRAINED and w0 <= 0:
        raise InputError("w0 must be positive under a non-negativity constraint")
    if box is None and mode is AdmissibilityMode.UNCONSTRAINED:
        box = DEFAULT_BOX
    tree = family.tree
    n = family.strategy_size
    slopes, icpts = np.array(U.pieces())
    blocks = _model_blocks(family)
    cons = constraint_system(family, w0, mode)
    if U.domain == "positive" and mode is AdmissibilityMode.UNCONSTRAINED:
        # -inf below zero wealth: such strategies can never be optimal
        cons = constraint_system(family, w0, AdmissibilityMode.TERMINAL)
    if slopes.size <= CUT_PIECES:
        active = [np.ones((G.shape[0], slopes.size), dtype=bool) for G, _ in blocks]
        res, _ = _epigraph_lp(blocks, active, slopes, icpts, cons, box, n, w0)
    else:
        res = _epigraph_cuts(blocks, slopes, icpts, cons, box, n, w0)
    x = _pull_inside(res.x[:n], cons, w0)
    phi = Strategy.from_vector(tree, family.d, x)
    values = robust_values(phi, family, U, w0)
    touches = box is not None and bool(np.any(np.abs(x) >= box * (1 - 1e-9)))
    return RobustSolution(strategy=phi, value=float(values.min()), worst_models=_worst(values, family.names),
                          method="lp", touches_box=touches, lp_reference=res.objective,
                          iterations=res.iterations, extra={"lp_residual": res.residual})


def _epigraph_lp(blocks, active, slopes, icpts, cons, box, n, w0, start=None):
    """Epigraph LP with the pieces flagged in ``active`` (one mask per model block).

    Returns the LP result and a stable integer code per constraint row, so a
    basis can be carried over to a later solve with more pieces.
    """
    n_u = sum(G.shape[0] for G, _ in blocks)
    nvar = n + n_u + 1
    n_pieces = slopes.size
    base = len(blocks) + n_u * n_pieces
    rows, rhs, codes = [], [], []
    # tau <= E_S[u]
    off = n
    for bi, (G, p) in enumerate(blocks):
        r = np.zeros(nvar)
        r[-1] = 1.0
        r[off:off + G.shape[0]] = -p
        rows.append(r[None, :])
        rhs.append(np.zeros(1))
        codes.append(np.array([bi]))
        off += G.shape[0]
    # u <= a_k (w0 + G phi) + b_k
    off = n
    for (G, _), mask in zip(blocks, active):
        leaf, piece = np.nonzero(mask.T)[::-1]
        a = slopes[piece]
        block = np.zeros((leaf.size, nvar))
        block[:, :n] = -a[:, None] * G[leaf]
        block[np.arange(leaf.size), off + leaf] = 1.0
        rows.append(block)
        rhs.append(a * w0 + icpts[piece])
        codes.append(len(blocks) + (off - n + leaf) * n_pieces + piece)
        off += G.shape[0]
    if len(cons):
        block = np.zeros((len(cons), nvar))
        block[:, :n] = cons.A
        rows.append(block)
        rhs.append(cons.b)
        codes.append(base + np.arange(len(cons)))
    if box is not None:
        block = np.zeros((2 * n, nvar))
        block[:n, :n] = np.eye(n)
        block[n:, :n] = -np.eye(n)
        rows.append(block)
        rhs.append(np.full(2 * n, float(box)))
        codes.append(base + len(cons) + np.arange(2 * n))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    codes = np.concatenate(codes)
    c = np.zeros(nvar)
    c[-1] = 1.0
    if start is not None:
        start = np.searchsorted(codes, start) if np.all(np.diff(codes) > 0) else _positions(codes, start)
    res = lp.maximize_free(c, A, b, start=start)
    log.debug("robust LP %dx%d solved in %d pivots", A.shape[0], nvar, res.iterations)
    return res, codes


def _positions(codes, wanted):
    order = np.argsort(codes)
    return order[np.searchsorted(codes[order], wanted)]


def _epigraph_cuts(blocks, slopes, icpts, cons, box, n, w0, max_rounds=200):
    """Epigraph LP with pieces added on demand.

    Each leaf starts with the steepest and flattest pieces and the one active
    at ``w0``; every round adds, at each leaf whose ``u`` exceeds the utility,
    the piece active at the current wealth. Along any ray a concave
    piecewise-linear function grows like its first or last piece, so the
    relaxations are unbounded exactly when the full LP is. New pieces are new
    columns of the dual, so each round restarts from the previous optimal basis.
    """
    start = int(np.argmin(slopes * w0 + icpts))
    active = []
    for G, _ in blocks:
        mask = np.zeros((G.shape[0], slopes.size), dtype=bool)
        mask[:, [0, start, -1]] = True
        active.append(mask)
    iterations = 0
    warm = None
    for _ in range(max_rounds):
        res, codes = _epigraph_lp(blocks, active, slopes, icpts, cons, box, n, w0, start=warm)
        iterations += res.iterations
        warm = None if res.basis is None else codes[res.basis]
        x = res.x[:n]
        off, added = n, 0
        for (G, _), mask in zip(blocks, active):
            k = G.shape[0]
            W = w0 + G @ x
            vals = W[:, None] * slopes + icpts
            j = np.argmin(vals, axis=1)
            pl = vals[np.arange(k), j]
            over = res.x[off:off + k] > pl + CUT_TOL * (1.0 + np.abs(pl))
            fresh = over & ~mask[np.arange(k), j]
            mask[np.flatnonzero(fresh), j[fresh]] = True
            added += int(fresh.sum())
            off += k
        if not added:
            res.iterations = iterations
            return res
    raise NumericError(f"piece generation did not settle in {max_rounds} rounds")

def _objective_and_supergradient(x, mats, probs, U, w0):
    best_val, best_g = math.inf, None
    for G in mats:
        W = w0 + G @ x
        u = np.asarray(U(W), dtype=float)
        val = -math.inf if np.isneginf(u).any() else float(probs @ u)
        if val < best_val:
            best_val = val
            if math.isfinite(val):
                slopes = np.array([U.supergradient(w) for w in W])
                best_g = G.T @ (probs * slopes)
    return best_val, best_g


def solve_supergradient(family, U, w0, mode, iters=2000, step0=None, box=None,
                        sweeps=200, proj_tol=1e-10, pl_tol=1e-6):
    """Projected supergradient ascent on the robust objective.

    Step ``k`` moves by ``step0 / sqrt(k)`` along the normalised supergradient
    of a worst model (lexicographically first on ties), then projects back onto
    the admissible polyhedron by Dykstra's method. The best iterate is
    returned; ``gap_bound`` is an upper bound on its suboptimality from the
    LP on a tangent-line over-approximation of ``U``, and ``lp_reference`` the
    LP value on a chord under-approximation refined to ``pl_tol``.
    """
    mode = as_mode(mode)
    tree = family.tree
    n = family.strategy_size
    if box is None and mode is AdmissibilityMode.UNCONSTRAINED:
        box = DEFAULT_BOX
    cons = constraint_system(family, w0, mode)
    A, b = cons.A, cons.b
    if U.domain == "positive":
        # keep strictly inside the domain so supergradients exist
        term = constraint_system(family, w0, AdmissibilityMode.TERMINAL)
        margin = 1e-6 * max(1.0, abs(w0))
        A = np.vstack([A, term.A])
        b = np.concatenate([b, term.b - margin])
    if box is not None:
        A = np.vstack([A, np.eye(n), -np.eye(n)])
        b = np.concatenate([b, np.full(2 * n, float(box))])
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    x = np.zeros(n)
    if not np.all(A @ x <= b + 1e-12):
        raise DomainViolationAtStart("the zero strategy is not admissible")
    mats = [gain_matrix(m, tree, tree.horizon) for m in family]
    probs = tree.prob
    if step0 is None:
        scale = max(float(np.abs(np.vstack(mats)).max(initial=0.0)), 1e-12)
        step0 = max(abs(w0), 1.0) / scale
    val, g = _objective_and_supergradient(x, mats, probs, U, w0)
    best_x, best_val = x.copy(), val
    for k in range(1, iters + 1):
        if g is None:
            break
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        y = x + (step0 / math.sqrt(k)) * g / gn
        if A.shape[0] and np.any(A @ y > b):
            y, _ = _kernels.dykstra(A, b, y, sweeps, proj_tol)
        x = y
        val, g = _objective_and_supergradient(x, mats, probs, U, w0)
        if val > best_val:
            best_x, best_val = x.copy(), val
    phi = Strategy.from_vector(tree, family.d, best_x)
    values = robust_values(phi, family, U, w0)
    sol = RobustSolution(strategy=phi, value=float(values.min()), worst_models=_worst(values, family.names),
                         method="supergradient", iterations=k if iters else 0)
    _bracket(sol, family, U, w0, mode, box, pl_tol)
    return sol


def _wealth_grid(family, phi, U, w0, npts):
    ws = np.concatenate([np.concatenate(wealth_process(m, family.tree, w0, phi)) for m in family])
    lo, hi = float(ws.min()), float(ws.max())
    span = max(hi - lo, abs(w0), 1.0)
    if U.domain == "positive":
        lo = max(lo / 4.0, 1e-3 * max(abs(w0), 1e-12))
        pts = np.geomspace(lo, hi + span, npts)
    else:
        pts = np.linspace(lo - span, hi + span, npts)
    return np.unique(np.concatenate([pts, [w0]]))


def _refine_points(U, pts, tol, max_points=MAX_PL_POINTS):
    """Bisect the intervals of ``pts`` whose chord gap exceeds ``tol``."""
    frac = np.linspace(0.0, 1.0, 11)[1:-1]
    while pts.size < max_points:
        a, b = pts[:-1], pts[1:]
        x = a[:, None] + (b - a)[:, None] * frac
        ua, ub = U(a), U(b)
        chord = ua[:, None] + (ub - ua)[:, None] * frac
        gap = np.max(U(x) - chord, axis=1)
        bad = gap > tol
        if not bad.any():
            break
        mids = 0.5 * (a[bad] + b[bad])[: max_points - pts.size]
        pts = np.unique(np.concatenate([pts, mids]))
    return pts


def _bracket(sol, family, U, w0, mode, box, pl_tol):
    """Attach LP-based reference values to a supergradient solution."""
    if isinstance(U, PiecewiseLinear):
        ref = solve_lp(family, U, w0, mode, box=box)
        sol.lp_reference = ref.value
        sol.gap_bound = max(0.0, ref.value - sol.value)
        return
    pts = _refine_points(U, _wealth_grid(family, sol.strategy, U, w0, 33), pl_tol)
    under, gap = pl_under_approximation(U, pts)
    ref_mode = mode
    if U.domain == "positive" and mode is AdmissibilityMode.UNCONSTRAINED:
        ref_mode = AdmissibilityMode.TERMINAL
    sol.lp_reference = solve_lp(family, under, w0, ref_mode, box=box).value
    over = pl_over_approximation(U, pts)
    upper = solve_lp(family, over, w0, ref_mode, box=box).value
    sol.gap_bound = max(0.0, upper - sol.value)
    sol.extra.update(pl_gap=gap, pl_points=int(pts.size), upper_bound=upper)


def brute_force_oracle(family, U, w0, mode, grid_radius, grid_steps, chunk=1 << 18):
    """Exhaustive grid maximum of the robust objective over admissible points.

    The grid is ``linspace(-grid_radius, grid_radius, grid_steps)`` in every
    strategy coordinate, scanned in lexicographic order (first maximiser wins).
    Returns ``(value, argmax vector)``.
    """
    mode = as_mode(mode)
    tree = family.tree
    n = family.strategy_size
    if n > 6:
        raise TooManyDimensions(f"{n} strategy coordinates; the oracle handles at most 6")
    axis = np.linspace(-grid_radius, grid_radius, grid_steps)
    cons = constraint_system(family, w0, mode)
    mats = [gain_matrix(m, tree, tree.horizon) for m in family]
    probs = tree.prob
    # the trailing coordinates form an inner block whose gains are computed once
    k = 1
    while k < n and grid_steps ** (k + 1) <= chunk:
        k += 1
    outer = n - k
    inner = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    inner_cons = inner @ cons.A[:, outer:].T
    inner_gain = [w0 + inner @ G[:, outer:].T for G in mats]
    best_val, best_x = -math.inf, None
    for idx in itertools.product(range(grid_steps), repeat=outer):
        o = axis[list(idx)]
        if len(cons):
            ok = np.all(inner_cons <= cons.b - cons.A[:, :outer] @ o + 1e-12, axis=1)
            if not ok.any():
                continue
        else:
            ok = slice(None)
        val = None
        for G, base in zip(mats, inner_gain):
            u = np.asarray(U(base[ok] + G[:, :outer] @ o), dtype=float)
            with np.errstate(invalid="ignore"):
                ev = np.where(np.isneginf(u).any(axis=1), -math.inf, np.nan_to_num(u, neginf=0.0) @ probs)
            val = ev if val is None else np.minimum(val, ev)
        j = int(np.argmax(val))
        if val[j] > best_val:
            best_val = float(val[j])
            best_x = np.concatenate([o, inner[ok][j]])
    return best_val, best_x


def grid_resolution_tolerance(family, U, w0, grid_radius, grid_steps, lipschitz=None):
    """Objective change caused by moving every coordinate by one grid step."""
    h = 2.0 * grid_radius / (grid_steps - 1)
    tree = family.tree
    path = 0.0
    for t in range(1, tree.horizon + 1):
        path += max(float(np.abs(m.increments[t]).sum(axis=1).max()) for m in family)
    if lipschitz is None:
        if not isinstance(U, PiecewiseLinear):
            raise InputError("pass lipschitz for non piecewise-linear utilities")
        lipschitz = max(abs(s) for s in U.slopes)
    return lipschitz * h * path
