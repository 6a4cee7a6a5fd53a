"""Equivalent martingale measures on a scenario tree."""

from dataclasses import dataclass

import numpy as np

from . import lp
from .arbitrage import na_check
from .errors import (
    ArbitrageInModel,
    ArbitrageInStockModel,
    BaseNotFullSupport,
    DriftDominatesVolatility,
    Infeasible,
    NoConsistentPricingMeasure,
    SizeMismatch,
)
from .space import Measure, node_masses

MARTINGALE_TOL = 1e-9
DELTA_TOL = 1e-10


@dataclass
class EMMResult:
    measure: Measure
    density_bound: float
    model: str
    min_ratio: float


def martingale_rows(model, tree):
    """Linear map from leaf weights to per-node unnormalised drifts.

    One block of ``d`` rows per internal node, in depth order; the block is
    ``sum over leaves below the node of q(leaf) * dS_t(leaf's depth-t ancestor)``.
    """
    d = model.d
    T = tree.horizon
    blocks = []
    for t in range(1, T + 1):
        n_prev = tree.n_nodes(t - 1)
        anc_t = tree.ancestor_map(T, t)
        anc_prev = tree.ancestor_map(T, t - 1)
        inc = model.increments[t][anc_t]
        B = np.zeros((n_prev * d, tree.n_leaves))
        leaves = np.arange(tree.n_leaves)
        for k in range(d):
            B[anc_prev * d + k, leaves] = inc[:, k]
        blocks.append(B)
    return np.vstack(blocks)


def find_emm(model, tree):
    """Martingale measure maximising the smallest density ``q / P``.

    Raises :class:`ArbitrageInModel` when no equivalent martingale measure
    exists (the optimal smallest density is not positive).
    """
    n = tree.n_leaves
    p = tree.prob
    M = martingale_rows(model, tree)
    # variables: q (n), delta
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_eq = np.vstack([np.hstack([M, np.zeros((M.shape[0], 1))]),
                      np.concatenate([np.ones(n), [0.0]])])
    b_eq = np.concatenate([np.zeros(M.shape[0]), [1.0]])
    A_ub = np.hstack([-np.eye(n), p[:, None]])
    lb = np.concatenate([np.zeros(n), [-np.inf]])
    ub = np.concatenate([np.full(n, np.inf), [1.0 / p.max()]])
    try:
        res = lp.linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub, maximize=True)
    except Infeasible as exc:  # martingale equations alone have no solution
        raise ArbitrageInModel(f"no martingale measure for {model.name}") from exc
    delta = res.x[-1]
    if delta <= DELTA_TOL:
        raise ArbitrageInModel(f"model {model.name}: best minimal density {delta:.3e} is not positive")
    q = np.maximum(res.x[:n], 0.0)
    q /= q.sum()
    ratio = q / p
    return EMMResult(Measure(q), float(ratio.max()), model.name, float(ratio.min()))


def martingale_drift(process, tree, q):
    """Largest conditional drift norm of an adapted process under ``q``.

    ``process[t]`` holds one value (or vector) per depth-t node.
    """
    w = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=float)
    worst = 0.0
    for t in range(1, tree.horizon + 1):
        mass_t = node_masses(tree, w, t)
        mass_prev = node_masses(tree, w, t - 1)
        x_t = np.asarray(process[t], dtype=float)
        x_prev = np.asarray(process[t - 1], dtype=float)
        par = tree.parent[t]
        diff = x_t - x_prev[par]
        if diff.ndim == 1:
            diff = diff[:, None]
        num = np.zeros((tree.n_nodes(t - 1), diff.shape[1]))
        np.add.at(num, par, mass_t[:, None] * diff)
        drift = num / mass_prev[:, None]
        worst = max(worst, float(np.linalg.norm(drift, axis=1).max()))
    return worst


def verify_martingale(model, tree, q, tol=MARTINGALE_TOL):
    """``(holds, max_drift)`` for the price process of ``model`` under ``q``."""
    w = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=float)
    if w.size != tree.n_leaves:
        raise SizeMismatch(f"measure has {w.size} weights, tree has {tree.n_leaves} leaves")
    drift = martingale_drift(model.prices(tree), tree, w)
    return drift <= tol, drift


def bachelier_emm_closed_form(T, sigma, mu):
    """Product-form martingale measure of the binary drift/volatility model.

    Leaves are in depth-first order with the up-move (``+1``) first.
    """
    if abs(mu) >= sigma:
        raise DriftDominatesVolatility(f"|mu| = {abs(mu)} must be < sigma = {sigma}")
    ratio = mu / sigma
    step = np.array([(1.0 - ratio) / 2.0, (1.0 + ratio) / 2.0])
    w = np.ones(1)
    for _ in range(T):
        w = np.outer(w, step).ravel()
    return Measure(w)


def density(q, p):
    """Per-leaf Radon-Nikodym density ``q / p``."""
    qw = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=float)
    pw = p.weights if isinstance(p, Measure) else np.asarray(p, dtype=float)
    if qw.shape != pw.shape:
        raise SizeMismatch("measures live on different leaf sets")
    if np.any(pw <= 0):
        raise BaseNotFullSupport("reference measure must charge every leaf")
    return qw / pw


def moment_condition_holds(*_):
    """Integrability of the kind required on general spaces; always true on a finite tree."""
    return True


def _pricing_lp(model, tree, G, g):
    """Constraint blocks of the martingale measures pricing ``G`` at ``g``."""
    n = tree.n_leaves
    M = martingale_rows(model, tree)
    A_eq = np.vstack([M, G.T, np.ones((1, n))])
    b_eq = np.concatenate([np.zeros(M.shape[0]), g, [1.0]])
    return A_eq, b_eq


def pricing_measures(model, tree, G, g, k):
    """Up to ``k`` distinct equivalent martingale measures with ``E_q[G] = g``.

    The first measure maximises the smallest density ``q / P``; the others
    maximise and then minimise each leaf mass in turn, keeping every density
    above half that optimum so equivalence is preserved. Raises
    :class:`~treerobust.errors.NoConsistentPricingMeasure` when no equivalent
    measure matches the prices.
    """
    if not na_check(model, tree)[0]:
        raise ArbitrageInStockModel(f"stock model {model.name} admits arbitrage")
    G = np.asarray(G, dtype=float).reshape(tree.n_leaves, -1)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if g.size != G.shape[1]:
        raise SizeMismatch(f"{G.shape[1]} payoffs but {g.size} prices")
    n = tree.n_leaves
    p = tree.prob
    A_eq, b_eq = _pricing_lp(model, tree, G, g)
    # max delta subject to q >= delta * P
    c = np.zeros(n + 1)
    c[-1] = 1.0
    try:
        res = lp.linprog(c, A_ub=np.hstack([-np.eye(n), p[:, None]]), b_ub=np.zeros(n),
                         A_eq=np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]), b_eq=b_eq,
                         lb=np.concatenate([np.zeros(n), [-np.inf]]),
                         ub=np.concatenate([np.full(n, np.inf), [1.0 / p.max()]]), maximize=True)
    except Infeasible as exc:
        raise NoConsistentPricingMeasure(f"no martingale measure prices the payoffs at {g}") from exc
    delta = res.x[-1]
    if delta <= DELTA_TOL:
        raise NoConsistentPricingMeasure(f"prices {g} are only matched by non-equivalent measures")
    found = [_clean(res.x[:n])]
    floor = 0.5 * delta * p
    leaf = 0
    while len(found) < k and leaf < 2 * n:
        obj = np.zeros(n)
        obj[leaf // 2] = 1.0
        try:
            r = lp.linprog(obj, A_eq=A_eq, b_eq=b_eq, lb=floor, maximize=leaf % 2 == 0)
        except Infeasible:
            r = None
        leaf += 1
        if r is None:
            continue
        q = _clean(r.x)
        if all(np.abs(q - f).max() > 1e-9 for f in found):
            found.append(q)
    return [Measure(q) for q in found[:k]]


def _clean(q):
    q = np.maximum(q, 0.0)
    return q / q.sum()
