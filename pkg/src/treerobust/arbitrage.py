"""No-arbitrage checks and quantitative certificates.

On a finite tree a model is free of arbitrage iff, at every internal node, the
origin lies in the relative interior of the convex hull of the child
increments. The largest origin-centred ball inside that hull (taken within the
hull's linear span) has radius ``beta``: along every unit direction ``xi`` in
the span some child loses at least ``beta``. ``kappa`` is the smallest
conditional mass of such losing children over all directions.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import lp
from .errors import ArbitrageAtNode, ArbitrageInModel, DegenerateSupport, InputError
from .market import (
    Strategy,
    affine_hull,
    check_containment,
    containment_holds,
    gain_matrix,
)

NA_TOL = 1e-12
LOSS_SLACK = 1e-9
RNA_TOL = 1e-9


def inradius(y):
    """Signed radius of the largest origin-centred ball inside ``conv(y)``.

    ``y`` holds full-dimensional coordinates, one point per row. A
    non-positive value means the origin is not interior.
    """
    y = np.asarray(y, dtype=float)
    r = y.shape[1]
    if r == 1:
        return float(min(y.max(), -y.min()))
    try:
        hull = ConvexHull(y)
    except QhullError:
        hull = ConvexHull(y, qhull_options="QJ")
    # equations: unit normal . x + offset <= 0 inside
    return float(np.min(-hull.equations[:, -1]))


def _node_geometry(model, tree, t, i):
    inc = model.child_increments(tree, t, i)
    probs = tree.cond_prob[t][tree.children(t - 1, i)]
    entry = affine_hull(inc)
    return inc, probs, entry


def _is_na(inc, entry):
    if not entry.linear:
        return False, 0.0
    if entry.dim == 0:
        return True, math.inf
    y = inc @ entry.basis.T
    rad = inradius(y)
    scale = max(1.0, float(np.abs(y).max()))
    return rad > NA_TOL * scale, rad


def one_step_na(model, tree, t, i):
    """No arbitrage on the step from depth-(t-1) node ``i``."""
    inc, _, entry = _node_geometry(model, tree, t, i)
    return _is_na(inc, entry)[0]


def na_check(model, tree):
    """Multi-period no-arbitrage. Returns ``(holds, violations)``.

    ``violations`` lists ``(t, i)``: the step into depth ``t`` from depth-(t-1)
    node ``i`` admits an arbitrage.
    """
    bad = [(t, i) for t in range(1, tree.horizon + 1) for i in range(tree.n_nodes(t - 1))
           if not one_step_na(model, tree, t, i)]
    return not bad, bad


def _loss_mass(y, probs, directions, threshold):
    """Mass of points with ``<xi, y> <= -threshold`` for each direction row."""
    hit = directions @ y.T <= -threshold
    return hit.astype(float) @ probs


def _kappa(y, probs, beta):
    thr = beta * (1.0 - LOSS_SLACK)
    r = y.shape[1]
    if r == 1:
        return float(_loss_mass(y, probs, np.array([[1.0], [-1.0]]), thr).min())
    if r == 2:
        norms = np.linalg.norm(y, axis=1)
        angles = []
        for v, n in zip(y, norms):
            if n < thr:
                continue
            centre = math.atan2(-v[1], -v[0])
            half = math.acos(min(1.0, thr / n))
            angles += [centre - half, centre + half]
        a = np.sort(np.mod(angles, 2 * math.pi))
        mids = (a + np.roll(a, -1) + np.where(np.arange(a.size) == a.size - 1, 2 * math.pi, 0.0)) / 2
        cand = np.concatenate([a, mids])
        dirs = np.column_stack([np.cos(cand), np.sin(cand)])
        return float(_loss_mass(y, probs, dirs, thr).min())
    # r >= 3: every direction has at least one child losing beta, and only
    # children at distance >= beta can qualify
    far = np.linalg.norm(y, axis=1) >= thr
    return float(probs[far].min())


def beta_kappa(model, tree, t, i):
    """Certificate ``(beta, kappa)`` for the step from depth-(t-1) node ``i``."""
    inc, probs, entry = _node_geometry(model, tree, t, i)
    ok, rad = _is_na(inc, entry)
    if not ok:
        raise ArbitrageAtNode(f"arbitrage on step {t} at {tree.node_path(t - 1, i)}")
    if entry.dim == 0:
        raise DegenerateSupport(f"support is {{0}} at {tree.node_path(t - 1, i)}")
    y = inc @ entry.basis.T
    return rad, _kappa(y, probs, rad)


@dataclass
class NACertificate:
    """Per-node certificates; index ``[t - 1][i]`` for depth-(t-1) node ``i``.

    Nodes whose support is ``{0}`` carry ``(inf, 1)``; nodes with an arbitrage
    carry ``(0, 0)`` and make ``na`` false.
    """

    beta: list
    kappa: list
    support_dim: list
    na: bool
    violations: list = field(default_factory=list)

    def items(self):
        for t, (b, k, dim) in enumerate(zip(self.beta, self.kappa, self.support_dim), start=1):
            for i in range(b.size):
                yield t, i, float(b[i]), float(k[i]), int(dim[i])


def certificates(model, tree):
    betas, kappas, dims, bad = [], [], [], []
    for t in range(1, tree.horizon + 1):
        n = tree.n_nodes(t - 1)
        b, k, dim = np.zeros(n), np.zeros(n), np.zeros(n, dtype=int)
        for i in range(n):
            inc, probs, entry = _node_geometry(model, tree, t, i)
            dim[i] = entry.dim
            ok, rad = _is_na(inc, entry)
            if not ok:
                bad.append((t, i))
            elif entry.dim == 0:
                b[i], k[i] = math.inf, 1.0
            else:
                b[i] = rad
                k[i] = _kappa(inc @ entry.basis.T, probs, rad)
        betas.append(b)
        kappas.append(k)
        dims.append(dim)
    return NACertificate(betas, kappas, dims, not bad, bad)


def verify_certificate(model, tree, cert, n_directions=10_000, rng=None):
    """Sample unit directions inside each node's support and count failures.

    A failure is a direction whose mass of children with
    ``<xi, dS> <= -beta * (1 - 1e-9)`` is below ``kappa``. Returns the number of
    failing (node, direction) pairs.
    """
    rng = np.random.default_rng(rng)
    failures = 0
    for t, i, beta, kappa, dim in cert.items():
        if dim == 0 or beta == 0.0:
            continue
        inc, probs, entry = _node_geometry(model, tree, t, i)
        g = rng.standard_normal((n_directions, dim))
        xi = (g / np.linalg.norm(g, axis=1, keepdims=True)) @ entry.basis
        mass = _loss_mass(inc, probs, xi, beta * (1.0 - LOSS_SLACK))
        failures += int(np.sum(mass < kappa - 1e-12))
    return failures


def _joint_span_projector(family, t, i):
    vecs = np.vstack([m.child_increments(family.tree, t, i) for m in family])
    _, s, vt = np.linalg.svd(vecs, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
    return vt[:rank].T @ vt[:rank]


@dataclass
class RobustNAResult:
    holds: bool
    optimum: float
    witness: Strategy | None


def robust_na(family):
    """Robust no-arbitrage across all models, decided by a linear program.

    Maximises total expected terminal gain over strategies with ``|phi| <= 1``
    whose terminal gain is non-negative in every model and scenario. The
    condition holds iff the optimum is zero; otherwise the maximiser is an
    arbitrage for the whole family.
    """
    tree = family.tree
    T = tree.horizon
    mats = [gain_matrix(m, tree, T) for m in family]
    n = family.strategy_size
    c = sum(tree.prob @ G for G in mats)
    A = np.vstack(mats + [np.eye(n), -np.eye(n)])
    A[: -2 * n] *= -1.0
    b = np.concatenate([np.zeros(A.shape[0] - 2 * n), np.ones(2 * n)])
    res = lp.maximize_free(c, A, b)
    if res.objective <= RNA_TOL:
        return RobustNAResult(True, max(res.objective, 0.0), None)
    # drop position components no model can trade on
    x = res.x.copy()
    d = family.d
    offsets = np.cumsum([0] + [tree.n_nodes(s) * d for s in range(T)])
    for t in range(1, T + 1):
        for i in range(tree.n_nodes(t - 1)):
            sl = slice(offsets[t - 1] + i * d, offsets[t - 1] + (i + 1) * d)
            x[sl] = _joint_span_projector(family, t, i) @ x[sl]
    x[np.abs(x) < 1e-12] = 0.0
    return RobustNAResult(False, res.objective, Strategy.from_vector(tree, d, x))


def assumption_na(family):
    """Names of models that are arbitrage-free and whose supports contain every model's."""
    out = []
    for m in family:
        if na_check(m, family.tree)[0] and containment_holds(check_containment(family, m.name)):
            out.append(m.name)
    return out


def g_bounds(model, tree, w0, cert=None):
    """Bounds on projected positions of admissible strategies, per node.

    ``G[t-1][i]`` bounds the norm of the projected position held at depth-(t-1)
    node ``i``; computed as ``(w0 + sum_{s<t} G_s * |dS_s|) / beta_t`` along the
    path. Nodes with support ``{0}`` get ``inf`` (their projection is zero).
    """
    if w0 <= 0:
        raise InputError("w0 must be positive")
    cert = cert or certificates(model, tree)
    if not cert.na:
        raise ArbitrageInModel(f"model {model.name} admits arbitrage at {cert.violations[:3]}")
    G = []
    # acc[i]: w0 + sum over the path to depth-(t-1) node i of G_s * |dS_s|
    acc = np.array([float(w0)])
    for t in range(1, tree.horizon + 1):
        beta = cert.beta[t - 1]
        with np.errstate(divide="ignore"):
            g = np.where(np.isinf(beta), math.inf, acc / beta)
        G.append(g)
        if t < tree.horizon:
            par = tree.parent[t]
            step = np.linalg.norm(model.increments[t], axis=1)
            contrib = np.where(step == 0.0, 0.0, g[par] * step)
            acc = acc[par] + contrib
    return G
