"""Model families used as worked examples and test fixtures."""

import numpy as np

from .emm import pricing_measures
from .errors import BadParameters
from .market import ModelFamily, make_model
from .space import conditional_expectation, product_tree, tree_from_levels


def gen_bachelier(T, p, s0, thetas):
    """Binary-tree models with increments ``sigma * (+-1) + mu``.

    Every node branches into an up-move (probability ``p``) followed by a
    down-move. One model per ``(sigma, mu)`` pair, named ``theta1``,
    ``theta2``, ...
    """
    if T < 1 or not 0 < p < 1 or not thetas:
        raise BadParameters("need T >= 1, 0 < p < 1 and at least one (sigma, mu)")
    tree = product_tree([[p, 1.0 - p]] * T)
    models = []
    for k, (sigma, mu) in enumerate(thetas, start=1):
        if sigma <= 0:
            raise BadParameters(f"sigma must be positive, got {sigma}")
        incs = [np.tile([sigma + mu, -sigma + mu], 2 ** (t - 1)) for t in range(1, T + 1)]
        models.append(make_model(f"theta{k}", [s0], incs))
    return ModelFamily(tree, tuple(models))


def remark_grid(M, n):
    return np.linspace(-M, M, n)


def gen_remark_example(M=100.0, n=201):
    """Three-model family separating the two admissibility notions.

    The first step jointly draws ``X`` (uniform on an ``n``-point grid over
    ``[-M, M]``) and ``eps1`` in ``{-1/2, 4}``; the second draws ``eps2`` in
    ``{-1/2, 1/2}``. Models ``star``, ``tilde`` and ``bar`` have increments
    ``(eps1, eps2)``, ``(X, 3 - X)`` and ``(3, 0)``.
    """
    if not M > 1 or n < 3 or n % 2 == 0:
        raise BadParameters("need M > 1 and an odd grid size n >= 3")
    xs = remark_grid(M, n)
    eps1 = np.array([-0.5, 4.0])
    eps2 = np.array([-0.5, 0.5])
    n1 = 2 * n
    tree = tree_from_levels(
        2,
        [np.array([n1]), np.full(n1, 2)],
        [np.full(n1, 1.0 / n1), np.full(2 * n1, 0.5)],
    )
    X1 = np.repeat(xs, 2)
    E1 = np.tile(eps1, n)
    X2 = np.repeat(X1, 2)
    E2 = np.tile(eps2, n1)
    star = make_model("star", [0.0], [E1, E2])
    tilde = make_model("tilde", [0.0], [X1, 3.0 - X2])
    bar = make_model("bar", [0.0], [np.full(n1, 3.0), np.zeros(2 * n1)])
    return ModelFamily(tree, (star, tilde, bar))


TWO_DRIFT_THETAS = ((0.1, 0.3), (0.2, 0.5))


def gen_two_drift(thetas=TWO_DRIFT_THETAS, s0=0.0):
    """Two-period binary family with drifts ``(mu1, mu2)`` per model.

    Returns ``(family, laws)``; ``laws[k]`` maps ``(S_1, S_2)`` to its
    probability under model ``k``.
    """
    tree = product_tree([[0.5, 0.5], [0.5, 0.5]])
    eps = np.array([1.0, -1.0])
    models, laws = [], []
    for k, (mu1, mu2) in enumerate(thetas, start=1):
        m = make_model(f"theta{k}", [s0], [mu1 + eps, mu2 + np.tile(eps, 2)])
        models.append(m)
        prices = m.prices(tree)
        s1 = prices[1][tree.parent[2], 0]
        law = {}
        for a, b, w in zip(s1, prices[2][:, 0], tree.prob):
            key = (round(float(a), 12), round(float(b), 12))
            law[key] = law.get(key, 0.0) + float(w)
        laws.append(law)
    return ModelFamily(tree, tuple(models)), laws


def gen_coin():
    """One step, increments -1 and +1 with probability 1/2 each (``+1`` first)."""
    return gen_bachelier(1, 0.5, 0.0, [(1.0, 0.0)])


def option_model(name, tree, G, q):
    """Price process ``E_q[G | F_t]`` of the payoffs ``G`` as a model."""
    G = np.asarray(G, dtype=float).reshape(tree.n_leaves, -1)
    levels = [conditional_expectation(G, tree, t, q) for t in range(tree.horizon + 1)]
    incs = [levels[t] - levels[t - 1][tree.parent[t]] for t in range(1, tree.horizon + 1)]
    return make_model(name, levels[0][0], incs)


def gen_option_trading(tree, stock, G, g, k):
    """Family of option-price models consistent with observed prices ``g``.

    ``G`` holds one payoff vector per column (one row per leaf). Each of up to
    ``k`` distinct martingale measures ``Q`` of the ``stock`` model with
    ``E_Q[G] = g`` yields the model ``E_Q[G | F_t]``, named ``Q1``, ``Q2``, ...
    """
    if k < 1:
        raise BadParameters("k must be at least 1")
    qs = pricing_measures(stock, tree, G, g, k)
    models = [option_model(f"Q{j}", tree, G, q) for j, q in enumerate(qs, start=1)]
    return ModelFamily(tree, tuple(models))
