import itertools

import numpy as np
import pytest

from treerobust.arbitrage import assumption_na, na_check
from treerobust.emm import find_emm, verify_martingale
from treerobust.errors import ArbitrageInStockModel, BadParameters, NoConsistentPricingMeasure
from treerobust.generators import (
    gen_bachelier,
    gen_coin,
    gen_option_trading,
    gen_remark_example,
    gen_two_drift,
    option_model,
)
from treerobust.market import Strategy, make_model, wealth_process
from treerobust.optimizer import constraint_system
from treerobust.space import product_tree


@pytest.mark.parametrize("T", range(1, 11))
@pytest.mark.parametrize("p", [0.5, 0.3, 0.9])
def test_bachelier_leaf_probabilities_exact(T, p):
    fam = gen_bachelier(T, p, 0.0, [(1.0, 0.0)])
    expected = [np.prod([p if s > 0 else 1 - p for s in signs])
                for signs in itertools.product([1, -1], repeat=T)]
    np.testing.assert_array_equal(fam.tree.prob, expected)


def test_bachelier_increments():
    fam = gen_bachelier(2, 0.5, 3.0, [(2.0, 0.5)])
    m = fam.models[0]
    np.testing.assert_array_equal(m.increments[1][:, 0], [2.5, -1.5])
    np.testing.assert_array_equal(m.increments[2][:, 0], [2.5, -1.5, 2.5, -1.5])
    np.testing.assert_array_equal(m.prices(fam.tree)[2][:, 0], [8.0, 4.0, 4.0, 0.0])


def test_coin_is_bachelier():
    fam = gen_coin()
    np.testing.assert_array_equal(fam.models[0].increments[1][:, 0], [1.0, -1.0])
    np.testing.assert_array_equal(fam.tree.prob, [0.5, 0.5])


def test_bachelier_arbitrage_when_drift_large():
    assert not na_check(gen_bachelier(1, 0.5, 0.0, [(1.0, 2.0)]).models[0], gen_coin().tree)[0]


@pytest.mark.parametrize("args", [(0, 0.5, 0.0, [(1, 0)]), (1, 1.0, 0.0, [(1, 0)]), (1, 0.5, 0.0, []),
                                  (1, 0.5, 0.0, [(-1, 0)])])
def test_bachelier_bad_parameters(args):
    with pytest.raises(BadParameters):
        gen_bachelier(*args)


def test_remark_structure():
    fam = gen_remark_example(10.0, 21)
    assert fam.names == ["star", "tilde", "bar"]
    tree = fam.tree
    assert tree.n_nodes(1) == 42 and tree.n_leaves == 84
    X = fam["tilde"].increments[1][:, 0]
    assert X.min() == -10.0 and X.max() == 10.0
    # X independent of eps1: every grid value paired with both eps1 values
    pairs = set(zip(X, fam["star"].increments[1][:, 0]))
    assert len(pairs) == 42
    phi = Strategy.constant(tree, [1.0])
    np.testing.assert_array_equal(wealth_process(fam["tilde"], tree, 1.0, phi)[2], 4.0)
    cons_t = constraint_system(fam, 1.0, "terminal")
    cons_i = constraint_system(fam, 1.0, "intermediate")
    assert cons_t.feasible(phi.to_vector()) and not cons_i.feasible(phi.to_vector())


@pytest.mark.parametrize("args", [(1.0, 21), (10.0, 20), (10.0, 1)])
def test_remark_bad_parameters(args):
    with pytest.raises(BadParameters):
        gen_remark_example(*args)


def test_two_drift_example(two_drift):
    fam, laws = two_drift
    prices = fam.models[0].prices(fam.tree)
    np.testing.assert_allclose(sorted(set(np.round(prices[1][:, 0], 12))), [-0.9, 1.1])
    np.testing.assert_allclose(sorted(set(np.round(prices[2][:, 0], 12))), [-1.6, 0.4, 2.4])
    marg = {}
    for (_, s2), w in laws[0].items():
        marg[round(s2, 12)] = marg.get(round(s2, 12), 0.0) + w
    assert marg == {-1.6: 0.25, 0.4: 0.5, 2.4: 0.25}
    assert all(na_check(m, fam.tree)[0] for m in fam)
    assert assumption_na(fam) == ["theta1", "theta2"]


def test_option_trading_coin_call_is_unique(coin):
    G = np.maximum(coin.models[0].prices(coin.tree)[1][:, 0], 0.0)
    fam = gen_option_trading(coin.tree, coin.models[0], G, [0.5], 3)
    assert fam.names == ["Q1"]
    np.testing.assert_allclose(fam.models[0].initial, [0.5])


def test_option_trading_price_out_of_range(coin):
    G = np.maximum(coin.models[0].prices(coin.tree)[1][:, 0], 0.0)
    with pytest.raises(NoConsistentPricingMeasure):
        gen_option_trading(coin.tree, coin.models[0], G, [0.9], 2)


def test_option_trading_needs_na_stock(coin):
    bad = make_model("up", [0.0], [np.array([1.0, 2.0])])
    with pytest.raises(ArbitrageInStockModel):
        gen_option_trading(coin.tree, bad, np.ones(2), [1.0], 1)


def test_one_step_trinomial_price_pins_measure():
    tree = product_tree([[1 / 3] * 3])
    stock = make_model("s", [0.0], [np.array([-1.0, 0.0, 1.0])])
    G = np.column_stack([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    fam = gen_option_trading(tree, stock, G, [0.25, 0.25], 4)
    assert len(fam) == 1


def test_two_period_trinomial_has_genuine_uncertainty():
    tree = product_tree([[1 / 3] * 3] * 2)
    stock = make_model("s", [0.0], [np.array([-1.0, 0.0, 1.0]), np.tile([-1.0, 0.0, 1.0], 3)])
    S2 = stock.prices(tree)[2][:, 0]
    G = np.maximum(S2, 0.0)
    q = find_emm(stock, tree).measure
    g = float(q.weights @ G)
    fam = gen_option_trading(tree, stock, G, [g], 3)
    assert len(fam) >= 2
    for m in fam:
        np.testing.assert_allclose(m.initial, [g], atol=1e-9)
    # distinct option price processes
    assert not np.allclose(fam.models[0].increments[1], fam.models[1].increments[1])


def test_option_models_are_martingales_under_their_measure():
    tree = product_tree([[0.2, 0.5, 0.3], [0.5, 0.5]])
    rng = np.random.default_rng(2)
    G = rng.random((tree.n_leaves, 2))
    q = rng.dirichlet(np.ones(tree.n_leaves))
    m = option_model("Q", tree, G, q)
    assert verify_martingale(m, tree, q)[0]
    np.testing.assert_allclose(m.prices(tree)[2], G, atol=1e-12)
