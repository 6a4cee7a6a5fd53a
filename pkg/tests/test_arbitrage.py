import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treerobust.arbitrage import (
    assumption_na,
    beta_kappa,
    certificates,
    g_bounds,
    inradius,
    na_check,
    one_step_na,
    robust_na,
    verify_certificate,
)
from treerobust.errors import ArbitrageAtNode, ArbitrageInModel, DegenerateSupport
from treerobust.generators import gen_bachelier
from treerobust.market import (
    ModelFamily,
    Strategy,
    gain_matrix,
    make_model,
    project_strategy,
    support_field,
    wealth_process,
)
from treerobust.space import product_tree

from conftest import random_family, random_model, random_tree


def one_dim_na_oracle(model, tree):
    """Direct NA test for one asset: every node straddles zero or is flat."""
    for t in range(1, tree.horizon + 1):
        for i in range(tree.n_nodes(t - 1)):
            y = model.child_increments(tree, t, i)[:, 0]
            if not ((y.min() < 0 < y.max()) or np.all(y == 0)):
                return False
    return True


def one_step(values, probs=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    k = values.shape[0]
    tree = product_tree([probs or [1.0 / k] * k])
    return make_model("m", np.zeros(values.shape[1]), [values]), tree


def test_coin_one_step(coin):
    assert one_step_na(coin.models[0], coin.tree, 1, 0)


def test_deterministic_gain_is_arbitrage(remark_small):
    assert not one_step_na(remark_small["bar"], remark_small.tree, 1, 0)


def test_same_sign_increments():
    m, tree = one_step([1.0, 2.0])
    assert not one_step_na(m, tree, 1, 0)


def test_na_check_remark(remark_small):
    assert na_check(remark_small["star"], remark_small.tree) == (True, [])
    ok, bad = na_check(remark_small["bar"], remark_small.tree)
    assert not ok and bad == [(1, 0)]


def test_flat_model_is_na(rng):
    tree = random_tree(rng)
    m = make_model("flat", [0.0], [np.zeros(tree.n_nodes(t)) for t in range(1, tree.horizon + 1)])
    assert na_check(m, tree)[0]


def test_beta_kappa_coin(coin):
    assert beta_kappa(coin.models[0], coin.tree, 1, 0) == (1.0, 0.5)


def test_beta_kappa_remark_star(remark_small):
    beta, kappa = beta_kappa(remark_small["star"], remark_small.tree, 1, 0)
    assert beta == 0.5
    assert kappa == pytest.approx(0.5, abs=1e-12)


def test_beta_kappa_cross_polytope():
    m, tree = one_step([[1, 0], [-1, 0], [0, 1], [0, -1]])
    beta, kappa = beta_kappa(m, tree, 1, 0)
    assert beta == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert kappa == pytest.approx(0.25, abs=1e-12)


def test_beta_kappa_errors(remark_small):
    with pytest.raises(ArbitrageAtNode):
        beta_kappa(remark_small["bar"], remark_small.tree, 1, 0)
    m, tree = one_step([0.0, 0.0])
    with pytest.raises(DegenerateSupport):
        beta_kappa(m, tree, 1, 0)


def test_inradius_square():
    sq = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert inradius(sq) == pytest.approx(1.0)
    assert inradius(sq + 2.0) < 0


def test_inradius_three_dims():
    cube = np.array([[a, b, c] for a in (-1, 2) for b in (-1, 2) for c in (-3, 1)], dtype=float)
    assert inradius(cube) == pytest.approx(1.0)


def test_certificate_sentinels():
    tree = product_tree([[0.5, 0.5]])
    m = make_model("flat", [0.0], [np.zeros(2)])
    cert = certificates(m, tree)
    assert cert.na and cert.beta[0][0] == math.inf and cert.kappa[0][0] == 1.0


def test_robust_na_singleton_star(remark_small):
    assert robust_na(remark_small.subset(["star"])).holds


def test_robust_na_bar_alone(remark_small):
    res = robust_na(remark_small.subset(["bar"]))
    assert not res.holds
    np.testing.assert_allclose(res.witness.positions[0], [[1.0]])
    np.testing.assert_allclose(res.witness.positions[1], 0.0)
    W = wealth_process(remark_small["bar"], remark_small.tree, 0.0, res.witness)[-1]
    np.testing.assert_allclose(W, 3.0)


def test_robust_na_full_remark(remark_small):
    assert robust_na(remark_small).holds


def test_assumption_na_remark(remark_small):
    stars = assumption_na(remark_small)
    assert stars == ["star"]
    # brute-force confirmation: exactly the models that are NA and dominate all supports
    assert [m.name for m in remark_small if one_dim_na_oracle(m, remark_small.tree)] == ["star"]


def test_assumption_na_empty_and_singleton(remark_small, coin):
    assert assumption_na(remark_small.subset(["bar"])) == []
    assert assumption_na(coin) == coin.names


def test_g_bounds_coin(coin):
    assert g_bounds(coin.models[0], coin.tree, 1.0)[0][0] == 1.0


def test_g_bounds_remark(remark):
    G = g_bounds(remark["star"], remark.tree, 1.0)
    assert G[0][0] == 2.0
    eps1 = remark["star"].increments[1][:, 0]
    np.testing.assert_array_equal(G[1][eps1 == -0.5], 4.0)
    np.testing.assert_array_equal(G[1][eps1 == 4.0], 18.0)


def test_g_bounds_requires_na(remark_small):
    with pytest.raises(ArbitrageInModel):
        g_bounds(remark_small["bar"], remark_small.tree, 1.0)


def sample_admissible(model, tree, w0, rng, radius, tries=200):
    """Draw positions node by node, rejecting those that make wealth negative."""
    d = model.d
    positions = []
    W = np.array([float(w0)])
    for t in range(1, tree.horizon + 1):
        pos = np.zeros((tree.n_nodes(t - 1), d))
        for i in range(tree.n_nodes(t - 1)):
            inc = model.child_increments(tree, t, i)
            for _ in range(tries):
                cand = rng.uniform(-radius, radius, size=d)
                if np.all(W[i] + inc @ cand >= 0):
                    pos[i] = cand
                    break
        positions.append(pos)
        W = W[tree.parent[t]] + np.einsum("ij,ij->i", pos[tree.parent[t]], model.increments[t])
    return Strategy(positions)


def check_bounds_obeyed(model, tree, w0, n, rng, radius):
    G = g_bounds(model, tree, w0)
    field = support_field(model, tree)
    worst = 0.0
    for _ in range(n):
        phi = sample_admissible(model, tree, w0, rng, radius)
        assert all(np.all(W >= -1e-12) for W in wealth_process(model, tree, w0, phi))
        proj = project_strategy(phi, field)
        for t, pos in enumerate(proj.positions, start=1):
            ratio = np.linalg.norm(pos, axis=1) / G[t - 1]
            worst = max(worst, float(ratio.max()))
    return worst


def test_g_bounds_obeyed_by_admissible_strategies(remark_small, rng):
    assert check_bounds_obeyed(remark_small["star"], remark_small.tree, 1.0, 200, rng, 25.0) <= 1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_g_bounds_random_models(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, max_T=2)
    d = int(rng.integers(1, 3))
    m = random_model(rng, tree, d)
    if not na_check(m, tree)[0]:
        return
    assert check_bounds_obeyed(m, tree, 1.0, 20, rng, 10.0) <= 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_certificates_sound(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng)
    m = random_model(rng, tree, int(rng.integers(1, 4)))
    cert = certificates(m, tree)
    if not cert.na:
        return
    assert verify_certificate(m, tree, cert, 2000, rng) == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_na_iff_positive_certificates(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng)
    m = random_model(rng, tree, int(rng.integers(1, 3)), integer=True)
    cert = certificates(m, tree)
    assert cert.na == na_check(m, tree)[0]
    if cert.na:
        for _, _, beta, kappa, dim in cert.items():
            assert beta > 0 and kappa > 0
    if m.d == 1:
        assert cert.na == one_dim_na_oracle(m, tree)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_assumption_implies_robust_na(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=int(rng.integers(1, 4)), integer=True)
    if assumption_na(fam):
        assert robust_na(fam).holds


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_witness_for_larger_family_serves_smaller(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=3, integer=True)
    res = robust_na(fam)
    if res.holds:
        return
    x = res.witness.to_vector()
    sub = fam.subset(fam.names[:2])
    gains = [gain_matrix(m, sub.tree, sub.tree.horizon) @ x for m in sub]
    assert all(np.all(g >= -1e-9) for g in gains)
    assert sum(sub.tree.prob @ g for g in gains) > 0 or sum(
        fam.tree.prob @ (gain_matrix(fam.models[2], fam.tree, fam.tree.horizon) @ x) for _ in [0]) > 0


def test_bachelier_drift_exceeding_vol_is_arbitrage():
    fam = gen_bachelier(2, 0.5, 0.0, [(1.0, 2.0)])
    assert not na_check(fam.models[0], fam.tree)[0]


def test_robust_na_fails_when_all_models_arbitrage(rng):
    tree = random_tree(rng, max_T=2)
    models = []
    for k in range(3):
        incs = [np.abs(rng.normal(size=tree.n_nodes(t))) + 0.1 for t in range(1, tree.horizon + 1)]
        models.append(make_model(f"up{k}", [0.0], incs))
    res = robust_na(ModelFamily(tree, tuple(models)))
    assert not res.holds and np.any(res.witness.to_vector() != 0)


def test_opposite_arbitrages_satisfy_robust_na():
    tree = product_tree([[0.5, 0.5]])
    fam = ModelFamily(tree, (make_model("long", [0.0], [np.array([1.0, 2.0])]),
                             make_model("short", [0.0], [np.array([-1.0, -2.0])])))
    assert not any(na_check(m, tree)[0] for m in fam)
    assert robust_na(fam).holds


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_single_arbitrage_model_fails_robust_na(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng)
    m = random_model(rng, tree, int(rng.integers(1, 3)), integer=True)
    if na_check(m, tree)[0]:
        return
    res = robust_na(ModelFamily(tree, (m,)))
    assert not res.holds
    gains = gain_matrix(m, tree, tree.horizon) @ res.witness.to_vector()
    assert gains.min() >= -1e-9 and gains.max() > 1e-9
