import math
import time

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from treerobust import optimizer
from treerobust.arbitrage import na_check
from treerobust.errors import DomainViolationAtStart, InputError, TooManyDimensions
from treerobust.generators import gen_bachelier, gen_coin
from treerobust.market import ModelFamily, Strategy
from treerobust.optimizer import (
    AdmissibilityMode,
    as_mode,
    brute_force_oracle,
    constraint_system,
    evaluate_robust,
    grid_resolution_tolerance,
    robust_values,
    solve_lp,
    solve_supergradient,
)
from treerobust.utility import CappedSqrt, Log, NegExp, PiecewiseLinear, pl_under_approximation

from conftest import random_family, random_model, random_tree, two_model_symmetric

MIN1 = PiecewiseLinear((0, 1), (0, 1), "real", right_slope=0.0)
MIN2 = PiecewiseLinear((0, 2), (0, 2), "real", right_slope=0.0)
REMARK_PL = PiecewiseLinear((0, 1, 4, 4.5, 5.5), (0, 1, 2, 2, 2), "positive")


def remark_phi(tree):
    return Strategy.constant(tree, [1.0])


def test_constraint_counts(coin, remark_small):
    assert len(constraint_system(coin, 1.0, "unconstrained")) == 0
    cons = constraint_system(coin, 1.0, "intermediate")
    assert cons.feasible(np.array([1.0])) and cons.feasible(np.array([-1.0]))
    assert not cons.feasible(np.array([1.01]))
    cons = constraint_system(remark_small, 1.0, "intermediate")
    n = remark_small.strategy_size
    for phi1 in (0.1 + 1e-9, -0.1 - 1e-9):
        x = np.zeros(n)
        x[0] = phi1
        assert not cons.feasible(x, tol=0.0)
    x = np.zeros(n)
    x[0] = 0.1
    assert cons.feasible(x, tol=0.0)


def test_mode_parsing():
    assert as_mode("terminal") is AdmissibilityMode.TERMINAL
    with pytest.raises(InputError):
        as_mode("sometimes")


def test_evaluate_examples(remark_small, coin):
    U = CappedSqrt(2.0)
    zero = Strategy.zeros(remark_small.tree, 1)
    assert evaluate_robust(zero, remark_small, U, 1.0) == pytest.approx(1.0, abs=1e-12)
    vals = robust_values(remark_phi(remark_small.tree), remark_small, U, 1.0)
    np.testing.assert_allclose(vals, [1.25, 2.0, 2.0], atol=1e-15)
    assert evaluate_robust(Strategy.constant(coin.tree, [2.0]), coin, Log(), 1.0) == -math.inf


def test_coin_lp(coin):
    sol = solve_lp(coin, MIN1, 1.0, "intermediate")
    assert sol.value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sol.strategy.to_vector(), [0.0], atol=1e-12)
    assert sol.method == "lp"


def test_two_model_lp():
    fam = two_model_symmetric()
    sol = solve_lp(fam, MIN2, 1.0, "intermediate")
    assert sol.value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sol.strategy.to_vector(), [0.0], atol=1e-12)
    assert sorted(sol.worst_models) == ["a", "b"]


def test_remark_terminal_at_least_five_quarters(remark_small):
    sol = solve_lp(remark_small, REMARK_PL, 1.0, "terminal")
    assert sol.value >= 1.25 - 1e-9
    assert sol.value == pytest.approx(evaluate_robust(sol.strategy, remark_small, REMARK_PL, 1.0), abs=1e-9)


def test_remark_intermediate_below_shadow_bound(remark_small):
    sol = solve_lp(remark_small, REMARK_PL, 1.0, "intermediate")
    assert sol.value <= math.sqrt(1 + 3 / 10) + 1e-9
    assert constraint_system(remark_small, 1.0, "intermediate").feasible(sol.strategy.to_vector())


def test_unconstrained_touches_box():
    fam = gen_bachelier(1, 0.5, 0.0, [(1.0, 2.0)])
    sol = solve_lp(fam, PiecewiseLinear((0, 1), (0, 1)), 1.0, "unconstrained", box=50.0)
    assert sol.touches_box


def test_supergradient_coin_log(coin):
    sol = solve_supergradient(coin, Log(), 1.0, "intermediate")
    assert sol.value == pytest.approx(0.0, abs=1e-3)
    assert abs(sol.value - sol.lp_reference) <= 1e-3
    np.testing.assert_allclose(sol.strategy.to_vector(), [0.0], atol=1e-3)


def test_supergradient_bachelier_log_vs_oracle():
    fam = gen_bachelier(2, 0.5, 0.0, [(1.0, 0.3)])
    sol = solve_supergradient(fam, Log(), 5.0, "intermediate")
    oracle, _ = brute_force_oracle(fam, Log(), 5.0, "intermediate", 6.0, 121)
    assert sol.value == pytest.approx(oracle, abs=1e-3)
    assert sol.value >= oracle - 1e-9
    assert sol.gap_bound <= 1e-3


def test_supergradient_needs_feasible_start():
    fam = gen_coin()
    with pytest.raises(DomainViolationAtStart):
        solve_supergradient(fam, Log(), -1.0, "terminal")


def test_oracle_examples(coin):
    v, x = brute_force_oracle(coin, MIN1, 1.0, "intermediate", 2.0, 41)
    assert v == 1.0
    v, x = brute_force_oracle(coin, Log(), 1.0, "intermediate", 2.0, 41)
    assert v == 0.0 and x[0] == 0.0


def test_oracle_dimension_limit(remark_small):
    with pytest.raises(TooManyDimensions):
        brute_force_oracle(remark_small, MIN1, 1.0, "terminal", 1.0, 3)


def test_oracle_unconstrained_log_agrees():
    # whole-line wealth, but log forces non-negative terminal wealth
    fam = gen_bachelier(1, 0.5, 0.0, [(1.0, 0.2), (1.0, -0.1)])
    under = PiecewiseLinear(tuple(np.geomspace(0.05, 4, 40)), tuple(np.log(np.geomspace(0.05, 4, 40))),
                            "positive")
    sol = solve_lp(fam, under, 1.0, "terminal")
    v, _ = brute_force_oracle(fam, under, 1.0, "unconstrained", 1.0, 401)
    tol = grid_resolution_tolerance(fam, under, 1.0, 1.0, 401)
    assert abs(sol.value - v) <= tol


@pytest.mark.parametrize("fixture", ["coin", "two_model", "bach"])
@pytest.mark.parametrize("mode", ["intermediate", "terminal"])
def test_lp_matches_oracle(fixture, mode, coin, bach):
    fam = {"coin": coin, "two_model": two_model_symmetric(), "bach": bach}[fixture]
    U = PiecewiseLinear((0, 0.5, 1.5, 3), (0, 0.8, 1.5, 1.8), "positive")
    sol = solve_lp(fam, U, 1.0, mode)
    radius, steps = 3.0, 61
    v, _ = brute_force_oracle(fam, U, 1.0, mode, radius, steps)
    assert v <= sol.value + 1e-9
    assert sol.value - v <= grid_resolution_tolerance(fam, U, 1.0, radius, steps)


def test_supergradient_within_upper_bound(two_drift):
    fam, _ = two_drift
    U = NegExp(1.0)
    sol = solve_supergradient(fam, U, 1.0, "unconstrained", iters=1000)
    assert sol.value <= sol.extra["upper_bound"] + 1e-9
    assert sol.value + sol.gap_bound >= sol.lp_reference - 1e-9


def random_na_model(rng, max_T=2):
    while True:
        tree = random_tree(rng, max_T=max_T, max_children=3)
        m = random_model(rng, tree, int(rng.integers(1, 3)))
        if na_check(m, tree)[0]:
            return ModelFamily(tree, (m,))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_singleton_modes_agree(seed):
    rng = np.random.default_rng(seed)
    fam = random_na_model(rng)
    a = solve_lp(fam, MIN2, 1.0, "intermediate").value
    b = solve_lp(fam, MIN2, 1.0, "terminal").value
    assert abs(a - b) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_duplicated_model_changes_nothing(seed):
    rng = np.random.default_rng(seed)
    fam = random_na_model(rng)
    m = fam.models[0]
    twin = ModelFamily(fam.tree, (m, type(m)("copy", m.initial, m.increments)))
    for mode in ("intermediate", "terminal"):
        assert abs(solve_lp(fam, MIN2, 1.0, mode).value - solve_lp(twin, MIN2, 1.0, mode).value) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
@example(seed=2254831)  # fully degenerate phase 1
def test_mode_ordering_and_lower_bound(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=int(rng.integers(1, 4)), max_T=2)
    U = PiecewiseLinear((-1, 0, 1, 2), (-3, 0, 1, 1.2), "real", right_slope=0.0)
    vals = [solve_lp(fam, U, 1.0, mode, box=100.0).value for mode in ("intermediate", "terminal", "unconstrained")]
    assert vals[0] <= vals[1] + 1e-9 and vals[1] <= vals[2] + 1e-9
    assert vals[0] >= U(1.0) - 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-5, 5))
def test_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=2, max_T=2)
    base = solve_lp(fam, MIN2, 1.0, "terminal")
    moved = solve_lp(fam, MIN2.shifted(c), 1.0, "terminal")
    assert moved.value - c == pytest.approx(base.value, abs=1e-9)
    assert evaluate_robust(moved.strategy, fam, MIN2, 1.0) == pytest.approx(base.value, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0, 1))
def test_robust_objective_concave(seed, lam):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=3, max_T=2)
    n = fam.strategy_size
    U = CappedSqrt(2.0)
    cons = constraint_system(fam, 1.0, "intermediate")
    pts = []
    while len(pts) < 2:
        x = rng.normal(size=n) * rng.choice([0.01, 0.1, 1.0])
        if cons.feasible(x, tol=0.0):
            pts.append(x)
    f = [evaluate_robust(Strategy.from_vector(fam.tree, fam.d, x), fam, U, 1.0) for x in pts]
    mid = evaluate_robust(Strategy.from_vector(fam.tree, fam.d, lam * pts[0] + (1 - lam) * pts[1]), fam, U, 1.0)
    assert mid >= lam * f[0] + (1 - lam) * f[1] - 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_lp_matches_oracle_random(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, max_T=1, max_children=3)
    d = int(rng.integers(1, 3))
    fam = ModelFamily(tree, tuple(random_model(rng, tree, d, f"m{k}") for k in range(2)))
    U = PiecewiseLinear((0, 1, 2), (0, 1, 1.5), "positive", right_slope=0.0)
    sol = solve_lp(fam, U, 1.0, "terminal", box=2.0)
    v, _ = brute_force_oracle(fam, U, 1.0, "terminal", 2.0, 81)
    assert v <= sol.value + 1e-9
    assert sol.value - v <= grid_resolution_tolerance(fam, U, 1.0, 2.0, 81)


def solve_full_epigraph(*args, **kw):
    """``solve_lp`` with every piece in the LP from the start."""
    saved = optimizer.CUT_PIECES
    optimizer.CUT_PIECES = 1 << 30
    try:
        return solve_lp(*args, **kw)
    finally:
        optimizer.CUT_PIECES = saved


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), mode=st.sampled_from(["intermediate", "terminal", "unconstrained"]))
@example(seed=68615, mode="intermediate")  # thousands of degenerate pivots in the full LP
@example(seed=7, mode="intermediate")
def test_piece_generation_matches_full_lp(seed, mode):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n_models=int(rng.integers(1, 4)), max_T=2)
    xs = np.linspace(-2.0, 4.0, 40)
    U, _ = pl_under_approximation(NegExp(0.7), xs)
    assert len(U.pieces()[0]) > optimizer.CUT_PIECES
    cut = solve_lp(fam, U, 1.0, mode, box=50.0)
    full = solve_full_epigraph(fam, U, 1.0, mode, box=50.0)
    assert cut.lp_reference == pytest.approx(full.lp_reference, abs=1e-8)
    assert cut.value == pytest.approx(full.value, abs=1e-8)


def test_many_piece_bracket_is_fast(remark_small):
    # a smooth utility on a wide wealth range needs thousands of chord points
    start = time.perf_counter()
    sol = solve_supergradient(remark_small, NegExp(1.0), 1.0, "unconstrained", iters=20)
    assert time.perf_counter() - start < 30
    assert sol.extra["pl_points"] > optimizer.CUT_PIECES
    assert sol.value <= sol.extra["upper_bound"] + 1e-9
    assert sol.lp_reference <= sol.extra["upper_bound"] + 1e-9
