import numpy as np
import pytest

from treerobust.generators import gen_bachelier, gen_coin, gen_remark_example, gen_two_drift
from treerobust.market import ModelFamily, make_model
from treerobust.space import build_tree, product_tree

SEED = 20240611


def random_tree(rng, max_T=3, max_children=4):
    """Random uniform-depth tree with 1..max_children children per node."""
    T = int(rng.integers(1, max_T + 1))

    def rec(t):
        if t == T:
            return {}
        k = int(rng.integers(1, max_children + 1))
        w = rng.random(k) + 0.05
        w /= w.sum()
        return {"children": [dict(prob=float(p), **rec(t + 1)) for p in w]}

    return build_tree(rec(0))


def random_model(rng, tree, d, name="m", scale=1.0, integer=False):
    incs = []
    for t in range(1, tree.horizon + 1):
        n = tree.n_nodes(t)
        if integer:
            incs.append(rng.integers(-2, 3, size=(n, d)).astype(float))
        else:
            incs.append(rng.normal(scale=scale, size=(n, d)))
    return make_model(name, np.zeros(d), incs)


def random_family(rng, n_models=2, max_T=3, d=None, integer=False):
    tree = random_tree(rng, max_T)
    d = d or int(rng.integers(1, 3))
    models = [random_model(rng, tree, d, f"m{k}", integer=integer) for k in range(n_models)]
    return ModelFamily(tree, tuple(models))


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def coin():
    return gen_coin()


@pytest.fixture(scope="session")
def remark():
    return gen_remark_example(100.0, 201)


@pytest.fixture(scope="session")
def remark_small():
    return gen_remark_example(10.0, 21)


@pytest.fixture
def two_drift():
    return gen_two_drift()


@pytest.fixture
def bach():
    return gen_bachelier(2, 0.5, 0.0, [(1.0, 0.5)])


def two_model_symmetric():
    """Two one-step models: increments {-1, 3} and {-3, 1}, probability 1/2."""
    tree = product_tree([[0.5, 0.5]])
    a = make_model("a", [0.0], [np.array([-1.0, 3.0])])
    b = make_model("b", [0.0], [np.array([-3.0, 1.0])])
    return ModelFamily(tree, (a, b))


def grid_arbitrage_oracle(model, tree, radius=4):
    """Search integer directions for a one-step arbitrage at any node.

    Exact for integer increments with entries in ``[-radius/2, radius/2]``: the
    extreme rays of the cone of non-losing directions are then integer
    vectors inside the search box.
    """
    d = model.d
    axes = np.arange(-radius, radius + 1, dtype=float)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[np.any(grid != 0, axis=1)]
    for t in range(1, tree.horizon + 1):
        for i in range(tree.n_nodes(t - 1)):
            gains = model.child_increments(tree, t, i) @ grid.T
            if np.any(np.all(gains >= 0, axis=0) & np.any(gains > 0, axis=0)):
                return True
    return False


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
