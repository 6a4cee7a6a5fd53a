import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treerobust.consistency import (
    Law,
    family_laws,
    recombination_closure,
    recombine,
    time_consistency_check,
)
from treerobust.errors import InputError, UnsupportedHorizon
from treerobust.generators import gen_bachelier, gen_coin


def test_two_drift_inconsistent(two_drift):
    _, laws = two_drift
    verdict = time_consistency_check(laws)
    assert not verdict.consistent
    assert verdict.witness == (1, 2)
    assert "P_0^1" in verdict.description and "P_1^2" in verdict.description


def test_two_drift_laws_match_family(two_drift):
    fam, laws = two_drift
    for law, mapped in zip(family_laws(fam), laws):
        assert law.same_as(Law.from_mapping(mapped))


def test_two_drift_supports(two_drift):
    _, laws = two_drift
    law = Law.from_mapping(laws[0])
    s1, m1 = law.first_marginal()
    np.testing.assert_allclose(s1, [-0.9, 1.1])
    np.testing.assert_allclose(m1, [0.5, 0.5])
    s2 = np.unique(np.round(law.points[:, 1], 12))
    np.testing.assert_allclose(s2, [-1.6, 0.4, 2.4])


def test_closure_consistent(two_drift):
    _, laws = two_drift
    closure = recombination_closure(laws)
    assert len(closure) == 4
    assert time_consistency_check(closure).consistent


def test_singleton_consistent(two_drift):
    assert time_consistency_check(two_drift[1][:1]).consistent


def test_kernel_at_foreign_atom_uses_nearest():
    law = Law.from_mapping({(0.0, 1.0): 0.5, (0.0, -1.0): 0.5})
    inc, q = law.kernel(5.0)
    np.testing.assert_array_equal(inc, [-1.0, 1.0])
    np.testing.assert_array_equal(q, [0.5, 0.5])


def test_recombine_self_is_identity(two_drift):
    law = Law.from_mapping(two_drift[1][1])
    assert recombine(law, law).same_as(law)


def test_bad_inputs():
    with pytest.raises(UnsupportedHorizon):
        Law.from_mapping({(0.0, 1.0, 2.0): 1.0})
    with pytest.raises(InputError):
        Law.from_mapping({(0.0, 1.0): 0.7})
    with pytest.raises(InputError):
        time_consistency_check([])
    with pytest.raises(UnsupportedHorizon):
        family_laws(gen_coin())
    with pytest.raises(UnsupportedHorizon):
        family_laws(gen_bachelier(3, 0.5, 0.0, [(1.0, 0.0)]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 4))
def test_full_recombination_product_is_consistent(seed, k):
    rng = np.random.default_rng(seed)
    atoms = np.sort(rng.choice([-1.0, 0.0, 2.0, 5.0], size=int(rng.integers(1, 4)), replace=False))
    marginals = [rng.dirichlet(np.ones(atoms.size)) for _ in range(k)]
    kernels = []
    for _ in range(k):
        per_atom = []
        for _ in atoms:
            inc = rng.choice([-1.0, 1.0, 3.0], size=int(rng.integers(1, 4)), replace=False)
            per_atom.append((inc, rng.dirichlet(np.ones(inc.size))))
        kernels.append(per_atom)
    laws = []
    for m in marginals:
        for ker in kernels:
            law = {}
            for a, w, (inc, q) in zip(atoms, m, ker):
                for x, qq in zip(inc, q):
                    law[(float(a), float(a + x))] = float(w * qq)
            laws.append(law)
    assert time_consistency_check(laws).consistent
    assert time_consistency_check(recombination_closure(laws)).consistent


def test_duplicates_keep_original_witness_index(two_drift):
    _, laws = two_drift
    verdict = time_consistency_check([laws[0], laws[0], laws[1]])
    assert verdict.witness == (1, 3)
