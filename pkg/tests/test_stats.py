import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from oracles import exhaustive_signed_rank_p
from receval.errors import ContractError
from receval.stats import compare_methods, signed_rank_null, wilcoxon_signed_rank


def test_method_vs_itself():
    a = [3.7, 3.9, 2.9, 4.1, 3.3, 2.5]
    for test in ("wilcoxon", "t"):
        assert compare_methods(a, a, test).p_value == 1.0


def test_shifted_clone_n12():
    a = np.random.default_rng(0).uniform(2, 5, 12)
    c = compare_methods(a + 10, a)
    assert c.exact and c.p_value < 0.01
    assert c.p_value == 2 / 2 ** 12


def test_six_pair_table_matches_enumeration():
    a = np.array([3.1, 2.4, 4.0, 3.3, 2.9, 3.8])
    b = np.array([2.7, 2.6, 3.1, 3.0, 3.4, 2.6])
    _, p, exact = wilcoxon_signed_rank(a, b)
    assert exact and p == exhaustive_signed_rank_p(a - b)


@given(st.lists(st.integers(-4, 4), min_size=1, max_size=6))
def test_small_n_matches_enumeration_with_ties(d):
    d = np.array(d, float)
    _, p, _ = wilcoxon_signed_rank(d, np.zeros_like(d))
    assert p == pytest.approx(exhaustive_signed_rank_p(d), abs=1e-15)


def test_null_distribution_counts():
    null = signed_rank_null([1, 2, 3])
    assert sum(null.values()) == 8
    assert null == {0: 1, 2: 1, 4: 1, 6: 2, 8: 1, 10: 1, 12: 1}


def test_normal_approximation_close_to_scipy():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=40), rng.normal(size=40) + 0.3
    _, p, exact = wilcoxon_signed_rank(a, b)
    ref = sps.wilcoxon(a, b, correction=True, method="approx").pvalue
    assert not exact and p == pytest.approx(ref, rel=1e-9)


def test_exact_agrees_with_scipy_without_ties():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=15), rng.normal(size=15)
    _, p, _ = wilcoxon_signed_rank(a, b)
    assert p == pytest.approx(sps.wilcoxon(a, b, method="exact").pvalue, rel=1e-12)


def test_contracts():
    with pytest.raises(ContractError):
        compare_methods([1, 2, 3], [1, 2, 4])
    with pytest.raises(ContractError):
        compare_methods([1, 2, 3, 4, 5], [1, 2, 3, 4])
    with pytest.raises(ContractError):
        compare_methods([1.0] * 5, [2.0] * 5, "anova")
