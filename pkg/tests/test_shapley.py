import itertools

import numpy as np
import pytest

from conftest import (
    MARKOVIAN_CAGE_COMPLETION_VAR,
    MARKOVIAN_CAGE_VALUES,
    MARKOVIAN_SAGE_COMPLETION_VAR,
    MARKOVIAN_SAGE_VALUES,
)
from cage import CAGE, SAGE
from cage.predictors import ConstantModel, LinearModel
from cage.shapley import (
    CoalitionValueCache,
    ExplanationResult,
    MarginalSampler,
    build_value_cache,
    enumeration_stderr,
    estimate_permutation,
    estimate_value,
    exact_enumerate,
    shapley_coefficients,
    wls_shapley,
)

FEATS = ("a", "b", "c")


def _brute_force(values, d):
    """Average marginal contribution over all orderings."""
    phi = np.zeros(d)
    orders = list(itertools.permutations(range(d)))
    for order in orders:
        mask = 0
        for j in order:
            phi[j] += values[mask | 1 << j] - values[mask]
            mask |= 1 << j
    return phi / len(orders)


def test_additive_game():
    a = np.array([1.0, -2.0, 0.5])
    vals = [sum(a[j] for j in range(3) if m >> j & 1) for m in range(8)]
    np.testing.assert_allclose(exact_enumerate(CoalitionValueCache.from_values(FEATS, vals)).phi, a)


def test_majority_game():
    cache = CoalitionValueCache.from_values(FEATS, {s: float(len(s) >= 2) for k in range(4)
                                                    for s in itertools.combinations(FEATS, k)})
    np.testing.assert_allclose(exact_enumerate(cache).phi, [1 / 3] * 3)


def test_unanimity_game():
    vals = [float(m & 0b011 == 0b011) for m in range(8)]
    np.testing.assert_allclose(exact_enumerate(CoalitionValueCache.from_values(FEATS, vals)).phi,
                               [0.5, 0.5, 0.0])


def test_enumeration_matches_brute_force_permutations(rng):
    for d in (1, 2, 4, 5):
        vals = rng.normal(size=1 << d)
        cache = CoalitionValueCache.from_values([f"f{i}" for i in range(d)], vals)
        np.testing.assert_allclose(exact_enumerate(cache).phi, _brute_force(vals, d), atol=1e-12)


def test_coefficient_matrix_matches_enumeration(rng):
    vals = rng.normal(size=16)
    cache = CoalitionValueCache.from_values("abcd", vals)
    np.testing.assert_allclose(shapley_coefficients(4) @ vals, exact_enumerate(cache).phi, atol=1e-14)


def test_wls_equals_enumeration(rng):
    for d in (1, 2, 3, 6):
        cache = CoalitionValueCache.from_values([f"f{i}" for i in range(d)], rng.uniform(-1, 1, 1 << d))
        np.testing.assert_allclose(wls_shapley(cache), exact_enumerate(cache).phi, atol=1e-10)


def test_missing_subset_named():
    vals = {(): 0.0, ("a",): 1.0, ("b",): 1.0}
    with pytest.raises(ValueError, match=r"missing subset \{a, b\}"):
        exact_enumerate(CoalitionValueCache.from_values(("a", "b"), vals))


def test_cache_combine_is_linear(rng):
    a = CoalitionValueCache.from_values(FEATS, rng.normal(size=8))
    b = CoalitionValueCache.from_values(FEATS, rng.normal(size=8))
    lhs = exact_enumerate(a.combine(b, 2.0, -1.0)).phi
    np.testing.assert_allclose(lhs, 2 * exact_enumerate(a).phi - exact_enumerate(b).phi, atol=1e-12)


def test_cache_csv_layout():
    cache = CoalitionValueCache.from_values(("a", "b"), [0.0, 1.0, 2.0, 4.0])
    lines = cache.to_csv().splitlines()
    assert lines[0] == "bitmask,members,value,stderr"
    assert lines[4] == "3,a;b,4.0,0.0"


def test_enumeration_stderr_single_feature():
    cache = CoalitionValueCache(("a",), [0.0, 1.0], [0.3, 0.4])
    assert enumeration_stderr(cache)[0] == pytest.approx(0.5)


def test_constant_model_has_zero_importance(markov_setup):
    s = markov_setup
    f = ConstantModel(3.0, s.train.feature_names).fit(s.train.X)
    r = estimate_permutation("cage", s.test.X, s.test.y, f, "mse", s.joint, s.chain, N=200, M=4)
    assert np.all(r.phi == 0.0)


def test_value_endpoints(markov_setup):
    s = markov_setup
    empty = estimate_value("cage", [], s.test.X, s.test.y, s.model, "mse", s.joint, s.chain)
    full = estimate_value("cage", s.test.feature_names, s.test.X, s.test.y, s.model, "mse", s.joint, s.chain)
    y, pred = s.test.y, s.model.predict(s.test.X)
    assert empty == pytest.approx(-np.mean((pred.mean() - y) ** 2), rel=1e-12)
    assert full == pytest.approx(-np.mean((pred - y) ** 2), rel=1e-12)


def test_unknown_coalition_member(markov_setup):
    s = markov_setup
    with pytest.raises(ValueError, match="'Z'"):
        estimate_value("cage", ["Z"], s.test.X, s.test.y, s.model, "mse", s.joint, s.chain)


def test_cage_requires_chain(markov_setup):
    s = markov_setup
    with pytest.raises(ValueError, match="chain graph"):
        estimate_value("cage", ["X1"], s.test.X, s.test.y, s.model, "mse", s.joint, None)


@pytest.mark.parametrize("method, values, bias", [
    ("cage", MARKOVIAN_CAGE_VALUES, MARKOVIAN_CAGE_COMPLETION_VAR),
    ("sage", MARKOVIAN_SAGE_VALUES, MARKOVIAN_SAGE_COMPLETION_VAR),
])
def test_markovian_coalition_values_match_derivation(markov_setup, method, values, bias):
    s = markov_setup
    M = 32
    cache = build_value_cache(method, s.test.X, s.test.y, s.model, "mse", s.joint, s.chain,
                              M=M, seed=1)
    for mask, v in values.items():
        expected = v - bias.get(mask, 0.0) / M
        assert abs(cache.values[mask] - expected) < 4 * cache.stderr[mask] + 0.05, mask


def test_permutation_agrees_with_enumeration(direct_setup):
    s = direct_setup
    cache = build_value_cache("cage", s.test.X, s.test.y, s.model, "mse", s.joint, s.chain, M=16)
    exact = exact_enumerate(cache).phi
    r = estimate_permutation("cage", s.test.X, s.test.y, s.model, "mse", s.joint, s.chain,
                             N=2000, M=16, seed=3)
    se = np.hypot(r.stderr, enumeration_stderr(cache))
    assert np.all(np.abs(r.phi - exact) < 4 * se)


def test_trace_every_hundred_iterations(direct_setup):
    s = direct_setup
    r = estimate_permutation("cage", s.test.X, s.test.y, s.model, "mse", s.joint, s.chain,
                             N=350, M=2)
    assert [it for it, _ in r.trace] == [100, 200, 300]
    assert r.n_outer == 350


def test_target_stderr_stops_early(direct_setup):
    s = direct_setup
    r = estimate_permutation("cage", s.test.X, s.test.y, s.model, "mse", s.joint, s.chain,
                             N=5000, M=4, target_stderr=1.0)
    assert r.n_outer < 5000 and r.n_outer % 100 == 0
    assert np.all(r.stderr < 1.0)


def test_workers_do_not_change_result(direct_setup):
    s = direct_setup
    args = ("cage", s.test.X, s.test.y, s.model, "mse", s.joint, s.chain)
    a = estimate_permutation(*args, N=300, M=4, seed=9, workers=1)
    b = estimate_permutation(*args, N=300, M=4, seed=9, workers=4)
    assert a.phi.tobytes() == b.phi.tobytes()


def test_marginal_sampler_preserves_coalition(rng):
    bg = rng.normal(size=(50, 3))
    rows = np.full((10, 3), 99.0)
    out = MarginalSampler(bg).complete(rows, [1], rng)
    assert np.all(out[:, 1] == 99.0)
    assert np.all(np.isin(out[:, 0], bg[:, 0])) and np.all(np.isin(out[:, 2], bg[:, 2]))


def test_result_dict_round_trip(direct_setup):
    s = direct_setup
    r = estimate_permutation("sage", s.test.X, s.test.y, s.model, "mse", N=200, M=2)
    again = ExplanationResult.from_dict(r.as_dict())
    assert again.phi.tobytes() == r.phi.tobytes()
    assert again.sampler == "marginal" and len(again.trace) == 2


def test_estimator_front_end(markov_setup):
    s = markov_setup
    est = CAGE(model=s.model, chain_graph=s.chain, n_outer=200, n_inner=4).fit(s.train.X)
    r = est.explain(s.test.X, s.test.y)
    assert r.phi.shape == (3,) and est.phi_ is r.phi
    assert est.get_params()["n_outer"] == 200
    sage = SAGE(model=s.model, n_outer=200, n_inner=4).fit(s.train.X)
    assert sage.explain(s.test.X, s.test.y).method == "sage"


def test_estimator_rejects_chain_over_other_features(markov_setup, direct_setup):
    f = LinearModel.from_coefficients([1.0, 1.0], 0.0, ("p", "q"))
    with pytest.raises(ValueError, match="chain graph"):
        CAGE(model=f, chain_graph=markov_setup.chain).fit(np.zeros((3, 2)))


def test_coefficients_rows_sum_to_zero_and_columns_to_efficiency():
    for d in range(1, 7):
        C = shapley_coefficients(d)
        np.testing.assert_allclose(C.sum(axis=1), 0.0, atol=1e-12)
        expected = np.zeros(1 << d)
        expected[0], expected[-1] = -1.0, 1.0
        np.testing.assert_allclose(C.sum(axis=0), expected, atol=1e-12)
