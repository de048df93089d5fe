import logging

import numpy as np
import pytest

from oracles import sem_implied_covariance
from stablesearch.effects import (
    EffectEstimate,
    aggregate_effects,
    causal_effect,
    ida_multiset,
)
from stablesearch.errors import DegenerateData, EmptyMultiset
from stablesearch.graphs import ConstraintMask, Cpdag, Dag, dag_to_cpdag
from stablesearch.scoring import Column, Dataset, FitResult, sample_covariance
from stablesearch.search import ParetoModel
from stablesearch.stability import SubsetResult


def test_simple_regression_when_source_has_no_parents():
    cov = sem_implied_covariance(2, {(0, 1): 0.7}, [1.0, 1.0])
    dag = Dag(2, frozenset({(0, 1)}))
    # pa(x) empty: plain cov(x, y) / var(x)
    assert causal_effect(dag, cov, 0, 1) == pytest.approx(cov[0, 1] / cov[0, 0])


def test_parent_target_gives_zero():
    cov = sem_implied_covariance(2, {(1, 0): 0.7}, [1.0, 1.0])
    dag = Dag(2, frozenset({(1, 0)}))
    assert causal_effect(dag, cov, 0, 1) == 0.0


def test_chain_total_effect_is_product_of_weights():
    cov = sem_implied_covariance(3, {(0, 1): 1.0, (1, 2): 1.0}, [1.0] * 3)
    chain = Dag(3, frozenset({(0, 1), (1, 2)}))
    assert causal_effect(chain, cov, 0, 2) == pytest.approx(1.0)

    cov = sem_implied_covariance(3, {(0, 1): 0.5, (1, 2): -0.8}, [1.0, 2.0, 0.5])
    assert causal_effect(chain, cov, 0, 2) == pytest.approx(-0.4)


def test_backdoor_adjustment_uses_parents_of_source():
    # confounder z -> x, z -> y plus x -> y: adjusting for pa(x) = {z}
    # recovers the direct weight
    weights = {(2, 0): 0.9, (2, 1): -0.6, (0, 1): 0.4}
    cov = sem_implied_covariance(3, weights, [1.0] * 3)
    dag = Dag(3, frozenset(weights))
    assert causal_effect(dag, cov, 0, 1) == pytest.approx(0.4)


def test_two_node_effect_matches_lstsq():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(300)
    y = 1.7 * x + rng.standard_normal(300)
    data = Dataset(["x", "y"], np.column_stack([x, y]))
    cov = sample_covariance(data)
    dag = Dag(2, frozenset({(0, 1)}))
    design = np.column_stack([x - x.mean(), np.ones_like(x)])
    slope = np.linalg.lstsq(design, y - y.mean(), rcond=None)[0][0]
    assert causal_effect(dag, cov, 0, 1) == pytest.approx(slope, abs=1e-10)


def test_effect_invariant_under_relabeling():
    weights = {(2, 0): 0.9, (2, 1): -0.6, (0, 1): 0.4}
    cov = sem_implied_covariance(3, weights, [1.0, 0.7, 1.3])
    dag = Dag(3, frozenset(weights))
    base = causal_effect(dag, cov, 0, 1)

    perm = [2, 0, 1]  # old label i becomes perm[i]
    relabeled = Dag(3, frozenset((perm[a], perm[b]) for a, b in weights))
    inv = np.argsort(perm)
    cov_perm = cov[np.ix_(inv, inv)]
    assert causal_effect(relabeled, cov_perm, perm[0], perm[1]) == pytest.approx(base)


def test_singular_regressors_raise():
    cov = np.ones((3, 3))
    dag = Dag(3, frozenset({(1, 0), (0, 2)}))
    with pytest.raises(DegenerateData):
        causal_effect(dag, cov, 0, 2)


def test_ida_singleton_class_has_one_value():
    cov = sem_implied_covariance(3, {(0, 2): 1.0, (1, 2): 1.0}, [1.0] * 3)
    collider = Dag(3, frozenset({(0, 2), (1, 2)}))
    cpdag = dag_to_cpdag(collider)
    assert cpdag.undirected == frozenset()
    values = ida_multiset(cpdag, cov, None, 0, 2)
    assert len(values) == 1
    assert values[0] == pytest.approx(causal_effect(collider, cov, 0, 2))


def test_ida_undirected_pair_yields_slope_and_zero():
    cov = sem_implied_covariance(2, {(0, 1): 0.7}, [1.0, 1.0])
    cpdag = Cpdag(2, frozenset(), frozenset({(0, 1)}))
    values = ida_multiset(cpdag, cov, None, 0, 1)
    # one orientation regresses y on x, the other makes y a parent of x
    assert sorted(values) == pytest.approx(sorted([cov[0, 1] / cov[0, 0], 0.0]))


def test_ida_class_size_matches_member_count():
    chain = Dag(3, frozenset({(0, 1), (1, 2)}))
    cov = sem_implied_covariance(3, {(0, 1): 1.0, (1, 2): 1.0}, [1.0] * 3)
    cpdag = dag_to_cpdag(chain)
    values = ida_multiset(cpdag, cov, None, 0, 2)
    assert len(values) == 3  # chain class has three members

    mask = ConstraintMask.empty(3).with_forbidden([(1, 0)])
    constrained = dag_to_cpdag(chain, mask)
    assert len(ida_multiset(constrained, cov, mask, 0, 2)) < 3


def _result(index, models):
    return SubsetResult(index, models)


def _model(n, arcs, cov_n, chi=1.0, bic=10.0, mask=None):
    dag = Dag(n, frozenset(arcs))
    fit = FitResult(chi, len(dag.arcs), bic, {}, (1.0,) * n)
    return ParetoModel(dag, fit, dag_to_cpdag(dag, mask))


def test_aggregate_median_and_standardization_identity():
    weights = {(0, 1): 1.0, (1, 2): 1.0}
    cov = sem_implied_covariance(3, weights, [1.0] * 3)
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((500, 3)) @ np.linalg.cholesky(cov).T
    data = Dataset(["a", "b", "c"], vals)

    mask = ConstraintMask.empty(3).with_forbidden([(1, 0), (2, 1), (2, 0)])
    model = _model(3, {(0, 1), (1, 2)}, 3, mask=mask)
    results = [_result(0, [model]), _result(1, [model])]
    covs = [cov, cov]

    out = aggregate_effects(results, covs, 2, [(0, 2)], data, mask)
    assert len(out) == 1
    est = out[0]
    # the constrained class is the chain alone, twice: median is the chain effect
    assert est.n_values == 2
    assert est.median == pytest.approx(1.0)
    sx, sy = np.std(vals[:, 0], ddof=1), np.std(vals[:, 2], ddof=1)
    assert est.standardized * sy == pytest.approx(est.median * sx, abs=1e-12)


def test_aggregate_skips_failed_subsets_and_respects_order():
    cov = sem_implied_covariance(2, {(0, 1): 0.5}, [1.0, 1.0])
    data = Dataset(["a", "b"], np.random.default_rng(1).standard_normal((50, 2)))
    mask = ConstraintMask.empty(2).with_forbidden([(1, 0)])
    model = _model(2, {(0, 1)}, 2, mask=mask)
    results = [_result(0, [model]), _result(1, None), _result(2, [model])]
    covs = [cov, None, 2.0 * cov]

    out = aggregate_effects(results, covs, 1, [(0, 1)], data, mask)
    assert out[0].n_values == 2
    # both covariances give the same regression slope (scaling cancels)
    assert out[0].median == pytest.approx(0.5)


def test_aggregate_falls_back_to_nearest_complexity(caplog):
    cov = sem_implied_covariance(2, {(0, 1): 0.5}, [1.0, 1.0])
    data = Dataset(["a", "b"], np.random.default_rng(2).standard_normal((50, 2)))
    mask = ConstraintMask.empty(2).with_forbidden([(1, 0)])
    results = [_result(0, [_model(2, {(0, 1)}, 2, mask=mask)])]

    with caplog.at_level(logging.WARNING, logger="stablesearch.effects"):
        out = aggregate_effects(results, [cov], 0, [(0, 1)], data, mask)
    assert "nearest populated complexity 1" in caplog.text
    assert out[0].median == pytest.approx(0.5)


def test_aggregate_empty_models_raise():
    data = Dataset(["a", "b"], np.random.default_rng(3).standard_normal((10, 2)))
    with pytest.raises(EmptyMultiset):
        aggregate_effects([_result(0, None)], [None], 0, [(0, 1)], data)


def test_discrete_endpoint_reports_no_standardized_value():
    cov = sem_implied_covariance(2, {(0, 1): 0.5}, [1.0, 1.0])
    cols = [Column("a", "discrete"), Column("b")]
    data = Dataset(cols, np.random.default_rng(4).standard_normal((50, 2)))
    mask = ConstraintMask.empty(2).with_forbidden([(1, 0)])
    results = [_result(0, [_model(2, {(0, 1)}, 2, mask=mask)])]
    out = aggregate_effects(results, [cov], 1, [(0, 1)], data, mask)
    assert out[0].standardized is None
    assert isinstance(out[0], EffectEstimate)
