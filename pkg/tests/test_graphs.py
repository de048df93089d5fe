import itertools

import numpy as np
import pytest

from oracles import (
    all_dag_arcsets,
    class_key,
    equivalence_class,
    oracle_reachability,
    union_orientation,
)
from stablesearch.errors import (
    ConstraintViolation,
    ExtensionCapExceeded,
    NoExtension,
)
from stablesearch.graphs import (
    ConstraintMask,
    Cpdag,
    Dag,
    dag_to_cpdag,
    enumerate_extensions,
    has_directed_path,
    is_acyclic,
    repair_arcs,
    repair_to_dag,
    to_dot,
)


def as_pattern(cpdag):
    return (frozenset(cpdag.directed), frozenset(cpdag.undirected))


def test_is_acyclic_basic():
    assert is_acyclic(3, set())
    assert not is_acyclic(3, {(0, 1), (1, 2), (2, 0)})
    assert is_acyclic(3, {(0, 1), (0, 2), (1, 2)})


def test_dag_rejects_cycles_and_self_loops():
    with pytest.raises(ValueError):
        Dag(2, frozenset({(0, 1), (1, 0)}))
    with pytest.raises(ValueError):
        Dag(2, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        Dag(2, frozenset({(0, 2)}))


def test_mask_diagonal_and_immutability():
    mask = ConstraintMask.empty(3)
    assert not mask.allows(0, 0)
    assert mask.allows(0, 1)
    with pytest.raises(ValueError):
        mask.forbidden[0, 1] = True
    harder = mask.with_forbidden([(0, 1)])
    assert harder.allows(1, 0) and not harder.allows(0, 1)
    assert mask.allows(0, 1)  # original untouched


def test_repair_two_cycle_reaches_both_outcomes():
    seen = set()
    for seed in range(40):
        rng = np.random.default_rng(seed)
        arcs = repair_arcs(2, {(0, 1), (1, 0)}, None, rng)
        assert arcs in (frozenset({(0, 1)}), frozenset({(1, 0)}))
        seen.add(arcs)
    assert len(seen) == 2


def test_repair_drops_forbidden_arcs():
    mask = ConstraintMask.empty(2).with_forbidden([(0, 1)])
    dag = repair_to_dag({(0, 1)}, mask, np.random.default_rng(0))
    assert dag.arcs == frozenset()


def test_repair_keeps_valid_dag_intact():
    rng = np.random.default_rng(7)
    universe = all_dag_arcsets(4)
    mask = ConstraintMask.empty(4)
    for arcs in universe[::17]:
        assert repair_arcs(4, arcs, mask, rng) == arcs


def test_repair_always_returns_mask_respecting_dag():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        raw = {
            (a, b)
            for a in range(n)
            for b in range(n)
            if a != b and rng.random() < 0.5
        }
        forbidden = rng.random((n, n)) < 0.2
        mask = ConstraintMask(n, forbidden)
        dag = repair_to_dag(raw, mask, rng)
        assert is_acyclic(n, dag.arcs)
        assert all(mask.allows(a, b) for a, b in dag.arcs)
        assert dag.arcs <= {(a, b) for a in range(n) for b in range(n) if a != b}


def test_empty_dag_converts_to_empty_cpdag():
    out = dag_to_cpdag(Dag(4, frozenset()))
    assert out.directed == frozenset() and out.undirected == frozenset()


def test_complete_dag_converts_to_fully_undirected():
    for n in (2, 3, 4, 5):
        arcs = frozenset((a, b) for a in range(n) for b in range(a + 1, n))
        out = dag_to_cpdag(Dag(n, arcs))
        assert out.directed == frozenset()
        assert out.undirected == frozenset(
            (a, b) for a in range(n) for b in range(a + 1, n)
        )


def test_chain_and_collider_patterns_match_union_oracle():
    universe = all_dag_arcsets(3)

    chain = frozenset({(0, 1), (1, 2)})
    expect = union_orientation(equivalence_class(3, chain, universe))
    assert expect == (frozenset(), frozenset({(0, 1), (1, 2)}))
    assert as_pattern(dag_to_cpdag(Dag(3, chain))) == expect

    collider = frozenset({(0, 2), (1, 2)})
    expect = union_orientation(equivalence_class(3, collider, universe))
    assert expect == (frozenset({(0, 2), (1, 2)}), frozenset())
    assert as_pattern(dag_to_cpdag(Dag(3, collider))) == expect


def test_forbidden_reversal_keeps_arc_directed():
    mask = ConstraintMask.empty(2).with_forbidden([(1, 0)])
    out = dag_to_cpdag(Dag(2, frozenset({(0, 1)})), mask)
    assert out.directed == frozenset({(0, 1)}) and out.undirected == frozenset()


def test_conversion_rejects_forbidden_input_arc():
    mask = ConstraintMask.empty(2).with_forbidden([(0, 1)])
    with pytest.raises(ConstraintViolation):
        dag_to_cpdag(Dag(2, frozenset({(0, 1)})), mask)


def test_equivalence_partition_matches_oracle_on_three_nodes():
    universe = all_dag_arcsets(3)
    assert len(universe) == 25
    for x, y in itertools.combinations(universe, 2):
        same_class = class_key(x) == class_key(y)
        same_cpdag = as_pattern(dag_to_cpdag(Dag(3, x))) == as_pattern(
            dag_to_cpdag(Dag(3, y))
        )
        assert same_class == same_cpdag


def test_unconstrained_pattern_equals_union_orientation_four_nodes():
    universe = all_dag_arcsets(4)
    assert len(universe) == 543
    rng = np.random.default_rng(11)
    for i in rng.choice(len(universe), size=60, replace=False):
        arcs = universe[i]
        expect = union_orientation(equivalence_class(4, arcs, universe))
        assert as_pattern(dag_to_cpdag(Dag(4, arcs))) == expect


def test_constrained_pattern_equals_union_over_allowed_members():
    rng = np.random.default_rng(5)
    universe = all_dag_arcsets(4)
    checked = 0
    while checked < 120:
        arcs = universe[int(rng.integers(len(universe)))]
        forbidden = rng.random((4, 4)) < 0.25
        for a, b in arcs:
            forbidden[a, b] = False  # the input must stay legal
        mask = ConstraintMask(4, forbidden)
        out = dag_to_cpdag(Dag(4, arcs), mask)
        members = equivalence_class(4, arcs, universe, forbidden=mask.forbidden)
        assert arcs in members
        assert as_pattern(out) == union_orientation(members)
        # mask invariants
        for a, b in out.directed:
            assert mask.allows(a, b)
        for a, b in out.undirected:
            assert mask.allows(a, b) and mask.allows(b, a)
        checked += 1


def test_has_directed_path_examples():
    chain = Dag(3, frozenset({(0, 1), (1, 2)}))
    assert has_directed_path(chain, 0, 2)
    assert not has_directed_path(chain, 2, 0)
    und = Cpdag(2, frozenset(), frozenset({(0, 1)}))
    assert not has_directed_path(und, 0, 1)
    assert not has_directed_path(Dag(4, frozenset()), 0, 3)


def test_has_directed_path_matches_matrix_closure():
    rng = np.random.default_rng(2)
    for _ in range(80):
        n = 6
        raw = {
            (a, b)
            for a in range(n)
            for b in range(n)
            if a != b and rng.random() < 0.25
        }
        arcs = repair_arcs(n, raw, None, rng)
        reach = oracle_reachability(n, arcs)
        g = Dag(n, arcs)
        for a in range(n):
            for b in range(n):
                if a != b:
                    assert has_directed_path(g, a, b) == reach[a, b]


def test_enumerate_single_edge_and_directed_only():
    two = enumerate_extensions(Cpdag(2, frozenset(), frozenset({(0, 1)})))
    assert {d.arcs for d in two} == {frozenset({(0, 1)}), frozenset({(1, 0)})}

    fixed = Cpdag(3, frozenset({(0, 2), (1, 2)}), frozenset())
    out = enumerate_extensions(fixed)
    assert len(out) == 1 and out[0].arcs == frozenset({(0, 2), (1, 2)})


def test_enumerate_path_has_three_members():
    # brute force over the 4 orientations of 0-1-2: only the collider at 1 drops
    legal = []
    for o1 in ((0, 1), (1, 0)):
        for o2 in ((1, 2), (2, 1)):
            arcs = frozenset({o1, o2})
            if (0, 1) in arcs and (2, 1) in arcs:
                continue  # collider introduces a new v-structure
            legal.append(arcs)
    assert len(legal) == 3

    path = Cpdag(3, frozenset(), frozenset({(0, 1), (1, 2)}))
    out = enumerate_extensions(path)
    assert {d.arcs for d in out} == set(legal)


def test_enumerate_is_deterministic():
    pattern = Cpdag(4, frozenset(), frozenset({(0, 1), (1, 2), (2, 3)}))
    first = [d.arcs for d in enumerate_extensions(pattern)]
    second = [d.arcs for d in enumerate_extensions(pattern)]
    assert first == second


def test_enumerate_cap_and_empty_class():
    path = Cpdag(3, frozenset(), frozenset({(0, 1), (1, 2)}))
    with pytest.raises(ExtensionCapExceeded):
        enumerate_extensions(path, cap=2)

    square = Cpdag(4, frozenset(), frozenset({(0, 1), (1, 2), (2, 3), (0, 3)}))
    with pytest.raises(NoExtension):
        enumerate_extensions(square)


def test_enumerate_respects_mask():
    pattern = Cpdag(2, frozenset(), frozenset({(0, 1)}))
    mask = ConstraintMask.empty(2).with_forbidden([(1, 0)])
    out = enumerate_extensions(pattern, mask)
    assert [d.arcs for d in out] == [frozenset({(0, 1)})]


def test_roundtrip_every_small_dag_is_in_its_own_class():
    for n in (2, 3, 4):
        universe = all_dag_arcsets(n)
        for arcs in universe:
            cp = dag_to_cpdag(Dag(n, arcs))
            members = {d.arcs for d in enumerate_extensions(cp)}
            assert arcs in members
            # the enumerated class is exactly the oracle class
            assert members == set(equivalence_class(n, arcs, universe))


def test_to_dot_format():
    dag = Dag(2, frozenset({(0, 1)}), labels=("a", "b"))
    text = to_dot(dag)
    assert '"a" -> "b";' in text

    cp = Cpdag(2, frozenset(), frozenset({(0, 1)}), labels=("a", "b"))
    text = to_dot(cp)
    assert '"a" -- "b" [dir=none];' in text

    annotated = to_dot(cp, edge_labels={(0, 1): "1/0.71"})
    assert '"a" -- "b" [dir=none, label="1/0.71"];' in annotated
    annotated = to_dot(dag, edge_labels={(0, 1): "0.9/0.5"})
    assert '"a" -> "b" [label="0.9/0.5"];' in annotated
