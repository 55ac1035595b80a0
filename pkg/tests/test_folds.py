"""Fold moves: validation, quotients, and transition-matrix bookkeeping.

The load-bearing identity here is multiplicativity: the matrix of a composite
equals the ordered product of the factor matrices, and for chains whose folds
all keep natural vertices natural (folding-vertex valence >= 4) the product
also agrees with direct component counting on the composed image paths.  When
a natural vertex dies into a valence-2 point, two crossings can merge through
its image and the direct count drops below the product; the boundary case is
pinned as a regression test.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from foldtower import (
    FoldError,
    FoldSpec,
    GraphError,
    RandomFoldPolicy,
    SelfDartFold,
    TransitionMatrix,
    apply_fold,
    build_core_graph,
    check_no_backtracking,
    compose,
    count_crossings,
    transition_matrix,
    validate_fold,
)
from foldtower.folds import FULL, RankDrop, virtual_image_length


def theta():
    return build_core_graph({
        "vertices": ["u", "v"],
        "edges": [
            {"id": "a", "from": "u", "to": "v", "len": "1"},
            {"id": "b", "from": "u", "to": "v", "len": "1"},
            {"id": "c", "from": "u", "to": "v", "len": "1"},
        ],
    })


def gamma3():
    return build_core_graph({
        "vertices": ["o", "p", "q"],
        "edges": [
            {"id": "e1", "from": "o", "to": "p", "len": "1"},
            {"id": "e2", "from": "o", "to": "p", "len": "1"},
            {"id": "e3", "from": "o", "to": "q", "len": "1"},
            {"id": "e4", "from": "o", "to": "q", "len": "1"},
            {"id": "e5", "from": "p", "to": "q", "len": "1"},
        ],
    })


def darts_of(g, lab1, lab2, vertex):
    def toward(lab):
        e = g.natural_edge(lab)
        if e.start == vertex:
            return e.darts[0]
        assert e.end == vertex
        return e.darts[-1] ^ 1
    return toward(lab1), toward(lab2)


# -- single folds -----------------------------------------------------------------


def test_full_fold_merges_edges_and_vertices():
    g = gamma3()
    d1, d2 = darts_of(g, "e1", "e3", "o")
    f = apply_fold(g, FoldSpec("o", d1, d2, FULL))
    cod = f.codomain
    assert cod.rank == 3
    vals = sorted(cod.valence(v) for v in cod.vertices)
    assert vals == [3, 5]                 # o degraded, p and q merged
    ns = cod.natural_structure()
    assert sorted(ns.labels) == ["e2", "e4", "e5", "s"]
    M = transition_matrix(f)
    assert M.rows == ("e2", "e4", "e5", "s")
    assert M.entries == ((0, 1, 0, 0, 0),
                         (0, 0, 0, 1, 0),
                         (0, 0, 0, 0, 1),
                         (1, 0, 1, 0, 0))


def test_full_fold_of_a_bigon_drops_rank():
    g = theta()
    d1, d2 = darts_of(g, "a", "b", "u")
    with pytest.raises(RankDrop):
        apply_fold(g, FoldSpec("u", d1, d2, FULL))


def test_partial_fold_splits_a_vertex():
    g = theta()
    d1, d2 = darts_of(g, "a", "b", "u")
    f = apply_fold(g, FoldSpec("u", d1, d2, Fraction(1, 2)))
    ns = f.codomain.natural_structure()
    assert f.codomain.rank == 2
    assert len(ns.natural_edges) == 3
    assert sorted(e.length for e in ns.natural_edges) == [
        Fraction(1, 2), Fraction(1, 2), Fraction(3, 2)]
    M = transition_matrix(f)
    assert M.cols == ("a", "b", "c")
    assert sorted(M.rows) == sorted(ns.labels)


def test_fold_map_is_piecewise_isometric():
    # the image path of an edge has the same total length (with multiplicity)
    g = theta()
    d1, d2 = darts_of(g, "a", "b", "u")
    f = apply_fold(g, FoldSpec("u", d1, d2, Fraction(1, 3)))
    for E in g.natural_structure().natural_edges:
        img = f.path_image(E.darts)
        total = sum(f.codomain.dart_length(d) for d in img)
        assert total == E.length


def test_fold_errors():
    g = theta()
    d1, d2 = darts_of(g, "a", "b", "u")
    with pytest.raises(SelfDartFold):
        apply_fold(g, FoldSpec("u", d1, d1, FULL))
    with pytest.raises(FoldError):
        apply_fold(g, FoldSpec("v", d1, d2, FULL))   # darts live at u
    with pytest.raises(GraphError):
        apply_fold(g, FoldSpec("u", d1, d2, Fraction(5)))  # extent too long


def test_validate_fold_reports_strong_properness():
    g = gamma3()
    d1, d2 = darts_of(g, "e1", "e3", "o")
    rep = validate_fold(g, FoldSpec("o", d1, d2, Fraction(1, 2)))
    assert rep.axioms_ok
    assert rep.strongly_proper          # o has valence 4
    g2 = theta()
    e1, e2 = darts_of(g2, "a", "b", "u")
    rep2 = validate_fold(g2, FoldSpec("u", e1, e2, Fraction(1, 2)))
    assert rep2.axioms_ok
    assert not rep2.strongly_proper     # u has valence 3


def test_no_backtracking_on_single_folds():
    g = theta()
    d1, d2 = darts_of(g, "a", "b", "u")
    f = apply_fold(g, FoldSpec("u", d1, d2, Fraction(1, 2)))
    ok, witness = check_no_backtracking(f)
    assert ok and witness is None


def test_virtual_image_length_is_column_sum():
    g = gamma3()
    d1, d2 = darts_of(g, "e1", "e3", "o")
    f = apply_fold(g, FoldSpec("o", d1, d2, FULL))
    M = transition_matrix(f)
    for lab in M.cols:
        assert virtual_image_length(f, lab) == M.column_sum(lab)


# -- composites -------------------------------------------------------------------


def chain_maps(seed_graph, seed, depth, strongly_proper=False):
    """Random no-backtracking fold chain as a list of maps, deepest first."""
    seq = RandomFoldPolicy(seed_graph, seed=seed,
                           strongly_proper=strongly_proper).build(depth)
    return [seq.maps[k] for k in range(seq.depth, 0, -1)]


def composite_and_product(maps):
    comp = maps[0]
    prod = transition_matrix(maps[0])
    for f in maps[1:]:
        comp = compose(f, comp)
        prod = transition_matrix(f).matmul(prod)
    return comp, prod


def test_composite_matrix_equals_product_strongly_proper():
    maps = chain_maps(gamma3(), seed=3, depth=4, strongly_proper=True)
    comp, prod = composite_and_product(maps)
    ok, _ = check_no_backtracking(comp)
    assert ok
    assert transition_matrix(comp).entries == prod.entries
    assert count_crossings(comp).entries == prod.entries


def test_vertex_death_can_merge_crossings():
    # Regression pin: when a fold kills a natural vertex (valence 3 -> 2),
    # two crossings of a composite image can continue through its image and
    # the direct component count falls below the matrix product.  The product
    # is the bookkeeping object; the count is the geometry.
    maps = chain_maps(gamma3(), seed=7, depth=4, strongly_proper=False)
    comp, prod = composite_and_product(maps)
    ok, _ = check_no_backtracking(comp)
    assert ok
    assert transition_matrix(comp).entries == prod.entries     # by definition
    direct = count_crossings(comp)
    assert direct.entry("e5", "e1") == 1
    assert prod.entry("e5", "e1") == 2
    # the direct count never exceeds the product entrywise
    for i, r in enumerate(direct.rows):
        for k, c in enumerate(direct.cols):
            assert direct.entries[i][k] <= prod.entries[i][k]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), depth=st.integers(2, 5))
def test_multiplicativity_random_strongly_proper_chains(seed, depth):
    try:
        maps = chain_maps(gamma3(), seed=seed, depth=depth,
                          strongly_proper=True)
    except GraphError:
        return                              # generator stuck; nothing to test
    comp, prod = composite_and_product(maps)
    ok, _ = check_no_backtracking(comp)
    assert ok
    assert transition_matrix(comp).entries == prod.entries
    assert count_crossings(comp).entries == prod.entries


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), depth=st.integers(2, 5),
       rank3=st.booleans())
def test_product_definition_any_chain(seed, depth, rank3):
    # transition_matrix of a composite is the ordered factor product for any
    # chain, strongly proper or not
    g = gamma3() if rank3 else theta()
    try:
        maps = chain_maps(g, seed=seed, depth=depth)
    except GraphError:
        return
    comp, prod = composite_and_product(maps)
    assert transition_matrix(comp).entries == prod.entries
    assert transition_matrix(comp).rows == prod.rows
    assert transition_matrix(comp).cols == prod.cols


def test_identity_matrix_shapes():
    I = TransitionMatrix.identity(("a", "b", "c"))
    assert I.entries == ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    M = TransitionMatrix(("a", "b", "c"), ("a", "b", "c"),
                         ((2, 1, 2), (1, 1, 1), (3, 2, 4)))
    assert M.matmul(I).entries == M.entries
    assert I.matmul(M).entries == M.entries
