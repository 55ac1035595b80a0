"""Measure-cone pipeline: weight equations, cone approximations, the
projective metric, the contraction bound, certificates, and transverse
measures."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from foldtower import (
    DimensionMismatch,
    NonExpandingSequence,
    NonPositiveMatrix,
    PointSpec,
    WeightVector,
    ZeroVector,
    certify_unique_ergodicity,
    check_weight_equations,
    cone_approximation,
    contraction_trace,
    delta_bound,
    edge_turn,
    evaluate_transverse_measure,
    load_fixture,
    perron_weights,
    projective_distance,
    veech_inequality_check,
    vertex_turn,
    window_matrix,
)

M_AB = ((1, 0, 0), (0, 1, 0), (1, 1, 1))
M_BC = ((1, 1, 1), (0, 1, 0), (0, 0, 1))
M_CA = ((1, 0, 0), (1, 1, 1), (0, 0, 1))
P = ((2, 1, 2), (1, 1, 1), (3, 2, 4))


def mv(M, v):
    return tuple(sum(Fraction(M[i][k]) * v[k] for k in range(3))
                 for i in range(3))


@pytest.fixture(scope="module")
def theta30():
    return load_fixture("THETA_CYCLE", 30)


# -- weight equations --------------------------------------------------------------


def test_hand_propagated_weights_have_zero_residuals(theta30):
    w3 = (Fraction(1),) * 3
    w2, w1 = mv(M_CA, w3), mv(M_BC, mv(M_CA, w3))
    w0 = mv(M_AB, w1)
    assert (w2, w1, w0) == ((1, 3, 1), (5, 3, 1), (5, 3, 9))
    wvs = [WeightVector(level=j, entries=dict(zip("abc", w)))
           for j, w in ((-3, w3), (-2, w2), (-1, w1), (0, w0))]
    rep = check_weight_equations(theta30, wvs)
    assert rep["ok"]
    assert all(r == 0 for res in rep["residuals"].values()
               for r in res.values())


def test_zero_weights_trivially_satisfy_equations(theta30):
    zeros = [WeightVector(level=j, entries={"a": 0, "b": 0, "c": 0})
             for j in range(-3, 1)]
    assert check_weight_equations(theta30, zeros)["ok"]


def test_broken_weights_are_flagged(theta30):
    bad = [WeightVector(level=-1, entries={"a": 1, "b": 1, "c": 1}),
           WeightVector(level=0, entries={"a": 1, "b": 1, "c": 2})]
    assert not check_weight_equations(theta30, bad)["ok"]


def test_non_contiguous_levels_rejected(theta30):
    wvs = [WeightVector(level=-3, entries={"a": 1, "b": 1, "c": 1}),
           WeightVector(level=-1, entries={"a": 1, "b": 1, "c": 1})]
    with pytest.raises(DimensionMismatch):
        check_weight_equations(theta30, wvs)


@settings(max_examples=40, deadline=None)
@given(w=st.tuples(*[st.integers(0, 50)] * 3), depth=st.integers(1, 6))
def test_pushed_forward_weights_always_satisfy_equations(theta30, w, depth):
    """Any nonnegative weight at the bottom, pushed up through the windows,
    satisfies every level equation exactly."""
    vec = tuple(Fraction(x) for x in w)
    wvs = [WeightVector(level=-depth, entries=dict(zip("abc", vec)))]
    for j in range(-depth, 0):
        M = window_matrix(theta30, j, j + 1).matrix
        prev = wvs[-1].entries
        nxt = {i: sum(M.entry(i, k) * prev[k] for k in M.cols)
               for i in M.rows}
        wvs.append(WeightVector(level=j + 1, entries=nxt))
    assert check_weight_equations(theta30, wvs)["ok"]


# -- cone approximation ------------------------------------------------------------


def test_depth_three_cone_generated_by_period_columns(theta30):
    ca = cone_approximation(theta30, 0, 3)
    cols = sorted(tuple(P[i][k] for i in range(3)) for k in range(3))
    assert sorted(tuple(g) for g in ca.generators) == cols
    assert ca.rank == 3


def test_depth_zero_cone_is_the_orthant(theta30):
    ca = cone_approximation(theta30, 0, 0)
    assert sorted(tuple(g) for g in ca.generators) == [
        (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert ca.rank == 3


def test_cone_ranks_never_increase_with_depth(theta30, repeat8):
    for seq in (theta30, repeat8):
        ranks = [cone_approximation(seq, 0, d).rank
                 for d in range(seq.depth + 1)]
        assert all(r2 <= r1 for r1, r2 in zip(ranks, ranks[1:]))


# -- projective distance -----------------------------------------------------------


def test_projective_distance_pins():
    assert abs(projective_distance((1, 0), (0, 1)) - math.sqrt(2)) < 1e-12
    assert projective_distance((2, 3, 5), (4, 6, 10)) == 0.0
    with pytest.raises(ZeroVector):
        projective_distance((0, 0), (1, 1))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_projective_distance_is_a_scale_invariant_metric(data):
    n = data.draw(st.integers(2, 4))
    coord = st.floats(0.01, 9.0, allow_nan=False)
    u = data.draw(st.tuples(*[coord] * n))
    v = data.draw(st.tuples(*[coord] * n))
    w = data.draw(st.tuples(*[coord] * n))
    s = data.draw(st.floats(0.1, 10.0))
    duv = projective_distance(u, v)
    assert duv == projective_distance(v, u)
    assert abs(projective_distance(tuple(s * x for x in u), v) - duv) < 1e-9
    assert duv <= projective_distance(u, w) + projective_distance(w, v) + 1e-9


def test_rank_one_matrix_collapses_distance():
    J = ((1, 1), (1, 1))
    for u, v in (((1, 7), (5, 2)), ((0.3, 0.3), (9, 0.1))):
        Ju = tuple(sum(J[i][k] * u[k] for k in range(2)) for i in range(2))
        Jv = tuple(sum(J[i][k] * v[k] for k in range(2)) for i in range(2))
        assert projective_distance(Ju, Jv) < 1e-15


# -- the delta bound ---------------------------------------------------------------


def test_delta_bound_pins():
    assert delta_bound(P).delta == 4
    assert delta_bound(((1, 1), (1, 1))).delta == 1
    assert delta_bound(((1, 0), (0, 1))).delta is None


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_delta_is_worst_line_ratio(data):
    n = data.draw(st.integers(2, 3))
    B = [[data.draw(st.integers(1, 9)) for _ in range(n)] for _ in range(n)]
    db = delta_bound(B)
    lines = [row for row in B] + [[B[i][k] for i in range(n)]
                                  for k in range(n)]
    assert db.delta == max(Fraction(max(v), min(v)) for v in lines)


# -- the contraction inequality ----------------------------------------------------


def test_rank_one_matrix_contracts_to_a_point():
    J = ((1, 1), (1, 1))
    for u, v in (((1, 7), (5, 2)), ((0.2, 4), (4, 0.2))):
        lhs, rhs, holds = veech_inequality_check(J, u, v)
        assert holds and abs(lhs) < 1e-12 and abs(rhs) < 1e-12


def test_equal_rays_give_zero_lhs():
    lhs, rhs, holds = veech_inequality_check(P, (1, 2, 3), (1, 2, 3))
    assert lhs == 0 and abs(rhs) < 1e-12 and holds


def test_zero_entry_matrix_refused():
    with pytest.raises(NonPositiveMatrix):
        veech_inequality_check(((1, 0), (0, 1)), (1, 1), (1, 2))


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_contraction_inequality_random(data):
    n = data.draw(st.integers(2, 4))
    B = [[data.draw(st.integers(1, 9)) for _ in range(n)] for _ in range(n)]
    coord = st.floats(0.001, 5.0, allow_nan=False)
    u = data.draw(st.tuples(*[coord] * n))
    v = data.draw(st.tuples(*[coord] * n))
    lhs, rhs, holds = veech_inequality_check(B, u, v, tol=1e-9)
    assert holds, (B, u, v, lhs, rhs)


# -- contraction traces ------------------------------------------------------------


def test_theta_trace_diameter_shrinks(theta30):
    tr = contraction_trace(theta30, 0, 30)
    by_depth = {s.depth: s for s in tr}
    assert abs(by_depth[0].diameter - math.sqrt(2)) < 1e-12
    win = [by_depth[d].diameter for d in (3, 6, 9, 12, 15)]
    assert all(b < a for a, b in zip(win, win[1:]))
    assert all(s.rank == 3 for s in tr)
    assert all(s2.diameter <= s1.diameter + 1e-12
               for s1, s2 in zip(tr, tr[1:]))


def test_repeat_trace_stalls_above_zero(repeat8):
    tr = contraction_trace(repeat8, 0, 8)
    assert all(s.rank == 3 for s in tr)
    assert tr[-1].diameter > 0.05


# -- certificates ------------------------------------------------------------------


def test_theta_certificate_is_exact(theta30):
    cert = certify_unique_ergodicity(theta30, 30)
    assert cert.status == "UniquelyErgodicExact"
    w = cert.evidence["semi_normality"]
    assert w["d"] == 3
    assert tuple(tuple(r) for r in w["matrix"]) == P
    assert cert.evidence["delta"] == 4
    assert cert.dim_bounds == (3, 3)
    assert cert.interpretation == "matrix-level"


def test_repeat_certificate_degrades_to_dimension_bounds(repeat8):
    cert = certify_unique_ergodicity(repeat8, 8)
    assert cert.status == "LowerBoundDim"
    assert cert.lower_bound == 3
    assert cert.dim_bounds == (3, 3)
    assert 1 <= cert.lower_bound <= cert.dim_bounds[0] <= cert.dim_bounds[1]


# -- Perron weights and transverse measures ----------------------------------------


def test_perron_weights_satisfy_equations_and_normalize(theta30):
    pw = perron_weights(theta30, 24)
    assert [x.level for x in pw] == list(range(-24, 1))
    assert check_weight_equations(theta30, pw)["ok"]
    assert sum(pw[-1].entries.values()) == 1


def test_edge_turn_measure_is_the_top_weight(theta30):
    pw = perron_weights(theta30, 24)
    I = edge_turn(0, "c", Fraction(5, 8), Fraction(7, 8))
    q = PointSpec(level=0, edge="c", pos=Fraction(3, 4))
    val, rem = evaluate_transverse_measure(theta30, pw, I, q, 10)
    assert val == pw[-1].entries["c"] and rem == 0


def test_persistent_vertex_turn_has_vanishing_remainder(theta30):
    pw = perron_weights(theta30, 24)
    g0 = theta30.graph(0)
    labs = {}
    for d in g0.darts_at("v"):
        labs.setdefault(g0.natural_edge_of_cell(d >> 1).label, d)
    I = vertex_turn(0, "v", labs["a"], labs["c"])
    qv = PointSpec(level=0, vertex="v")
    rows = [evaluate_transverse_measure(theta30, pw, I, qv, dep)
            for dep in range(4, 25, 4)]
    assert all(v == 0 for v, _ in rows)
    rems = [float(r) for _, r in rows]
    assert all(b <= a for a, b in zip(rems, rems[1:]))
    assert rems[-1] < 1e-6


def test_split_turn_value_agrees_across_basepoints(theta30):
    pw = perron_weights(theta30, 24)
    g0 = theta30.graph(0)
    split = [v for v in g0.natural_vertices() if v != "v"][0]
    labs = {}
    for d in g0.darts_at(split):
        labs.setdefault(g0.natural_edge_of_cell(d >> 1).label, d)
    I = vertex_turn(0, split, labs["a"], labs["c"])
    p1 = PointSpec(level=0, edge="a", pos=Fraction(1, 3))
    p2 = PointSpec(level=0, edge="c", pos=Fraction(2, 3))
    v1, r1 = evaluate_transverse_measure(theta30, pw, I, p1, 8)
    v2, r2 = evaluate_transverse_measure(theta30, pw, I, p2, 8)
    assert v1 == v2 and r1 == 0 and r2 == 0
    assert v1 == pw[-2].entries["a"]


def test_non_expanding_tower_refused(repeat8):
    pw = perron_weights(repeat8, 8)
    with pytest.raises(NonExpandingSequence):
        evaluate_transverse_measure(
            repeat8, pw,
            edge_turn(0, "c", Fraction(1, 8), Fraction(3, 8)),
            PointSpec(level=0, edge="c", pos=Fraction(1, 4)), 8)
