"""Towers of folds: generators, windows, audits, and the file round trip."""

import json
from fractions import Fraction

import pytest

from foldtower import (
    BacktrackingCreated,
    GeneratorStuck,
    LevelOutOfRange,
    RandomFoldPolicy,
    ScriptFold,
    ScriptedPairGenerator,
    SplitSequence,
    audit_expanding,
    audit_properness,
    audit_stabilization,
    audit_strong_properness,
    build_core_graph,
    extend_sequence,
    generator_from_descriptor,
    load_fixture,
    load_sequence,
    mingling_number,
    scan_full_mingling,
    scan_semi_normality,
    validate_periodicity,
    window_matrix,
)

M_AB = ((1, 0, 0), (0, 1, 0), (1, 1, 1))
M_BC = ((1, 1, 1), (0, 1, 0), (0, 0, 1))
M_CA = ((1, 0, 0), (1, 1, 1), (0, 0, 1))
P = ((2, 1, 2), (1, 1, 1), (3, 2, 4))


def theta_graph():
    return build_core_graph({
        "vertices": ["u", "v"],
        "edges": [
            {"id": "a", "from": "u", "to": "v", "len": "1"},
            {"id": "b", "from": "u", "to": "v", "len": "1"},
            {"id": "c", "from": "u", "to": "v", "len": "1"},
        ],
    })


# -- fixture windows ---------------------------------------------------------------


def test_theta_single_fold_matrices(theta12):
    mats = tuple(window_matrix(theta12, -k, -k + 1).matrix.entries
                 for k in (1, 2, 3))
    assert mats == (M_AB, M_BC, M_CA)


def test_theta_period_window_is_P(theta12):
    W = window_matrix(theta12, -3, 0)
    assert W.matrix.entries == P
    assert W.matrix.rows == ("a", "b", "c")
    assert W.positive


def test_window_is_ordered_product(theta12):
    W6 = window_matrix(theta12, -6, 0).matrix
    W3 = window_matrix(theta12, -3, 0).matrix
    W36 = window_matrix(theta12, -6, -3).matrix
    assert W3.matmul(W36).entries == W6.entries


def test_window_identity_and_errors(theta12):
    I = window_matrix(theta12, -2, -2).matrix
    assert all(I.entries[i][i] == 1 for i in range(3))
    with pytest.raises(LevelOutOfRange):
        window_matrix(theta12, 0, -3)


def test_mingling_number_reads_the_window(theta12):
    assert mingling_number(theta12, -3, "c", 0, "c") == 4
    assert mingling_number(theta12, -3, "a", 0, "c") == 3


def test_levels_respect_size_bounds(theta12, repeat8, rank3sp8):
    for seq in (theta12, repeat8, rank3sp8):
        n = seq.rank
        for k in range(seq.depth + 1):
            ns = seq.graphs[k].natural_structure()
            assert len(ns.natural_vertices) <= 2 * (n - 1)
            assert len(ns.natural_edges) <= 3 * (n - 1)


# -- generators --------------------------------------------------------------------


def test_scripted_generator_shallow_part_is_depth_independent():
    gen = ScriptedPairGenerator(
        [ScriptFold(("a", "b"), "1/2"), ScriptFold(("b", "c"), "1/2"),
         ScriptFold(("c", "a"), "1/2")],
        top_lengths={"a": 1, "b": 1, "c": 1}, periodic=True,
        allow_backtracking=True)
    s6, s9 = gen.build(6), gen.build(9)
    for k in range(7):
        a = {e.label: e.length
             for e in s6.graphs[k].natural_structure().natural_edges}
        b = {e.label: e.length
             for e in s9.graphs[k].natural_structure().natural_edges}
        assert a == b


def test_extend_sequence_deepens(theta12):
    deeper = extend_sequence(theta12, 3)
    assert deeper.depth == 15
    assert window_matrix(deeper, -3, 0).matrix.entries == P


def test_random_policy_is_deterministic():
    g = theta_graph()
    s1 = RandomFoldPolicy(g, seed=11).build(5)
    s2 = RandomFoldPolicy(theta_graph(), seed=11).build(5)
    for k in range(6):
        a = sorted(str(e.length)
                   for e in s1.graphs[k].natural_structure().natural_edges)
        b = sorted(str(e.length)
                   for e in s2.graphs[k].natural_structure().natural_edges)
        assert a == b


def test_strongly_proper_policy_needs_high_valence():
    with pytest.raises(GeneratorStuck):
        RandomFoldPolicy(theta_graph(), seed=0, strongly_proper=True).build(2)


def test_generator_stuck_without_generator(theta12):
    bare = SplitSequence(theta12.rank, theta12.graphs, theta12.maps,
                         generator=None, allow_backtracking=True)
    with pytest.raises(GeneratorStuck):
        extend_sequence(bare, 1)


# -- audits ------------------------------------------------------------------------


def test_theta_audit_battery(theta12):
    assert audit_properness(theta12, 12).status.verdict == "Verified"
    assert audit_strong_properness(theta12).status.verdict == "Violated"
    assert audit_stabilization(theta12, 12).status.verdict == "Verified"
    assert scan_full_mingling(theta12, 12).status.verdict == "Verified"
    assert audit_expanding(theta12, 12).status.verdict == "Verified"
    semi = scan_semi_normality(theta12, 12)
    assert semi.status.verdict == "Verified"
    cert = semi.evidence["certificate"]
    assert cert["d"] == 3
    assert cert["matrix"] == [list(r) for r in P]
    assert cert["exact"]


def test_repeat_expanding_violated_with_c_witness(repeat8):
    audit = audit_expanding(repeat8, 8)
    assert audit.status.verdict == "Violated"
    chain = audit.status.witness["edge_sequence"]
    assert [lab for _, lab in chain] == ["c"] * len(chain)
    assert audit.evidence["stable_core_candidate"] == ["c"]


def test_repeat_c_edge_strongly_mingles(repeat8):
    # the stable c-core is carried homeomorphically (its column is a unit
    # vector) while every deeper edge's image crosses it more and more often
    prev = 0
    for j in range(1, 9):
        M = window_matrix(repeat8, -j, 0).matrix
        assert M.column("c") == (0, 0, 1)
        row_c = M.entries[M.rows.index("c")]
        assert all(x >= 1 for x in row_c)
        assert M.entry("c", "a") > prev
        prev = M.entry("c", "a")


def test_rank3_strongly_proper_fixture(rank3sp8):
    assert audit_strong_properness(rank3sp8).status.verdict == "Verified"
    assert audit_properness(rank3sp8, 8).status.verdict == "Verified"
    assert audit_expanding(rank3sp8, 8).status.verdict == "Verified"


def test_mingling_verified_implies_expanding_not_violated(theta12, rank3sp8):
    for seq in (theta12, rank3sp8):
        if scan_full_mingling(seq, seq.depth).status.verdict == "Verified":
            assert audit_expanding(seq, seq.depth).status.verdict != "Violated"


def test_periodicity_validation(theta12, repeat8):
    ok, msg = validate_periodicity(theta12)
    assert ok, msg
    ok2, _ = validate_periodicity(repeat8)
    assert not ok2          # not periodic


# -- persistence -------------------------------------------------------------------


def test_save_load_round_trip(tmp_path, theta12):
    path = tmp_path / "tower.json"
    theta12.save(str(path))
    loaded = load_sequence(str(path))
    assert loaded.depth == theta12.depth
    assert loaded.rank == theta12.rank
    assert window_matrix(loaded, -3, 0).matrix.entries == P
    # generator descriptor round-trips into a working generator
    assert loaded.generator is not None
    assert extend_sequence(loaded, 2).depth == 14


def test_load_rejects_tampered_levels(tmp_path, theta12):
    path = tmp_path / "tower.json"
    theta12.save(str(path))
    data = json.loads(path.read_text())
    data["levels"][3]["graph"]["edges"][0]["len"] = "9/7"
    from foldtower import GraphError
    with pytest.raises(GraphError):
        load_sequence(data)


def test_load_rejects_wrong_rank(tmp_path, theta12):
    path = tmp_path / "tower.json"
    theta12.save(str(path))
    data = json.loads(path.read_text())
    data["rank"] = 5
    from foldtower import GraphError
    with pytest.raises(GraphError):
        load_sequence(data)


def test_descriptor_rehydration():
    gen = generator_from_descriptor({
        "kind": "scripted",
        "script": [{"pair": ["a", "b"], "extent": "2^-k"}],
        "top_lengths": {"a": "1", "b": "1", "c": "1"},
    })
    seq = gen.build(4)
    assert seq.depth == 4
    assert generator_from_descriptor({"kind": "random", "seed": 3}) is None
    assert generator_from_descriptor(None) is None


def test_backtracking_flag_enforced(theta12):
    with pytest.raises(BacktrackingCreated):
        SplitSequence(theta12.rank, theta12.graphs, theta12.maps,
                      allow_backtracking=False)
