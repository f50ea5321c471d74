import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rekbqa.kb import (KBParseError, KnowledgeBase, Subgraph, Triple, incidence_sets, load_kb, relation_orient,
                       surrounding_relation_matrix)

triple_lists = st.lists(
    st.tuples(st.sampled_from("abcdef"), st.sampled_from(["r1", "r2", "r3", "r4"]), st.sampled_from("abcdef")),
    min_size=1, max_size=25)


def test_load_counts(tmp_path):
    f = tmp_path / "kb.tsv"
    f.write_text("a\tr1\tb\nb\tr2\tc\na\tr1\tc\n")
    kb = load_kb(f)
    assert (kb.n_entities, kb.n_relations) == (3, 2)
    assert kb.entities.items == ["a", "b", "c"]


def test_arity_error_names_line(tmp_path):
    f = tmp_path / "kb.tsv"
    f.write_text("a\tr1\n")
    with pytest.raises(KBParseError, match=":1:"):
        load_kb(f)


def test_arity_error_later_line(tmp_path):
    f = tmp_path / "kb.tsv"
    f.write_text("a\tr1\tb\nb\tr2\tc\tx\n")
    with pytest.raises(KBParseError, match=":2:"):
        load_kb(f)


def test_empty_file_rejected(tmp_path):
    f = tmp_path / "kb.tsv"
    f.write_text("")
    with pytest.raises(KBParseError):
        load_kb(f)


def test_duplicate_triples_kept(tmp_path):
    text = "a\tr1\tb\na\tr1\tb\nb\tr2\tc\n"
    f = tmp_path / "kb.tsv"
    f.write_text(text)
    kb = load_kb(f)
    assert len(kb.triples) == 3
    assert kb.out_index[kb.entities["a"]].count((kb.relations["r1"], kb.entities["b"])) == 2
    # re-serialising reproduces the input, duplicates included
    assert kb.serialize() == text


@settings(max_examples=50, deadline=None)
@given(triple_lists)
def test_serialize_round_trip(tmp_path_factory, rows):
    kb = KnowledgeBase.from_named_triples(rows)
    f = tmp_path_factory.mktemp("kb") / "kb.tsv"
    kb.save(f)
    again = load_kb(f)
    assert sorted(again.serialize().splitlines()) == sorted("\t".join(r) for r in rows)


@settings(max_examples=50, deadline=None)
@given(triple_lists)
def test_indexes_invert_triples(rows):
    kb = KnowledgeBase.from_named_triples(rows)
    from_out = sorted((h, r, t) for h, pairs in kb.out_index.items() for r, t in pairs)
    from_in = sorted((h, r, t) for t, pairs in kb.in_index.items() for r, h in pairs)
    assert from_out == from_in == sorted(kb.triples)
    assert all(0 <= t.head < kb.n_entities and 0 <= t.relation < kb.n_relations for t in kb.triples)


def test_relation_orient_single_shared():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("b", "r2", "c")])
    assert relation_orient(kb) == {(0, 1): 1, (1, 0): 1}


def test_relation_orient_one_relation():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("b", "r1", "c")])
    assert relation_orient(kb) == {}


def test_relation_orient_hub():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("b", "r2", "c"), ("d", "r3", "b")])
    edges = {k for k in relation_orient(kb) if k[0] < k[1]}
    assert edges == {(0, 1), (0, 2), (1, 2)}


@settings(max_examples=60, deadline=None)
@given(triple_lists)
def test_relation_orient_matches_pairwise_intersection(rows):
    kb = KnowledgeBase.from_named_triples(rows)
    inc = incidence_sets(kb)
    expected = {}
    for i, j in itertools.permutations(range(kb.n_relations), 2):
        shared = len(inc[i] & inc[j])
        if shared:
            expected[(i, j)] = shared
    got = relation_orient(kb)
    assert got == expected
    assert all(got[(j, i)] == c for (i, j), c in got.items())


def _subgraph(kb, names, topics):
    return Subgraph.induced(kb, kb.entity_ids(names), kb.entity_ids(topics))


def test_w_c_one_hot_row():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("b", "r2", "c")])
    W = surrounding_relation_matrix(_subgraph(kb, "abc", "a"), kb.n_relations)
    np.testing.assert_array_equal(W[0], [1.0, 0.0])


def test_w_c_count_weighting():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("c", "r1", "a"), ("a", "r2", "d")])
    W = surrounding_relation_matrix(_subgraph(kb, "abcd", "a"), kb.n_relations)
    np.testing.assert_allclose(W[0], [2 / 3, 1 / 3], atol=1e-12)


def test_w_c_isolated_candidate_zero_row():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b"), ("c", "r2", "d")])
    W = surrounding_relation_matrix(_subgraph(kb, "abc", "a"), kb.n_relations)
    np.testing.assert_array_equal(W[2], [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(triple_lists, st.data())
def test_w_c_rows_normalised(rows, data):
    kb = KnowledgeBase.from_named_triples(rows)
    cand = data.draw(st.lists(st.integers(0, kb.n_entities - 1), min_size=1, unique=True))
    sg = Subgraph.induced(kb, cand, cand[:1])
    W = surrounding_relation_matrix(sg, kb.n_relations)
    sums = W.sum(1)
    nonzero = sums > 0
    np.testing.assert_allclose(sums[nonzero], 1.0, atol=1e-9)
    for i, e in enumerate(sg.candidates):
        touched = {r for h, r, t in sg.triples if e in (h, t)}
        assert set(np.nonzero(W[i])[0]) == touched


def test_subgraph_rejects_foreign_topic():
    with pytest.raises(ValueError):
        Subgraph((0, 1), (), (2,))
    with pytest.raises(ValueError):
        Subgraph((0, 1), (Triple(0, 0, 5),), (0,))


def test_entity_ids_unknown():
    kb = KnowledgeBase.from_named_triples([("a", "r1", "b")])
    with pytest.raises(KeyError, match="zzz"):
        kb.entity_ids(["zzz"])
