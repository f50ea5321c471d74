import itertools

import pytest

from rekbqa.synthetic import InfeasibleSpec, SyntheticSpec, generate_synthetic, write_synthetic


def brute_force_answers(kb, topic, path_names):
    """Enumerate every walk over the raw triple list that spells ``path_names``."""
    rel = [kb.relations[r] for r in path_names]
    found = set()
    for walk in itertools.product(kb.triples, repeat=len(rel)):
        if walk[0].head != topic:
            continue
        if any(t.relation != r for t, r in zip(walk, rel)):
            continue
        if any(walk[k].tail != walk[k + 1].head for k in range(len(walk) - 1)):
            continue
        found.add(walk[-1].tail)
    return found


def test_one_hop_answers_one_hop_away():
    kb, qs = generate_synthetic(SyntheticSpec(n_questions=60, hop_weights={1: 1.0}), seed=0)
    assert kb.n_entities == 200 and kb.n_relations == 20
    for q in qs:
        topic = kb.entities[q.topics[0]]
        assert len(q.path) == 1
        neighbours = {t for r, t in kb.out_index[topic]}
        assert {kb.entities[a] for a in q.answers} <= neighbours
        assert {kb.entities[a] for a in q.answers} == brute_force_answers(kb, topic, q.path)


def test_two_hop_gold_matches_enumeration():
    kb, qs = generate_synthetic(SyntheticSpec(n_questions=25, hop_weights={2: 1.0}), seed=3)
    for q in qs:
        assert len(q.path) == 2
        topic = kb.entities[q.topics[0]]
        assert {kb.entities[a] for a in q.answers} == brute_force_answers(kb, topic, q.path)


def test_split_and_fields():
    kb, qs = generate_synthetic(SyntheticSpec(n_questions=100), seed=1)
    counts = {s: sum(q.split == s for q in qs) for s in ("train", "valid", "test")}
    assert counts == {"train": 70, "valid": 10, "test": 20}
    assert len({(q.topics[0], tuple(q.path)) for q in qs}) == 100
    assert all(q.topics[0] not in q.answers for q in qs)


def test_seeded_bytes_identical(tmp_path):
    spec = SyntheticSpec(n_questions=50)
    write_synthetic(tmp_path / "a", spec, seed=7)
    write_synthetic(tmp_path / "b", spec, seed=7)
    for name in ("kb.tsv", "train.jsonl", "valid.jsonl", "test.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    write_synthetic(tmp_path / "c", spec, seed=8)
    assert (tmp_path / "a" / "train.jsonl").read_bytes() != (tmp_path / "c" / "train.jsonl").read_bytes()


def test_infeasible_specs():
    # the only relation maps films to people and nothing starts at a person
    with pytest.raises(InfeasibleSpec):
        generate_synthetic(SyntheticSpec(n_relations=1, hop_weights={2: 1.0}), seed=0)
    with pytest.raises(InfeasibleSpec):
        generate_synthetic(SyntheticSpec(n_relations=40), seed=0)
    with pytest.raises(InfeasibleSpec):
        generate_synthetic(SyntheticSpec(n_entities=5), seed=0)
