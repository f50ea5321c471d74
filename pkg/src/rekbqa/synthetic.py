"""Typed synthetic knowledge bases with templated multi-hop questions.

Gold answers come from exhaustive traversal of the relation path each
question was generated from.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kb import KnowledgeBase

# type name -> share of the entity budget
TYPES = {
    "person": 0.25, "film": 0.15, "city": 0.15, "country": 0.10, "organization": 0.10,
    "language": 0.05, "genre": 0.05, "award": 0.05, "university": 0.05, "mascot": 0.05,
}

# (relation surface, head type, tail type, tails per head, question phrases)
SCHEMA = [
    ("film.film.directed_by", "film", "person", 1, ["director", "person who directed"]),
    ("film.film.language", "film", "language", 1, ["language", "spoken language"]),
    ("film.film.genre", "film", "genre", 1, ["genre", "film genre"]),
    ("film.film.country", "film", "country", 1, ["country", "production country"]),
    ("people.person.nationality", "person", "country", 1, ["nationality", "national origin"]),
    ("people.person.place_of_birth", "person", "city", 1, ["place of birth", "birth place"]),
    ("people.person.employer", "person", "organization", 1, ["employer", "employing organization"]),
    ("people.person.education", "person", "university", 1, ["education", "school for education"]),
    ("people.person.spouse", "person", "person", 1, ["spouse", "married spouse"]),
    ("award.award.winner", "award", "person", 1, ["winner", "person who was the winner"]),
    ("location.location.containedby", "city", "country", 1, ["containing country", "country that contains"]),
    ("location.country.capital", "country", "city", 1, ["capital", "capital city"]),
    ("location.country.official_language", "country", "language", 1, ["official language", "national language"]),
    ("organization.organization.headquarters", "organization", "city", 1, ["headquarters", "headquarters city"]),
    ("organization.organization.founder", "organization", "person", 1, ["founder", "person who founded"]),
    ("education.university.location", "university", "city", 1, ["location", "city location"]),
    ("film.film.starring", "film", "person", 2, ["starring actor", "actor starring"]),
    ("music.genre.origin", "genre", "country", 1, ["origin", "country of origin"]),
    ("award.award.sponsor", "award", "organization", 1, ["sponsor", "sponsoring organization"]),
    ("education.university.mascot", "university", "mascot", 1, ["mascot", "team mascot"]),
]


class InfeasibleSpec(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n_entities: int = 200
    n_relations: int = 20
    n_questions: int = 500
    hop_weights: dict = field(default_factory=lambda: {1: 0.5, 2: 0.5})
    split: tuple = (0.7, 0.1, 0.2)


@dataclass
class SyntheticQuestion:
    qid: str
    question: str
    topics: list[str]
    answers: list[str]
    path: list[str]
    split: str

    def to_json(self) -> str:
        return json.dumps({"id": self.qid, "question": self.question, "topics": self.topics,
                           "answers": self.answers, "path": self.path, "hops": len(self.path)}, sort_keys=True)


def allocate(n: int, shares: dict[str, float]) -> dict[str, int]:
    raw = {k: max(1, int(n * v)) for k, v in shares.items()}
    leftover = n - sum(raw.values())
    for k in sorted(shares, key=shares.get, reverse=True):
        if leftover <= 0:
            break
        raw[k] += 1
        leftover -= 1
    return raw


def build_kb(spec: SyntheticSpec, rng: np.random.Generator):
    if not 1 <= spec.n_relations <= len(SCHEMA):
        raise InfeasibleSpec(f"n_relations must be in [1, {len(SCHEMA)}]")
    if spec.n_entities < 2 * len(TYPES):
        raise InfeasibleSpec(f"need at least {2 * len(TYPES)} entities")
    sizes = allocate(spec.n_entities, TYPES)
    names = {t: [f"{t}_{i}" for i in range(k)] for t, k in sizes.items()}
    schema = SCHEMA[: spec.n_relations]
    rows: list[tuple[str, str, str]] = []
    for rel, head_t, tail_t, fan, _ in schema:
        tails = names[tail_t]
        # round-robin over a shuffled tail list keeps every tail entity in use
        pool: list[str] = []
        for head in names[head_t]:
            chosen: list[str] = []
            while len(chosen) < fan:
                if not pool:
                    pool = list(rng.permutation(tails))
                cand = pool.pop()
                if cand != head and cand not in chosen:
                    chosen.append(cand)
                elif len(tails) <= fan:
                    break
            rows.extend((head, rel, tail) for tail in chosen)
    return rows, names, schema


def traverse(kb: KnowledgeBase, start: int, path: list[int]) -> set[int]:
    """Exhaustive forward traversal of a relation path."""
    frontier = {start}
    for rel in path:
        frontier = {t for e in frontier for r, t in kb.out_index.get(e, ()) if r == rel}
    return frontier


def relation_paths(schema, hops: int) -> list[list[int]]:
    paths = [[i] for i in range(len(schema))]
    for _ in range(hops - 1):
        paths = [p + [j] for p in paths for j in range(len(schema)) if schema[p[-1]][2] == schema[j][1]]
    return paths


def phrase_for(schema, path, rng) -> str:
    phrases = [schema[r][4][int(rng.integers(len(schema[r][4])))] for r in path]
    return " of the ".join(reversed(phrases))


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0):
    """Returns (KnowledgeBase, list of SyntheticQuestion)."""
    rng = np.random.default_rng(seed)
    rows, names, schema = build_kb(spec, rng)
    kb = KnowledgeBase.from_named_triples(rows)
    rel_ids = [kb.relations[s[0]] for s in schema]
    hops = sorted(spec.hop_weights)
    weights = np.array([spec.hop_weights[h] for h in hops], dtype=float)
    if weights.sum() <= 0:
        raise InfeasibleSpec("hop weights must be positive")
    weights /= weights.sum()
    paths_by_hop = {h: relation_paths(schema, h) for h in hops}
    for h, paths in paths_by_hop.items():
        if not paths:
            raise InfeasibleSpec(f"no relation path of length {h} exists in the schema")
    questions: list[SyntheticQuestion] = []
    seen: set[tuple] = set()
    attempts = 0
    while len(questions) < spec.n_questions:
        attempts += 1
        if attempts > 200 * spec.n_questions:
            raise InfeasibleSpec("could not generate enough distinct answerable questions")
        h = hops[int(rng.choice(len(hops), p=weights))]
        path = paths_by_hop[h][int(rng.integers(len(paths_by_hop[h])))]
        head_type = schema[path[0]][1]
        topic = names[head_type][int(rng.integers(len(names[head_type])))]
        key = (topic, tuple(path))
        if key in seen:
            continue
        tid = kb.entities[topic]
        gold = traverse(kb, tid, [rel_ids[r] for r in path])
        if not gold or tid in gold:
            continue
        seen.add(key)
        opener = ["what is the", "which is the", "name the"][int(rng.integers(3))]
        text = f"{opener} {phrase_for(schema, path, rng)} of {topic}?"
        questions.append(SyntheticQuestion(
            qid=f"q{len(questions):05d}", question=text, topics=[topic],
            answers=sorted(kb.entities.name(a) for a in gold),
            path=[schema[r][0] for r in path], split=""))
    order = rng.permutation(len(questions))
    n_train = int(round(spec.split[0] * len(questions)))
    n_valid = int(round(spec.split[1] * len(questions)))
    for rank, idx in enumerate(order):
        questions[idx].split = "train" if rank < n_train else "valid" if rank < n_train + n_valid else "test"
    return kb, questions


def write_synthetic(out_dir: str | Path, spec: SyntheticSpec = SyntheticSpec(), seed: int = 0):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kb, questions = generate_synthetic(spec, seed)
    kb.save(out / "kb.tsv")
    for split in ("train", "valid", "test"):
        with open(out / f"{split}.jsonl", "w", encoding="utf-8") as fh:
            for q in questions:
                if q.split == split:
                    fh.write(q.to_json() + "\n")
    return kb, questions
