"""Deterministic synthetic patent corpus for smoke tests and demos.

The generator plants topical structure: each record draws most of its
abstract tokens from one topic's term pool, carries topic-correlated IPC
codes, inventors, assignees, and within-topic citations, so every pipeline
stage (bigrams, embeddings, similarity edges, indicators, evaluations) has
real signal to find. A small fraction of records violates the default
corpus filters or has an empty abstract to exercise those paths.
"""

from __future__ import annotations

import json

import numpy as np

from ._io import atomic_write

_SECTIONS = "ABCDEFGH"
_SUBCLASS_LETTERS = "KLMNPQRST"
_COUNTRY_SPLITS = [
    (("JP", 1.0),),
    (("US", 1.0),),
    (("DE", 1.0),),
    (("KR", 1.0),),
    (("FR", 1.0),),
    (("US", 0.5), ("JP", 0.5)),
    (("DE", 0.25), ("FR", 0.75)),
    (("KR", 0.4), ("JP", 0.6)),
    (("US", 0.75), ("GB", 0.25)),
]
_BACKGROUND = [
    "method", "device", "system", "apparatus", "unit", "module", "assembly",
    "process", "material", "component", "signal", "control", "means",
    "configured", "comprising", "wherein", "plurality", "provided", "invention",
    "relates", "improved", "arrangement", "structure", "surface", "portion",
]
_SYLLABLES = ["tor", "mag", "vel", "ion", "pex", "dur", "lam", "qui", "zon",
              "fer", "nix", "cal", "bru", "sel", "ond", "tra", "gim", "pol"]


def _topic_terms(topic: int, count: int = 40) -> list[str]:
    terms = []
    for i in range(count):
        a = _SYLLABLES[(topic * 5 + i) % len(_SYLLABLES)]
        b = _SYLLABLES[(topic * 3 + 2 * i + 1) % len(_SYLLABLES)]
        terms.append(f"{a}{b}{topic}{i % 7}")
    return terms


def _topic_pair(topic: int) -> tuple[str, str]:
    """A signature adjacent token pair, frequent enough to become a bigram."""
    return (f"core{topic}", f"stack{topic}")


def _ipc_for_topic(topic: int, rng: np.random.Generator) -> str:
    section = _SECTIONS[topic % len(_SECTIONS)]
    class_num = 10 + topic
    letters = _SUBCLASS_LETTERS[topic % len(_SUBCLASS_LETTERS)] + _SUBCLASS_LETTERS[(topic + 3) % len(_SUBCLASS_LETTERS)]
    subclass = letters[int(rng.integers(0, 2))]
    group = int(rng.choice([1, 7, 11]))
    subgroup = int(rng.choice([0, 2, 18]))
    return f"{section}{class_num:02d}{subclass} {group}/{subgroup:02d}"


def _abstract(topic_pool: list[str], pair: tuple[str, str], rng: np.random.Generator) -> str:
    # Each record draws from its own small subset of the topic pool so that
    # same-topic signatures are similar but not near-duplicates.
    subset = [topic_pool[i] for i in rng.choice(len(topic_pool), size=12, replace=False)]
    length = int(rng.integers(24, 42))
    words: list[str] = []
    if rng.random() < 0.6:
        words += ["the", "invention", "relates", "to"]
    while len(words) < length:
        roll = rng.random()
        if roll < 0.10:
            words.extend(pair)
        elif roll < 0.70:
            words.append(subset[int(rng.integers(0, len(subset)))])
        else:
            words.append(_BACKGROUND[int(rng.integers(0, len(_BACKGROUND)))])
    text = " ".join(words[:length])
    return text[0].upper() + text[1:] + "."


def generate_corpus(
    n_records: int = 1000,
    n_topics: int = 10,
    seed: int = 2024,
    year_range: tuple[int, int] = (1980, 2017),
) -> list[dict]:
    """Generate JSONL-ready record dicts; deterministic for a fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pools = [_topic_terms(t) for t in range(n_topics)]
    inventors = [[f"inventor-{t}-{i:02d}" for i in range(10)] for t in range(n_topics)]
    assignees = [[f"assignee-{t}-{i}" for i in range(4)] for t in range(n_topics)]
    # Skewed topic sizes (Zipf-like) so the smallest topics stay below the
    # default neighbor count and the similarity threshold actually prunes.
    weights = 1.0 / (np.arange(n_topics) + 1.0) ** 1.4
    weights[-1] *= 0.4
    weights /= weights.sum()

    records: list[dict] = []
    topics: list[int] = []
    for i in range(n_records):
        topic = int(rng.choice(n_topics, p=weights))
        topics.append(topic)
        year = int(rng.integers(year_range[0], year_range[1] + 1))
        roll = rng.random()
        if roll < 0.01:
            year = int(rng.integers(1975, 1980))
        elif roll < 0.02:
            year = int(rng.integers(2018, 2021))
        abstract = "" if rng.random() < 0.005 else _abstract(pools[topic], _topic_pair(topic), rng)
        ipc = [_ipc_for_topic(topic, rng)]
        if rng.random() < 0.4:
            ipc.append(_ipc_for_topic(topic, rng))
        if rng.random() < 0.15:
            ipc.append(_ipc_for_topic(int(rng.integers(0, n_topics)), rng))
        split = _COUNTRY_SPLITS[int(rng.integers(0, len(_COUNTRY_SPLITS)))]
        n_inventors = int(rng.integers(1, 4))
        chosen_inventors = sorted(
            inventors[topic][j] for j in rng.choice(10, size=n_inventors, replace=False)
        )
        records.append(
            {
                "id": f"P{100000 + i}",
                "abstract": abstract,
                "year": year,
                "granted": bool(rng.random() >= 0.03),
                "is_priority": bool(rng.random() >= 0.03),
                "ipc": sorted(set(ipc)),
                "country_shares": {c: s for c, s in split},
                "inventors": chosen_inventors,
                "assignees": [assignees[topic][int(rng.integers(0, 4))]],
                "citations": [],
            }
        )

    # Second pass: cite 0-3 earlier same-topic records.
    by_topic: dict[int, list[int]] = {}
    for i, topic in enumerate(topics):
        by_topic.setdefault(topic, []).append(i)
    for topic, members in by_topic.items():
        members_sorted = sorted(members, key=lambda i: (records[i]["year"], records[i]["id"]))
        for rank, i in enumerate(members_sorted):
            if rank == 0:
                continue
            n_cites = int(rng.integers(0, 4))
            if n_cites == 0:
                continue
            n_cites = min(n_cites, rank)
            picks = rng.choice(rank, size=n_cites, replace=False)
            records[i]["citations"] = sorted(records[members_sorted[p]]["id"] for p in picks)

    return records


def write_jsonl(records: list[dict], path) -> None:
    with atomic_write(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
