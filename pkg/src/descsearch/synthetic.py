"""Synthetic description/sentence corpora with controllable structure.

Each topic owns a pool of concepts. A sentence realizes a few concepts of
one topic in sentence-surface tokens ("w3c17"); a valid description
re-expresses a subset of that sentence's own concepts in a disjoint
description-surface vocabulary ("a3c17"); an invalid description uses
concepts from a different topic. The two surfaces share no tokens, so
keyword overlap between descriptions and sentences is zero by
construction and retrieval has to bridge the vocabularies, while gold
sentences remain identifiable inside their topic by concept overlap.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetSplit, TrainingInstance
from .seeding import mix_seed


@dataclass(frozen=True)
class SyntheticConfig:
    topics: int = 10
    concepts_per_topic: int = 40
    sentence_length: int = 8
    description_min: int = 4
    description_max: int = 5
    valid_per_instance: int = 5
    invalid_per_instance: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.sentence_length > self.concepts_per_topic:
            raise ValueError("sentence_length cannot exceed concepts_per_topic")
        if not 1 <= self.description_min <= self.description_max <= self.sentence_length:
            raise ValueError("description lengths must fit inside the sentence")
        if self.topics < 2:
            raise ValueError("need at least 2 topics for invalid descriptions")


def sentence_token(topic: int, concept: int) -> str:
    return f"w{topic}c{concept}"


def description_token(topic: int, concept: int) -> str:
    return f"a{topic}c{concept}"


def _make_instance(config: SyntheticConfig, rng: np.random.Generator,
                   instance_id: int, topic: int) -> TrainingInstance:
    concepts = rng.choice(config.concepts_per_topic, size=config.sentence_length,
                          replace=False)
    sentence = " ".join(sentence_token(topic, int(c)) for c in concepts)

    valid = []
    for _ in range(config.valid_per_instance):
        length = int(rng.integers(config.description_min, config.description_max + 1))
        chosen = rng.choice(concepts, size=length, replace=False)
        valid.append(" ".join(description_token(topic, int(c)) for c in chosen))

    invalid = []
    for _ in range(config.invalid_per_instance):
        other = int(rng.integers(0, config.topics - 1))
        if other >= topic:
            other += 1
        length = int(rng.integers(config.description_min, config.description_max + 1))
        chosen = rng.choice(config.concepts_per_topic, size=length, replace=False)
        invalid.append(" ".join(description_token(other, int(c)) for c in chosen))

    return TrainingInstance(
        id=instance_id,
        sentence=sentence,
        valid_descriptions=tuple(valid),
        invalid_descriptions=tuple(invalid),
    )


def make_instances(config: SyntheticConfig, count: int, stream: str,
                   id_offset: int = 0) -> list[TrainingInstance]:
    """Deterministic batch of instances; topics rotate so counts stay balanced.

    `stream` namespaces the randomness so train/eval/distractor draws
    never overlap even under one seed.
    """
    rng = np.random.default_rng(mix_seed("synthetic", config.seed, stream))
    return [
        _make_instance(config, rng, id_offset + i, i % config.topics)
        for i in range(count)
    ]


def make_training_split(config: SyntheticConfig, count: int) -> DatasetSplit:
    return DatasetSplit(name="train", instances=tuple(
        make_instances(config, count, stream="train")
    ))


@dataclass(frozen=True)
class EvalFixture:
    """Held-out queries plus the corpus they are answered against.

    corpus holds (id, sentence) for the gold sentences of every query and
    for the distractors; pairs holds (description, gold id).
    """

    pairs: tuple[tuple[str, int], ...]
    corpus: tuple[tuple[int, str], ...]


def make_eval_fixture(config: SyntheticConfig, queries: int = 100,
                      corpus_size: int = 1000) -> EvalFixture:
    if corpus_size < queries:
        raise ValueError("corpus must be at least as large as the query set")
    held_out = make_instances(config, queries, stream="eval")
    distractors = make_instances(
        config, corpus_size - queries, stream="distractor", id_offset=queries
    )
    pairs = tuple((inst.valid_descriptions[0], inst.id) for inst in held_out)
    corpus = tuple((inst.id, inst.sentence) for inst in held_out + distractors)
    return EvalFixture(pairs=pairs, corpus=corpus)
