"""Training-data schema and JSONL loading.

One instance couples a sentence with 5-8 valid descriptions and exactly 5
invalid (misleading) ones. The on-disk format is JSONL, one object per
line: {"sentence": ..., "good": [...], "bad": [...]}.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .seeding import mix_seed

SPLIT_NAMES = ("train", "dev", "test")

MIN_VALID, MAX_VALID = 5, 8
EXACT_INVALID = 5


class DatasetError(Exception):
    """Malformed training data."""


class CardinalityError(DatasetError):
    """Description counts outside the 5-8 valid / exactly-5 invalid bounds."""


@dataclass(frozen=True)
class TrainingInstance:
    id: int
    sentence: str
    valid_descriptions: tuple[str, ...]
    invalid_descriptions: tuple[str, ...]

    def __post_init__(self):
        if not self.sentence:
            raise DatasetError(f"instance {self.id}: empty sentence")
        n_good, n_bad = len(self.valid_descriptions), len(self.invalid_descriptions)
        if not MIN_VALID <= n_good <= MAX_VALID:
            raise CardinalityError(
                f"instance {self.id}: cardinality violation: "
                f"{n_good} valid descriptions (expected {MIN_VALID}-{MAX_VALID})"
            )
        if n_bad != EXACT_INVALID:
            raise CardinalityError(
                f"instance {self.id}: cardinality violation: "
                f"{n_bad} invalid descriptions (expected exactly {EXACT_INVALID})"
            )
        for kind, descs in (
            ("valid", self.valid_descriptions),
            ("invalid", self.invalid_descriptions),
        ):
            for d in descs:
                if not d:
                    raise DatasetError(f"instance {self.id}: empty {kind} description")
                if d == self.sentence:
                    raise DatasetError(
                        f"instance {self.id}: {kind} description identical to sentence"
                    )


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    instances: tuple[TrainingInstance, ...] = field(default=())

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise DatasetError(f"unknown split name {self.name!r}")
        for want, inst in enumerate(self.instances):
            if inst.id != want:
                raise DatasetError(
                    f"split {self.name}: ids must be dense 0..n-1, "
                    f"found {inst.id} at position {want}"
                )

    def __len__(self) -> int:
        return len(self.instances)


def _parse_record(obj, line_no: int) -> tuple[str, list[str], list[str]]:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: expected a JSON object")
    for key in ("sentence", "good", "bad"):
        if key not in obj:
            raise DatasetError(f"line {line_no}: missing key {key!r}")
    sentence, good, bad = obj["sentence"], obj["good"], obj["bad"]
    if not isinstance(sentence, str):
        raise DatasetError(f"line {line_no}: 'sentence' must be a string")
    for key, val in (("good", good), ("bad", bad)):
        if not isinstance(val, list) or not all(isinstance(x, str) for x in val):
            raise DatasetError(f"line {line_no}: {key!r} must be a list of strings")
    return sentence, good, bad


def load_split(path, name: str, lenient: bool = False) -> DatasetSplit:
    """Load a JSONL split; instances keep file order and get ids 0..n-1.

    lenient=True clips surplus descriptions (good to the first 8, bad to
    the first 5) instead of rejecting; shortfalls are still errors.
    """
    instances = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {line_no}: malformed JSON: {e.msg}") from e
            sentence, good, bad = _parse_record(obj, line_no)
            if lenient:
                good, bad = good[:MAX_VALID], bad[:EXACT_INVALID]
            try:
                instances.append(
                    TrainingInstance(
                        id=len(instances),
                        sentence=sentence,
                        valid_descriptions=tuple(good),
                        invalid_descriptions=tuple(bad),
                    )
                )
            except DatasetError as e:
                raise type(e)(f"line {line_no}: {e}") from e
    if not instances:
        raise DatasetError(f"empty file: {path}")
    return DatasetSplit(name=name, instances=tuple(instances))


def save_split(split: DatasetSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in split.instances:
            f.write(
                json.dumps(
                    {
                        "sentence": inst.sentence,
                        "good": list(inst.valid_descriptions),
                        "bad": list(inst.invalid_descriptions),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_split_sidecar(path) -> dict[str, DatasetSplit]:
    """Load every split named in a splits.json sidecar and check disjointness."""
    with open(path, encoding="utf-8") as f:
        mapping = json.load(f)
    splits: dict[str, DatasetSplit] = {}
    seen: dict[str, str] = {}
    for name, split_path in mapping.items():
        split = load_split(split_path, name)
        for inst in split.instances:
            if inst.sentence in seen:
                raise DatasetError(
                    f"sentence appears in splits {seen[inst.sentence]!r} and {name!r}: "
                    f"{inst.sentence[:60]!r}"
                )
            seen[inst.sentence] = name
        splits[name] = split
    return splits


def shuffle_epoch(split: DatasetSplit, seed: int, epoch: int) -> list[int]:
    """Deterministic per-epoch permutation of the split's instance ids."""
    if not split.instances:
        raise ValueError("cannot shuffle an empty split")
    rng = np.random.default_rng(mix_seed("shuffle", seed, epoch))
    return rng.permutation(len(split.instances)).tolist()
