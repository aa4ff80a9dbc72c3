import json

import pytest

from descsearch.dataset import (
    CardinalityError,
    DatasetError,
    DatasetSplit,
    TrainingInstance,
    load_split,
    load_split_sidecar,
    save_split,
    shuffle_epoch,
)


def record(sentence="S", good=None, bad=None):
    return {
        "sentence": sentence,
        "good": good if good is not None else ["a", "b", "c", "d", "e"],
        "bad": bad if bad is not None else ["f", "g", "h", "i", "j"],
    }


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


class TestLoadSplit:
    def test_minimal_record(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record()])
        split = load_split(p, "train")
        assert len(split) == 1
        inst = split.instances[0]
        assert inst.sentence == "S"
        assert len(inst.valid_descriptions) == 5
        assert len(inst.invalid_descriptions) == 5

    def test_ids_follow_file_order(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(f"s{i}") for i in range(3)])
        split = load_split(p, "dev")
        assert [i.id for i in split.instances] == [0, 1, 2]
        assert [i.sentence for i in split.instances] == ["s0", "s1", "s2"]

    def test_four_good_is_cardinality_violation(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(good=["a", "b", "c", "d"])])
        with pytest.raises(CardinalityError, match="cardinality violation"):
            load_split(p, "train")

    def test_nine_good_rejected_strict_but_clipped_lenient(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(good=[f"g{i}" for i in range(9)])])
        with pytest.raises(CardinalityError):
            load_split(p, "train")
        split = load_split(p, "train", lenient=True)
        assert len(split.instances[0].valid_descriptions) == 8

    def test_six_bad_rejected_strict_but_clipped_lenient(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(bad=[f"b{i}" for i in range(6)])])
        with pytest.raises(CardinalityError):
            load_split(p, "train")
        split = load_split(p, "train", lenient=True)
        assert len(split.instances[0].invalid_descriptions) == 5

    def test_malformed_json_reports_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps(record()) + "\n{oops\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="line 2"):
            load_split(p, "train")

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("", encoding="utf-8")
        with pytest.raises(DatasetError, match="empty file"):
            load_split(p, "train")

    def test_missing_key(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"sentence": "S", "good": ["a"] * 5}) + "\n")
        with pytest.raises(DatasetError, match="'bad'"):
            load_split(p, "train")

    def test_description_equal_to_sentence_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(good=["S", "b", "c", "d", "e"])])
        with pytest.raises(DatasetError, match="identical to sentence"):
            load_split(p, "train")

    def test_empty_description_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record(bad=["", "g", "h", "i", "j"])])
        with pytest.raises(DatasetError, match="empty invalid description"):
            load_split(p, "train")

    def test_unknown_split_name(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [record()])
        with pytest.raises(DatasetError, match="split name"):
            load_split(p, "validation")


class TestRoundTrip:
    def test_save_then_load_is_identical(self, tmp_path):
        src = tmp_path / "src.jsonl"
        write_jsonl(
            src,
            [
                record("première phrase", good=[f"g{i}" for i in range(7)]),
                record("second sentence"),
            ],
        )
        split = load_split(src, "test")
        out = tmp_path / "out.jsonl"
        save_split(split, out)
        reloaded = load_split(out, "test")
        assert reloaded == split


class TestSidecar:
    def test_loads_all_and_rejects_overlap(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(a, [record("only in train")])
        write_jsonl(b, [record("only in dev")])
        sidecar = tmp_path / "splits.json"
        sidecar.write_text(json.dumps({"train": str(a), "dev": str(b)}))
        splits = load_split_sidecar(sidecar)
        assert set(splits) == {"train", "dev"}

        write_jsonl(b, [record("only in train")])
        with pytest.raises(DatasetError, match="appears in splits"):
            load_split_sidecar(sidecar)


def make_split(n):
    return DatasetSplit(
        name="train",
        instances=tuple(
            TrainingInstance(
                id=i,
                sentence=f"sentence {i}",
                valid_descriptions=tuple(f"g{i}-{j}" for j in range(5)),
                invalid_descriptions=tuple(f"b{i}-{j}" for j in range(5)),
            )
            for i in range(n)
        ),
    )


class TestShuffleEpoch:
    def test_singleton(self):
        assert shuffle_epoch(make_split(1), seed=42, epoch=17) == [0]

    def test_deterministic(self):
        split = make_split(100)
        assert shuffle_epoch(split, 1, 0) == shuffle_epoch(split, 1, 0)

    def test_epochs_differ(self):
        split = make_split(1000)
        assert shuffle_epoch(split, 1, 0) != shuffle_epoch(split, 1, 1)

    def test_seeds_differ(self):
        split = make_split(1000)
        assert shuffle_epoch(split, 1, 0) != shuffle_epoch(split, 2, 0)

    def test_is_a_permutation_of_all_ids(self):
        split = make_split(257)
        for epoch in range(3):
            perm = shuffle_epoch(split, seed=9, epoch=epoch)
            assert sorted(perm) == list(range(257))
