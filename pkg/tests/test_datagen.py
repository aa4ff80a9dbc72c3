"""Prompt rendering, completion parsing, and batch generation behavior."""
import json

import pytest

from descsearch.datagen import (
    MAIN_PROMPT,
    MORE_ABSTRACT_PROMPT,
    ApiError,
    GenerationRecord,
    MissingBindingError,
    ParseFailure,
    PromptTemplate,
    ScriptedClient,
    StubCompletionClient,
    abstractify,
    generate_dataset,
    generate_instance,
    in_abstraction_subset,
    parse_completion,
    render_prompt,
    write_failures,
)

GOOD_JSON = json.dumps(
    {
        "good": ["g one", "g two", "g three", "g four", "g five"],
        "bad": ["b one", "b two", "b three", "b four", "b five"],
    }
)


class TestRenderPrompt:
    def test_main_contains_sentence_line(self):
        out = render_prompt(MAIN_PROMPT, {"sentence": "X"})
        assert "Sentence: X\n" in out

    def test_main_fixed_text_is_verbatim(self):
        out = render_prompt(MAIN_PROMPT, {"sentence": "X"})
        assert out.startswith("Let's write abstract descriptions of sentences. Example:\n")
        # the fixed example block, including its odd spacing and spelling
        assert "lent themselves to melodrama , \neven tragedy" in out
        assert "Some descriptions neeed to be abstract" in out
        assert "Output a json file with keys\n'good', 'bad'." in out
        assert out.endswith("Start your answer with a curly bracket.    ")

    def test_main_byte_stable(self):
        a = render_prompt(MAIN_PROMPT, {"sentence": "same input"})
        b = render_prompt(MAIN_PROMPT, {"sentence": "same input"})
        assert a == b

    def test_more_abstract_layout(self):
        out = render_prompt(MORE_ABSTRACT_PROMPT, {"sentence": "X", "description": "D"})
        assert "Description:  D \n" in out
        assert out.endswith("A very abstract description:")

    def test_more_abstract_exemplar_fixed(self):
        out = render_prompt(MORE_ABSTRACT_PROMPT, {"sentence": "X", "description": "D"})
        assert out.startswith(
            "Sentence: in spite of excellent pediatric health care , "
            "several educational problems could be\n"
            "noted in this tertiary pediatric center .\n"
        )
        assert (
            "A very abstract description: The provision of care at a specialized "
            "medical center was not\noptimal in one particular area, despite the "
            "presence of advanced resources." in out
        )

    def test_missing_binding_names_placeholder(self):
        template = PromptTemplate("t", "text {q} more")
        with pytest.raises(MissingBindingError, match="'q'"):
            render_prompt(template, {})

    def test_no_residual_placeholders(self):
        out = render_prompt(MORE_ABSTRACT_PROMPT, {"sentence": "s", "description": "d"})
        assert "{sentence}" not in out
        assert "{description}" not in out


class TestParseCompletion:
    def test_direct_object(self):
        good, bad = parse_completion('{"good":["a"],"bad":["b"]}')
        assert good == ["a"]
        assert bad == ["b"]

    def test_surrounding_noise_ignored(self):
        good, bad = parse_completion('noise {"good":["a"],"bad":["b"]} trailing')
        assert good == ["a"]
        assert bad == ["b"]

    def test_braces_inside_strings(self):
        good, bad = parse_completion('{"good":["a {b} c"],"bad":["d"]}')
        assert good == ["a {b} c"]

    def test_first_balanced_object_wins(self):
        good, _ = parse_completion('{"good":["first"],"bad":["x"]} {"good":["second"],"bad":["y"]}')
        assert good == ["first"]

    def test_unbalanced_brace_before_object(self):
        good, _ = parse_completion('{ oops {"good":["a"],"bad":["b"]}')
        assert good == ["a"]

    def test_no_object(self):
        with pytest.raises(ParseFailure, match="balanced"):
            parse_completion("just prose, no json here")

    def test_missing_keys(self):
        with pytest.raises(ParseFailure, match="keys"):
            parse_completion('{"good":["a"]}')

    def test_good_not_a_list(self):
        with pytest.raises(ParseFailure, match="'good'"):
            parse_completion('{"good": "a", "bad": ["b"]}')

    def test_non_string_elements(self):
        with pytest.raises(ParseFailure, match="'bad'"):
            parse_completion('{"good":["a"],"bad":[1,2]}')


class TestGenerateInstance:
    def test_happy_path(self):
        client = ScriptedClient([GOOD_JSON])
        record = generate_instance("the sun rose", client)
        assert record.status == "ok"
        assert len(record.parsed.valid_descriptions) == 5
        assert len(record.parsed.invalid_descriptions) == 5
        assert record.parsed.sentence == "the sun rose"

    def test_prose_completion_is_parse_failed(self):
        client = ScriptedClient(["sorry, I cannot produce json"])
        record = generate_instance("s", client)
        assert record.status == "parse_failed"
        assert record.parsed is None
        assert record.raw_completion == "sorry, I cannot produce json"

    def test_retries_then_success(self):
        client = ScriptedClient([ApiError("down"), ApiError("down"), GOOD_JSON])
        naps = []
        record = generate_instance("s", client, retries=3, backoff=0.5, sleep=naps.append)
        assert record.status == "ok"
        assert len(client.prompts) == 3
        assert naps == [0.5, 1.0]

    def test_retries_exhausted(self):
        client = ScriptedClient([ApiError("down")] * 3)
        record = generate_instance("s", client, retries=2, backoff=0.1, sleep=lambda _: None)
        assert record.status == "api_failed"
        assert len(client.prompts) == 3

    def test_excess_good_truncated_to_eight(self):
        payload = json.dumps({"good": [f"g{i}" for i in range(9)], "bad": ["b"] * 5})
        record = generate_instance("s", ScriptedClient([payload]))
        assert record.status == "ok"
        assert len(record.parsed.valid_descriptions) == 8

    def test_too_few_good_is_parse_failed(self):
        payload = json.dumps({"good": ["only", "four", "of", "them"], "bad": ["b"] * 5})
        record = generate_instance("s", ScriptedClient([payload]))
        assert record.status == "parse_failed"

    def test_excess_bad_truncated_to_five(self):
        payload = json.dumps({"good": ["g"] * 5, "bad": [f"b{i}" for i in range(7)]})
        record = generate_instance("s", ScriptedClient([payload]))
        assert record.status == "ok"
        assert len(record.parsed.invalid_descriptions) == 5


class TestAbstractify:
    def test_echo_stub(self):
        client = ScriptedClient(["MORE ABSTRACT"])
        assert abstractify("s", "d", client) == "MORE ABSTRACT"

    def test_whitespace_stripped(self):
        client = ScriptedClient(["  padded  \n"])
        assert abstractify("s", "d", client) == "padded"

    def test_prompt_carries_both_bindings(self):
        client = ScriptedClient(["x"])
        abstractify("the sky", "a color note", client)
        assert "Sentence: the sky\n" in client.prompts[0]
        assert "Description:  a color note \n" in client.prompts[0]


class TestAbstractionSubset:
    def test_deterministic(self):
        picks = [in_abstraction_subset(f"s{i}", seed=7) for i in range(500)]
        again = [in_abstraction_subset(f"s{i}", seed=7) for i in range(500)]
        assert picks == again

    def test_fraction_close_to_target(self):
        n = 20000
        hits = sum(in_abstraction_subset(f"sentence {i}", seed=0) for i in range(n))
        assert abs(hits / n - 0.143) < 0.01

    def test_seed_changes_selection(self):
        a = [in_abstraction_subset(f"s{i}", seed=0) for i in range(200)]
        b = [in_abstraction_subset(f"s{i}", seed=1) for i in range(200)]
        assert a != b


class TestGenerateDataset:
    def test_one_record_per_sentence_despite_failures(self):
        outcomes = [GOOD_JSON, "no json at all", ApiError("down"), ApiError("down"), GOOD_JSON]
        client = ScriptedClient(outcomes)
        records = generate_dataset(
            ["a", "b", "c", "d"],
            client,
            retries=1,
            sleep=lambda _: None,
            abstraction_fraction=0.0,
        )
        assert [r.status for r in records] == ["ok", "parse_failed", "api_failed", "ok"]
        assert [r.sentence for r in records] == ["a", "b", "c", "d"]

    def test_abstraction_appends_three_variants(self):
        sentence = "abstraction target"
        client = ScriptedClient([GOOD_JSON, " v1 ", "v2", "v3"])
        records = generate_dataset([sentence], client, abstraction_fraction=1.0)
        (record,) = records
        assert record.abstract_extras == ["v1", "v2", "v3"]
        assert len(record.parsed.valid_descriptions) == 8
        assert record.parsed.valid_descriptions[5:] == ("v1", "v2", "v3")

    def test_abstraction_failure_drops_all_extras(self):
        client = ScriptedClient([GOOD_JSON, "v1", ApiError("down")])
        records = generate_dataset(["s"], client, abstraction_fraction=1.0)
        (record,) = records
        assert record.status == "ok"
        assert record.abstract_extras == []
        assert len(record.parsed.valid_descriptions) == 5

    def test_extras_count_zero_or_three(self):
        # one instance selected, one not, one selected-but-failed
        client = StubCompletionClient(seed=4)
        sentences = [f"sentence number {i}" for i in range(40)]
        records = generate_dataset(sentences, client, abstraction_seed=11)
        assert all(len(r.abstract_extras) in (0, 3) for r in records)
        assert any(len(r.abstract_extras) == 3 for r in records)

    def test_parallel_output_preserves_input_order(self):
        sentences = [f"s {i}" for i in range(12)]
        records = generate_dataset(
            sentences, StubCompletionClient(), max_in_flight=4, abstraction_fraction=0.0
        )
        assert [r.sentence for r in records] == sentences

    def test_stub_pipeline_is_byte_reproducible(self):
        sentences = [f"unique sentence {i}" for i in range(25)]

        def snapshot():
            records = generate_dataset(
                sentences, StubCompletionClient(seed=3), abstraction_seed=5
            )
            return json.dumps(
                [
                    {
                        "sentence": r.sentence,
                        "status": r.status,
                        "valid": list(r.parsed.valid_descriptions) if r.parsed else None,
                        "invalid": list(r.parsed.invalid_descriptions) if r.parsed else None,
                    }
                    for r in records
                ]
            )

        assert snapshot() == snapshot()

    def test_ok_records_validate_as_instances(self):
        records = generate_dataset(
            [f"s {i}" for i in range(10)], StubCompletionClient(), abstraction_fraction=0.5
        )
        for r in records:
            assert r.status == "ok"
            assert r.parsed is not None
            assert 5 <= len(r.parsed.valid_descriptions) <= 8
            assert len(r.parsed.invalid_descriptions) == 5


class TestWriteFailures:
    def test_only_failures_written(self, tmp_path):
        records = [
            GenerationRecord("fine", "raw", None, status="ok"),
            GenerationRecord("broken", "prose", None, status="parse_failed"),
            GenerationRecord("down", "", None, status="api_failed"),
        ]
        path = tmp_path / "failures.jsonl"
        write_failures(records, path)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert [entry["sentence"] for entry in lines] == ["broken", "down"]
        assert lines[0]["status"] == "parse_failed"
        assert lines[1]["raw_completion"] == ""
