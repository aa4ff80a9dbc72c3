"""Builds training instances by prompting a completion API.

Two prompt passes: the main prompt asks for 5 good and 5 bad descriptions
of a sentence as JSON; a second pass re-prompts a deterministic subset of
instances for more abstract variants of their first three valid
descriptions. Completions are parsed leniently (first balanced JSON
object) and every failure is recorded rather than raised, so a batch run
over N sentences always yields N records.
"""
from __future__ import annotations

import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .dataset import MAX_VALID, EXACT_INVALID, TrainingInstance

# Prompt text is reproduced verbatim, spelling and spacing included
# (several lines carry significant trailing spaces, hence the explicit
# per-line form): downstream completions were collected against these
# exact bytes.
MAIN_TEMPLATE = (
    "Let's write abstract descriptions of sentences. Example:\n"
    "\n"
    "Sentence: Pilate 's role in the events leading to the crucifixion lent"
    " themselves to melodrama , \n"
    "even tragedy , and Pilate often has a role in medieval mystery plays .\n"
    "\n"
    "Description: A description of a historical religious figure's involvement"
    " in a significant\n"
    "event and its later portrayal in art.\n"
    "\n"
    "Note: Descriptions can differ in the level of abstraction, granularity"
    " and the part \n"
    "of the sentence they focus on. Some descriptions neeed to be abstract,"
    " while others should\n"
    "be concrete and detailed.\n"
    "\n"
    "For the following sentence, write up 5 good and stand-alone, independent"
    " descriptions and 5\n"
    "bad descriptions (which may be related, but are clearly wrong). Output"
    " a json file with keys\n"
    "'good', 'bad'.\n"
    "\n"
    "Sentence: {sentence}\n"
    "\n"
    "Start your answer with a curly bracket.    "
)

MORE_ABSTRACT_TEMPLATE = (
    "Sentence: in spite of excellent pediatric health care , several"
    " educational problems could be\n"
    "noted in this tertiary pediatric center .\n"
    "\n"
    "Description: Despite having advanced healthcare resources, certain"
    " deficiencies in education\n"
    "were identified at a medical center that serves children.\n"
    "\n"
    "A very abstract description: The provision of care at a specialized"
    " medical center was not\n"
    "optimal in one particular area, despite the presence of advanced"
    " resources.\n"
    "\n"
    "Sentence: {sentence}\n"
    "\n"
    "Description:  {description} \n"
    "\n"
    "A very abstract description:"
)

ABSTRACTION_FRACTION = 0.143
ABSTRACT_PER_INSTANCE = 3

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    template: str


MAIN_PROMPT = PromptTemplate("main", MAIN_TEMPLATE)
MORE_ABSTRACT_PROMPT = PromptTemplate("more_abstract", MORE_ABSTRACT_TEMPLATE)


class MissingBindingError(KeyError):
    pass


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every {name} placeholder; unbound names are an error."""

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingBindingError(f"template {template.name!r}: missing binding {name!r}")
        return bindings[name]

    return _PLACEHOLDER.sub(substitute, template.template)


class ParseFailure(ValueError):
    pass


def parse_completion(raw: str) -> tuple[list[str], list[str]]:
    """Extract good/bad description lists from the first balanced JSON object.

    Completions may carry leading prose or trailing junk around the object.
    Raises ParseFailure (never anything else) on malformed input.
    """
    decoder = json.JSONDecoder()
    obj = None
    for start in range(len(raw)):
        if raw[start] != "{":
            continue
        try:
            candidate, _ = decoder.raw_decode(raw, start)
        except ValueError:
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
    if obj is None:
        raise ParseFailure("no balanced JSON object in completion")
    if "good" not in obj or "bad" not in obj:
        raise ParseFailure("completion object lacks 'good'/'bad' keys")
    good, bad = obj["good"], obj["bad"]
    for name, values in (("good", good), ("bad", bad)):
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise ParseFailure(f"'{name}' is not an array of strings")
    return list(good), list(bad)


class ApiError(RuntimeError):
    """Transient completion-API failure; batch callers retry or record it."""


class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpCompletionClient:
    """Minimal JSON-over-HTTP completion client (davinci-style schema)."""

    def __init__(self, endpoint, token, model, temperature=0.7, max_tokens=1024, timeout=60.0):
        self.endpoint = endpoint
        self.token = token
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        import requests

        try:
            resp = requests.post(
                self.endpoint,
                json={
                    "model": self.model,
                    "prompt": prompt,
                    "temperature": self.temperature,
                    "max_tokens": self.max_tokens,
                },
                headers={"Authorization": f"Bearer {self.token}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ApiError(f"completion request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ApiError(f"completion endpoint returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["text"]
        except (ValueError, KeyError, IndexError) as exc:
            raise ApiError(f"unexpected completion response shape: {exc}") from exc


class ScriptedClient:
    """Test double that replays canned outcomes and records every prompt.

    Each outcome is either a string (returned) or an exception (raised).
    """

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if not self.outcomes:
            raise AssertionError("scripted client ran out of outcomes")
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


class StubCompletionClient:
    """Offline deterministic stand-in for the hosted API.

    Derives plausible-shaped descriptions from a hash of the sentence so
    repeated runs are byte-identical.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _words(self, sentence: str, salt: str, n: int) -> list[str]:
        digest = hashlib.blake2b(
            f"{self.seed}|{salt}|{sentence}".encode(), digest_size=8 * n
        ).hexdigest()
        return [digest[i * 8 : i * 8 + 8] for i in range(n)]

    def complete(self, prompt: str) -> str:
        sentence = prompt.rsplit("Sentence: ", 1)[1].split("\n")[0].strip()
        if prompt.endswith("A very abstract description:"):
            (w,) = self._words(sentence, "abstract", 1)
            return f" A broad statement about {w}."
        good = [f"a note about {w}" for w in self._words(sentence, "good", 5)]
        bad = [f"an unrelated claim about {w}" for w in self._words(sentence, "bad", 5)]
        return json.dumps({"good": good, "bad": bad})


@dataclass
class GenerationRecord:
    sentence: str
    raw_completion: str
    parsed: TrainingInstance | None
    abstract_extras: list[str] = field(default_factory=list)
    status: str = "ok"


def generate_instance(
    sentence: str,
    client: CompletionClient,
    retries: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationRecord:
    """One main-prompt round trip, with exponential backoff on API errors."""
    prompt = render_prompt(MAIN_PROMPT, {"sentence": sentence})
    raw = None
    for attempt in range(retries + 1):
        try:
            raw = client.complete(prompt)
            break
        except ApiError:
            if attempt == retries:
                return GenerationRecord(sentence, "", None, status="api_failed")
            sleep(backoff * 2**attempt)
    try:
        good, bad = parse_completion(raw)
        instance = TrainingInstance(
            id=0,
            sentence=sentence,
            valid_descriptions=tuple(good[:MAX_VALID]),
            invalid_descriptions=tuple(bad[:EXACT_INVALID]),
        )
    except Exception:
        return GenerationRecord(sentence, raw, None, status="parse_failed")
    return GenerationRecord(sentence, raw, instance)


def abstractify(sentence: str, description: str, client: CompletionClient) -> str:
    prompt = render_prompt(
        MORE_ABSTRACT_PROMPT, {"sentence": sentence, "description": description}
    )
    return client.complete(prompt).strip()


def in_abstraction_subset(sentence: str, seed: int, fraction: float = ABSTRACTION_FRACTION) -> bool:
    """Seeded-hash membership test so the re-prompted subset is reproducible."""
    digest = hashlib.blake2b(f"{seed}|{sentence}".encode(), digest_size=8).digest()
    bucket = int.from_bytes(digest, "little") / 2**64
    return bucket < fraction


def _finalize(record: GenerationRecord) -> GenerationRecord:
    """Fold abstract extras into the instance, keeping the valid-count bound."""
    if record.status != "ok" or not record.abstract_extras:
        return record
    merged = (record.parsed.valid_descriptions + tuple(record.abstract_extras))[:MAX_VALID]
    record.parsed = TrainingInstance(
        id=record.parsed.id,
        sentence=record.parsed.sentence,
        valid_descriptions=merged,
        invalid_descriptions=record.parsed.invalid_descriptions,
    )
    return record


def generate_dataset(
    sentences: list[str],
    client: CompletionClient,
    retries: int = 3,
    backoff: float = 1.0,
    max_in_flight: int = 1,
    abstraction_seed: int = 0,
    abstraction_fraction: float = ABSTRACTION_FRACTION,
    sleep: Callable[[float], None] = time.sleep,
) -> list[GenerationRecord]:
    """Generate one record per input sentence, in input order.

    The abstraction pass runs inline after a successful main parse; its
    extras are kept only if all three calls succeed, so the extras count
    is always 0 or 3.
    """

    def one(sentence: str) -> GenerationRecord:
        record = generate_instance(sentence, client, retries=retries, backoff=backoff, sleep=sleep)
        if record.status == "ok" and in_abstraction_subset(
            sentence, abstraction_seed, abstraction_fraction
        ):
            extras = []
            try:
                for description in record.parsed.valid_descriptions[:ABSTRACT_PER_INSTANCE]:
                    extras.append(abstractify(sentence, description, client))
            except ApiError:
                extras = []
            if len(extras) == ABSTRACT_PER_INSTANCE:
                record.abstract_extras = extras
        return _finalize(record)

    if max_in_flight <= 1:
        return [one(s) for s in sentences]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, sentences))


def write_failures(records: list[GenerationRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            if record.status == "ok":
                continue
            f.write(
                json.dumps(
                    {
                        "sentence": record.sentence,
                        "status": record.status,
                        "raw_completion": record.raw_completion,
                    }
                )
                + "\n"
            )
