"""Utterance-level noise: discourse attributes and dialogue breakdowns.

Discourse noise damages the training text itself (incoherent substitutions
from other dialogues, token-shuffle disfluency, crowdworker-flavored
unnatural phrasing).  Breakdown noise simulates what users throw at a
deployed system: typos, spoken-style disfluencies, speech-recognition
confusions, and paraphrases supplied by an external perturber.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Callable, Protocol

import requests

from ..corpus import Corpus, ExampleId, clone_turn
from ..datadir import load_table
from .common import (
    Attempt,
    InjectionError,
    InjectionLog,
    InjectionRecord,
    NoiseSpec,
    run_until_quota,
)
from .edits import adjacency_table, bounded_typo

__all__ = [
    "inject_discourse_noise",
    "inject_breakdown_noise",
    "FilePerturber",
    "ServicePerturber",
]


# ---------------------------------------------------------------------------
# Discourse attributes
# ---------------------------------------------------------------------------


def inject_discourse_noise(corpus: Corpus, spec: NoiseSpec, jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Incoherent / disfluent / unnatural utterance replacement.

    Incoherent text is pulled from a different dialogue; disfluent text is a
    uniform shuffle of the utterance's whitespace tokens (redrawn once if the
    shuffle lands on the identity); unnatural text comes from a phrase list.
    """
    kind = spec.params.get("kind")
    if kind not in ("incoherent", "disfluent", "unnatural"):
        raise InjectionError(f"discourse noise kind must be incoherent, disfluent or "
                             f"unnatural, got {kind!r}")
    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}
    eligible = [ex for ex, t in sorted(turn_index.items()) if t.text.strip()]
    category = f"training/discourse/{kind}"

    if kind == "incoherent":
        donors: dict[str, list[str]] = {}
        for did, turn in corpus.iter_turns():
            if turn.text.strip():
                donors.setdefault(did, []).append(turn.text)
        if len(donors) < 2:
            raise InjectionError("incoherent noise needs at least 2 dialogues with text")
        donor_ids = sorted(donors)

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            source_did = rng.choice([d for d in donor_ids if d != example_id[0]])
            replacement = rng.choice(donors[source_did])
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "substitute_sentence",
                before=turn.text, after=replacement,
                meta={"source_dialogue": source_did}))

    elif kind == "disfluent":

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            tokens = turn.text.split()
            shuffled = tokens[:]
            rng.shuffle(shuffled)
            if shuffled == tokens and len(tokens) > 1:
                rng.shuffle(shuffled)
            replacement = " ".join(shuffled)
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "shuffle", before=turn.text, after=replacement))

    else:  # unnatural
        phrases = spec.params.get("unnatural_phrases")
        if phrases is None:
            phrases = load_table("unnatural_phrases.json")
        if not phrases:
            raise InjectionError("unnatural noise needs a non-empty phrase list")

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            replacement = rng.choice(phrases)
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "rewrite", before=turn.text, after=replacement))

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)


# ---------------------------------------------------------------------------
# Dialogue breakdowns
# ---------------------------------------------------------------------------


class Perturber(Protocol):
    def __call__(self, example_id: ExampleId, text: str) -> str: ...


class FilePerturber:
    """Perturbations precomputed into line-delimited JSON {"example_id","text"}."""

    def __init__(self, path: str | Path):
        self.outputs: dict[ExampleId, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                ex = doc["example_id"]
                self.outputs[(ex[0], ex[1])] = doc["text"]

    def __call__(self, example_id: ExampleId, text: str) -> str:
        try:
            return self.outputs[example_id]
        except KeyError:
            raise InjectionError(f"perturber file has no output for example {example_id}")


class ServicePerturber:
    """HTTP perturber: POST {"example_id","text"} to /predict, read back "text"."""

    def __init__(self, url: str, timeout: float = 10.0, retries: int = 2):
        self.url = url
        self.timeout = timeout
        self.retries = retries

    def __call__(self, example_id: ExampleId, text: str) -> str:
        payload = {"example_id": list(example_id), "text": text}
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()["text"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise InjectionError(f"perturber service failed for example {example_id}: {last_error}")


_DISFLUENCY_STYLES = ("umm", "uh", "repeat", "correction")


def _apply_disfluency(rng, text: str) -> str:
    style = rng.choice(_DISFLUENCY_STYLES)
    if style == "umm":
        return "umm, " + text
    if style == "uh":
        return "uh, " + text
    tokens = text.split()
    i = rng.randrange(len(tokens))
    if style == "repeat":
        return " ".join(tokens[: i + 1] + [tokens[i]] + tokens[i + 1:])
    return " ".join(tokens[: i + 1] + ["I mean,", tokens[i]] + tokens[i + 1:])


def _asr_matches(text: str, table: list[dict]) -> list[tuple[int, int, list[str]]]:
    hits = []
    for entry in table:
        rx = re.compile(r"\b" + re.escape(entry["match"]) + r"\b", re.IGNORECASE)
        m = rx.search(text)
        if m:
            hits.append((m.start(), m.end(), entry["variants"]))
    return hits


def inject_breakdown_noise(corpus: Corpus, spec: NoiseSpec, jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Typo, spoken disfluency, ASR confusion, or external paraphrase on user turns."""
    kind = spec.params.get("kind")
    if kind not in ("typo", "disfluency", "asr", "paraphrase"):
        raise InjectionError(f"breakdown kind must be typo, disfluency, asr or paraphrase, "
                             f"got {kind!r}")
    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}
    user_turns = [ex for ex, t in sorted(turn_index.items())
                  if t.speaker == "user" and t.text.strip()]

    if kind == "typo":
        adjacency = adjacency_table()
        eligible = [ex for ex in user_turns if any(c.isalpha() for c in turn_index[ex].text)]
        category = "inference/breakdown/perturbation/typo"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            replacement = bounded_typo(rng, turn.text, adjacency)
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "perturb", before=turn.text, after=replacement))

    elif kind == "disfluency":
        eligible = user_turns
        category = "inference/breakdown/perturbation/disfluency"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            replacement = _apply_disfluency(rng, turn.text)
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "insert", before=turn.text, after=replacement))

    elif kind == "asr":
        table = spec.params.get("confusion_table")
        if table is None:
            table = load_table("asr_confusion.json")
        eligible = [ex for ex in user_turns if _asr_matches(turn_index[ex].text, table)]
        category = "inference/breakdown/perturbation/asr"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            hits = _asr_matches(turn.text, table)
            start, end, variants = hits[rng.randrange(len(hits))]
            replacement_text = turn.text[:start] + rng.choice(variants) + turn.text[end:]
            new_turn = clone_turn(turn)
            new_turn.text = replacement_text
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "replace", before=turn.text, after=replacement_text))

    else:  # paraphrase
        perturber: Callable | None = spec.params.get("perturber")
        if perturber is None:
            raise InjectionError("paraphrase breakdown needs a perturber "
                                 "(file- or service-backed)")
        eligible = user_turns
        category = "inference/breakdown/paraphrase"

        def corrupt(example_id: ExampleId) -> Attempt:
            turn = turn_index[example_id]
            replacement = perturber(example_id, turn.text)
            new_turn = clone_turn(turn)
            new_turn.text = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "rewrite", before=turn.text, after=replacement))

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)
