"""Canonical in-memory model of a dialogue corpus.

A corpus is a named, ordered collection of dialogues; each dialogue is an
ordered list of turns carrying an annotation set (class labels, dialog acts,
belief state, character spans, optional reference response).  Values are
treated as immutable after construction: every transformation in this
package produces a new corpus and shares untouched turns.

The canonical file format is a single UTF-8 JSON document::

    {"name": ..., "task_kinds": [...], "dialogues": [
        {"dialogue_id": ..., "domains": [...], "turns": [
            {"turn_id": 0, "speaker": "user", "text": ...,
             "labels": {"class_labels": [], "dialog_acts": [],
                        "belief_state": [{"domain","slot","value"}],
                        "spans": [{"label","start","end"}],
                        "reference_response": null}}]}]}

Keys are always serialized in the order shown, so save -> load -> save is
byte-identical.  Span offsets are byte offsets into the UTF-8 encoding of
the turn text.
"""

from __future__ import annotations

import functools
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

__all__ = [
    "TaskKind",
    "SlotValue",
    "Span",
    "AnnotationSet",
    "Turn",
    "Dialogue",
    "Corpus",
    "Selection",
    "Violation",
    "StatsReport",
    "SchemaError",
    "ExampleId",
    "load_corpus",
    "loads_corpus",
    "save_corpus",
    "dumps_corpus",
    "validate_corpus",
    "sample_examples",
    "corpus_stats",
    "example_seed",
    "mix64",
    "fold64",
    "replace_turns",
    "drop_turns",
]

ExampleId = tuple[str, int]

SPEAKERS = ("user", "system")


class TaskKind(str, Enum):
    CLC = "CLC"
    TLC = "TLC"
    DST = "DST"
    RG = "RG"
    IR = "IR"


class SchemaError(ValueError):
    """A file or corpus does not satisfy the canonical schema.

    ``path`` points at the offending field (e.g. ``dialogues[3].turns[0].text``)
    when the error came from decoding a document.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class SlotValue:
    domain: str
    slot: str
    value: str

    def key(self) -> tuple[str, str]:
        return (self.domain, self.slot)


@dataclass(frozen=True)
class Span:
    label: str
    start: int  # byte offset into UTF-8 text
    end: int


@dataclass
class AnnotationSet:
    class_labels: list[str] = field(default_factory=list)
    dialog_acts: list[str] = field(default_factory=list)
    belief_state: list[SlotValue] = field(default_factory=list)
    spans: list[Span] = field(default_factory=list)
    reference_response: str | None = None


@dataclass
class Turn:
    turn_id: int
    speaker: str
    text: str
    labels: AnnotationSet = field(default_factory=AnnotationSet)


@dataclass
class Dialogue:
    dialogue_id: str
    domains: set[str] = field(default_factory=set)
    turns: list[Turn] = field(default_factory=list)


@dataclass
class Corpus:
    name: str
    dialogues: list[Dialogue] = field(default_factory=list)
    task_kinds: set[TaskKind] = field(default_factory=set)
    ontology: "object | None" = None  # optional OntologySchema, attached in memory only

    def dialogue_ids(self) -> list[str]:
        return [d.dialogue_id for d in self.dialogues]

    def get_dialogue(self, dialogue_id: str) -> Dialogue:
        for d in self.dialogues:
            if d.dialogue_id == dialogue_id:
                return d
        raise KeyError(dialogue_id)

    def iter_turns(self) -> Iterator[tuple[str, Turn]]:
        for d in self.dialogues:
            for t in d.turns:
                yield d.dialogue_id, t

    def get_turn(self, example_id: ExampleId) -> Turn:
        did, tid = example_id
        for t in self.get_dialogue(did).turns:
            if t.turn_id == tid:
                return t
        raise KeyError(example_id)

    def turn_count(self) -> int:
        return sum(len(d.turns) for d in self.dialogues)


@dataclass
class Selection:
    """A deterministic, seeded choice of corpus units.

    ``unit`` is ``"turn"`` or ``"dialogue"``; for dialogue units the turn_id
    component of each example id is the sentinel -1 (the whole dialogue).
    """

    example_ids: list[ExampleId]
    seed: int
    rate: float
    unit: str = "turn"


@dataclass(frozen=True)
class Violation:
    dialogue_id: str | None
    turn_id: int | None
    rule: str
    detail: str

    def __str__(self) -> str:
        where = self.dialogue_id or "<corpus>"
        if self.turn_id is not None:
            where += f"/turn {self.turn_id}"
        return f"[{self.rule}] {where}: {self.detail}"


@dataclass
class StatsReport:
    dialogue_count: int
    turn_count: int
    label_counts: dict[str, int]
    domain_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "dialogue_count": self.dialogue_count,
            "turn_count": self.turn_count,
            "label_counts": dict(self.label_counts),
            "domain_counts": dict(sorted(self.domain_counts.items())),
        }


# ---------------------------------------------------------------------------
# Deterministic seeding
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer; bijective on 64-bit ints."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@functools.lru_cache(maxsize=1 << 16)
def fold64(s: str) -> int:
    """FNV-1a 64-bit fold of a string, for seed derivation."""
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def example_seed(master_seed: int, dialogue_id: str, turn_id: int) -> int:
    """Per-example RNG seed derived only from (master seed, dialogue_id, turn_id).

    Workers corrupting different examples in parallel therefore cannot
    influence each other's random draws.
    """
    h = mix64(master_seed & _MASK64)
    h = mix64(h ^ fold64(dialogue_id))
    return mix64(h ^ (turn_id & _MASK64))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check every structural invariant; violations are data, not errors."""
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    for dlg in corpus.dialogues:
        if dlg.dialogue_id in seen_ids:
            violations.append(
                Violation(dlg.dialogue_id, None, "unique_dialogue_id",
                          f"duplicate dialogue_id {dlg.dialogue_id!r}")
            )
        seen_ids.add(dlg.dialogue_id)
        prev_tid = -1
        for turn in dlg.turns:
            violations.extend(_validate_turn(corpus, dlg, turn, prev_tid))
            prev_tid = turn.turn_id
    return violations


def _validate_turn(corpus: Corpus, dlg: Dialogue, turn: Turn, prev_tid: int) -> list[Violation]:
    out: list[Violation] = []
    did, tid = dlg.dialogue_id, turn.turn_id

    if turn.turn_id < 0 or turn.turn_id <= prev_tid:
        out.append(Violation(did, tid, "turn_id_order",
                             f"turn_id {tid} not strictly increasing from 0"))
    if turn.speaker not in SPEAKERS:
        out.append(Violation(did, tid, "speaker", f"unknown speaker {turn.speaker!r}"))
    if not turn.text and not turn.labels.dialog_acts:
        out.append(Violation(did, tid, "empty_text",
                             "text empty on a turn without act labels"))

    text_bytes = len(turn.text.encode("utf-8", errors="surrogatepass"))
    for span in turn.labels.spans:
        if not (0 <= span.start <= span.end <= text_bytes):
            out.append(Violation(did, tid, "span_bounds",
                                 f"span {span.label!r} [{span.start},{span.end}) outside "
                                 f"0..{text_bytes} byte text bounds"))

    seen_pairs: set[tuple[str, str]] = set()
    for sv in turn.labels.belief_state:
        if not (sv.domain and sv.slot and sv.value):
            out.append(Violation(did, tid, "slot_value_fields",
                                 f"empty field in {sv}"))
        if sv.key() in seen_pairs:
            out.append(Violation(did, tid, "duplicate_slot_pair",
                                 f"duplicate (domain, slot) pair {sv.key()}"))
        seen_pairs.add(sv.key())
        if corpus.ontology is not None:
            slots = getattr(corpus.ontology, "slots", {})
            if sv.key() not in slots:
                out.append(Violation(did, tid, "ontology_coverage",
                                     f"({sv.domain}, {sv.slot}) missing from attached ontology"))
    return out


def _require_valid(corpus: Corpus, context: str) -> None:
    violations = validate_corpus(corpus)
    if violations:
        listing = "; ".join(str(v) for v in violations[:8])
        more = f" (+{len(violations) - 8} more)" if len(violations) > 8 else ""
        raise SchemaError(f"{context}: corpus invalid: {listing}{more}")


# ---------------------------------------------------------------------------
# Canonical JSON serialization
# ---------------------------------------------------------------------------

_TASK_ORDER = [k.value for k in TaskKind]


def _turn_to_dict(turn: Turn) -> dict:
    labels = turn.labels
    return {
        "turn_id": turn.turn_id,
        "speaker": turn.speaker,
        "text": turn.text,
        "labels": {
            "class_labels": list(labels.class_labels),
            "dialog_acts": list(labels.dialog_acts),
            "belief_state": [
                {"domain": sv.domain, "slot": sv.slot, "value": sv.value}
                for sv in labels.belief_state
            ],
            "spans": [
                {"label": sp.label, "start": sp.start, "end": sp.end}
                for sp in labels.spans
            ],
            "reference_response": labels.reference_response,
        },
    }


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "name": corpus.name,
        "task_kinds": sorted((k.value for k in corpus.task_kinds), key=_TASK_ORDER.index),
        "dialogues": [
            {
                "dialogue_id": d.dialogue_id,
                "domains": sorted(d.domains),
                "turns": [_turn_to_dict(t) for t in d.turns],
            }
            for d in corpus.dialogues
        ],
    }


def dumps_corpus(corpus: Corpus) -> str:
    """Serialize to the canonical byte-stable JSON text (validates first)."""
    _require_valid(corpus, "save_corpus")
    text = json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=2) + "\n"
    try:
        text.encode("utf-8", errors="strict")
    except UnicodeEncodeError as exc:
        raise SchemaError(f"corpus contains non-UTF-8-encodable text: {exc}") from exc
    return text


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    data = dumps_corpus(corpus).encode("utf-8")
    Path(path).write_bytes(data)


class _Decoder:
    """Structural decoder that reports the JSON path of the first bad field."""

    def decode(self, doc: object) -> Corpus:
        root = self._expect(doc, dict, "$")
        name = self._expect(root.get("name"), str, "name")
        kinds_raw = self._expect(root.get("task_kinds", []), list, "task_kinds")
        kinds: set[TaskKind] = set()
        for i, k in enumerate(kinds_raw):
            k = self._expect(k, str, f"task_kinds[{i}]")
            try:
                kinds.add(TaskKind(k))
            except ValueError:
                raise SchemaError(f"unknown task kind {k!r} "
                                  f"(expected one of {_TASK_ORDER})", f"task_kinds[{i}]")
        dialogues_raw = self._expect(root.get("dialogues"), list, "dialogues")
        dialogues = [self._dialogue(d, f"dialogues[{i}]") for i, d in enumerate(dialogues_raw)]
        return Corpus(name=name, dialogues=dialogues, task_kinds=kinds)

    def _dialogue(self, doc: object, path: str) -> Dialogue:
        d = self._expect(doc, dict, path)
        did = self._expect(d.get("dialogue_id"), str, f"{path}.dialogue_id")
        domains_raw = self._expect(d.get("domains", []), list, f"{path}.domains")
        domains = {self._expect(x, str, f"{path}.domains[{i}]") for i, x in enumerate(domains_raw)}
        turns_raw = self._expect(d.get("turns"), list, f"{path}.turns")
        turns = [self._turn(t, f"{path}.turns[{i}]") for i, t in enumerate(turns_raw)]
        return Dialogue(dialogue_id=did, domains=domains, turns=turns)

    def _turn(self, doc: object, path: str) -> Turn:
        t = self._expect(doc, dict, path)
        tid = self._expect(t.get("turn_id"), int, f"{path}.turn_id")
        speaker = self._expect(t.get("speaker"), str, f"{path}.speaker")
        text = self._expect(t.get("text", ""), str, f"{path}.text")
        labels_doc = t.get("labels", {})
        labels = self._labels(labels_doc, f"{path}.labels")
        return Turn(turn_id=tid, speaker=speaker, text=text, labels=labels)

    def _labels(self, doc: object, path: str) -> AnnotationSet:
        m = self._expect(doc, dict, path)
        cls = [self._expect(x, str, f"{path}.class_labels[{i}]")
               for i, x in enumerate(self._expect(m.get("class_labels", []), list,
                                                  f"{path}.class_labels"))]
        acts = [self._expect(x, str, f"{path}.dialog_acts[{i}]")
                for i, x in enumerate(self._expect(m.get("dialog_acts", []), list,
                                                   f"{path}.dialog_acts"))]
        state = []
        for i, x in enumerate(self._expect(m.get("belief_state", []), list,
                                           f"{path}.belief_state")):
            sv = self._expect(x, dict, f"{path}.belief_state[{i}]")
            state.append(SlotValue(
                domain=self._expect(sv.get("domain"), str, f"{path}.belief_state[{i}].domain"),
                slot=self._expect(sv.get("slot"), str, f"{path}.belief_state[{i}].slot"),
                value=self._expect(sv.get("value"), str, f"{path}.belief_state[{i}].value"),
            ))
        spans = []
        for i, x in enumerate(self._expect(m.get("spans", []), list, f"{path}.spans")):
            sp = self._expect(x, dict, f"{path}.spans[{i}]")
            spans.append(Span(
                label=self._expect(sp.get("label"), str, f"{path}.spans[{i}].label"),
                start=self._expect(sp.get("start"), int, f"{path}.spans[{i}].start"),
                end=self._expect(sp.get("end"), int, f"{path}.spans[{i}].end"),
            ))
        ref = m.get("reference_response")
        if ref is not None and not isinstance(ref, str):
            raise SchemaError("expected string or null", f"{path}.reference_response")
        return AnnotationSet(class_labels=cls, dialog_acts=acts, belief_state=state,
                             spans=spans, reference_response=ref)

    @staticmethod
    def _expect(value, typ, path):
        if typ is int and isinstance(value, bool):
            raise SchemaError("expected integer, got boolean", path)
        if not isinstance(value, typ):
            raise SchemaError(f"expected {typ.__name__}, got {type(value).__name__}", path)
        return value


def loads_corpus(text: str) -> Corpus:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"JSON parse error at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    corpus = _Decoder().decode(doc)
    _require_valid(corpus, "load_corpus")
    return corpus


def load_corpus(path: str | Path, format: str = "canonical") -> Corpus:
    """Read and fully validate a canonical corpus file."""
    if format != "canonical":
        raise ValueError(f"unknown corpus format {format!r}")
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8", errors="strict")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"file is not valid UTF-8: {exc}") from exc
    return loads_corpus(text)


# ---------------------------------------------------------------------------
# Sampling and statistics
# ---------------------------------------------------------------------------


def quota(rate: float, n: int) -> int:
    """ceil(rate * n) with a decimal-precision guard.

    Binary floats make products like 0.1 * 1000 land a hair above the true
    value; rounding to 9 decimal places before the ceiling keeps the count at
    the intended ceil of the decimal product (0.1 * 1000 -> 100,
    0.1 * 113556 -> 11356).
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    return min(n, math.ceil(round(rate * n, 9)))


def sample_examples(corpus: Corpus, rate: float, seed: int, unit: str = "turn") -> Selection:
    """Uniform sample without replacement of ceil(rate * N) units.

    The draw is a pure function of the sorted unit ids, the rate and the
    seed: in-memory dialogue order and worker count cannot change it.
    """
    if unit == "turn":
        ids: list[ExampleId] = sorted((did, t.turn_id) for did, t in corpus.iter_turns())
    elif unit == "dialogue":
        ids = sorted((d.dialogue_id, -1) for d in corpus.dialogues)
    else:
        raise ValueError(f"unknown sampling unit {unit!r}")
    k = quota(rate, len(ids))
    rng = random.Random(mix64(seed & _MASK64))
    chosen = sorted(rng.sample(ids, k)) if k else []
    return Selection(example_ids=chosen, seed=seed, rate=rate, unit=unit)


def corpus_stats(corpus: Corpus) -> StatsReport:
    label_counts = {
        "class_labels": 0,
        "dialog_acts": 0,
        "belief_state_values": 0,
        "spans": 0,
        "reference_responses": 0,
    }
    domain_counts: dict[str, int] = {}
    turn_count = 0
    for dlg in corpus.dialogues:
        for dom in dlg.domains:
            domain_counts[dom] = domain_counts.get(dom, 0) + 1
        for turn in dlg.turns:
            turn_count += 1
            label_counts["class_labels"] += len(turn.labels.class_labels)
            label_counts["dialog_acts"] += len(turn.labels.dialog_acts)
            label_counts["belief_state_values"] += len(turn.labels.belief_state)
            label_counts["spans"] += len(turn.labels.spans)
            if turn.labels.reference_response is not None:
                label_counts["reference_responses"] += 1
    return StatsReport(
        dialogue_count=len(corpus.dialogues),
        turn_count=turn_count,
        label_counts=label_counts,
        domain_counts=domain_counts,
    )


# ---------------------------------------------------------------------------
# Copy-on-write helpers
# ---------------------------------------------------------------------------


def clone_turn(turn: Turn) -> Turn:
    labels = turn.labels
    return Turn(
        turn_id=turn.turn_id,
        speaker=turn.speaker,
        text=turn.text,
        labels=AnnotationSet(
            class_labels=list(labels.class_labels),
            dialog_acts=list(labels.dialog_acts),
            belief_state=list(labels.belief_state),
            spans=list(labels.spans),
            reference_response=labels.reference_response,
        ),
    )


def replace_turns(corpus: Corpus, replacements: dict[ExampleId, Turn]) -> Corpus:
    """New corpus with the given turns swapped in; untouched turns are shared."""
    by_dialogue: dict[str, dict[int, Turn]] = {}
    for (did, tid), turn in replacements.items():
        by_dialogue.setdefault(did, {})[tid] = turn
    dialogues = []
    for dlg in corpus.dialogues:
        repl = by_dialogue.get(dlg.dialogue_id)
        if repl:
            turns = [repl.get(t.turn_id, t) for t in dlg.turns]
            dialogues.append(Dialogue(dlg.dialogue_id, set(dlg.domains), turns))
        else:
            dialogues.append(dlg)
    return Corpus(name=corpus.name, dialogues=dialogues,
                  task_kinds=set(corpus.task_kinds), ontology=corpus.ontology)


def drop_turns(corpus: Corpus, example_ids: Iterable[ExampleId]) -> Corpus:
    doomed = set(example_ids)
    dialogues = []
    for dlg in corpus.dialogues:
        if any((dlg.dialogue_id, t.turn_id) in doomed for t in dlg.turns):
            turns = [t for t in dlg.turns if (dlg.dialogue_id, t.turn_id) not in doomed]
            dialogues.append(Dialogue(dlg.dialogue_id, set(dlg.domains), turns))
        else:
            dialogues.append(dlg)
    return Corpus(name=corpus.name, dialogues=dialogues,
                  task_kinds=set(corpus.task_kinds), ontology=corpus.ontology)


def structurally_equal(a: Corpus, b: Corpus) -> bool:
    return corpus_to_dict(a) == corpus_to_dict(b)
