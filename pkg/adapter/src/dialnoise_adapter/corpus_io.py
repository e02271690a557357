"""Minimal reader for the canonical dialogue-corpus JSON format.

Kept independent of the toolkit package on purpose: the adapter talks to it
only through files, so this module re-implements just enough of the schema
to walk dialogues and their labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class CorpusFormatError(ValueError):
    pass


@dataclass
class TurnView:
    dialogue_id: str
    turn_id: int
    speaker: str
    text: str
    class_labels: list[str] = field(default_factory=list)
    belief_state: list[dict] = field(default_factory=list)  # {"domain","slot","value"}

    @property
    def example_id(self) -> list:
        return [self.dialogue_id, self.turn_id]


def read_corpus(path: str | Path) -> list[TurnView]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid JSON: {exc.msg} "
                                f"(line {exc.lineno})") from exc
    if not isinstance(doc, dict) or "dialogues" not in doc:
        raise CorpusFormatError(f"{path}: missing top-level 'dialogues' array")
    turns: list[TurnView] = []
    for d_idx, dlg in enumerate(doc["dialogues"]):
        did = dlg.get("dialogue_id")
        if not isinstance(did, str):
            raise CorpusFormatError(f"{path}: dialogues[{d_idx}] has no dialogue_id")
        for t_idx, turn in enumerate(dlg.get("turns", [])):
            labels = turn.get("labels", {})
            turns.append(TurnView(
                dialogue_id=did,
                turn_id=turn.get("turn_id", t_idx),
                speaker=turn.get("speaker", "user"),
                text=turn.get("text", ""),
                class_labels=list(labels.get("class_labels", [])),
                belief_state=list(labels.get("belief_state", [])),
            ))
    return turns


def read_slot_rules(schema_path: str | Path) -> dict[tuple[str, str], dict]:
    """Schema file: {"slots": {"domain.slot": {"kind": ..., "values": [...]}}}."""
    doc = json.loads(Path(schema_path).read_text(encoding="utf-8"))
    rules = {}
    for key, rule in doc.get("slots", {}).items():
        domain, _, slot = key.partition(".")
        if not slot:
            raise CorpusFormatError(f"{schema_path}: slot key {key!r} must be 'domain.slot'")
        rules[(domain, slot)] = rule
    return rules
