"""Native-format importers.

Only one is shipped: MultiWOZ-style JSON, since the canonical schema covers
the general case.  The native layout maps each dialogue id to a ``log`` of
alternating user/system utterances; the accumulated dialogue state lives on
the *system* side under ``metadata[domain]["semi"|"book"]``.  Import copies
that state onto the preceding user turn (the prediction target), skipping
placeholder values, and keeps system turns as plain response turns.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import AnnotationSet, Corpus, Dialogue, SlotValue, TaskKind, Turn

PLACEHOLDERS = {"", "not mentioned", "none", "dontcare", "dont care"}


def _state_from_metadata(metadata: dict) -> tuple[list[SlotValue], set[str]]:
    state: list[SlotValue] = []
    domains: set[str] = set()
    for domain, sections in metadata.items():
        if not isinstance(sections, dict):
            continue
        for section in ("semi", "book"):
            for slot, value in sections.get(section, {}).items():
                if slot == "booked" or not isinstance(value, str):
                    continue
                if value.strip().lower() in PLACEHOLDERS:
                    continue
                if any(sv.key() == (domain, slot) for sv in state):
                    continue
                state.append(SlotValue(domain, slot, value))
                domains.add(domain)
    return state, domains


def import_multiwoz_style(source: str | Path | dict, name: str = "MWOZ") -> Corpus:
    """Convert a MultiWOZ-native document into a canonical corpus.

    ``source`` is a path to the native JSON file or the already-parsed
    mapping of dialogue id to {"goal", "log"} entries.
    """
    doc = source if isinstance(source, dict) else \
        json.loads(Path(source).read_text(encoding="utf-8"))
    dialogues = []
    for raw_id in sorted(doc):
        entry = doc[raw_id]
        log = entry.get("log", [])
        dialogue_id = raw_id[:-5] if raw_id.endswith(".json") else raw_id
        turns: list[Turn] = []
        domains: set[str] = set()
        for i, item in enumerate(log):
            text = item.get("text", "")
            is_user = i % 2 == 0  # MultiWOZ logs start with the user
            if is_user:
                state: list[SlotValue] = []
                if i + 1 < len(log):
                    state, seen = _state_from_metadata(log[i + 1].get("metadata", {}))
                    domains |= seen
                turns.append(Turn(i, "user", text, AnnotationSet(belief_state=state)))
            else:
                turns.append(Turn(i, "system", text,
                                  AnnotationSet(reference_response=text)))
        dialogues.append(Dialogue(dialogue_id, domains, turns))
    return Corpus(name, dialogues, {TaskKind.DST, TaskKind.RG})
