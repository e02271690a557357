"""Per-slot format rules, value normalization, and ontology cleaning.

A schema maps each (domain, slot) pair to a format rule; values that cannot
be normalized into the rule's shape are non-conforming and get dropped,
either alone or together with their whole turn.  The cleaning step is the
first stage of the denoising pipeline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, ExampleId, SlotValue, clone_turn, replace_turns, drop_turns
from .datadir import load_table

__all__ = [
    "FormatRule",
    "OntologySchema",
    "CleaningOutcome",
    "OntologyError",
    "validate_value",
    "normalize_value",
    "clean_ontology",
    "load_schema",
    "default_schema",
]

RULE_KINDS = (
    "time_hhmm",
    "date_iso",
    "number_digits",
    "location_canonical",
    "enumeration",
    "pattern",
)

# Rule kind -> surface-form family used by the variant injector.
KIND_TO_VARIANT_FAMILY = {
    "time_hhmm": "time",
    "date_iso": "date",
    "number_digits": "number",
    "location_canonical": "location",
}


class OntologyError(ValueError):
    pass


@dataclass(frozen=True)
class FormatRule:
    kind: str
    values: tuple[str, ...] = ()  # enumeration entries
    pattern: str = ""  # pattern kind
    description: str = ""

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise OntologyError(f"unknown rule kind {self.kind!r}")
        if self.kind == "enumeration" and not self.values:
            raise OntologyError("enumeration rule needs a non-empty value list")
        if self.kind == "pattern":
            try:
                re.compile(self.pattern)
            except re.error as exc:
                raise OntologyError(f"pattern does not compile: {exc}") from exc


@dataclass
class OntologySchema:
    slots: dict[tuple[str, str], FormatRule] = field(default_factory=dict)
    merge_map: dict[str, str] = field(default_factory=dict)  # alias -> canonical

    def __post_init__(self):
        canon = {v.casefold() for v in self.merge_map.values()}
        for alias, target in self.merge_map.items():
            if alias.casefold() in canon and alias.casefold() != target.casefold():
                raise OntologyError(
                    f"merge_map chain: {alias!r} is both an alias and a canonical value")

    def rule_for(self, sv: SlotValue) -> FormatRule | None:
        return self.slots.get((sv.domain, sv.slot))


@dataclass
class CleaningOutcome:
    clean_corpus: Corpus
    dropped_values: list[tuple[ExampleId, SlotValue, FormatRule]]
    removed_examples: list[ExampleId]
    normalized_values: list[tuple[ExampleId, str, str]] = field(default_factory=list)


_TIME_RX = re.compile(r"^([01]\d|2[0-3]):[0-5]\d$")
_DIGITS_RX = re.compile(r"^[0-9]+$")
_DATE_RX = re.compile(r"^\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])$")


def validate_value(value: str, rule: FormatRule) -> bool:
    """Pure conformance predicate; the empty string never conforms."""
    v = value.strip()
    if not v:
        return False
    if rule.kind == "time_hhmm":
        return bool(_TIME_RX.match(v))
    if rule.kind == "date_iso":
        return bool(_DATE_RX.match(v))
    if rule.kind == "number_digits":
        return bool(_DIGITS_RX.match(v))
    if rule.kind == "location_canonical":
        # canonical surface: already trimmed and casefolded
        return v == value and v == v.casefold()
    if rule.kind == "enumeration":
        folded = v.casefold()
        return any(folded == entry.strip().casefold() for entry in rule.values)
    if rule.kind == "pattern":
        return bool(re.fullmatch(rule.pattern, v))
    raise OntologyError(f"unknown rule kind {rule.kind!r}")


_AMPM_RX = re.compile(r"^(\d{1,2})(?::([0-5]\d))?\s*([ap])\.?m\.?$", re.IGNORECASE)
_COMPACT_RX = re.compile(r"^(\d{1,2})([0-5]\d)\s*([ap])m$", re.IGNORECASE)
_H24_RX = re.compile(r"^(\d{1,2}):([0-5]\d)$")


def _normalize_time(v: str) -> str | None:
    m = _AMPM_RX.match(v) or _COMPACT_RX.match(v)
    if m:
        hour, minute, half = int(m.group(1)), int(m.group(2) or 0), m.group(3).lower()
        if not 1 <= hour <= 12:
            return None
        hour = hour % 12 + (12 if half == "p" else 0)
        return f"{hour:02d}:{minute:02d}"
    m = _H24_RX.match(v)
    if m:  # pad a single-digit hour
        return f"{int(m.group(1)):02d}:{m.group(2)}"
    return None


def _number_word_table() -> dict[str, str]:
    # not cached: DIALNOISE_DATA_DIR may change between calls
    return {k.casefold(): v for k, v in load_table("number_words.json").items()}


def normalize_value(value: str, rule: FormatRule, merge_map: dict[str, str] | None = None) -> str | None:
    """Canonical form when a deterministic rewrite exists, else None.

    Conforming values are their own fixed point, so the rewrite is
    idempotent.  Ambiguous surfaces (e.g. "quarter past 2", which could be
    02:15 or 14:15) have no safe rewrite and return None.
    """
    v = value.strip()
    if merge_map:
        folded = {k.casefold(): val for k, val in merge_map.items()}
        if v.casefold() in folded:
            v = folded[v.casefold()]
    if validate_value(v, rule):
        return v

    candidate: str | None = None
    if rule.kind == "time_hhmm":
        candidate = _normalize_time(v)
    elif rule.kind == "number_digits":
        candidate = _number_word_table().get(v.casefold())
    elif rule.kind == "location_canonical":
        candidate = v.strip().casefold()
    elif rule.kind == "enumeration":
        folded_v = v.casefold()
        for entry in rule.values:
            if folded_v == entry.strip().casefold():
                candidate = entry.strip().casefold()
                break
    elif rule.kind == "pattern":
        candidate = v if re.fullmatch(rule.pattern, v) else None

    if candidate is not None and validate_value(candidate, rule):
        return candidate
    return None


def _coverage_gaps(corpus: Corpus, schema: OntologySchema) -> list[tuple[str, str]]:
    pairs = {sv.key() for _, turn in corpus.iter_turns() for sv in turn.labels.belief_state}
    return sorted(pairs - set(schema.slots))


def clean_ontology(corpus: Corpus, schema: OntologySchema, policy: str = "drop_example") -> CleaningOutcome:
    """Drop non-conforming slot values (or their whole turns).

    * ``drop_example`` removes every turn carrying a non-conforming value.
    * ``drop_value`` removes only the offending values.
    * ``normalize_first`` rewrites values into canonical form where possible,
      then behaves like ``drop_example`` for whatever still fails.
    """
    if policy not in ("drop_example", "drop_value", "normalize_first"):
        raise OntologyError(f"unknown cleaning policy {policy!r}")
    gaps = _coverage_gaps(corpus, schema)
    if gaps:
        listing = ", ".join(f"{d}.{s}" for d, s in gaps[:10])
        raise OntologyError(f"schema does not cover slot pairs: {listing}"
                            + (" ..." if len(gaps) > 10 else ""))

    dropped: list[tuple[ExampleId, SlotValue, FormatRule]] = []
    normalized: list[tuple[ExampleId, str, str]] = []
    removed: list[ExampleId] = []
    replacements = {}

    for did, turn in corpus.iter_turns():
        example_id = (did, turn.turn_id)
        bad: list[SlotValue] = []
        new_state: list[SlotValue] = []
        changed = False
        for sv in turn.labels.belief_state:
            rule = schema.slots[sv.key()]
            value = sv.value
            if policy == "normalize_first":
                norm = normalize_value(value, rule, schema.merge_map)
                if norm is not None and norm != value:
                    normalized.append((example_id, value, norm))
                    sv = SlotValue(sv.domain, sv.slot, norm)
                    value = norm
                    changed = True
            if validate_value(value, rule):
                new_state.append(sv)
            else:
                bad.append(sv)
                dropped.append((example_id, sv, rule))
                changed = True

        if bad and policy in ("drop_example", "normalize_first"):
            removed.append(example_id)
        elif changed:
            new_turn = clone_turn(turn)
            new_turn.labels.belief_state = new_state
            replacements[example_id] = new_turn

    out = replace_turns(corpus, replacements) if replacements else corpus
    if removed:
        out = drop_turns(out, removed)
    return CleaningOutcome(clean_corpus=out, dropped_values=dropped,
                           removed_examples=removed, normalized_values=normalized)


# ---------------------------------------------------------------------------
# Schema files
# ---------------------------------------------------------------------------


def _schema_from_doc(doc: dict) -> OntologySchema:
    slots = {}
    for key, spec in doc.get("slots", {}).items():
        domain, _, slot = key.partition(".")
        if not slot:
            raise OntologyError(f"schema slot key {key!r} must look like 'domain.slot'")
        slots[(domain, slot)] = FormatRule(
            kind=spec["kind"],
            values=tuple(spec.get("values", ())),
            pattern=spec.get("pattern", ""),
            description=spec.get("description", ""),
        )
    return OntologySchema(slots=slots, merge_map=dict(doc.get("merge_map", {})))


def load_schema(path: str | Path) -> OntologySchema:
    with open(path, encoding="utf-8") as fh:
        return _schema_from_doc(json.load(fh))


def default_schema() -> OntologySchema:
    """The shipped schema: time/date/number rules for MultiWOZ-style slots."""
    return _schema_from_doc(load_table("default_schema.json"))
