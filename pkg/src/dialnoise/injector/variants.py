"""Ontology-inconsistency noise: rewrite slot values into alternate surfaces.

A slot's format rule decides its surface family (time, date, number,
location); each family carries rewrite rules, either alias groups (every
member can be rewritten to any other member) or a builtin generator for
open families like clock times.  A selected turn has one matching value
rewritten to a uniformly chosen alternate surface of the same meaning;
values no rule matches are logged as skips and do not consume the quota.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..corpus import Corpus, ExampleId, SlotValue, clone_turn
from ..datadir import load_table
from ..ontology import KIND_TO_VARIANT_FAMILY, OntologySchema
from .common import (
    Attempt,
    InjectionError,
    InjectionLog,
    InjectionRecord,
    NoiseSpec,
    run_until_quota,
)

__all__ = ["VariantTables", "inject_ontology_variants", "default_variant_tables"]

_HHMM_RX = re.compile(r"^([01]\d|2[0-3]):([0-5]\d)$")
_ISO_DATE_RX = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")

_MONTHS = ["January", "February", "March", "April", "May", "June", "July",
           "August", "September", "October", "November", "December"]


def _ordinal(n: int) -> str:
    if 11 <= n % 100 <= 13:
        return f"{n}th"
    return f"{n}{({1: 'st', 2: 'nd', 3: 'rd'}.get(n % 10, 'th'))}"


def _time_surface_forms(value: str) -> list[str]:
    m = _HHMM_RX.match(value.strip())
    if not m:
        return []
    hour, minute = int(m.group(1)), int(m.group(2))
    h12 = hour % 12 or 12
    half = "AM" if hour < 12 else "PM"
    forms = [f"{h12}:{minute:02d} {half}"]
    if minute == 0:
        forms.append(f"{h12} o'clock")
    elif minute == 15:
        forms.append(f"quarter past {h12}")
    elif minute == 30:
        forms.append(f"half past {h12}")
    elif minute == 45:
        forms.append(f"quarter to {h12 % 12 + 1}")
    forms.append(f"{h12}{minute:02d}{half.lower()}")
    return forms


def _date_surface_forms(value: str) -> list[str]:
    m = _ISO_DATE_RX.match(value.strip())
    if not m:
        return []
    year, month, day = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if not (1 <= month <= 12 and 1 <= day <= 31):
        return []
    name = _MONTHS[month - 1]
    return [f"{name[:3]} {_ordinal(day)}", f"{month}/{day}/{year}", f"{name} {day}"]


_BUILTINS = {
    "time_surface_forms": _time_surface_forms,
    "date_surface_forms": _date_surface_forms,
}


@dataclass
class VariantTables:
    """Per-family rewrite rules: alias groups plus named builtin generators."""

    families: dict[str, dict]

    def variants_for(self, family: str, value: str) -> list[str]:
        spec = self.families.get(family)
        if spec is None:
            return []
        v = value.strip()
        folded = v.casefold()
        out: list[str] = []
        for group in spec.get("groups", []):
            if any(folded == member.casefold() for member in group):
                out.extend(member for member in group if member.casefold() != folded)
        for name in spec.get("builtins", []):
            try:
                fn = _BUILTINS[name]
            except KeyError:
                raise InjectionError(f"unknown builtin variant generator {name!r}")
            out.extend(fn(v))
        seen = set()
        unique = []
        for form in out:
            if form not in seen:
                seen.add(form)
                unique.append(form)
        return unique


def default_variant_tables() -> VariantTables:
    return VariantTables(families=load_table("variant_tables.json"))


def inject_ontology_variants(corpus: Corpus, spec: NoiseSpec,
                             schema: OntologySchema | None = None,
                             jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Rewrite selected slot values into alternate surface forms.

    ``spec.params``:
    * ``variant_tables``: a VariantTables (defaults to the shipped tables);
    * ``kinds``: restrict to a subset of {date, time, location, number}.
    """
    tables: VariantTables = spec.params.get("variant_tables") or default_variant_tables()
    if schema is None:
        schema = spec.params.get("schema")
    if schema is None:
        raise InjectionError("ontology variants need a schema mapping slots to format kinds")
    kinds = spec.params.get("kinds")
    families = set(kinds) if kinds else set(KIND_TO_VARIANT_FAMILY.values())
    unknown = families - set(KIND_TO_VARIANT_FAMILY.values())
    if unknown:
        raise InjectionError(f"unknown variant kinds: {sorted(unknown)}")
    for family in sorted(families):
        if not tables.families.get(family):
            raise InjectionError(f"variant table for kind {family!r} is empty")

    def slot_family(sv: SlotValue) -> str | None:
        rule = schema.rule_for(sv)
        if rule is None:
            return None
        family = KIND_TO_VARIANT_FAMILY.get(rule.kind)
        return family if family in families else None

    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}
    eligible = [ex for ex, t in sorted(turn_index.items())
                if any(slot_family(sv) for sv in t.labels.belief_state)]

    def corrupt(example_id: ExampleId) -> Attempt:
        rng = spec.example_rng(example_id)
        turn = turn_index[example_id]
        rewritable: list[tuple[int, str, list[str]]] = []
        for i, sv in enumerate(turn.labels.belief_state):
            family = slot_family(sv)
            if family is None:
                continue
            forms = tables.variants_for(family, sv.value)
            if forms:
                rewritable.append((i, family, forms))
        if not rewritable:
            return Attempt(example_id,
                           skip_reason="no rewrite rule matched any slot value")
        idx, family, forms = rewritable[rng.randrange(len(rewritable))]
        sv = turn.labels.belief_state[idx]
        replacement = rng.choice(forms)
        new_turn = clone_turn(turn)
        new_turn.labels.belief_state[idx] = SlotValue(sv.domain, sv.slot, replacement)
        return Attempt(example_id, new_turn, InjectionRecord(
            example_id, f"training/ontology/{family}", "rewrite",
            before={"domain": sv.domain, "slot": sv.slot, "value": sv.value},
            after={"domain": sv.domain, "slot": sv.slot, "value": replacement}))

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)
