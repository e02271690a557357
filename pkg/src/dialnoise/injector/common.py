"""Shared injection machinery: specs, logs, and the deterministic runner.

Every injection operation follows the same shape: pick ceil(rate * eligible)
units with the selection RNG, then corrupt each selected unit using an RNG
seeded only by (master seed, dialogue_id, turn_id).  Because per-example
draws never share state, running with one worker or many produces identical
corpora and logs.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from ..corpus import (
    Corpus,
    ExampleId,
    Turn,
    example_seed,
    mix64,
    quota,
    replace_turns,
)
from ..taxonomy import NoiseCategory

__all__ = [
    "NoiseSpec",
    "InjectionRecord",
    "SkipRecord",
    "InjectionLog",
    "InjectionError",
    "Attempt",
    "run_selected",
    "run_until_quota",
]

ACTIONS = (
    "swap", "insert", "replace", "drop", "rewrite", "spam",
    "truncate_span", "shuffle", "substitute_sentence", "perturb",
)

DEFAULT_RATE = 0.10  # corruption level held constant across noise types


class InjectionError(ValueError):
    pass


@dataclass
class NoiseSpec:
    category: NoiseCategory
    rate: float = DEFAULT_RATE
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise InjectionError(f"rate must be in [0, 1], got {self.rate}")

    def example_rng(self, example_id: ExampleId) -> random.Random:
        did, tid = example_id
        return random.Random(example_seed(self.seed, did, tid))

    def selection_rng(self) -> random.Random:
        return random.Random(mix64(self.seed & ((1 << 64) - 1)))


@dataclass
class InjectionRecord:
    example_id: ExampleId
    category: str  # rendered slash path of the applied leaf
    action: str
    before: object
    after: object
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise InjectionError(f"unknown log action {self.action!r}")

    def to_dict(self) -> dict:
        return {
            "example_id": list(self.example_id),
            "category": self.category,
            "action": self.action,
            "before": self.before,
            "after": self.after,
            "meta": self.meta,
        }


@dataclass
class SkipRecord:
    example_id: ExampleId
    category: str
    reason: str


@dataclass
class InjectionLog:
    records: list[InjectionRecord] = field(default_factory=list)
    skipped: list[SkipRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def example_ids(self) -> list[ExampleId]:
        return [r.example_id for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n"
                       for r in self.records)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_jsonl().encode("utf-8"))

    @staticmethod
    def load(path: str | Path) -> "InjectionLog":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                records.append(InjectionRecord(
                    example_id=(doc["example_id"][0], doc["example_id"][1]),
                    category=doc["category"],
                    action=doc["action"],
                    before=doc["before"],
                    after=doc["after"],
                    meta=doc.get("meta", {}),
                ))
        return InjectionLog(records=records)


# An attempt either corrupts a turn or explains why it could not.
@dataclass
class Attempt:
    example_id: ExampleId
    turn: Turn | None = None  # replacement turn, None when skipped
    record: InjectionRecord | None = None
    skip_reason: str | None = None


def _evaluate(fn: Callable[[ExampleId], Attempt], ids: list[ExampleId],
              jobs: int) -> list[Attempt]:
    if jobs <= 1 or len(ids) <= 1:
        return [fn(ex) for ex in ids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, ids))


def run_selected(corpus: Corpus, ids: Iterable[ExampleId],
                 fn: Callable[[ExampleId], Attempt], jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Corrupt exactly the given units; results merge in (dialogue, turn) order."""
    ordered = sorted(ids)
    attempts = _evaluate(fn, ordered, jobs)
    replacements: dict[ExampleId, Turn] = {}
    log = InjectionLog()
    for att in attempts:
        if att.turn is None:
            log.skipped.append(SkipRecord(att.example_id, att.record.category
                                          if att.record else "", att.skip_reason or ""))
            continue
        replacements[att.example_id] = att.turn
        log.records.append(att.record)
    return replace_turns(corpus, replacements), log


def run_until_quota(corpus: Corpus, eligible: list[ExampleId], rate: float,
                    rng: random.Random, fn: Callable[[ExampleId], Attempt],
                    jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Walk a seeded permutation of eligible units, corrupting until the quota.

    Units whose attempt cannot apply (no rewrite rule matched, for example)
    are logged as skips and do not count toward the quota; the walk continues
    until the quota is filled or eligibility is exhausted.
    """
    target = quota(rate, len(eligible))
    order = sorted(eligible)
    rng.shuffle(order)

    log = InjectionLog()
    replacements: dict[ExampleId, Turn] = {}
    done = 0
    if jobs <= 1:
        for example_id in order:
            if done >= target:
                break
            att = fn(example_id)
            if att.turn is None:
                log.skipped.append(SkipRecord(att.example_id, att.record.category
                                              if att.record else "", att.skip_reason or ""))
                continue
            replacements[att.example_id] = att.turn
            log.records.append(att.record)
            done += 1
    else:
        # evaluate in permutation-ordered chunks; the scan below consumes them
        # in the same order the sequential path would, so outputs match
        cursor = 0
        chunk = max(32, jobs * 8)
        while done < target and cursor < len(order):
            batch = order[cursor:cursor + chunk]
            cursor += len(batch)
            for att in _evaluate(fn, batch, jobs):
                if done >= target:
                    break
                if att.turn is None:
                    log.skipped.append(SkipRecord(att.example_id, att.record.category
                                                  if att.record else "", att.skip_reason or ""))
                    continue
                replacements[att.example_id] = att.turn
                log.records.append(att.record)
                done += 1
    log.records.sort(key=lambda r: r.example_id)
    log.skipped.sort(key=lambda r: r.example_id)
    return replace_turns(corpus, replacements), log
