"""Three-step corpus denoising: ontology clean, disagreement filter, pseudo-label.

Step 1 drops turns whose slot values break the ontology's format rules.
Step 2 strips every example where a predictor disagrees with the annotator.
Step 3 re-admits stripped examples whose labels a *second* predictor is
confident about after temperature calibration; using a different predictor
for re-labeling keeps the filter's biases from feeding back into the data.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .calibration import LogitRecord, apply_temperature
from .corpus import (
    Corpus,
    Dialogue,
    ExampleId,
    SlotValue,
    Turn,
    clone_turn,
    drop_turns,
)
from .ontology import OntologySchema, clean_ontology, normalize_value

__all__ = [
    "PredictionRecord",
    "DenoiseConfig",
    "DenoiseCounts",
    "DenoiseResult",
    "StrippedExample",
    "DenoiseError",
    "PIPELINE_STEPS",
    "load_predictions",
    "save_predictions",
    "fetch_predictions",
    "oracle_predictions",
    "filter_disagreement",
    "pseudo_label",
    "run_pipeline",
    "ablation_name",
]

PIPELINE_STEPS = ("ontology_clean", "filter_disagree", "coteach_pseudo")

DEFAULT_THRESHOLD = 0.5


class DenoiseError(ValueError):
    pass


@dataclass
class PredictionRecord:
    example_id: ExampleId
    predictor_id: str
    kind: str  # "classification" | "dst"
    candidates: list[tuple[str, float]] | None = None  # (label, logit)
    state: list[tuple[SlotValue, float]] | None = None  # (slot-value, score)

    def __post_init__(self):
        if not self.predictor_id:
            raise DenoiseError(f"{self.example_id}: predictor_id must be non-empty")
        if self.kind == "classification":
            if not self.candidates:
                raise DenoiseError(f"{self.example_id}: classification record needs candidates")
        elif self.kind == "dst":
            if self.state is None:
                raise DenoiseError(f"{self.example_id}: dst record needs a state list")
        else:
            raise DenoiseError(f"{self.example_id}: kind must be classification or dst, "
                               f"got {self.kind!r}")

    def argmax_label(self) -> str:
        return max(self.candidates, key=lambda pair: pair[1])[0]

    def to_dict(self) -> dict:
        doc: dict = {
            "example_id": list(self.example_id),
            "predictor_id": self.predictor_id,
            "kind": self.kind,
        }
        if self.kind == "classification":
            doc["candidates"] = [{"label": label, "logit": logit}
                                 for label, logit in self.candidates]
        else:
            doc["state"] = [{"domain": sv.domain, "slot": sv.slot, "value": sv.value,
                             "score": score} for sv, score in self.state]
        return doc


def _record_from_dict(doc: dict, where: str) -> PredictionRecord:
    for key in ("example_id", "predictor_id", "kind"):
        if key not in doc:
            raise DenoiseError(f"{where}: prediction record missing field {key!r}")
    ex = doc["example_id"]
    if not (isinstance(ex, list) and len(ex) == 2 and isinstance(ex[0], str)
            and isinstance(ex[1], int)):
        raise DenoiseError(f"{where}: example_id must be [dialogue_id, turn_id]")
    kind = doc["kind"]
    if kind == "classification":
        if "candidates" not in doc:
            raise DenoiseError(f"{where}: classification record missing 'candidates'")
        candidates = [(c["label"], float(c["logit"])) for c in doc["candidates"]]
        return PredictionRecord((ex[0], ex[1]), doc["predictor_id"], kind,
                                candidates=candidates)
    if kind == "dst":
        if "state" not in doc:
            raise DenoiseError(f"{where}: dst record missing 'state'")
        state = [(SlotValue(s["domain"], s["slot"], s["value"]), float(s["score"]))
                 for s in doc["state"]]
        return PredictionRecord((ex[0], ex[1]), doc["predictor_id"], kind, state=state)
    raise DenoiseError(f"{where}: unknown prediction kind {kind!r}")


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    """Line-delimited JSON with exact field names example_id/predictor_id/kind/candidates|state."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DenoiseError(f"{path}:{lineno}: bad JSON: {exc.msg}") from exc
            records.append(_record_from_dict(doc, f"{path}:{lineno}"))
    return records


def save_predictions(records: list[PredictionRecord], path: str | Path) -> None:
    text = "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)
    Path(path).write_bytes(text.encode("utf-8"))


def fetch_predictions(url: str, corpus: Corpus, example_ids: list[ExampleId],
                      timeout: float = 10.0, retries: int = 2) -> list[PredictionRecord]:
    """Pull one record per example from a prediction service.

    POST /predict with {"example_id", "context": canonical turn JSON};
    the response body is a single prediction record.
    """
    from .corpus import _turn_to_dict  # canonical turn JSON shape

    records = []
    for example_id in example_ids:
        turn = corpus.get_turn(example_id)
        payload = {"example_id": list(example_id), "context": _turn_to_dict(turn)}
        last_error: Exception | None = None
        doc = None
        for _ in range(retries + 1):
            try:
                resp = requests.post(url, json=payload, timeout=timeout)
                resp.raise_for_status()
                doc = resp.json()
                break
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        if doc is None:
            raise DenoiseError(f"prediction service failed for example {example_id}: "
                               f"{last_error}")
        records.append(_record_from_dict(doc, url))
    return records


def oracle_predictions(corpus: Corpus, predictor_id: str, kind: str = "dst",
                       score: float = 10.0) -> list[PredictionRecord]:
    """Gold labels wrapped as confident predictions (testing and dry runs)."""
    records = []
    for did, turn in corpus.iter_turns():
        example_id = (did, turn.turn_id)
        if kind == "dst":
            records.append(PredictionRecord(
                example_id, predictor_id, "dst",
                state=[(sv, score) for sv in turn.labels.belief_state]))
        else:
            if not turn.labels.class_labels:
                continue
            gold = turn.labels.class_labels[0]
            others = sorted({label for _, t in corpus.iter_turns()
                             for label in t.labels.class_labels} - {gold})
            candidates = [(gold, score)] + [(label, 0.0) for label in others]
            records.append(PredictionRecord(example_id, predictor_id, "classification",
                                            candidates=candidates))
    return records


# ---------------------------------------------------------------------------
# Step 2: disagreement filter
# ---------------------------------------------------------------------------


@dataclass
class StrippedExample:
    example_id: ExampleId
    turn: Turn
    step: str  # which pipeline step stripped it
    filter_predictor_id: str | None = None


def _single_predictor(predictions: list[PredictionRecord]) -> str:
    ids = {r.predictor_id for r in predictions}
    if len(ids) != 1:
        raise DenoiseError(f"predictions must come from a single predictor, got {sorted(ids)}")
    return next(iter(ids))


def _state_set(state: list[SlotValue], match_mode: str,
               schema: OntologySchema | None) -> frozenset:
    out = set()
    for sv in state:
        value = sv.value
        if match_mode == "per_slot" and schema is not None:
            rule = schema.rule_for(sv)
            if rule is not None:
                norm = normalize_value(value, rule, schema.merge_map)
                if norm is not None:
                    value = norm
        out.add((sv.domain, sv.slot, value.strip().casefold()))
    return frozenset(out)


def _labeled_examples(corpus: Corpus, kind: str) -> list[ExampleId]:
    if kind == "classification":
        return [(did, t.turn_id) for did, t in corpus.iter_turns() if t.labels.class_labels]
    # For state tracking every turn is an example; an empty state is a label.
    return [(did, t.turn_id) for did, t in corpus.iter_turns()]


def filter_disagreement(corpus: Corpus, predictions: list[PredictionRecord],
                        match_mode: str = "exact_state",
                        schema: OntologySchema | None = None,
                        ) -> tuple[Corpus, list[StrippedExample]]:
    """Keep examples the predictor agrees with; strip the rest.

    Classification keeps a turn when the predicted argmax matches its label;
    state tracking compares the full predicted and gold slot-value sets
    (values casefolded; ``per_slot`` mode normalizes values through the
    ontology schema first).
    """
    if match_mode not in ("exact_state", "per_slot"):
        raise DenoiseError(f"match_mode must be exact_state or per_slot, got {match_mode!r}")
    if not predictions:
        raise DenoiseError("no predictions supplied")
    predictor_id = _single_predictor(predictions)
    kinds = {r.kind for r in predictions}
    if len(kinds) != 1:
        raise DenoiseError(f"predictions mix kinds {sorted(kinds)}")
    kind = next(iter(kinds))

    by_id = {r.example_id: r for r in predictions}
    labeled = _labeled_examples(corpus, kind)
    uncovered = [ex for ex in labeled if ex not in by_id]
    if uncovered:
        raise DenoiseError(f"predictions do not cover {len(uncovered)} labeled examples, "
                           f"e.g. {uncovered[:5]}")

    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}
    stripped: list[StrippedExample] = []
    for example_id in labeled:
        turn = turn_index[example_id]
        record = by_id[example_id]
        if kind == "classification":
            agree = record.argmax_label() in turn.labels.class_labels
        else:
            predicted = _state_set([sv for sv, _ in record.state], match_mode, schema)
            gold = _state_set(turn.labels.belief_state, match_mode, schema)
            agree = predicted == gold
        if not agree:
            stripped.append(StrippedExample(example_id, turn, "filter_disagree",
                                            filter_predictor_id=predictor_id))
    kept = drop_turns(corpus, [s.example_id for s in stripped]) if stripped else corpus
    return kept, stripped


# ---------------------------------------------------------------------------
# Step 3: co-teaching pseudo-labeling
# ---------------------------------------------------------------------------


@dataclass
class RelabeledExample:
    example_id: ExampleId
    turn: Turn
    confidence: float


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _record_confidence(record: PredictionRecord, lam: float) -> float:
    """Calibrated confidence in the record's own labels.

    Classification: max softmax probability at temperature lam.  State
    tracking treats every slot-value score as an independent logit and takes
    the weakest calibrated slot (an empty predicted state is fully
    confident in "no slots").
    """
    if record.kind == "classification":
        logit_record = LogitRecord(record.example_id, record.candidates)
        return max(p for _, p in apply_temperature(logit_record, lam))
    if not record.state:
        return 1.0
    return min(_sigmoid(score / lam) for _, score in record.state)


def pseudo_label(stripped: list[StrippedExample], second_predictions: list[PredictionRecord],
                 lam: float = 1.0, threshold: float = DEFAULT_THRESHOLD,
                 ) -> list[RelabeledExample]:
    """Re-admit stripped examples the second predictor is confident about.

    The second predictor must differ from the one that did the filtering;
    re-labeled examples take the second predictor's labels wholesale.
    """
    if not stripped:
        return []
    second_id = _single_predictor(second_predictions)
    for s in stripped:
        if s.filter_predictor_id is not None and s.filter_predictor_id == second_id:
            raise DenoiseError(
                f"co-teaching guard: pseudo-label predictor {second_id!r} is the same "
                f"as the filter predictor {s.filter_predictor_id!r}")
    by_id = {r.example_id: r for r in second_predictions}
    uncovered = [s.example_id for s in stripped if s.example_id not in by_id]
    if uncovered:
        raise DenoiseError(f"second predictions do not cover {len(uncovered)} stripped "
                           f"examples, e.g. {uncovered[:5]}")

    out: list[RelabeledExample] = []
    for s in stripped:
        record = by_id[s.example_id]
        confidence = _record_confidence(record, lam)
        if confidence > threshold:
            new_turn = clone_turn(s.turn)
            if record.kind == "classification":
                new_turn.labels.class_labels = [record.argmax_label()]
            else:
                new_turn.labels.belief_state = [sv for sv, _ in record.state]
            out.append(RelabeledExample(s.example_id, new_turn, confidence))
    return out


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class DenoiseConfig:
    steps: tuple[str, ...] = PIPELINE_STEPS
    threshold: float = DEFAULT_THRESHOLD
    lam: float | None = None  # pseudo-labeling temperature; None -> 1.0 with a warning
    schema: OntologySchema | None = None
    match_mode: str = "exact_state"
    ontology_policy: str = "drop_example"

    def __post_init__(self):
        unknown = set(self.steps) - set(PIPELINE_STEPS)
        if unknown:
            raise DenoiseError(f"unknown pipeline steps: {sorted(unknown)}")
        if not 0.0 < self.threshold < 1.0:
            raise DenoiseError(f"threshold must lie in (0, 1), got {self.threshold}")
        if "coteach_pseudo" in self.steps and not (
                "ontology_clean" in self.steps or "filter_disagree" in self.steps):
            raise DenoiseError("coteach_pseudo needs a stripping step "
                               "(ontology_clean or filter_disagree) before it")


@dataclass
class DenoiseCounts:
    kept: int
    ontology_removed: int
    filter_removed: int
    pseudo_readded: int

    def check_accounting(self, original_size: int, output_size: int) -> None:
        if self.kept + self.ontology_removed + self.filter_removed != original_size:
            raise DenoiseError("accounting: kept + removed != original size")
        if output_size != self.kept + self.pseudo_readded:
            raise DenoiseError("accounting: output size != kept + pseudo_readded")
        if self.pseudo_readded > self.ontology_removed + self.filter_removed:
            raise DenoiseError("accounting: more re-added than stripped")

    def to_dict(self) -> dict:
        return {"kept": self.kept, "ontology_removed": self.ontology_removed,
                "filter_removed": self.filter_removed,
                "pseudo_readded": self.pseudo_readded}


@dataclass
class DenoiseResult:
    clean_corpus: Corpus
    counts: DenoiseCounts
    ablation_name: str
    provenance: dict[ExampleId, list[str]] = field(default_factory=dict)


_ABLATION_NAMES = {
    (): "Original",
    ("ontology_clean",): "Ontology Clean",
    ("filter_disagree",): "Filter Disagree",
    ("filter_disagree", "coteach_pseudo"): "Co-teaching",
    ("ontology_clean", "filter_disagree", "coteach_pseudo"): "Combined",
}


def ablation_name(steps) -> str:
    ordered = tuple(s for s in PIPELINE_STEPS if s in set(steps))
    if ordered in _ABLATION_NAMES:
        return _ABLATION_NAMES[ordered]
    return " + ".join(_ABLATION_NAMES[(s,)] for s in ordered)


def run_pipeline(corpus: Corpus, config: DenoiseConfig,
                 predictions_a: list[PredictionRecord] | None = None,
                 predictions_b: list[PredictionRecord] | None = None) -> DenoiseResult:
    """Run the enabled steps in order: ontology clean, filter, pseudo-label.

    ``predictions_a`` feeds the disagreement filter, ``predictions_b`` the
    pseudo-labeler; both stripping steps feed the pseudo-label pool.  The
    whole pipeline is deterministic.
    """
    steps = tuple(s for s in PIPELINE_STEPS if s in set(config.steps))
    provenance: dict[ExampleId, list[str]] = {}
    stripped_pool: list[StrippedExample] = []
    original_size = corpus.turn_count()
    working = corpus

    if "coteach_pseudo" in steps:
        if predictions_b is None:
            raise DenoiseError("coteach_pseudo needs predictions_b")
        if predictions_a is not None:
            a_id = _single_predictor(predictions_a)
            b_id = _single_predictor(predictions_b)
            if a_id == b_id:
                raise DenoiseError(
                    f"co-teaching guard: filter predictor {a_id!r} and pseudo-label "
                    f"predictor {b_id!r} must differ")

    ontology_removed = 0
    if "ontology_clean" in steps:
        if config.schema is None:
            raise DenoiseError("ontology_clean needs a schema")
        outcome = clean_ontology(working, config.schema, policy=config.ontology_policy)
        for example_id in outcome.removed_examples:
            stripped_pool.append(StrippedExample(
                example_id, corpus.get_turn(example_id), "ontology_clean"))
            provenance.setdefault(example_id, []).append("ontology_clean:removed")
        ontology_removed = len(outcome.removed_examples)
        working = outcome.clean_corpus

    filter_removed = 0
    if "filter_disagree" in steps:
        if predictions_a is None:
            raise DenoiseError("filter_disagree needs predictions_a")
        working, stripped = filter_disagreement(working, predictions_a,
                                                match_mode=config.match_mode,
                                                schema=config.schema)
        for s in stripped:
            provenance.setdefault(s.example_id, []).append("filter_disagree:removed")
        filter_removed = len(stripped)
        stripped_pool.extend(stripped)

    pseudo_readded = 0
    if "coteach_pseudo" in steps and stripped_pool:
        lam = config.lam
        if lam is None:
            warnings.warn("no calibration temperature supplied; defaulting to 1.0",
                          stacklevel=2)
            lam = 1.0
        relabeled = pseudo_label(stripped_pool, predictions_b,
                                 lam=lam, threshold=config.threshold)
        working = _insert_turns(working, {r.example_id: r.turn for r in relabeled})
        for r in relabeled:
            provenance.setdefault(r.example_id, []).append("coteach_pseudo:readded")
        pseudo_readded = len(relabeled)

    counts = DenoiseCounts(
        kept=original_size - ontology_removed - filter_removed,
        ontology_removed=ontology_removed,
        filter_removed=filter_removed,
        pseudo_readded=pseudo_readded,
    )
    counts.check_accounting(original_size, working.turn_count())
    return DenoiseResult(clean_corpus=working, counts=counts,
                         ablation_name=ablation_name(steps), provenance=provenance)


def _insert_turns(corpus: Corpus, additions: dict[ExampleId, Turn]) -> Corpus:
    """Put re-labeled turns back into their dialogues in turn-id order."""
    dialogues = []
    for dlg in corpus.dialogues:
        extra = [t for (did, _), t in additions.items() if did == dlg.dialogue_id]
        if extra:
            turns = sorted(dlg.turns + extra, key=lambda t: t.turn_id)
            dialogues.append(Dialogue(dlg.dialogue_id, set(dlg.domains), turns))
        else:
            dialogues.append(dlg)
    return Corpus(name=corpus.name, dialogues=dialogues,
                  task_kinds=set(corpus.task_kinds), ontology=corpus.ontology)
