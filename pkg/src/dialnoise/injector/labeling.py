"""Label-level noise: class confusion, instance errors, annotator spam.

Class noise swaps a label for a different one, either uniformly over the
other observed labels or by sampling the transition matrix row of the
original.  Instance noise perturbs belief states with one of three moves
(insert a recently seen slot-value, overwrite a value from the recent pool,
or drop a slot-value).  Annotator noise mimics spammers applying canned
answers and sloppy formatting slips.
"""

from __future__ import annotations

from collections import Counter

from ..corpus import Corpus, ExampleId, SlotValue, Span, Turn, clone_turn
from ..datadir import load_table
from .common import (
    Attempt,
    InjectionError,
    InjectionLog,
    InjectionRecord,
    NoiseSpec,
    run_until_quota,
)
from .edits import adjacency_table, char_edit
from .matrix import TransitionMatrix

__all__ = [
    "inject_class_noise",
    "inject_instance_noise",
    "inject_annotator_noise",
    "recent_label_pool",
]

DEFAULT_WINDOW_SIZE = 3


def _state_dicts(state: list[SlotValue]) -> list[dict]:
    return [{"domain": sv.domain, "slot": sv.slot, "value": sv.value} for sv in state]


# ---------------------------------------------------------------------------
# Class-level noise
# ---------------------------------------------------------------------------


def _target_labels(turn: Turn, target: str) -> list[str]:
    if target == "class_labels":
        return turn.labels.class_labels
    if target == "dialog_acts":
        return turn.labels.dialog_acts
    raise InjectionError(f"unknown label target {target!r}")


def inject_class_noise(corpus: Corpus, spec: NoiseSpec,
                       target: str = "class_labels", jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Swap labels for different ones; the replacement never equals the original."""
    mode = spec.params.get("mode", "uniform")
    if mode not in ("uniform", "structured"):
        raise InjectionError(f"class-noise mode must be uniform or structured, got {mode!r}")
    matrix: TransitionMatrix | None = spec.params.get("matrix")
    if mode == "structured" and matrix is None:
        raise InjectionError("structured class noise needs a transition matrix")

    eligible = [(did, t.turn_id) for did, t in corpus.iter_turns() if _target_labels(t, target)]
    observed = sorted({label for did, t in corpus.iter_turns()
                       for label in _target_labels(t, target)})
    if mode == "uniform" and len(observed) < 2:
        raise InjectionError("uniform class noise needs at least 2 distinct labels")
    if matrix is not None:
        missing = [label for label in observed if label not in matrix.labels]
        if missing:
            raise InjectionError(f"labels absent from transition matrix: {missing[:10]}")

    category = spec.category.render() if spec.category.is_leaf else \
        f"training/labeling/class/{mode}"
    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}

    def corrupt(example_id: ExampleId) -> Attempt:
        rng = spec.example_rng(example_id)
        turn = turn_index[example_id]
        labels = _target_labels(turn, target)
        idx = rng.randrange(len(labels)) if len(labels) > 1 else 0
        original = labels[idx]
        if mode == "uniform":
            others = [label for label in observed if label != original]
            replacement = rng.choice(others)
        else:
            row = matrix.row_for(original)
            replacement = rng.choices(matrix.labels, weights=row.tolist(), k=1)[0]
        new_turn = clone_turn(turn)
        _target_labels(new_turn, target)[idx] = replacement
        return Attempt(example_id, new_turn, InjectionRecord(
            example_id, category, "swap", before=original, after=replacement))

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)


# ---------------------------------------------------------------------------
# Instance-level noise
# ---------------------------------------------------------------------------


def recent_label_pool(dialogue_turns: list[Turn], position: int, window_size: int) -> list[SlotValue]:
    """Distinct slot-values from the previous window_size turns, oldest first."""
    pool: list[SlotValue] = []
    seen = set()
    for turn in dialogue_turns[max(0, position - window_size):position]:
        for sv in turn.labels.belief_state:
            if sv not in seen:
                seen.add(sv)
                pool.append(sv)
    return pool


def inject_instance_noise(corpus: Corpus, spec: NoiseSpec, jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Over / partial / under labeling drawn uniformly per corrupted example.

    Over inserts a slot-value from the recent pool (state grows by one),
    partial overwrites one value with a pool value (size unchanged), under
    drops one slot-value (size shrinks by one).  Empty states can only be
    over-labeled; an empty pool falls back to a corpus-level label sample,
    which the log records.
    """
    window_size = int(spec.params.get("window_size", DEFAULT_WINDOW_SIZE))
    corpus_labels = sorted({sv for _, t in corpus.iter_turns() for sv in t.labels.belief_state},
                           key=lambda sv: (sv.domain, sv.slot, sv.value))
    if not corpus_labels:
        raise InjectionError("instance noise needs a corpus with slot-value labels")

    pools: dict[ExampleId, list[SlotValue]] = {}
    turn_index: dict[ExampleId, Turn] = {}
    for dlg in corpus.dialogues:
        for pos, turn in enumerate(dlg.turns):
            example_id = (dlg.dialogue_id, turn.turn_id)
            pools[example_id] = recent_label_pool(dlg.turns, pos, window_size)
            turn_index[example_id] = turn
    eligible = sorted(turn_index)

    def corrupt(example_id: ExampleId) -> Attempt:
        rng = spec.example_rng(example_id)
        turn = turn_index[example_id]
        state = turn.labels.belief_state
        pool = pools[example_id]
        present = {sv.key() for sv in state}

        over_pool = [sv for sv in pool if sv.key() not in present]
        over_fallback = False
        if not over_pool:
            over_pool = [sv for sv in corpus_labels if sv.key() not in present]
            over_fallback = True
        partial_pool = pool
        partial_fallback = False
        if not partial_pool:
            partial_pool = corpus_labels
            partial_fallback = True

        allowed = []
        if over_pool:
            allowed.append("over")
        if state and partial_pool:
            allowed.append("partial")
        if state:
            allowed.append("under")
        if not allowed:
            return Attempt(example_id, skip_reason="no applicable instance sub-category")

        sub = rng.choice(allowed)
        new_turn = clone_turn(turn)
        before = _state_dicts(state)
        meta = {}
        if sub == "over":
            extra = rng.choice(over_pool)
            new_turn.labels.belief_state = list(state) + [extra]
            action = "insert"
            meta = {"fallback": over_fallback}
        elif sub == "partial":
            idx = rng.randrange(len(state))
            source = rng.choice(partial_pool)
            old = state[idx]
            new_turn.labels.belief_state = list(state)
            new_turn.labels.belief_state[idx] = SlotValue(old.domain, old.slot, source.value)
            action = "replace"
            meta = {"fallback": partial_fallback}
        else:
            idx = rng.randrange(len(state))
            new_turn.labels.belief_state = [sv for i, sv in enumerate(state) if i != idx]
            action = "drop"
        record = InjectionRecord(
            example_id, f"training/labeling/instance/{sub}", action,
            before={"belief_state": before},
            after={"belief_state": _state_dicts(new_turn.labels.belief_state)},
            meta=meta)
        return Attempt(example_id, new_turn, record)

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)


# ---------------------------------------------------------------------------
# Annotator-level noise
# ---------------------------------------------------------------------------


def _spam_phrases(spec: NoiseSpec) -> list[str]:
    phrases = spec.params.get("generic_phrases")
    if phrases is None:
        phrases = load_table("spam_phrases.json")
    if not isinstance(phrases, list) or len(phrases) != 3:
        raise InjectionError("spam_generation needs exactly 3 generic phrases")
    return list(phrases)


def inject_annotator_noise(corpus: Corpus, spec: NoiseSpec, jobs: int = 1) -> tuple[Corpus, InjectionLog]:
    """Spammer-style canned answers and formatting slips.

    * ``spam_class``: replace a label with one of the three globally most
      frequent labels (spammers do not check, so the pick may equal the
      original; such records carry meta.unchanged).
    * ``spam_generation``: replace the reference response with a canned
      generic phrase.
    * ``formatting``: an off-by-one span highlight or a one-character typo in
      a slot value, chosen uniformly among the actions the turn supports.
    """
    kind = spec.params.get("kind")
    if kind not in ("spam_class", "spam_generation", "formatting"):
        raise InjectionError(f"annotator noise kind must be spam_class, spam_generation "
                             f"or formatting, got {kind!r}")

    turn_index = {(did, t.turn_id): t for did, t in corpus.iter_turns()}

    if kind == "spam_class":
        target = "class_labels" if any(t.labels.class_labels for _, t in corpus.iter_turns()) \
            else "dialog_acts"
        counts = Counter(label for _, t in corpus.iter_turns()
                         for label in _target_labels(t, target))
        if len(counts) < 3:
            raise InjectionError(f"spam_class needs at least 3 distinct labels, "
                                 f"found {len(counts)}")
        top3 = [label for label, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:3]]
        eligible = [(did, t.turn_id) for did, t in corpus.iter_turns()
                    if _target_labels(t, target)]
        category = "training/labeling/annotator/adversarial"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            labels = _target_labels(turn, target)
            idx = rng.randrange(len(labels)) if len(labels) > 1 else 0
            original = labels[idx]
            replacement = rng.choice(top3)
            new_turn = clone_turn(turn)
            _target_labels(new_turn, target)[idx] = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "spam", before=original, after=replacement,
                meta={"unchanged": replacement == original}))

    elif kind == "spam_generation":
        phrases = _spam_phrases(spec)
        eligible = [(did, t.turn_id) for did, t in corpus.iter_turns()
                    if t.labels.reference_response is not None]
        if not eligible:
            raise InjectionError("spam_generation needs turns with a reference_response")
        category = "training/labeling/annotator/adversarial"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            replacement = rng.choice(phrases)
            new_turn = clone_turn(turn)
            new_turn.labels.reference_response = replacement
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "spam",
                before=turn.labels.reference_response, after=replacement))

    else:  # formatting
        adjacency = adjacency_table()
        eligible = [(did, t.turn_id) for did, t in corpus.iter_turns()
                    if t.labels.spans or t.labels.belief_state]
        if not eligible:
            raise InjectionError("formatting noise needs spans or slot values")
        category = "training/labeling/annotator/formatting"

        def corrupt(example_id: ExampleId) -> Attempt:
            rng = spec.example_rng(example_id)
            turn = turn_index[example_id]
            actions = []
            span_idxs = [i for i, sp in enumerate(turn.labels.spans) if sp.end > sp.start]
            if span_idxs:
                actions.append("truncate_span")
            if turn.labels.belief_state:
                actions.append("value_typo")
            if not actions:
                return Attempt(example_id, skip_reason="no span or value to corrupt")
            action = rng.choice(actions)
            new_turn = clone_turn(turn)
            if action == "truncate_span":
                idx = rng.choice(span_idxs)
                sp = turn.labels.spans[idx]
                text_bytes = len(turn.text.encode("utf-8"))
                new_end = sp.end + 1 if sp.end + 1 <= text_bytes else sp.end
                new_sp = Span(sp.label, sp.start + 1, new_end)
                new_turn.labels.spans[idx] = new_sp
                return Attempt(example_id, new_turn, InjectionRecord(
                    example_id, category, "truncate_span",
                    before={"label": sp.label, "start": sp.start, "end": sp.end},
                    after={"label": new_sp.label, "start": new_sp.start, "end": new_sp.end}))
            idx = rng.randrange(len(turn.labels.belief_state))
            sv = turn.labels.belief_state[idx]
            new_value = char_edit(rng, sv.value, adjacency)
            new_turn.labels.belief_state[idx] = SlotValue(sv.domain, sv.slot, new_value)
            return Attempt(example_id, new_turn, InjectionRecord(
                example_id, category, "perturb", before=sv.value, after=new_value))

    return run_until_quota(corpus, eligible, spec.rate, spec.selection_rng(), corrupt, jobs)
