from __future__ import annotations

import random

import pytest

from dialnoise.corpus import AnnotationSet, Corpus, Dialogue, SlotValue, TaskKind, Turn


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome, flag in (("passed", "PASS"), ("failed", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in report.nodeid and report.when == "call":
                name = report.nodeid.split("::")[-1]
                lines.append((name, flag))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, flag in sorted(lines):
            terminalreporter.write_line(f"{flag}  {name}")

FOODS = ["italian", "chinese", "indian", "british", "french"]
ACTS = ["inform", "request", "confirm", "bye", "greet"]


def build_dst_corpus(n_dialogues=25, turns_per=4, seed=1, name="synth-dst",
                     domains=("restaurant",)) -> Corpus:
    """Synthetic DST corpus with time/people/food slots covered by the shipped schema."""
    rng = random.Random(seed)
    dialogues = []
    for i in range(n_dialogues):
        turns = []
        for j in range(turns_per):
            state = [
                SlotValue("restaurant", "food", rng.choice(FOODS)),
                SlotValue("restaurant", "time",
                          f"{rng.randrange(9, 21):02d}:{rng.choice([0, 15, 30, 45]):02d}"),
                SlotValue("restaurant", "people", str(rng.randrange(1, 7))),
            ][: rng.randrange(1, 4)]
            turns.append(Turn(
                turn_id=j,
                speaker="user" if j % 2 == 0 else "system",
                text=f"turn {j} of dialogue {i}, please book a table",
                labels=AnnotationSet(
                    class_labels=[rng.choice(ACTS)],
                    belief_state=state,
                    reference_response="Sure, I will book that." if j % 2 else None,
                ),
            ))
        dialogues.append(Dialogue(f"d{i:04d}", set(domains), turns))
    return Corpus(name, dialogues, {TaskKind.DST, TaskKind.CLC})


def build_clc_corpus(n_dialogues=40, seed=3, labels=ACTS, name="synth-clc") -> Corpus:
    rng = random.Random(seed)
    dialogues = []
    for i in range(n_dialogues):
        turns = [Turn(0, "user", f"utterance number {i}",
                      AnnotationSet(class_labels=[rng.choice(labels)]))]
        dialogues.append(Dialogue(f"c{i:04d}", {"chat"}, turns))
    return Corpus(name, dialogues, {TaskKind.CLC})


@pytest.fixture
def dst_corpus() -> Corpus:
    return build_dst_corpus()


@pytest.fixture
def clc_corpus() -> Corpus:
    return build_clc_corpus()


@pytest.fixture
def fig1_corpus() -> Corpus:
    """A MultiWOZ-shaped dialogue whose annotation misses the taxi destination.

    The user names a taxi destination and a restaurant constraint; the state
    carries the restaurant value and the taxi departure but the (taxi,
    destination) pair was never filled in by the annotator.
    """
    turns = [
        Turn(0, "user",
             "I want to book a taxi to pizza hut fenditton from the hotel at 17:15.",
             AnnotationSet(belief_state=[
                 SlotValue("taxi", "departure", "the hotel"),
                 SlotValue("taxi", "leaveat", "17:15"),
             ])),
        Turn(1, "system", "Where will you be picked up?",
             AnnotationSet(reference_response="Where will you be picked up?")),
        Turn(2, "user", "Also find me an italian restaurant in the centre.",
             AnnotationSet(belief_state=[
                 SlotValue("restaurant", "food", "italian"),
                 SlotValue("restaurant", "area", "centre"),
                 SlotValue("taxi", "departure", "the hotel"),
                 SlotValue("taxi", "leaveat", "17:15"),
             ])),
        Turn(3, "system", "Booking completed.",
             AnnotationSet(reference_response="Booking completed.")),
    ]
    return Corpus("MWOZ", [Dialogue("mwoz-fig1", {"taxi", "restaurant"}, turns)],
                  {TaskKind.DST})


def state_set(turn) -> set[tuple[str, str, str]]:
    return {(sv.domain, sv.slot, sv.value) for sv in turn.labels.belief_state}


def corpus_states(corpus) -> dict:
    return {(did, t.turn_id): state_set(t) for did, t in corpus.iter_turns()}
