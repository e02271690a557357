import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialnoise.corpus import AnnotationSet, Corpus, Dialogue, SlotValue, Turn, validate_corpus
from dialnoise.ontology import (
    CleaningOutcome,
    FormatRule,
    OntologyError,
    OntologySchema,
    clean_ontology,
    default_schema,
    load_schema,
    normalize_value,
    validate_value,
)

TIME = FormatRule("time_hhmm")
DATE = FormatRule("date_iso")
NUMBER = FormatRule("number_digits")
LOCATION = FormatRule("location_canonical")
ENUM = FormatRule("enumeration", values=("cheap", "moderate", "expensive"))
FREE = FormatRule("pattern", pattern=".+")


@pytest.mark.parametrize("value,rule,expected", [
    ("14:15", TIME, True),
    ("2:15 PM", TIME, False),
    ("quarter past 2", TIME, False),
    ("Friday", TIME, False),  # day word in a time slot gets dropped
    ("23:59", TIME, True),
    ("24:00", TIME, False),
    ("9:15", TIME, False),  # unpadded hour is not canonical
    ("", TIME, False),
    ("", NUMBER, False),
    ("", ENUM, False),
    ("3", NUMBER, True),
    ("three", NUMBER, False),
    ("2022-01-03", DATE, True),
    ("Jan 3rd", DATE, False),
    ("2022-13-03", DATE, False),
    ("new york", LOCATION, True),
    ("NYC", LOCATION, False),
    (" new york ", LOCATION, False),
    ("Cheap", ENUM, True),  # enumeration matches after trim+casefold
    ("  MODERATE ", ENUM, True),
    ("free", ENUM, False),
    ("anything at all", FREE, True),
])
def test_validate_value_examples(value, rule, expected):
    assert validate_value(value, rule) is expected


def test_rule_constructors_reject_bad_input():
    with pytest.raises(OntologyError):
        FormatRule("enumeration", values=())
    with pytest.raises(OntologyError):
        FormatRule("pattern", pattern="(unclosed")
    with pytest.raises(OntologyError):
        FormatRule("nope")


def _clock_oracle(hour12: int, minute: int, pm: bool) -> str:
    hour = hour12 % 12 + (12 if pm else 0)
    return f"{hour:02d}:{minute:02d}"


def test_normalize_time_against_clock_arithmetic():
    rng = random.Random(4)
    for _ in range(200):
        hour12 = rng.randrange(1, 13)
        minute = rng.randrange(0, 60)
        pm = rng.random() < 0.5
        surface = f"{hour12}:{minute:02d} {'PM' if pm else 'AM'}"
        assert normalize_value(surface, TIME) == _clock_oracle(hour12, minute, pm)


@pytest.mark.parametrize("value,expected", [
    ("2:15 PM", "14:15"),
    ("2:15pm", "14:15"),
    ("215pm", "14:15"),
    ("12:00 AM", "00:00"),
    ("12:30 PM", "12:30"),
    ("9:05", "09:05"),
    ("14:15", "14:15"),  # fixed point
    ("quarter past 2", None),  # ambiguous, no safe rewrite
    ("Friday", None),
])
def test_normalize_time_examples(value, expected):
    assert normalize_value(value, TIME) == expected


def test_normalize_number_words():
    assert normalize_value("three", NUMBER) == "3"
    assert normalize_value("THREE", NUMBER) == "3"
    assert normalize_value("3", NUMBER) == "3"
    assert normalize_value("wife daughter & I", NUMBER) is None


def test_normalize_merge_map():
    merge = {"ny": "new york", "nyc": "new york"}
    assert normalize_value("NYC", LOCATION, merge) == "new york"
    assert normalize_value("new york", LOCATION, merge) == "new york"


@settings(max_examples=200, deadline=None)
@given(value=st.text(max_size=16),
       rule=st.sampled_from([TIME, DATE, NUMBER, LOCATION, ENUM, FREE]))
def test_normalize_idempotent_property(value, rule):
    out = normalize_value(value, rule, {"ny": "new york"})
    if out is not None:
        assert validate_value(out, rule)
        assert normalize_value(out, rule, {"ny": "new york"}) == out


# -- cleaning -----------------------------------------------------------------


def _schema() -> OntologySchema:
    return OntologySchema(slots={
        ("restaurant", "time"): TIME,
        ("restaurant", "people"): NUMBER,
        ("restaurant", "food"): FREE,
    })


def _turn(tid: int, *svs: SlotValue) -> Turn:
    return Turn(tid, "user", f"utterance {tid}", AnnotationSet(belief_state=list(svs)))


def _corpus(*turns: Turn) -> Corpus:
    return Corpus("c", [Dialogue("d0", {"restaurant"}, list(turns))])


def test_clean_drop_example_removes_friday_turn():
    corpus = _corpus(
        _turn(0, SlotValue("restaurant", "time", "Friday")),
        _turn(1, SlotValue("restaurant", "time", "18:00")),
    )
    outcome = clean_ontology(corpus, _schema(), policy="drop_example")
    assert outcome.removed_examples == [("d0", 0)]
    assert len(outcome.dropped_values) == 1
    assert outcome.dropped_values[0][1].value == "Friday"
    assert outcome.clean_corpus.turn_count() == 1


def test_clean_conforming_corpus_is_identity():
    corpus = _corpus(_turn(0, SlotValue("restaurant", "time", "18:00"),
                           SlotValue("restaurant", "people", "4")))
    outcome = clean_ontology(corpus, _schema(), policy="drop_example")
    assert outcome.dropped_values == [] and outcome.removed_examples == []
    assert outcome.clean_corpus.turn_count() == 1


def test_clean_drop_value_keeps_turn():
    corpus = _corpus(_turn(0, SlotValue("restaurant", "time", "Friday"),
                           SlotValue("restaurant", "people", "2")))
    outcome = clean_ontology(corpus, _schema(), policy="drop_value")
    assert outcome.removed_examples == []
    assert outcome.clean_corpus.turn_count() == 1
    remaining = outcome.clean_corpus.get_turn(("d0", 0)).labels.belief_state
    assert [sv.value for sv in remaining] == ["2"]


def test_clean_normalize_first_rescues_rewritable_values():
    corpus = _corpus(
        _turn(0, SlotValue("restaurant", "time", "2:15 PM")),  # rewritable
        _turn(1, SlotValue("restaurant", "time", "Friday")),   # hopeless
    )
    outcome = clean_ontology(corpus, _schema(), policy="normalize_first")
    assert outcome.normalized_values == [(("d0", 0), "2:15 PM", "14:15")]
    assert outcome.removed_examples == [("d0", 1)]
    kept = outcome.clean_corpus.get_turn(("d0", 0)).labels.belief_state
    assert kept[0].value == "14:15"


def test_clean_uncovered_slot_pairs_error():
    corpus = _corpus(_turn(0, SlotValue("hotel", "stars", "4")))
    with pytest.raises(OntologyError, match="hotel.stars"):
        clean_ontology(corpus, _schema())


def _plant_violations(n_turns=200, n_bad=17, seed=13):
    rng = random.Random(seed)
    turns = []
    bad_positions = set(rng.sample(range(n_turns), n_bad))
    planted = []
    for i in range(n_turns):
        if i in bad_positions:
            sv = SlotValue("restaurant", "time", rng.choice(["Friday", "afternoon", "late"]))
            planted.append((("d0", i), sv))
        else:
            sv = SlotValue("restaurant", "time", f"{rng.randrange(0, 24):02d}:00")
        turns.append(_turn(i, sv, SlotValue("restaurant", "people", str(rng.randrange(1, 9)))))
    return _corpus(*turns), planted


@pytest.mark.parametrize("policy", ["drop_example", "drop_value"])
def test_clean_planted_fault_oracle(policy):
    corpus, planted = _plant_violations()
    outcome = clean_ontology(corpus, _schema(), policy=policy)
    assert len(outcome.dropped_values) == len(planted) == 17
    assert {(ex, sv) for ex, sv, _ in outcome.dropped_values} == set(planted)
    schema = _schema()
    for _, turn in outcome.clean_corpus.iter_turns():
        for sv in turn.labels.belief_state:
            assert validate_value(sv.value, schema.slots[sv.key()])


def test_drop_example_removes_superset_of_drop_value():
    corpus, _ = _plant_violations(seed=29)
    by_example = clean_ontology(corpus, _schema(), policy="drop_example")
    by_value = clean_ontology(corpus, _schema(), policy="drop_value")

    def surviving(outcome: CleaningOutcome) -> set:
        return {(did, t.turn_id, sv.domain, sv.slot, sv.value)
                for did, t in outcome.clean_corpus.iter_turns()
                for sv in t.labels.belief_state}

    assert surviving(by_example) <= surviving(by_value)
    assert validate_corpus(by_example.clean_corpus) == []


def test_default_schema_loads_and_covers_mwoz_style_slots():
    schema = default_schema()
    assert ("restaurant", "time") in schema.slots
    assert schema.slots[("restaurant", "time")].kind == "time_hhmm"
    assert ("restaurant", "name") in schema.slots  # names pass through
    assert validate_value("Pizza Hut Fen Ditton", schema.slots[("restaurant", "name")])


def test_load_schema_file(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text('{"slots": {"a.b": {"kind": "number_digits"}}, '
                    '"merge_map": {"two": "2"}}', encoding="utf-8")
    schema = load_schema(path)
    assert schema.slots[("a", "b")].kind == "number_digits"
    assert normalize_value("TWO", schema.slots[("a", "b")], schema.merge_map) == "2"


def test_merge_map_chain_rejected():
    with pytest.raises(OntologyError, match="chain"):
        OntologySchema(merge_map={"a": "b", "b": "c"})
