import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conftest import build_dst_corpus
from dialnoise.corpus import AnnotationSet, Corpus, Dialogue, TaskKind, Turn, dumps_corpus
from dialnoise.injector import (
    FilePerturber,
    InjectionError,
    NoiseSpec,
    ServicePerturber,
    damerau_distance,
    inject_breakdown_noise,
    inject_discourse_noise,
)
from dialnoise.taxonomy import parse_category

DISCOURSE = parse_category("training/discourse", require_leaf=False)
BREAKDOWN = parse_category("inference/breakdown", require_leaf=False)


def _text_corpus(texts_by_dialogue: dict[str, list[str]], speaker="user") -> Corpus:
    dialogues = []
    for did, texts in texts_by_dialogue.items():
        turns = [Turn(i, speaker, text, AnnotationSet()) for i, text in enumerate(texts)]
        dialogues.append(Dialogue(did, {"x"}, turns))
    return Corpus("texts", dialogues, {TaskKind.RG})


# -- discourse ------------------------------------------------------------------


def test_disfluent_preserves_token_multiset():
    corpus = _text_corpus({"d0": ["book a table for two people now"]})
    spec = NoiseSpec(DISCOURSE, 1.0, 3, {"kind": "disfluent"})
    noisy, log = inject_discourse_noise(corpus, spec)
    shuffled = noisy.get_turn(("d0", 0)).text
    assert Counter(shuffled.split()) == Counter("book a table for two people now".split())
    assert log.records[0].action == "shuffle"


def test_disfluent_redraws_identity_once():
    corpus = _text_corpus({"d0": ["alpha beta"]})
    outcomes = set()
    for seed in range(40):
        spec = NoiseSpec(DISCOURSE, 1.0, seed, {"kind": "disfluent"})
        noisy, _ = inject_discourse_noise(corpus, spec)
        outcomes.add(noisy.get_turn(("d0", 0)).text)
    # with two tokens the non-identity permutation dominates after the redraw
    assert "beta alpha" in outcomes


def test_incoherent_sources_from_other_dialogues():
    corpus = _text_corpus({
        "d0": ["dialogue zero turn one", "dialogue zero turn two"],
        "d1": ["dialogue one turn one"],
        "d2": ["dialogue two turn one", "dialogue two turn two"],
    })
    texts_by_dialogue = {did: {t.text for t in dlg.turns}
                         for did, dlg in ((d.dialogue_id, d) for d in corpus.dialogues)}
    seen_sources = 0
    for seed in range(250):
        spec = NoiseSpec(DISCOURSE, 0.8, seed, {"kind": "incoherent"})
        noisy, log = inject_discourse_noise(corpus, spec)
        for record in log.records:
            did = record.example_id[0]
            assert record.meta["source_dialogue"] != did
            assert record.after not in texts_by_dialogue[did]
            seen_sources += 1
    assert seen_sources >= 1000  # a four-digit sample keeps the check meaningful


def test_incoherent_single_dialogue_rejected():
    corpus = _text_corpus({"d0": ["only dialogue"]})
    with pytest.raises(InjectionError, match="2 dialogues"):
        inject_discourse_noise(corpus, NoiseSpec(DISCOURSE, 0.5, 1, {"kind": "incoherent"}))


def test_unnatural_defaults_break_the_fourth_wall():
    corpus = _text_corpus({"d0": ["hello"], "d1": ["there"]})
    spec = NoiseSpec(DISCOURSE, 1.0, 2, {"kind": "unnatural"})
    noisy, log = inject_discourse_noise(corpus, spec)
    fourth_wall_words = ("task", "instruction", "HIT", "assignment", "required")
    for record in log.records:
        assert any(w.lower() in record.after.lower() for w in fourth_wall_words)


def test_unnatural_custom_phrases():
    corpus = _text_corpus({"d0": ["hello"], "d1": ["there"]})
    spec = NoiseSpec(DISCOURSE, 1.0, 2,
                     {"kind": "unnatural", "unnatural_phrases": ["custom phrase"]})
    noisy, _ = inject_discourse_noise(corpus, spec)
    assert noisy.get_turn(("d0", 0)).text == "custom phrase"


def test_discourse_unknown_kind():
    corpus = _text_corpus({"d0": ["hello"]})
    with pytest.raises(InjectionError, match="kind"):
        inject_discourse_noise(corpus, NoiseSpec(DISCOURSE, 0.1, 1, {"kind": "shouty"}))


# -- breakdowns -------------------------------------------------------------------


def test_typo_edit_distance_always_one_or_two():
    corpus = build_dst_corpus(n_dialogues=50, seed=5)
    total = 0
    for seed in range(25):
        spec = NoiseSpec(BREAKDOWN, 0.8, seed, {"kind": "typo"})
        noisy, log = inject_breakdown_noise(corpus, spec)
        for record in log.records:
            d = damerau_distance(record.before, record.after)
            assert d in (1, 2), f"{record.before!r} -> {record.after!r} at distance {d}"
            total += 1
    assert total >= 1000


def test_typo_levenshtein_oracle_independent():
    """Cross-check a sample with a hand-rolled DP distance (transposition-aware)."""

    def oracle(a: str, b: str) -> int:
        rows = [[i + j if not i * j else 0 for j in range(len(b) + 1)]
                for i in range(len(a) + 1)]
        for i in range(1, len(a) + 1):
            for j in range(1, len(b) + 1):
                rows[i][j] = min(
                    rows[i - 1][j] + 1,
                    rows[i][j - 1] + 1,
                    rows[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
                )
                if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                    rows[i][j] = min(rows[i][j], rows[i - 2][j - 2] + 1)
        return rows[len(a)][len(b)]

    corpus = build_dst_corpus(n_dialogues=20, seed=6)
    spec = NoiseSpec(BREAKDOWN, 1.0, 11, {"kind": "typo"})
    _, log = inject_breakdown_noise(corpus, spec)
    assert log.records
    for record in log.records:
        assert oracle(record.before, record.after) in (1, 2)


def test_typo_only_user_turns():
    corpus = build_dst_corpus(n_dialogues=20, seed=7)
    spec = NoiseSpec(BREAKDOWN, 1.0, 1, {"kind": "typo"})
    noisy, log = inject_breakdown_noise(corpus, spec)
    for record in log.records:
        assert corpus.get_turn(record.example_id).speaker == "user"


def test_disfluency_insertions_from_fixed_set():
    corpus = _text_corpus({"d0": ["book a table"], "d1": ["find a hotel"]})
    seen = set()
    for seed in range(60):
        spec = NoiseSpec(BREAKDOWN, 1.0, seed, {"kind": "disfluency"})
        noisy, log = inject_breakdown_noise(corpus, spec)
        for record in log.records:
            before_tokens = Counter(record.before.split())
            after_tokens = Counter(record.after.split())
            extra = after_tokens - before_tokens
            # one filler ("umm,"/"uh,"), one repeat, or the three-token
            # "I mean," correction
            assert sum(extra.values()) in (1, 3)
            seen.add(tuple(sorted(extra)))
    assert ("umm,",) in seen
    assert ("uh,",) in seen


def test_disfluency_umm_prefix_example():
    corpus = _text_corpus({"d0": ["book a table"], "d1": ["x"]})
    for seed in range(40):
        spec = NoiseSpec(BREAKDOWN, 1.0, seed, {"kind": "disfluency"})
        noisy, log = inject_breakdown_noise(corpus, spec)
        by_id = {r.example_id: r for r in log.records}
        if by_id[("d0", 0)].after == "umm, book a table":
            return
    pytest.fail("umm-prefix style never drawn")


def test_asr_wreck_a_nice_beach():
    corpus = _text_corpus({"d0": ["Can you recognize speech today?"],
                           "d1": ["unrelated filler line"]})
    spec = NoiseSpec(BREAKDOWN, 1.0, 3, {"kind": "asr"})
    noisy, log = inject_breakdown_noise(corpus, spec)
    assert noisy.get_turn(("d0", 0)).text == "Can you wreck a nice beach today?"
    assert log.records[0].action == "replace"


def test_asr_quota_over_matching_turns_only():
    corpus = _text_corpus({"d0": ["I would like to book"],  # "to" matches
                           "d1": ["zzz qqq xxx"],           # nothing matches
                           "d2": ["see you there"]})        # "there" matches
    spec = NoiseSpec(BREAKDOWN, 1.0, 5, {"kind": "asr"})
    _, log = inject_breakdown_noise(corpus, spec)
    assert {r.example_id[0] for r in log.records} == {"d0", "d2"}


def test_paraphrase_requires_perturber():
    corpus = _text_corpus({"d0": ["hello"]})
    with pytest.raises(InjectionError, match="perturber"):
        inject_breakdown_noise(corpus, NoiseSpec(BREAKDOWN, 0.5, 1, {"kind": "paraphrase"}))


def test_paraphrase_file_perturber(tmp_path):
    corpus = _text_corpus({"d0": ["please book a table"], "d1": ["second line"]})
    path = tmp_path / "para.jsonl"
    path.write_text(
        '{"example_id": ["d0", 0], "text": "table for me please"}\n'
        '{"example_id": ["d1", 0], "text": "line number two"}\n', encoding="utf-8")
    spec = NoiseSpec(BREAKDOWN, 1.0, 1,
                     {"kind": "paraphrase", "perturber": FilePerturber(path)})
    noisy, log = inject_breakdown_noise(corpus, spec)
    assert noisy.get_turn(("d0", 0)).text == "table for me please"
    assert {r.action for r in log.records} == {"rewrite"}


def test_paraphrase_file_perturber_missing_example(tmp_path):
    corpus = _text_corpus({"d0": ["please book a table"]})
    path = tmp_path / "para.jsonl"
    path.write_text('{"example_id": ["zz", 9], "text": "irrelevant"}\n', encoding="utf-8")
    spec = NoiseSpec(BREAKDOWN, 1.0, 1,
                     {"kind": "paraphrase", "perturber": FilePerturber(path)})
    with pytest.raises(InjectionError, match=r"d0.*0"):
        inject_breakdown_noise(corpus, spec)


class _PerturbHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        doc = json.loads(self.rfile.read(length))
        body = json.dumps({"text": doc["text"].upper()}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def perturb_server():
    server = HTTPServer(("127.0.0.1", 0), _PerturbHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/predict"
    server.shutdown()


def test_paraphrase_service_perturber(perturb_server):
    corpus = _text_corpus({"d0": ["please book a table"], "d1": ["second"]})
    perturber = ServicePerturber(perturb_server, timeout=5.0, retries=1)
    spec = NoiseSpec(BREAKDOWN, 1.0, 1, {"kind": "paraphrase", "perturber": perturber})
    noisy, _ = inject_breakdown_noise(corpus, spec)
    assert noisy.get_turn(("d0", 0)).text == "PLEASE BOOK A TABLE"


def test_service_perturber_failure_propagates():
    perturber = ServicePerturber("http://127.0.0.1:1/predict", timeout=0.2, retries=0)
    corpus = _text_corpus({"d0": ["text"]})
    spec = NoiseSpec(BREAKDOWN, 1.0, 1, {"kind": "paraphrase", "perturber": perturber})
    with pytest.raises(InjectionError, match=r"d0.*0"):
        inject_breakdown_noise(corpus, spec)


def test_text_injectors_deterministic():
    corpus = build_dst_corpus(n_dialogues=30, seed=8)
    for kind in ("typo", "disfluency", "asr"):
        runs = []
        for _ in range(2):
            spec = NoiseSpec(BREAKDOWN, 0.5, 13, {"kind": kind})
            noisy, log = inject_breakdown_noise(corpus, spec)
            runs.append((dumps_corpus(noisy), log.to_jsonl()))
        assert runs[0] == runs[1], kind
