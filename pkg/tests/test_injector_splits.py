import pytest

from dialnoise.corpus import Corpus, Dialogue, TaskKind, Turn, dumps_corpus
from dialnoise.injector import (
    InjectionError,
    NoiseSpec,
    inject_discourse_noise,
    leave_one_out,
    make_ood_split,
    sweep,
)
from dialnoise.taxonomy import parse_category

MWOZ_DOMAINS = ["restaurant", "hotel", "train", "taxi", "attraction"]


def _multi_domain_corpus(domains=MWOZ_DOMAINS, per_domain=4) -> Corpus:
    dialogues = []
    for d_idx, domain in enumerate(domains):
        for i in range(per_domain):
            dialogues.append(Dialogue(
                f"{domain}-{i}", {domain},
                [Turn(0, "user", f"I need help with {domain} number {i}")]))
    if len(domains) >= 2:  # a cross-domain dialogue
        dialogues.append(Dialogue("mixed-0", {domains[0], domains[1]},
                                  [Turn(0, "user", "mixed request")]))
    return Corpus("multi", dialogues, {TaskKind.DST})


def test_two_domain_holdout():
    corpus = _multi_domain_corpus(domains=["a", "b"])
    split = make_ood_split(corpus, {"b"})
    train_domains = {d for dlg in split["train"].dialogues for d in dlg.domains}
    assert train_domains == {"a"}
    assert split["test"].turn_count() == corpus.turn_count()


def test_holdout_excludes_mixed_domain_dialogues():
    corpus = _multi_domain_corpus()
    split = make_ood_split(corpus, {"hotel"})
    ids = {d.dialogue_id for d in split["train"].dialogues}
    assert "mixed-0" not in ids  # touches the held-out domain
    for dlg in split["train"].dialogues:
        assert not (dlg.domains & {"hotel"})


def test_leave_one_out_gives_five_splits():
    corpus = _multi_domain_corpus()
    splits = list(leave_one_out(corpus))
    assert [domain for domain, _ in splits] == sorted(MWOZ_DOMAINS)
    for domain, split in splits:
        train_domains = {d for dlg in split["train"].dialogues for d in dlg.domains}
        assert train_domains & {domain} == set()
        test_domains = {d for dlg in split["test"].dialogues for d in dlg.domains}
        assert domain in test_domains  # test keeps every domain


def test_holdout_validation():
    corpus = _multi_domain_corpus(domains=["a", "b"])
    with pytest.raises(InjectionError, match="every domain"):
        make_ood_split(corpus, {"a", "b"})
    with pytest.raises(InjectionError, match="unobserved"):
        make_ood_split(corpus, {"zz"})
    with pytest.raises(InjectionError, match="empty"):
        make_ood_split(corpus, set())


def test_leave_one_out_needs_two_domains():
    corpus = _multi_domain_corpus(domains=["solo"])
    with pytest.raises(InjectionError):
        list(leave_one_out(corpus))


# -- sweep -------------------------------------------------------------------


def _sweep_corpus():
    dialogues = [Dialogue(f"d{i}", {"x"}, [Turn(0, "user", f"utterance number {i} here")])
                 for i in range(1000)]
    return Corpus("sweepable", dialogues, {TaskKind.RG})


def _inject(corpus, spec):
    return inject_discourse_noise(corpus, spec)


def test_sweep_level_zero_is_identity():
    corpus = _sweep_corpus()
    base = NoiseSpec(parse_category("training/discourse", require_leaf=False),
                     seed=5, params={"kind": "disfluent"})
    results = sweep(corpus, base, [0.0], _inject)
    assert len(results) == 1
    level, out, log = results[0]
    assert level == 0.0 and out is corpus and len(log) == 0


def test_sweep_counts_at_each_level():
    corpus = _sweep_corpus()
    base = NoiseSpec(parse_category("training/discourse", require_leaf=False),
                     seed=5, params={"kind": "disfluent"})
    results = sweep(corpus, base, [0.1, 0.2], _inject)
    assert [len(log) for _, _, log in results] == [100, 200]


def test_sweep_levels_are_independent_draws():
    corpus = _sweep_corpus()
    base = NoiseSpec(parse_category("training/discourse", require_leaf=False),
                     seed=5, params={"kind": "disfluent"})
    results = sweep(corpus, base, [0.1, 0.2], _inject)
    ids_01 = set(results[0][2].example_ids())
    ids_02 = set(results[1][2].example_ids())
    assert ids_01 != ids_02
    assert not ids_01 <= ids_02  # independently sampled per level
    again = sweep(corpus, base, [0.1, 0.2], _inject)
    assert [dumps_corpus(c) for _, c, _ in again] == [dumps_corpus(c) for _, c, _ in results]


def test_sweep_rejects_unsorted_or_out_of_range():
    corpus = _sweep_corpus()
    base = NoiseSpec(parse_category("training/discourse", require_leaf=False),
                     seed=5, params={"kind": "disfluent"})
    with pytest.raises(InjectionError):
        sweep(corpus, base, [0.2, 0.1], _inject)
    with pytest.raises(InjectionError):
        sweep(corpus, base, [0.1, 1.5], _inject)
