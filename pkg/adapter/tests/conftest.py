from __future__ import annotations

import json
import random

import pytest
import torch

VOCAB_WORDS = (
    "please book a table for people turn of dialogue food time italian chinese "
    "indian british french inform request confirm bye greet restaurant the at "
    "= unknown help me find spot".split()
    + [str(i) for i in range(25)]
    + [f"{h:02d}:{m:02d}" for h in range(9, 21) for m in (0, 15, 30, 45)]
)


def _tokenizer():
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import PreTrainedTokenizerFast

    vocab = {"[PAD]": 0, "[UNK]": 1}
    for w in VOCAB_WORDS:
        vocab.setdefault(w, len(vocab))
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    return PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="[UNK]",
                                   pad_token="[PAD]"), vocab


def _save_tiny_lm(path, seed: int):
    from transformers import GPT2Config, GPT2LMHeadModel

    tokenizer, vocab = _tokenizer()
    config = GPT2Config(vocab_size=len(vocab), n_embd=32, n_layer=2, n_head=2,
                        n_positions=96, pad_token_id=0, bos_token_id=None,
                        eos_token_id=None)
    torch.manual_seed(seed)
    GPT2LMHeadModel(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return str(path)


def _save_tiny_classifier(path, seed: int, labels=("inform", "request", "bye")):
    from transformers import GPT2Config, GPT2ForSequenceClassification

    tokenizer, vocab = _tokenizer()
    config = GPT2Config(vocab_size=len(vocab), n_embd=32, n_layer=2, n_head=2,
                        n_positions=96, pad_token_id=0, bos_token_id=None,
                        eos_token_id=None, num_labels=len(labels),
                        id2label=dict(enumerate(labels)),
                        label2id={lab: i for i, lab in enumerate(labels)})
    torch.manual_seed(seed)
    GPT2ForSequenceClassification(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def tiny_lm(tmp_path_factory):
    return _save_tiny_lm(tmp_path_factory.mktemp("lm-a"), seed=0)


@pytest.fixture(scope="session")
def tiny_lm_b(tmp_path_factory):
    return _save_tiny_lm(tmp_path_factory.mktemp("lm-b"), seed=1)


@pytest.fixture(scope="session")
def tiny_classifier(tmp_path_factory):
    return _save_tiny_classifier(tmp_path_factory.mktemp("clf-a"), seed=2)


@pytest.fixture(scope="session")
def tiny_classifier_b(tmp_path_factory):
    return _save_tiny_classifier(tmp_path_factory.mktemp("clf-b"), seed=3)


def sample_corpus_doc(n_dialogues=10, turns_per=3, seed=5) -> dict:
    rng = random.Random(seed)
    foods = ["italian", "chinese", "indian", "british", "french"]
    acts = ["inform", "request", "bye"]
    dialogues = []
    for i in range(n_dialogues):
        turns = []
        for j in range(turns_per):
            food = rng.choice(foods)
            hour = rng.randrange(9, 21)
            minute = rng.choice([0, 15, 30, 45])
            turns.append({
                "turn_id": j,
                "speaker": "user" if j % 2 == 0 else "system",
                "text": f"please book a {food} table for {j + 1} people",
                "labels": {
                    "class_labels": [rng.choice(acts)],
                    "dialog_acts": [],
                    "belief_state": [
                        {"domain": "restaurant", "slot": "food", "value": food},
                        {"domain": "restaurant", "slot": "time",
                         "value": f"{hour:02d}:{minute:02d}"},
                    ],
                    "spans": [],
                    "reference_response": None,
                },
            })
        dialogues.append({"dialogue_id": f"s{i:03d}", "domains": ["restaurant"],
                          "turns": turns})
    return {"name": "sample", "task_kinds": ["DST", "CLC"], "dialogues": dialogues}


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "sample.json"
    path.write_text(json.dumps(sample_corpus_doc(), ensure_ascii=False, indent=2),
                    encoding="utf-8")
    return path


@pytest.fixture
def schema_file(tmp_path):
    doc = {"slots": {
        "restaurant.food": {"kind": "enumeration",
                            "values": ["italian", "chinese", "indian",
                                       "british", "french"]},
        "restaurant.time": {"kind": "time_hhmm"},
    }}
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path
