"""Batch inference over a canonical corpus, exported as prediction records.

Two predictor roles:

* ``classification``: a sequence-classification model scores each labeled
  turn; every class in the model's label map is emitted with its raw logit.
* ``dst``: a causal LM scores slot values by token log-likelihood.  Slots
  with enumerated values in the schema are constrained to that list; open
  slots get a greedy decode with its average token log-probability.

Logits are exported raw: calibration belongs to the consuming toolkit.
Decoding is greedy everywhere so two runs of the same configuration write
identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import torch

from .corpus_io import TurnView, read_corpus, read_slot_rules


class AdapterError(RuntimeError):
    pass


@dataclass
class AdapterConfig:
    model: str  # hub identifier or local path
    task: str  # "classification" | "dst"
    output: str
    batch_size: int = 16
    device: str = "cpu"
    schema: str | None = None  # slot rules for dst constrained scoring
    predictor_id: str | None = None  # defaults to the model identifier
    max_new_tokens: int = 8
    enumerated_only: bool = False  # dst: skip open slots

    def __post_init__(self):
        if self.task not in ("classification", "dst"):
            raise AdapterError(f"task must be classification or dst, got {self.task!r}")
        if self.batch_size < 1:
            raise AdapterError("batch_size must be >= 1")

    @property
    def effective_predictor_id(self) -> str:
        return self.predictor_id or self.model


def _load(config: AdapterConfig):
    from transformers import (
        AutoModelForCausalLM,
        AutoModelForSequenceClassification,
        AutoTokenizer,
    )

    try:
        tokenizer = AutoTokenizer.from_pretrained(config.model)
        if config.task == "classification":
            model = AutoModelForSequenceClassification.from_pretrained(config.model)
        else:
            model = AutoModelForCausalLM.from_pretrained(config.model)
    except Exception as exc:
        raise AdapterError(f"could not load model {config.model!r}: {exc}") from exc
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.unk_token
    model.eval()
    model.to(config.device)
    return tokenizer, model


def _guard_oom(exc: RuntimeError, config: AdapterConfig) -> AdapterError:
    if "out of memory" in str(exc).lower():
        return AdapterError(
            f"ran out of memory at batch_size={config.batch_size}; "
            f"retry with a smaller --batch-size")
    return AdapterError(str(exc))


def _batched(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i:i + size]


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def _classification_records(turns: list[TurnView], config: AdapterConfig) -> list[dict]:
    tokenizer, model = _load(config)
    labeled = [t for t in turns if t.class_labels]
    id2label = model.config.id2label
    records = []
    with torch.no_grad():
        for batch in _batched(labeled, config.batch_size):
            encoded = tokenizer([t.text for t in batch], return_tensors="pt",
                                padding=True, truncation=True,
                                max_length=getattr(model.config, "n_positions", 512))
            encoded = {k: v.to(config.device) for k, v in encoded.items()}
            try:
                logits = model(**encoded).logits.cpu()
            except RuntimeError as exc:
                raise _guard_oom(exc, config) from exc
            for turn, row in zip(batch, logits):
                candidates = [{"label": id2label[i], "logit": float(row[i])}
                              for i in range(row.shape[-1])]
                records.append({
                    "example_id": turn.example_id,
                    "predictor_id": config.effective_predictor_id,
                    "kind": "classification",
                    "candidates": candidates,
                })
    return records


# ---------------------------------------------------------------------------
# Dialogue state tracking
# ---------------------------------------------------------------------------


def _score_continuations(tokenizer, model, config: AdapterConfig,
                         prompt: str, continuations: list[str]) -> list[float]:
    """Mean token log-probability of each continuation after the prompt."""
    prompt_ids = tokenizer(prompt, return_tensors="pt")["input_ids"][0]
    scores = []
    with torch.no_grad():
        for batch in _batched(continuations, config.batch_size):
            rows, splits = [], []
            for cont in batch:
                cont_ids = tokenizer(cont, return_tensors="pt")["input_ids"][0]
                if cont_ids.numel() == 0:
                    cont_ids = torch.tensor([tokenizer.unk_token_id
                                             or tokenizer.pad_token_id])
                rows.append(torch.cat([prompt_ids, cont_ids]))
                splits.append((prompt_ids.numel(), cont_ids.numel()))
            width = max(r.numel() for r in rows)
            pad_id = tokenizer.pad_token_id or 0
            input_ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
            attention = torch.zeros((len(rows), width), dtype=torch.long)
            for i, row in enumerate(rows):
                input_ids[i, : row.numel()] = row
                attention[i, : row.numel()] = 1
            try:
                logits = model(input_ids=input_ids.to(config.device),
                               attention_mask=attention.to(config.device)).logits.cpu()
            except RuntimeError as exc:
                raise _guard_oom(exc, config) from exc
            logprobs = torch.log_softmax(logits, dim=-1)
            for i, (p_len, c_len) in enumerate(splits):
                total = 0.0
                for j in range(c_len):
                    position = p_len + j - 1  # logits at t predict token t+1
                    token = input_ids[i, p_len + j]
                    total += float(logprobs[i, position, token])
                scores.append(total / c_len)
    return scores


def _greedy_value(tokenizer, model, config: AdapterConfig, prompt: str) -> tuple[str, float]:
    encoded = tokenizer(prompt, return_tensors="pt")
    input_ids = encoded["input_ids"].to(config.device)
    with torch.no_grad():
        out = model.generate(
            input_ids,
            max_new_tokens=config.max_new_tokens,
            do_sample=False,
            num_beams=1,
            pad_token_id=tokenizer.pad_token_id,
            return_dict_in_generate=True,
            output_scores=True,
        )
    new_tokens = out.sequences[0, input_ids.shape[1]:]
    total, count = 0.0, 0
    for step, token in zip(out.scores, new_tokens):
        logprob = torch.log_softmax(step[0], dim=-1)[token]
        total += float(logprob)
        count += 1
    text = tokenizer.decode(new_tokens, skip_special_tokens=True).strip()
    text = text.split("\n")[0].strip() or "unknown"
    return text, (total / count if count else -100.0)


def _dst_records(turns: list[TurnView], config: AdapterConfig) -> list[dict]:
    if not config.schema:
        raise AdapterError("dst task needs --schema for the slot list")
    rules = read_slot_rules(config.schema)
    if not rules:
        raise AdapterError(f"schema {config.schema} defines no slots")
    tokenizer, model = _load(config)

    slot_order = sorted(rules)
    records = []
    for turn in turns:  # every turn is a state-tracking example
        state = []
        for domain, slot in slot_order:
            rule = rules[(domain, slot)]
            values = list(rule.get("values", ()))
            prompt = f"{turn.text}\n{domain} {slot} ="
            if values:
                scores = _score_continuations(tokenizer, model, config,
                                              prompt, [f" {v}" for v in values])
                best = max(range(len(values)), key=lambda i: scores[i])
                state.append({"domain": domain, "slot": slot,
                              "value": values[best], "score": scores[best]})
            elif not config.enumerated_only:
                value, score = _greedy_value(tokenizer, model, config, prompt)
                state.append({"domain": domain, "slot": slot,
                              "value": value, "score": score})
        records.append({
            "example_id": turn.example_id,
            "predictor_id": config.effective_predictor_id,
            "kind": "dst",
            "state": state,
        })
    return records


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def export_predictions(corpus_path: str | Path, config: AdapterConfig) -> Path:
    """One prediction line per labeled example, written atomically."""
    turns = read_corpus(corpus_path)
    if config.task == "classification":
        records = _classification_records(turns, config)
    else:
        records = _dst_records(turns, config)

    out_path = Path(config.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    fd, tmp_name = tempfile.mkstemp(dir=out_path.parent, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp_name, out_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return out_path
