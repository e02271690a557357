"""Temperature scaling of predictor confidences.

Dividing logits by a temperature before the softmax reshapes confidence
without moving the argmax; the temperature is picked by grid search on
held-out records with gold labels, minimizing mean negative log-likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "LogitRecord",
    "FitResult",
    "CalibrationError",
    "DEFAULT_GRID",
    "softmax",
    "apply_temperature",
    "fit_temperature",
    "expected_calibration_error",
    "load_logit_records",
]

DEFAULT_GRID = (1.3, 1.5, 1.7, 1.9)


class CalibrationError(ValueError):
    pass


@dataclass
class LogitRecord:
    example_id: object
    candidates: list[tuple[str, float]]  # (label, logit)
    gold: str | None = None

    def __post_init__(self):
        if not self.candidates:
            raise CalibrationError(f"{self.example_id}: record needs at least one candidate")
        for label, logit in self.candidates:
            if not math.isfinite(logit):
                raise CalibrationError(f"{self.example_id}: non-finite logit for {label!r}")


def softmax(logits: list[float], temperature: float = 1.0) -> list[float]:
    if temperature <= 0:
        raise CalibrationError(f"temperature must be positive, got {temperature}")
    scaled = [x / temperature for x in logits]
    peak = max(scaled)
    # flooring the exponentials keeps every probability strictly positive
    # even when a scaled gap underflows exp(); the distortion is ~1e-300
    exps = [max(math.exp(x - peak), 1e-300) for x in scaled]
    total = sum(exps)
    return [e / total for e in exps]


def apply_temperature(record: LogitRecord, temperature: float) -> list[tuple[str, float]]:
    """Calibrated (label, probability) pairs; argmax is temperature-invariant."""
    probs = softmax([logit for _, logit in record.candidates], temperature)
    return [(label, p) for (label, _), p in zip(record.candidates, probs)]


def _nll(records: list[LogitRecord], temperature: float) -> float:
    total = 0.0
    for rec in records:
        probs = dict(apply_temperature(rec, temperature))
        total += -math.log(probs[rec.gold])
    return total / len(records)


@dataclass
class FitResult:
    temperature: float
    nll_by_temperature: dict[float, float]  # includes the 1.0 baseline row

    def report_rows(self) -> list[tuple[float, float, bool]]:
        rows = []
        for lam in sorted(self.nll_by_temperature):
            rows.append((lam, self.nll_by_temperature[lam], lam == self.temperature))
        return rows


def fit_temperature(dev: list[LogitRecord], grid=DEFAULT_GRID) -> FitResult:
    """Grid-search the temperature minimizing mean NLL on gold-labeled records.

    Ties break toward the smaller temperature.  A 1.0 baseline row is always
    reported but can only win if 1.0 is itself a grid point.
    """
    if not grid:
        raise CalibrationError("temperature grid is empty")
    if not dev:
        raise CalibrationError("no dev records to fit on")
    bad = [r.example_id for r in dev
           if r.gold is None or r.gold not in {label for label, _ in r.candidates}]
    if bad:
        raise CalibrationError(f"gold label missing from candidates for: {bad[:10]}")
    for lam in grid:
        if lam <= 0:
            raise CalibrationError(f"temperature must be positive, got {lam}")

    table = {float(lam): _nll(dev, lam) for lam in grid}
    best = min(sorted(table), key=lambda lam: (table[lam], lam))
    if 1.0 not in table:
        table[1.0] = _nll(dev, 1.0)
    return FitResult(temperature=best, nll_by_temperature=table)


def expected_calibration_error(records: list[LogitRecord], temperature: float = 1.0,
                               bins: int = 10) -> float:
    """Equal-width-bin ECE over max-probability confidence, in [0, 1].

    Bin b covers (b/bins, (b+1)/bins]; confidence 0 falls into the first bin.
    """
    if bins < 1:
        raise CalibrationError(f"bins must be >= 1, got {bins}")
    if not records:
        raise CalibrationError("no records")
    bin_conf = [0.0] * bins
    bin_acc = [0.0] * bins
    bin_n = [0] * bins
    for rec in records:
        if rec.gold is None:
            raise CalibrationError(f"{rec.example_id}: ECE needs gold labels")
        calibrated = apply_temperature(rec, temperature)
        label, conf = max(calibrated, key=lambda pair: pair[1])
        b = min(bins - 1, max(0, math.ceil(conf * bins) - 1))
        bin_conf[b] += conf
        bin_acc[b] += 1.0 if label == rec.gold else 0.0
        bin_n[b] += 1
    n = len(records)
    ece = 0.0
    for b in range(bins):
        if bin_n[b]:
            ece += (bin_n[b] / n) * abs(bin_acc[b] / bin_n[b] - bin_conf[b] / bin_n[b])
    return ece


def load_logit_records(path: str | Path) -> list[LogitRecord]:
    """Line-delimited JSON: {"example_id", "candidates": [{"label","logit"}], "gold"}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CalibrationError(f"{path}:{lineno}: bad JSON: {exc.msg}") from exc
            try:
                candidates = [(c["label"], float(c["logit"])) for c in doc["candidates"]]
                example_id = doc["example_id"]
            except (KeyError, TypeError) as exc:
                raise CalibrationError(f"{path}:{lineno}: missing field {exc}") from exc
            records.append(LogitRecord(
                example_id=tuple(example_id) if isinstance(example_id, list) else example_id,
                candidates=candidates,
                gold=doc.get("gold"),
            ))
    return records
