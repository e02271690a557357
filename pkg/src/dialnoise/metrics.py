"""Evaluation and reporting arithmetic.

Joint goal accuracy for state tracking, exact-match accuracy for
classification, smoothed sentence BLEU for generation, plus the
degradation / relative-improvement bookkeeping used in impact reports and
a logarithmic fit for score-vs-noise-level curves.
"""

from __future__ import annotations

import json
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScorePair",
    "ImpactRow",
    "ImpactReport",
    "joint_goal_accuracy",
    "classification_accuracy",
    "bleu",
    "degradation",
    "invert_degradation",
    "relative_improvement",
    "aggregate_by_task",
    "fit_log_curve",
    "LOG_CURVE_EPSILON",
]

LOG_CURVE_EPSILON = 1e-3


@dataclass(frozen=True)
class ScorePair:
    clean_score: float
    noisy_score: float
    metric_name: str = ""


def _state_key(state) -> frozenset:
    out = set()
    for sv in state:
        domain, slot, value = sv.domain, sv.slot, sv.value
        out.add((domain, slot, value.strip().casefold()))
    return frozenset(out)


def joint_goal_accuracy(pred_states: dict, gold_states: dict) -> float:
    """Fraction of examples whose predicted state set exactly equals gold.

    Both arguments map example id -> iterable of SlotValue; values are
    compared casefolded.
    """
    if set(pred_states) != set(gold_states):
        missing = sorted(set(gold_states) - set(pred_states))[:5]
        extra = sorted(set(pred_states) - set(gold_states))[:5]
        raise ValueError(f"prediction/gold ids misaligned (missing {missing}, extra {extra})")
    if not gold_states:
        raise ValueError("no examples to score")
    hits = sum(1 for ex in gold_states
               if _state_key(pred_states[ex]) == _state_key(gold_states[ex]))
    return hits / len(gold_states)


def classification_accuracy(preds: dict, golds: dict) -> float:
    if set(preds) != set(golds):
        raise ValueError("prediction/gold ids misaligned")
    if not golds:
        raise ValueError("no examples to score")
    return sum(1 for ex in golds if preds[ex] == golds[ex]) / len(golds)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, references: list[str], max_n: int = 4) -> float:
    """Sentence BLEU with brevity penalty, in [0, 1].

    Unigram precision is unsmoothed; higher-order precisions use add-one
    smoothing so short sentences are scoreable.
    """
    if not candidate.strip() or not references or not any(r.strip() for r in references):
        raise ValueError("bleu needs a non-empty candidate and references")
    cand = candidate.split()
    refs = [r.split() for r in references]

    log_sum = 0.0
    for n in range(1, max_n + 1):
        counts = _ngrams(cand, n)
        total = sum(counts.values())
        clipped = 0
        for gram, cnt in counts.items():
            best = max(_ngrams(ref, n).get(gram, 0) for ref in refs)
            clipped += min(cnt, best)
        if n == 1:
            if clipped == 0:
                return 0.0
            precision = clipped / total
        else:
            precision = (clipped + 1) / (total + 1)
        log_sum += math.log(precision) / max_n

    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    brevity = 1.0 if c >= r else math.exp(1 - r / c)
    return brevity * math.exp(log_sum)


def degradation(pair: ScorePair) -> dict[str, float]:
    """Absolute and percent drop of the noisy score below the clean score."""
    absolute = pair.clean_score - pair.noisy_score
    if pair.clean_score == 0:
        raise ValueError("percent degradation undefined for a zero clean score")
    return {"absolute": absolute, "percent": absolute / pair.clean_score * 100.0}


def invert_degradation(clean_score: float, percent: float) -> float:
    """The noisy score implied by a clean score and a percent degradation."""
    return clean_score * (1.0 - percent / 100.0)


def relative_improvement(baseline: float, improved: float) -> dict[str, float]:
    if baseline <= 0:
        raise ValueError("relative improvement needs a positive baseline")
    absolute = improved - baseline
    return {"absolute": absolute, "relative": absolute / baseline * 100.0}


def aggregate_by_task(rows: list[tuple[str, float]]) -> dict[str, dict[str, float]]:
    """Per-task median and average of degradation percentages.

    The median of an even-length list is the midpoint average.  Medians are
    preferred over averages when reporting because they resist outliers.
    """
    by_task: dict[str, list[float]] = {}
    for task, value in rows:
        by_task.setdefault(task, []).append(value)
    if not by_task:
        raise ValueError("no rows to aggregate")
    return {
        task: {"median": statistics.median(vals), "average": statistics.fmean(vals)}
        for task, vals in by_task.items()
    }


@dataclass(frozen=True)
class ImpactRow:
    noise_source: str
    dataset: str
    task: str
    clean_score: float
    noisy_score: float

    @property
    def degradation_percent(self) -> float:
        # derived, so the row can never disagree with its own scores
        return degradation(ScorePair(self.clean_score, self.noisy_score))["percent"]

    def cell(self) -> str:
        return f"{self.noisy_score:.1f} ({self.degradation_percent:.2f}%)"


@dataclass
class ImpactReport:
    """Noisy-vs-clean score grid plus per-task medians and averages."""

    rows: list[ImpactRow] = field(default_factory=list)

    def add(self, noise_source: str, dataset: str, task: str, pair: ScorePair) -> None:
        self.rows.append(ImpactRow(noise_source, dataset, task,
                                   pair.clean_score, pair.noisy_score))

    def per_task(self) -> dict[str, dict[str, float]]:
        return aggregate_by_task([(r.task, r.degradation_percent) for r in self.rows])

    def render_text(self) -> str:
        if not self.rows:
            return "(empty impact report)\n"
        sources = list(dict.fromkeys(r.noise_source for r in self.rows))
        width = max(len("noise source"), max(len(s) for s in sources))
        lines = [f"{'noise source':<{width}}  score (degradation) per dataset"]
        for source in sources:
            cells = [f"{r.cell()} [{r.dataset}]" for r in self.rows
                     if r.noise_source == source]
            lines.append(f"{source:<{width}}  " + "   ".join(cells))
        lines.append("")
        lines.append(f"{'task':<{width}}  {'median':>8}  {'average':>8}")
        for task, stats in sorted(self.per_task().items()):
            lines.append(f"{task:<{width}}  {stats['median']:>7.1f}%  "
                         f"{stats['average']:>7.1f}%")
        return "\n".join(lines) + "\n"

    def render_json(self) -> str:
        doc = {
            "rows": [{"noise_source": r.noise_source, "dataset": r.dataset,
                      "task": r.task, "clean_score": r.clean_score,
                      "noisy_score": r.noisy_score,
                      "degradation_percent": r.degradation_percent}
                     for r in self.rows],
            "per_task": self.per_task() if self.rows else {},
        }
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def fit_log_curve(points: list[tuple[float, float]], epsilon: float = LOG_CURVE_EPSILON) -> dict[str, float]:
    """Least-squares fit of score ~ a * ln(level + epsilon) + b.

    The epsilon admits the 0% noise point.  Returns the coefficients and the
    residual sum of squares.
    """
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    levels = [lvl for lvl, _ in points]
    if any(lvl < 0 for lvl in levels):
        raise ValueError("noise levels must be >= 0")
    if len(set(levels)) == 1:
        raise ValueError("degenerate input: all noise levels equal")
    x = np.log(np.array(levels, dtype=float) + epsilon)
    y = np.array([score for _, score in points], dtype=float)
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, residuals, _, _ = np.linalg.lstsq(design, y, rcond=None)
    rss = float(residuals[0]) if residuals.size else float(np.sum((design @ coef - y) ** 2))
    return {"a": float(coef[0]), "b": float(coef[1]), "residual": rss}
