"""Noise category tree and per-dataset audit aggregation.

Categories are slash paths over a fixed two-branch tree: noise that enters at
training time (labeling errors, ontology inconsistency, discourse attributes)
and noise that arrives at inference time (out-of-distribution input, dialogue
breakdown).  Audit tallies record, per dataset, how many reviewed dialogues
exhibited each leaf; aggregation turns those counts into prevalence rates.
"""

from __future__ import annotations

import difflib
import json
import statistics
from dataclasses import dataclass, field

__all__ = [
    "NoiseCategory",
    "AuditTally",
    "CategoryStats",
    "PrevalenceReport",
    "CategoryError",
    "parse_category",
    "all_leaves",
    "all_nodes",
    "aggregate_prevalence",
    "render_report",
    "parse_report_json",
    "load_tallies",
]

# Leaf structure of the category tree.  Internal nodes aggregate their leaves.
_TREE: dict = {
    "training": {
        "labeling": {
            "class": {"uniform": {}, "structured": {}},
            "instance": {"over": {}, "under": {}, "partial": {}},
            "annotator": {"distant_supervision": {}, "adversarial": {}, "formatting": {}},
        },
        "ontology": {"date": {}, "time": {}, "location": {}, "number": {}, "general": {}},
        "discourse": {
            "incoherent": {},
            "disfluent": {},
            "inconsistent": {},
            "nonsensical": {},
            "offensive": {},
            "unnatural": {},
        },
    },
    "inference": {
        "ood": {"novel_query": {}, "unseen_entity": {}, "domain_shift": {}},
        "breakdown": {
            "ambiguous": {},
            "paraphrase": {"simplification": {}, "non_sequitur": {}, "verbosity": {}},
            "perturbation": {"asr": {}, "typo": {}, "disfluency": {}},
        },
    },
}


class CategoryError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class NoiseCategory:
    path: tuple[str, ...]

    def render(self) -> str:
        return "/".join(self.path)

    def __str__(self) -> str:
        return self.render()

    @property
    def is_leaf(self) -> bool:
        return not _subtree(self.path)

    def startswith(self, other: "NoiseCategory") -> bool:
        return self.path[: len(other.path)] == other.path


def _subtree(path: tuple[str, ...]) -> dict | None:
    node = _TREE
    for seg in path:
        if seg not in node:
            return None
        node = node[seg]
    return node


def _walk(node: dict, prefix: tuple[str, ...]):
    for seg, child in node.items():
        here = prefix + (seg,)
        yield here, child
        yield from _walk(child, here)


def all_nodes() -> list[NoiseCategory]:
    """Every tree node (internal and leaf) in depth-first declaration order."""
    return [NoiseCategory(p) for p, _ in _walk(_TREE, ())]


def all_leaves() -> list[NoiseCategory]:
    return [NoiseCategory(p) for p, child in _walk(_TREE, ()) if not child]


def parse_category(s: str, require_leaf: bool = True) -> NoiseCategory:
    """Parse a slash path like ``training/labeling/instance/over``.

    Case-insensitive; unknown paths raise with the nearest valid leaves
    suggested.  With ``require_leaf=False`` internal nodes are accepted too
    (the CLI uses that to name whole sub-categories).
    """
    path = tuple(seg.strip().lower().replace("-", "_")
                 for seg in s.strip().strip("/").split("/") if seg.strip())
    node = _subtree(path)
    if node is None or (require_leaf and node):
        universe = [c.render() for c in (all_leaves() if require_leaf else all_nodes())]
        near = difflib.get_close_matches("/".join(path), universe, n=3, cutoff=0.3)
        hint = f"; did you mean: {', '.join(near)}" if near else ""
        kind = "leaf category" if require_leaf else "category"
        raise CategoryError(f"unknown {kind} {s!r}{hint}")
    return NoiseCategory(path)


@dataclass
class AuditTally:
    dataset: str
    dialogues_reviewed: int
    counts: dict[NoiseCategory, int] = field(default_factory=dict)
    dialogues_with_any_noise: int = 0

    def validate(self) -> None:
        if self.dialogues_reviewed <= 0:
            raise ValueError(f"{self.dataset}: dialogues_reviewed must be > 0")
        if self.dialogues_with_any_noise > self.dialogues_reviewed:
            raise ValueError(f"{self.dataset}: dialogues_with_any_noise exceeds reviewed")
        for cat, n in self.counts.items():
            if n < 0:
                raise ValueError(f"{self.dataset}: negative count for {cat}")
            if not cat.is_leaf:
                raise ValueError(f"{self.dataset}: tally category {cat} is not a leaf")


def load_tallies(path) -> list[AuditTally]:
    """Read a tally file: a JSON array with slash-path category keys."""
    doc = json.loads(open(path, encoding="utf-8").read())
    if not isinstance(doc, list):
        raise ValueError("tally file must contain a JSON array")
    tallies = []
    for row in doc:
        tallies.append(AuditTally(
            dataset=row["dataset"],
            dialogues_reviewed=row["dialogues_reviewed"],
            counts={parse_category(k): v for k, v in row.get("counts", {}).items()},
            dialogues_with_any_noise=row.get("dialogues_with_any_noise", 0),
        ))
    return tallies


@dataclass(frozen=True)
class CategoryStats:
    average: float
    median: float
    stddev: float  # population standard deviation

    def to_dict(self) -> dict:
        return {"average": self.average, "median": self.median, "stddev": self.stddev}


@dataclass
class PrevalenceReport:
    per_category: dict[str, CategoryStats]  # keyed by rendered path, all nodes
    overall: CategoryStats
    dataset_rates: dict[str, float] = field(default_factory=dict)  # overall % per dataset

    # Datasets outside the usual observed band of noise prevalence.
    LOW_BAND = 5.0
    HIGH_BAND = 20.0

    def out_of_band(self) -> list[tuple[str, float]]:
        return [(name, rate) for name, rate in sorted(self.dataset_rates.items())
                if rate < self.LOW_BAND or rate > self.HIGH_BAND]


def _stats(rates: list[float]) -> CategoryStats:
    return CategoryStats(
        average=statistics.fmean(rates),
        median=statistics.median(rates),
        stddev=statistics.pstdev(rates),
    )


def aggregate_prevalence(tallies: list[AuditTally]) -> PrevalenceReport:
    """Percent prevalence per category (leaves and their ancestors) and overall.

    A dataset's overall rate is dialogues_with_any_noise / dialogues_reviewed;
    a category's rate sums the counts of the category's leaves.  Statistics
    across datasets use the population standard deviation; nothing is rounded
    until render time.
    """
    if not tallies:
        raise ValueError("aggregate_prevalence needs at least one tally")
    for t in tallies:
        t.validate()

    per_category: dict[str, CategoryStats] = {}
    for node in all_nodes():
        rates = []
        for t in tallies:
            n = sum(cnt for cat, cnt in t.counts.items() if cat.startswith(node))
            rates.append(100.0 * n / t.dialogues_reviewed)
        per_category[node.render()] = _stats(rates)

    overall_rates = [100.0 * t.dialogues_with_any_noise / t.dialogues_reviewed for t in tallies]
    return PrevalenceReport(
        per_category=per_category,
        overall=_stats(overall_rates),
        dataset_rates={t.dataset: r for t, r in zip(tallies, overall_rates)},
    )


def _fmt(x: float) -> str:
    return f"{x:.1f}%"


def render_report(report: PrevalenceReport, format: str = "text_table") -> str:
    if format == "json":
        doc = {
            "per_category": {k: v.to_dict() for k, v in report.per_category.items()},
            "overall": report.overall.to_dict(),
            "dataset_rates": report.dataset_rates,
        }
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
    if format != "text_table":
        raise ValueError(f"unknown report format {format!r}")

    width = max(len("category"), max((len(k) for k in report.per_category), default=8))
    lines = [f"{'category':<{width}}  {'average':>8}  {'median':>8}  {'stddev':>8}"]
    for node in all_nodes():
        key = node.render()
        st = report.per_category.get(key, CategoryStats(0.0, 0.0, 0.0))
        lines.append(f"{key:<{width}}  {_fmt(st.average):>8}  {_fmt(st.median):>8}  "
                     f"{_fmt(st.stddev):>8}")
    st = report.overall
    lines.append(f"{'overall':<{width}}  {_fmt(st.average):>8}  {_fmt(st.median):>8}  "
                 f"{_fmt(st.stddev):>8}")

    oob = report.out_of_band()
    if oob:
        lines.append("")
        lines.append(f"datasets outside the usual {report.LOW_BAND:.0f}%-"
                     f"{report.HIGH_BAND:.0f}% band:")
        for name, rate in oob:
            side = "below" if rate < report.LOW_BAND else "above"
            lines.append(f"  {name}: {_fmt(rate)} ({side} band)")
    return "\n".join(lines) + "\n"


def parse_report_json(text: str) -> PrevalenceReport:
    doc = json.loads(text)
    return PrevalenceReport(
        per_category={k: CategoryStats(**v) for k, v in doc["per_category"].items()},
        overall=CategoryStats(**doc["overall"]),
        dataset_rates=doc.get("dataset_rates", {}),
    )
