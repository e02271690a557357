"""Domain-holdout splits and multi-level noise sweeps."""

from __future__ import annotations

from dataclasses import replace as dc_replace
from typing import Callable, Iterator

from ..corpus import Corpus
from ..corpus import fold64, mix64
from .common import InjectionError, InjectionLog, NoiseSpec

__all__ = ["make_ood_split", "leave_one_out", "sweep"]


def observed_domains(corpus: Corpus) -> set[str]:
    out: set[str] = set()
    for dlg in corpus.dialogues:
        out |= dlg.domains
    return out


def make_ood_split(corpus: Corpus, heldout_domains: set[str]) -> dict[str, Corpus]:
    """Train on a proper subset of domains; test keeps every domain.

    Training drops each dialogue whose domain set touches the holdout; the
    test side is the corpus unchanged, so held-out domains appear only at
    test time.
    """
    domains = observed_domains(corpus)
    heldout = set(heldout_domains)
    if not heldout:
        raise InjectionError("holdout domain set is empty")
    unknown = heldout - domains
    if unknown:
        raise InjectionError(f"holdout names unobserved domains: {sorted(unknown)}")
    if heldout == domains:
        raise InjectionError("holdout covers every domain; nothing left to train on")

    train_dialogues = [d for d in corpus.dialogues if not (d.domains & heldout)]
    train = Corpus(name=f"{corpus.name}-train-wo-{'+'.join(sorted(heldout))}",
                   dialogues=train_dialogues,
                   task_kinds=set(corpus.task_kinds), ontology=corpus.ontology)
    test = Corpus(name=f"{corpus.name}-test", dialogues=list(corpus.dialogues),
                  task_kinds=set(corpus.task_kinds), ontology=corpus.ontology)
    return {"train": train, "test": test}


def leave_one_out(corpus: Corpus) -> Iterator[tuple[str, dict[str, Corpus]]]:
    """One holdout split per observed domain, in sorted domain order."""
    domains = sorted(observed_domains(corpus))
    if len(domains) < 2:
        raise InjectionError("leave-one-out needs at least 2 domains")
    for domain in domains:
        yield domain, make_ood_split(corpus, {domain})


def sweep(corpus: Corpus, base_spec: NoiseSpec, levels: list[float],
          inject: Callable[[Corpus, NoiseSpec], tuple[Corpus, InjectionLog]],
          ) -> list[tuple[float, Corpus, InjectionLog]]:
    """One independently seeded corruption per noise level.

    Level 0 returns the input untouched (the clean corpus is the 0% point of
    the curve).  Each level's seed mixes the base seed with the level so the
    samples are independent draws.
    """
    if sorted(levels) != list(levels):
        raise InjectionError("sweep levels must be sorted ascending")
    if any(not 0.0 <= lvl <= 1.0 for lvl in levels):
        raise InjectionError("sweep levels must lie in [0, 1]")
    out = []
    for level in levels:
        if level == 0.0:
            out.append((level, corpus, InjectionLog()))
            continue
        level_seed = mix64(base_spec.seed ^ fold64(f"sweep:{level!r}"))
        spec = dc_replace(base_spec, rate=level, seed=level_seed)
        noisy, log = inject(corpus, spec)
        out.append((level, noisy, log))
    return out
