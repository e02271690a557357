"""Embedding-similarity transition matrix for structured label confusion.

Labels are embedded as the mean of their token vectors; off-diagonal entry
(i, j) is proportional to the clamped cosine similarity of labels i and j
plus a small floor, then each row is normalized.  Sampling a replacement
label from row i therefore prefers semantically close labels and never
returns label i itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .common import InjectionError

__all__ = ["EmbeddingTable", "TransitionMatrix", "build_transition_matrix", "load_embeddings"]

SIMILARITY_FLOOR = 1e-6

_TOKEN_RX = re.compile(r"[a-z0-9]+")


@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        dims = {v.shape for v in self.vectors.values()}
        if len(dims) > 1:
            raise InjectionError(f"embedding vectors disagree on dimension: {sorted(dims)}")
        for token, vec in self.vectors.items():
            if np.isnan(vec).any():
                raise InjectionError(f"embedding for {token!r} contains NaN")

    def embed_label(self, label: str) -> np.ndarray:
        """Bag-of-words label vector: mean of in-vocabulary token vectors."""
        tokens = _TOKEN_RX.findall(label.casefold())
        hits = [self.vectors[t] for t in tokens if t in self.vectors]
        if not hits:
            raise InjectionError(f"label {label!r} has no in-vocabulary token")
        return np.mean(hits, axis=0)


@dataclass
class TransitionMatrix:
    labels: list[str]
    rows: np.ndarray  # square, row-stochastic, zero diagonal

    def row_for(self, label: str) -> np.ndarray:
        try:
            return self.rows[self.labels.index(label)]
        except ValueError:
            raise InjectionError(f"label {label!r} not covered by the transition matrix")

    def check(self, tolerance: float = 1e-9) -> None:
        if np.diag(self.rows).any():
            raise InjectionError("transition matrix diagonal must be zero")
        if (self.rows < 0).any():
            raise InjectionError("transition matrix entries must be non-negative")
        if np.abs(self.rows.sum(axis=1) - 1.0).max() > tolerance:
            raise InjectionError("transition matrix rows must sum to 1")


def build_transition_matrix(labels: list[str], embeddings: EmbeddingTable) -> TransitionMatrix:
    if len(set(labels)) < 2:
        raise InjectionError("need at least 2 distinct labels for a transition matrix")
    labels = list(dict.fromkeys(labels))  # dedupe, keep order
    # vectors are stored float32; the stochastic-matrix math needs float64
    vecs = np.stack([embeddings.embed_label(label) for label in labels]).astype(np.float64)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = vecs / norms
    cos = unit @ unit.T
    weights = np.maximum(cos, 0.0) + SIMILARITY_FLOOR
    np.fill_diagonal(weights, 0.0)
    rows = weights / weights.sum(axis=1, keepdims=True)
    matrix = TransitionMatrix(labels=labels, rows=rows)
    matrix.check()
    return matrix


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """GloVe-style text file: token followed by its vector components."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) < 2:
                raise InjectionError(f"{path}:{lineno}: expected 'token v1 v2 ...'")
            vectors[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float32)
    if not vectors:
        raise InjectionError(f"{path}: empty embedding file")
    return EmbeddingTable(vectors)
