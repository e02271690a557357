"""Character-level edit primitives shared by typo-style injectors."""

from __future__ import annotations

import random
import string

from ..datadir import load_table

__all__ = ["adjacency_table", "adjacent_key", "char_edit", "bounded_typo", "damerau_distance"]


def adjacency_table() -> dict[str, str]:
    return {k: v for k, v in load_table("qwerty_adjacency.json").items()}


def adjacent_key(rng: random.Random, ch: str, table: dict[str, str]) -> str:
    neighbors = table.get(ch.lower())
    if not neighbors:
        return rng.choice(string.ascii_lowercase)
    repl = rng.choice(neighbors)
    return repl.upper() if ch.isupper() else repl


EDIT_KINDS = ("substitute", "insert", "delete", "swap")


def char_edit(rng: random.Random, text: str, table: dict[str, str]) -> str:
    """One keyboard-plausible edit; never returns an empty string."""
    kinds = list(EDIT_KINDS)
    if len(text) < 2:
        kinds = [k for k in kinds if k not in ("delete", "swap")]
    kind = rng.choice(kinds)
    i = rng.randrange(len(text))
    if kind == "substitute":
        return text[:i] + adjacent_key(rng, text[i], table) + text[i + 1:]
    if kind == "insert":
        return text[:i] + adjacent_key(rng, text[i], table) + text[i:]
    if kind == "delete":
        return text[:i] + text[i + 1:]
    i = min(i, len(text) - 2)  # swap with the right-hand neighbor
    return text[:i] + text[i + 1] + text[i] + text[i + 2:]


def bounded_typo(rng: random.Random, text: str, table: dict[str, str],
                 max_edits: int = 2) -> str:
    """1..max_edits edits with Damerau edit distance guaranteed in [1, max_edits]."""
    n_edits = rng.randint(1, max_edits)
    for _ in range(8):
        out = text
        for _ in range(n_edits):
            out = char_edit(rng, out, table)
        d = damerau_distance(text, out)
        if 1 <= d <= max_edits:
            return out
    # compounding edits cancelled each other; a single substitution always works
    i = rng.randrange(len(text))
    return text[:i] + adjacent_key(rng, text[i], table) + text[i + 1:]


def damerau_distance(a: str, b: str) -> int:
    """Edit distance counting adjacent transposition as a single operation."""
    la, lb = len(a), len(b)
    dist = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la + 1):
        dist[i][0] = i
    for j in range(lb + 1):
        dist[0][j] = j
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dist[i][j] = min(dist[i - 1][j] + 1, dist[i][j - 1] + 1,
                             dist[i - 1][j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                dist[i][j] = min(dist[i][j], dist[i - 2][j - 2] + 1)
    return dist[la][lb]
