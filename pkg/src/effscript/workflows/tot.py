"""Tree-of-Thoughts beam search over abstract ``init``/``expand``/``score``."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import chain
from typing import Any

from ..runtime import await_
from .ops import expand, init, log, score


@dataclass(frozen=True)
class ScoredCandidate:
    state: Any
    score: float
    submission_index: int


def top_k(scored: list[ScoredCandidate], k: int) -> list[ScoredCandidate]:
    """Highest scores first; ties keep submission order."""
    return sorted(scored, key=lambda c: (-c.score, c.submission_index))[:k]


def tree_of_thoughts(n_steps: int, n_select: int, n_eval: int, on_step=None) -> list:
    if n_steps < 0 or n_select < 1 or n_eval < 1:
        raise ValueError("need n_steps >= 0, n_select >= 1, n_eval >= 1")
    frontier = [init()]
    for _ in range(n_steps):
        expanded = [expand(state) for state in frontier]
        candidates = list(chain(*(await_(e) for e in expanded)))
        scores = [score(cand, n_eval) for cand in candidates]
        scored = [ScoredCandidate(c, await_(s), i) for i, (c, s) in enumerate(zip(candidates, scores))]
        frontier = [sc.state for sc in top_k(scored, n_select)]
        if on_step is not None:
            on_step(frontier)
    log("[" + ", ".join(str(s) for s in frontier) + "]")
    return frontier
