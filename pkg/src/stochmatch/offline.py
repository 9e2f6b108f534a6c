"""Offline optimum on realized graphs — the benchmark side of the ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import Instance


@dataclass(frozen=True)
class RealizedGraph:
    """One left vertex per arrival, carrying its type's weighted edges."""

    arrivals: tuple[tuple[float, int], ...]
    edges: tuple[tuple[int, int, float], ...]
    offline_count: int


def realized_graph(instance: Instance, arrivals: Sequence[tuple[float, int]]) -> RealizedGraph:
    edges = []
    for k, (_, i) in enumerate(arrivals):
        t = instance.online_types[i]
        for j, w in zip(t.neighbors, t.weights):
            edges.append((k, j, w))
    return RealizedGraph(tuple(arrivals), tuple(edges), instance.offline_count)


def max_weight_matching(graph: RealizedGraph) -> tuple[float, list[tuple[int, int]]]:
    """Exact max-weight matching (value, [(arrival index, offline index)]).

    Dense assignment with missing edges at weight 0; zero-weight pairs are
    dropped from the reported matching.  Free disposal never changes this
    optimum, so the one oracle serves every weight class.
    """
    n = len(graph.arrivals)
    if n == 0:
        return 0.0, []
    w = np.zeros((n, graph.offline_count))
    for k, j, wt in graph.edges:
        w[k, j] = wt
    rows, cols = linear_sum_assignment(w, maximize=True)
    pairs = [(int(k), int(j)) for k, j in zip(rows, cols) if w[k, j] > 0.0]
    value = math.fsum(w[k, j] for k, j in pairs)
    return value, pairs


def brute_force_matching(graph: RealizedGraph) -> float:
    """Exhaustive optimum for small graphs; testing oracle only."""
    by_arrival: dict[int, list[tuple[int, float]]] = {}
    for k, j, w in graph.edges:
        by_arrival.setdefault(k, []).append((j, w))
    n = len(graph.arrivals)

    def go(k: int, used: frozenset) -> float:
        if k == n:
            return 0.0
        best = go(k + 1, used)
        for j, w in by_arrival.get(k, []):
            if j not in used:
                best = max(best, w + go(k + 1, used | {j}))
        return best

    return go(0, frozenset())
