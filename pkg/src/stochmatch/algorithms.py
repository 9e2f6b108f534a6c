"""Online matching rules, each as a step function over a shared match state.

All rules consume exactly one uniform draw per arrival through an inverse CDF,
so a run is reproducible from its seed and single steps are unit-testable
against their closed-form decision distributions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import FractionalMatching, Instance


class Algo(str, Enum):
    SUGGESTED = "suggested"
    TOP_HALF = "top-half"
    OCS = "ocs"
    GREEDY = "greedy"


@dataclass
class MatchState:
    """Per-offline best matched weight, matched flags, and the objective."""

    best_weight: np.ndarray
    matched: np.ndarray
    objective: float
    time: float

    @classmethod
    def initial(cls, instance: Instance) -> "MatchState":
        return cls(
            best_weight=np.zeros(instance.offline_count),
            matched=np.zeros(instance.offline_count, dtype=bool),
            objective=0.0,
            time=0.0,
        )

    def copy(self) -> "MatchState":
        return MatchState(
            self.best_weight.copy(), self.matched.copy(), self.objective, self.time
        )


def _apply_free_disposal(state: MatchState, j: int, w: float) -> float:
    gain = max(w - float(state.best_weight[j]), 0.0)
    if gain > 0.0:
        state.best_weight[j] = w
        state.matched[j] = True
        state.objective += gain
    return gain


def _apply_if_unmatched(state: MatchState, j: int, w: float) -> float:
    if state.matched[j]:
        return 0.0
    state.matched[j] = True
    state.best_weight[j] = w
    state.objective += w
    return w


# ------------------------------------------------------------------ top half


def top_half_slots(
    instance: Instance, x: FractionalMatching, i: int, best_weight
) -> list[tuple[int, float, float]]:
    """Neighbor slots (j, width, marginal) sorted by descending marginal,
    ties by ascending offline index.

    With free disposal the marginal of j is (w_ij - best_weight_j)^+; without
    it a matched vertex has marginal 0 and an unmatched one w_ij.
    """
    t = instance.online_types[i]
    slots = []
    for j, w in zip(t.neighbors, t.weights):
        if instance.free_disposal:
            marginal = max(w - float(best_weight[j]), 0.0)
        else:
            marginal = 0.0 if best_weight[j] > 0.0 else w
        slots.append((j, x.value(i, j), marginal))
    slots.sort(key=lambda s: (-s[2], s[0]))
    return slots


def top_half_probs(
    instance: Instance, x: FractionalMatching, i: int, best_weight
) -> tuple[dict[int, float], float]:
    """Per-neighbor selection probabilities for one arrival, plus the no-op
    probability (theta drawn beyond the occupied slots)."""
    lam = instance.online_types[i].rate
    half = lam / 2.0
    probs: dict[int, float] = {}
    cum = 0.0
    for j, width, _ in top_half_slots(instance, x, i, best_weight):
        covered = max(min(cum + width, half) - min(cum, half), 0.0)
        if covered > 0:
            probs[j] = covered / half
        cum += width
    return probs, max(1.0 - math.fsum(probs.values()), 0.0)


def top_half_choice(
    instance: Instance, x: FractionalMatching, i: int, best_weight, u: float
) -> int:
    """Slot owner at theta = u * lambda_i / 2, or -1 beyond the last slot."""
    theta = u * instance.online_types[i].rate / 2.0
    cum = 0.0
    for j, width, _ in top_half_slots(instance, x, i, best_weight):
        cum += width
        if theta < cum:
            return j
    return -1


def top_half_step(
    instance: Instance,
    x: FractionalMatching,
    state: MatchState,
    i: int,
    t: float,
    u: float,
) -> tuple[int, float]:
    j = top_half_choice(instance, x, i, state.best_weight, u)
    state.time = t
    if j < 0:
        return -1, 0.0
    w = instance.edge_weight(i, j)
    if instance.free_disposal:
        return j, _apply_free_disposal(state, j, w)
    return j, _apply_if_unmatched(state, j, w)


# ----------------------------------------------------------------- suggested


def suggested_choice(
    instance: Instance, x: FractionalMatching, i: int, u: float
) -> int:
    """Slot owner at theta = u * lambda_i over index-ascending slots of width
    x_ij; -1 beyond the occupied prefix.  State-independent."""
    t = instance.online_types[i]
    theta = u * t.rate
    cum = 0.0
    for j in t.neighbors:
        cum += x.value(i, j)
        if theta < cum:
            return j
    return -1


def suggested_step(
    instance: Instance,
    x: FractionalMatching,
    state: MatchState,
    i: int,
    t: float,
    u: float,
) -> tuple[int, float]:
    j = suggested_choice(instance, x, i, u)
    state.time = t
    if j < 0:
        return -1, 0.0
    w = instance.edge_weight(i, j)
    if instance.free_disposal:
        return j, _apply_free_disposal(state, j, w)
    return j, _apply_if_unmatched(state, j, w)


# ----------------------------------------------------------------------- OCS


def ocs_probs(
    instance: Instance, x: FractionalMatching, i: int, t: float, matched
) -> tuple[list[int], list[float]]:
    """Eligible neighbors (unmatched, rho > 0) in ascending index order with
    their normalized selection probabilities exp(t x_j) rho_ij / Z."""
    typ = instance.online_types[i]
    js, ws = [], []
    for j in typ.neighbors:
        rho = x.value(i, j) / typ.rate
        if rho > 0.0 and not matched[j]:
            js.append(j)
            ws.append(math.exp(t * x.load(j)) * rho)
    total = math.fsum(ws)
    if total <= 0.0:
        return [], []
    return js, [w / total for w in ws]


def poisson_ocs_choice(
    instance: Instance, x: FractionalMatching, i: int, t: float, matched, u: float
) -> int:
    js, ps = ocs_probs(instance, x, i, t, matched)
    cum = 0.0
    for j, p in zip(js, ps):
        cum += p
        if u < cum:
            return j
    return js[-1] if js else -1


def poisson_ocs_step(
    instance: Instance,
    x: FractionalMatching,
    state: MatchState,
    i: int,
    t: float,
    u: float,
) -> tuple[int, float]:
    j = poisson_ocs_choice(instance, x, i, t, state.matched, u)
    state.time = t
    if j < 0:
        return -1, 0.0
    return j, _apply_if_unmatched(state, j, instance.edge_weight(i, j))


# -------------------------------------------------------------------- greedy


def greedy_choice(instance: Instance, i: int, matched) -> int:
    """Heaviest unmatched neighbor, ties by ascending index; -1 if none."""
    best_j, best_w = -1, 0.0
    t = instance.online_types[i]
    for j, w in zip(t.neighbors, t.weights):
        if not matched[j] and w > best_w:
            best_j, best_w = j, w
    return best_j


def greedy_step(
    instance: Instance,
    x: Optional[FractionalMatching],
    state: MatchState,
    i: int,
    t: float,
    u: float,
) -> tuple[int, float]:
    j = greedy_choice(instance, i, state.matched)
    state.time = t
    if j < 0:
        return -1, 0.0
    return j, _apply_if_unmatched(state, j, instance.edge_weight(i, j))


# ----------------------------------------------------------------- run_online

_STEPS = {
    Algo.SUGGESTED: suggested_step,
    Algo.TOP_HALF: top_half_step,
    Algo.OCS: poisson_ocs_step,
    Algo.GREEDY: greedy_step,
}


@dataclass
class RunResult:
    state: MatchState
    matched: np.ndarray
    trace: list[tuple[float, int, int, float]]

    @property
    def objective(self) -> float:
        return self.state.objective


def run_online(
    instance: Instance,
    x: Optional[FractionalMatching],
    algo: Algo | str,
    arrivals: Sequence[tuple[float, int]],
    seed: int,
) -> RunResult:
    """Fold one algorithm over a time-sorted arrival sequence.

    Draws one uniform per arrival from a generator seeded with `seed` (the
    greedy baseline draws and ignores it, keeping streams aligned across
    algorithms).  The OCS rule requires every offline load at most 1.
    """
    algo = Algo(algo)
    if algo is not Algo.GREEDY and x is None:
        raise ValueError(f"{algo.value} needs a fractional matching")
    if algo is Algo.OCS:
        if float(np.max(x.loads, initial=0.0)) > 1.0 + 1e-9:
            raise ValueError("OCS requires every offline load <= 1")
    times = [t for t, _ in arrivals]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("arrivals must be sorted by time")
    step = _STEPS[algo]
    state = MatchState.initial(instance)
    rng = np.random.default_rng(seed)
    us = rng.random(len(arrivals))
    trace = []
    for (t, i), u in zip(arrivals, us):
        j, gain = step(instance, x, state, i, t, float(u))
        trace.append((t, i, j, gain))
    return RunResult(state=state, matched=state.matched.copy(), trace=trace)


def trace_to_csv(trace: Sequence[tuple[float, int, int, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "type", "chosen_j", "marginal_gain"])
        for t, i, j, gain in trace:
            w.writerow([repr(t), i, j, repr(gain)])


def trace_from_csv(path: str) -> list[tuple[float, int, int, float]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return [(float(t), int(i), int(j), float(g)) for t, i, j, g in rows[1:]]
