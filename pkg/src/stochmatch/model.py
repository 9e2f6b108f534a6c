"""Instances of online stochastic matching and their generators.

An instance is a bipartite type graph: online types arrive over the horizon
[0, 1] via independent Poisson processes with rates lambda_i, offline vertices
are indexed 0..offline_count-1, and each (type, offline) edge carries a
positive weight.  Neighbor lists are kept in ascending offline-index order so
every downstream iteration order is deterministic.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np


class WeightClass(str, Enum):
    UNWEIGHTED = "unweighted"
    VERTEX = "vertex"
    EDGE = "edge"


@dataclass(frozen=True)
class OnlineType:
    """One online type: arrival rate plus its weighted neighbor list."""

    rate: float
    neighbors: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        order = sorted(range(len(self.neighbors)), key=lambda k: self.neighbors[k])
        object.__setattr__(self, "neighbors", tuple(self.neighbors[k] for k in order))
        object.__setattr__(self, "weights", tuple(float(self.weights[k]) for k in order))

    def weight_of(self, j: int) -> float:
        """Weight of the edge to offline vertex j, or 0.0 if absent."""
        for jj, w in zip(self.neighbors, self.weights):
            if jj == j:
                return w
        return 0.0


@dataclass(frozen=True)
class Instance:
    online_types: tuple[OnlineType, ...]
    offline_count: int
    weight_class: WeightClass
    free_disposal: bool = False

    @property
    def n_types(self) -> int:
        return len(self.online_types)

    @property
    def total_rate(self) -> float:
        return math.fsum(t.rate for t in self.online_types)

    @property
    def rates(self) -> np.ndarray:
        return np.array([t.rate for t in self.online_types], dtype=np.float64)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for i, t in enumerate(self.online_types):
            for j, w in zip(t.neighbors, t.weights):
                yield i, j, w

    def edge_weight(self, i: int, j: int) -> float:
        return self.online_types[i].weight_of(j)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.online_types[i].neighbors


def make_instance(
    types: Sequence[tuple[float, Sequence[int], Sequence[float]]],
    offline_count: int,
    weight_class: WeightClass | str,
    free_disposal: bool = False,
) -> Instance:
    """Build an Instance from (rate, neighbors, weights) triples."""
    wc = WeightClass(weight_class)
    online = tuple(
        OnlineType(rate=float(r), neighbors=tuple(int(j) for j in nbrs), weights=tuple(ws))
        for r, nbrs, ws in types
    )
    return Instance(
        online_types=online,
        offline_count=int(offline_count),
        weight_class=wc,
        free_disposal=bool(free_disposal),
    )


def validate(instance: Instance) -> Optional[str]:
    """Return None if the instance is well formed, else the first violation."""
    if instance.offline_count < 1:
        return "offline_count must be positive"
    for i, t in enumerate(instance.online_types):
        if not (t.rate > 0):
            return f"type {i}: rate must be positive"
        if len(t.neighbors) != len(t.weights):
            return f"type {i}: neighbors and weights length mismatch"
        seen = set()
        for j, w in zip(t.neighbors, t.weights):
            if not (0 <= j < instance.offline_count):
                return f"type {i}: neighbor index {j} out of range"
            if j in seen:
                return f"type {i}: duplicate neighbor {j}"
            seen.add(j)
            if not (w > 0):
                return f"type {i}: weight must be positive"
    if instance.weight_class is WeightClass.UNWEIGHTED:
        for i, t in enumerate(instance.online_types):
            for w in t.weights:
                if w != 1.0:
                    return f"type {i}: unweighted requires w_ij = 1"
    elif instance.weight_class is WeightClass.VERTEX:
        by_offline: dict[int, float] = {}
        for i, t in enumerate(instance.online_types):
            for j, w in zip(t.neighbors, t.weights):
                if j in by_offline and by_offline[j] != w:
                    return f"type {i}: vertex-weighted requires w_ij = w_j"
                by_offline.setdefault(j, w)
    return None


class FractionalMatching:
    """Edge values x_ij on an instance, with rho_ij = x_ij/lambda_i and loads."""

    def __init__(self, instance: Instance, x: dict[tuple[int, int], float]):
        for (i, j), v in x.items():
            if not (0 <= i < instance.n_types) or not instance.has_edge(i, j):
                raise ValueError(f"x has value on non-edge ({i}, {j})")
            if v < 0:
                raise ValueError(f"x[{i},{j}] is negative")
        self.instance = instance
        self.x = {k: float(v) for k, v in x.items()}
        loads = np.zeros(instance.offline_count, dtype=np.float64)
        for (i, j), v in self.x.items():
            loads[j] += v
        self.loads = loads

    def value(self, i: int, j: int) -> float:
        return self.x.get((i, j), 0.0)

    def rho(self, i: int, j: int) -> float:
        return self.value(i, j) / self.instance.online_types[i].rate

    def load(self, j: int) -> float:
        return float(self.loads[j])

    def type_values(self, i: int) -> np.ndarray:
        """x_ij aligned with type i's neighbor list."""
        t = self.instance.online_types[i]
        return np.array([self.value(i, j) for j in t.neighbors], dtype=np.float64)

    def type_sum(self, i: int) -> float:
        return math.fsum(self.value(i, j) for j in self.instance.online_types[i].neighbors)

    def objective(self) -> float:
        return math.fsum(v * self.instance.edge_weight(i, j) for (i, j), v in self.x.items())

    def check_basic(self, tol: float = 1e-9) -> Optional[str]:
        """First violated basic invariant (type sums, loads), or None."""
        for i, t in enumerate(self.instance.online_types):
            if self.type_sum(i) > t.rate + tol:
                return f"type {i}: sum x_ij exceeds rate"
        for j in range(self.instance.offline_count):
            if self.loads[j] > 1.0 + tol:
                return f"offline {j}: load exceeds 1"
        return None


def zero_matching(instance: Instance) -> FractionalMatching:
    return FractionalMatching(instance, {})


def gen_random(
    n_types: int,
    n_offline: int,
    edge_prob: float,
    rate_range: tuple[float, float],
    weight_range: tuple[float, float],
    weight_class: WeightClass | str,
    free_disposal: bool,
    seed: int,
) -> Instance:
    """Random instance, deterministic in seed; every type gets >= 1 neighbor."""
    wc = WeightClass(weight_class)
    if not (0 < edge_prob <= 1):
        raise ValueError("edge_prob must be in (0, 1]")
    if not (0 < rate_range[0] <= rate_range[1]):
        raise ValueError("rate_range must be positive and ordered")
    if not (0 < weight_range[0] <= weight_range[1]):
        raise ValueError("weight_range must be positive and ordered")
    if n_types < 1 or n_offline < 1:
        raise ValueError("n_types and n_offline must be positive")
    rng = np.random.default_rng(seed)
    vertex_w = rng.uniform(weight_range[0], weight_range[1], size=n_offline)
    types = []
    for _ in range(n_types):
        rate = float(rng.uniform(rate_range[0], rate_range[1]))
        nbrs: list[int] = []
        for _attempt in range(10000):
            mask = rng.random(n_offline) < edge_prob
            nbrs = [j for j in range(n_offline) if mask[j]]
            if nbrs:
                break
        if not nbrs:
            raise ValueError("could not draw a nonempty neighbor set")
        if wc is WeightClass.UNWEIGHTED:
            ws = [1.0] * len(nbrs)
        elif wc is WeightClass.VERTEX:
            ws = [float(vertex_w[j]) for j in nbrs]
        else:
            ws = [float(w) for w in rng.uniform(weight_range[0], weight_range[1], size=len(nbrs))]
        types.append((rate, nbrs, ws))
    inst = make_instance(types, n_offline, wc, free_disposal)
    problem = validate(inst)
    if problem is not None:
        raise ValueError(f"generated instance invalid: {problem}")
    return inst


def gen_hardness_edge_weighted(
    n: int, x: float, eps: float, c_star: float = 0.81
) -> Instance:
    """Edge-weighted hard instance on n offline vertices.

    Four type classes: n singleton types of weight x/eps and rate eps; all pairs
    and all triples at unit weight with total rate m each, m = 0.5*c_star*n; one
    type adjacent to everything at unit weight, rate n - 2m - n*eps.  Rates sum
    to n exactly.
    """
    if n < 3:
        raise ValueError("n must be at least 3 (triples must exist)")
    if not (x > 0) or not (eps > 0):
        raise ValueError("x and eps must be positive")
    m = 0.5 * c_star * n
    rest = n - 2.0 * m - n * eps
    if rest <= 0:
        raise ValueError("n - 2m - n*eps must be positive")
    n2 = math.comb(n, 2)
    n3 = math.comb(n, 3)
    types: list[tuple[float, Sequence[int], Sequence[float]]] = []
    for j in range(n):
        types.append((eps, (j,), (x / eps,)))
    for pair in itertools.combinations(range(n), 2):
        types.append((m / n2, pair, (1.0, 1.0)))
    for triple in itertools.combinations(range(n), 3):
        types.append((m / n3, triple, (1.0, 1.0, 1.0)))
    types.append((rest, tuple(range(n)), tuple([1.0] * n)))
    return make_instance(types, n, WeightClass.EDGE, free_disposal=False)


LN2 = math.log(2.0)


def gen_jaillet_lu() -> Instance:
    """The 3-type, 2-offline unweighted instance with total rate 2.

    Types 0 and 2 serve one offline vertex each at rate 1-ln2; type 1 serves
    both at rate 2*ln2.  Offline 0 is the vertex the ascending-index greedy
    tie-break favors.
    """
    types = [
        (1.0 - LN2, (0,), (1.0,)),
        (2.0 * LN2, (0, 1), (1.0, 1.0)),
        (1.0 - LN2, (1,), (1.0,)),
    ]
    return make_instance(types, 2, WeightClass.UNWEIGHTED, free_disposal=False)


def instance_to_dict(instance: Instance) -> dict:
    return {
        "offline_count": instance.offline_count,
        "weight_class": instance.weight_class.value,
        "free_disposal": instance.free_disposal,
        "types": [
            {
                "rate": t.rate,
                "edges": [{"j": j, "w": w} for j, w in zip(t.neighbors, t.weights)],
            }
            for t in instance.online_types
        ],
    }


def instance_from_dict(d: dict) -> Instance:
    types = [
        (
            t["rate"],
            [e["j"] for e in t["edges"]],
            [e["w"] for e in t["edges"]],
        )
        for t in d["types"]
    ]
    return make_instance(
        types, d["offline_count"], WeightClass(d["weight_class"]), d.get("free_disposal", False)
    )


def save_instance(instance: Instance, path: str) -> None:
    with open(path, "w") as f:
        json.dump(instance_to_dict(instance), f, indent=2)
        f.write("\n")


def load_instance(path: str) -> Instance:
    with open(path) as f:
        return instance_from_dict(json.load(f))
