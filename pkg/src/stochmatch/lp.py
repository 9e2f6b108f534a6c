"""Matching LP hierarchy with exponentially many cuts, solved by separation.

The base LP maximizes sum w_ij x_ij subject to per-type caps sum_j x_ij <=
lambda_i and unit offline capacities.  Level ell >= 1 adds, for every type set
S and every offline set T with |T| = m <= ell, the constraint

    sum_{i in S, j in T} x_ij  <=  m - sum_{k=0}^{m-1} poisson_cdf(k, lambda_S),

the expected number of matches T can receive from S under Poisson arrivals.
The separation oracle only needs to scan prefixes of types ordered by
per-rate contribution to T, which makes separation polynomial for fixed level.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .model import FractionalMatching, Instance, LN2

LAMBDA_CAP = 40.0
_HIGHS_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def poisson_cdf(k: int, lam):
    """P[Poisson(lam) <= k]; k = -1 gives 0.  Accepts scalar or array lam."""
    lam = np.asarray(lam, dtype=np.float64)
    if k < 0:
        out = np.zeros_like(lam)
        return float(out) if out.ndim == 0 else out
    term = np.exp(-lam)
    total = term.copy()
    for ell in range(1, k + 1):
        term = term * lam / ell
        total += term
    total = np.minimum(total, 1.0)
    return float(total) if total.ndim == 0 else total


def _cut_rhs(lam_s: float, m: int) -> float:
    return m - math.fsum(poisson_cdf(k, lam_s) for k in range(m))


@dataclass(frozen=True)
class Cut:
    """One constraint sum_{S x T} x_ij <= rhs, recorded with its violation."""

    types: tuple[int, ...]
    offlines: tuple[int, ...]
    rhs: float
    violation: float

    @property
    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.types, self.offlines)


XLike = Union[FractionalMatching, dict]


def _x_get(x: XLike, i: int, j: int) -> float:
    if isinstance(x, FractionalMatching):
        return x.value(i, j)
    return x.get((i, j), 0.0)


def separation_oracle(
    instance: Instance, x: XLike, level: int, tol: float = 1e-9
) -> Optional[Cut]:
    """Most violated level-`level` cut at x, or None if all hold within tol.

    For each offline set T the maximum of lhs - rhs over type sets S is
    attained at a prefix of types sorted by contribution to T per unit rate
    (descending, ties by ascending index), so only prefixes are scanned.
    Ties across T keep the first T in (size, lexicographic) order.
    """
    if level < 1:
        raise ValueError("separation needs level >= 1")
    n = instance.n_types
    rates = [t.rate for t in instance.online_types]
    best: Optional[Cut] = None
    for m in range(1, min(level, instance.offline_count) + 1):
        for T in itertools.combinations(range(instance.offline_count), m):
            contrib = [
                math.fsum(_x_get(x, i, j) for j in T if instance.has_edge(i, j))
                for i in range(n)
            ]
            order = sorted(range(n), key=lambda i: (-contrib[i] / rates[i], i))
            lhs = 0.0
            lam_s = 0.0
            best_here = -math.inf
            best_k = 0
            for k, i in enumerate(order, start=1):
                lhs += contrib[i]
                lam_s += rates[i]
                v = lhs - _cut_rhs(lam_s, m)
                if v > best_here:
                    best_here = v
                    best_k = k
            if best_here > tol and (best is None or best_here > best.violation):
                s = tuple(sorted(order[:best_k]))
                lam = math.fsum(rates[i] for i in s)
                best = Cut(s, T, _cut_rhs(lam, m), best_here)
    return best


def brute_force_most_violated(
    instance: Instance, x: XLike, level: int
) -> tuple[float, Optional[tuple[tuple[int, ...], tuple[int, ...]]]]:
    """Exhaustive max violation over all (S, T); exponential, for testing."""
    n = instance.n_types
    rates = [t.rate for t in instance.online_types]
    best_v = -math.inf
    best_st = None
    for m in range(1, min(level, instance.offline_count) + 1):
        for T in itertools.combinations(range(instance.offline_count), m):
            for r in range(1, n + 1):
                for S in itertools.combinations(range(n), r):
                    lhs = math.fsum(
                        _x_get(x, i, j)
                        for i in S
                        for j in T
                        if instance.has_edge(i, j)
                    )
                    lam = math.fsum(rates[i] for i in S)
                    v = lhs - _cut_rhs(lam, m)
                    if v > best_v:
                        best_v = v
                        best_st = (S, T)
    return best_v, best_st


@dataclass
class LpSolution:
    objective: float
    matching: FractionalMatching
    cuts_added: int
    status: str

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "x": [
                {"i": i, "j": j, "v": self.matching.value(i, j)}
                for i, j, _ in self.matching.instance.edges()
            ],
            "cuts_added": self.cuts_added,
            "status": self.status,
        }


def solution_from_dict(instance: Instance, d: dict) -> LpSolution:
    x = {(e["i"], e["j"]): e["v"] for e in d["x"]}
    return LpSolution(
        objective=d["objective"],
        matching=FractionalMatching(instance, x),
        cuts_added=d["cuts_added"],
        status=d["status"],
    )


def save_solution(sol: LpSolution, path: str) -> None:
    with open(path, "w") as f:
        json.dump(sol.to_dict(), f, indent=2)
        f.write("\n")


def load_solution(instance: Instance, path: str) -> LpSolution:
    with open(path) as f:
        return solution_from_dict(instance, json.load(f))


def _solve_with_cuts(
    instance: Instance, cuts: Sequence[tuple[tuple[int, ...], tuple[int, ...], float]]
) -> dict[tuple[int, int], float]:
    edges = list(instance.edges())
    idx = {(i, j): e for e, (i, j, _) in enumerate(edges)}
    n_e = len(edges)
    c = np.array([-w for _, _, w in edges], dtype=np.float64)
    rows = []
    rhs = []
    for i, t in enumerate(instance.online_types):
        row = np.zeros(n_e)
        for j in t.neighbors:
            row[idx[(i, j)]] = 1.0
        rows.append(row)
        rhs.append(t.rate)
    for j in range(instance.offline_count):
        row = np.zeros(n_e)
        for (ii, jj), e in idx.items():
            if jj == j:
                row[e] = 1.0
        rows.append(row)
        rhs.append(1.0)
    for s, t, b in cuts:
        row = np.zeros(n_e)
        for i in s:
            for j in t:
                e = idx.get((i, j))
                if e is not None:
                    row[e] = 1.0
        rows.append(row)
        rhs.append(b)
    res = linprog(
        c,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=(0, None),
        method="highs",
        options=_HIGHS_OPTS,
    )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    out = {}
    for e, (i, j, _) in enumerate(edges):
        v = float(res.x[e])
        if v < -1e-6:
            raise RuntimeError(f"solver returned x[{i},{j}] = {v}")
        out[(i, j)] = max(v, 0.0)
    return out


def solve_lp(
    instance: Instance,
    level: int,
    tol: float = 1e-7,
    max_iters: Optional[int] = None,
) -> LpSolution:
    """Cutting-plane solve of the level-`level` LP.

    Level >= 1 warm-starts with the S = all-types, T = {j} cuts.  Status is
    "Optimal" once the oracle finds nothing above 1e-9, "IterationLimit" if
    the cap (default 50 * types * offlines) is hit first.  A repeated cut
    means the solver and oracle disagree numerically and raises.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if max_iters is None:
        max_iters = 50 * instance.n_types * instance.offline_count
    cuts: list[tuple[tuple[int, ...], tuple[int, ...], float]] = []
    seen: set[tuple[tuple[int, ...], tuple[int, ...]]] = set()
    if level >= 1:
        all_types = tuple(range(instance.n_types))
        lam_all = instance.total_rate
        for j in range(instance.offline_count):
            cuts.append((all_types, (j,), _cut_rhs(lam_all, 1)))
            seen.add((all_types, (j,)))
    n_warm = len(cuts)
    x = _solve_with_cuts(instance, cuts)
    status = "Optimal"
    if level >= 1:
        status = "IterationLimit"
        for _ in range(max_iters):
            cut = separation_oracle(instance, x, level, tol=1e-9)
            if cut is None:
                status = "Optimal"
                break
            if cut.key in seen:
                raise RuntimeError(
                    f"separation repeated cut {cut.key}: numerical inconsistency"
                )
            seen.add(cut.key)
            cuts.append((cut.types, cut.offlines, cut.rhs))
            x = _solve_with_cuts(instance, cuts)
    fm = FractionalMatching(instance, x)
    if status == "Optimal" and level >= 1:
        audit = separation_oracle(instance, fm, level, tol=tol)
        if audit is not None:
            raise RuntimeError(
                f"final solution violates cut {audit.key} by {audit.violation}"
            )
    problem = fm.check_basic(tol=max(tol, 1e-8))
    if problem is not None:
        raise RuntimeError(f"solver returned infeasible point: {problem}")
    return LpSolution(
        objective=fm.objective(),
        matching=fm,
        cuts_added=len(cuts) - n_warm,
        status=status,
    )


def solve_jaillet_lu_lp(instance: Instance) -> LpSolution:
    """Matching LP plus the per-offline surplus cap sum_i (2x_ij - lambda_i)^+
    <= 1 - ln 2, linearized with one auxiliary variable per edge."""
    edges = list(instance.edges())
    idx = {(i, j): e for e, (i, j, _) in enumerate(edges)}
    n_e = len(edges)
    c = np.zeros(2 * n_e)
    c[:n_e] = [-w for _, _, w in edges]
    rows = []
    rhs = []
    for i, t in enumerate(instance.online_types):
        row = np.zeros(2 * n_e)
        for j in t.neighbors:
            row[idx[(i, j)]] = 1.0
        rows.append(row)
        rhs.append(t.rate)
    for j in range(instance.offline_count):
        row = np.zeros(2 * n_e)
        for (ii, jj), e in idx.items():
            if jj == j:
                row[e] = 1.0
        rows.append(row)
        rhs.append(1.0)
    # u_e >= 2 x_e - lambda_i, u_e >= 0, sum_{e into j} u_e <= 1 - ln 2
    for (i, j), e in idx.items():
        row = np.zeros(2 * n_e)
        row[e] = 2.0
        row[n_e + e] = -1.0
        rows.append(row)
        rhs.append(instance.online_types[i].rate)
    for j in range(instance.offline_count):
        row = np.zeros(2 * n_e)
        for (ii, jj), e in idx.items():
            if jj == j:
                row[n_e + e] = 1.0
        rows.append(row)
        rhs.append(1.0 - LN2)
    res = linprog(
        c,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=(0, None),
        method="highs",
        options=_HIGHS_OPTS,
    )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    x = {}
    for e, (i, j, _) in enumerate(edges):
        v = float(res.x[e])
        if v < -1e-6:
            raise RuntimeError(f"solver returned x[{i},{j}] = {v}")
        x[(i, j)] = max(v, 0.0)
    fm = FractionalMatching(instance, x)
    return LpSolution(
        objective=fm.objective(), matching=fm, cuts_added=0, status="Optimal"
    )


SURPLUS_BOUND = (1.0 - LN2) / 2.0


def surplus_bound_check(
    matching: FractionalMatching, tol: float = 1e-7
) -> tuple[bool, float]:
    """Check sum_i (x_ij - lambda_i/2)^+ <= (1 - ln 2)/2 per offline vertex.

    Holds for any first-level-feasible matching.  Returns (ok, worst excess).
    """
    inst = matching.instance
    worst = -math.inf
    for j in range(inst.offline_count):
        surplus = math.fsum(
            max(matching.value(i, j) - t.rate / 2.0, 0.0)
            for i, t in enumerate(inst.online_types)
            if inst.has_edge(i, j)
        )
        worst = max(worst, surplus - SURPLUS_BOUND)
    return worst <= tol, worst


def two_slot_value(y, z, a: float, b: float):
    """Normalized value of mass y served at multiplier a and z - y at b.

    f(y, z) = (a y + b (z-y)) / ((a-1)^+ y + (b-1)^+ (z-y) + 1) for
    0 <= y <= z <= 1 and a >= b > 0.  Vectorized over y, z.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    num = a * y + b * (z - y)
    den = max(a - 1.0, 0.0) * y + max(b - 1.0, 0.0) * (z - y) + 1.0
    out = num / den
    return float(out) if out.ndim == 0 else out


def lambda_star_solve(
    x1: float, x2: float, cap: float = LAMBDA_CAP
) -> tuple[float, float]:
    """Arrival-rate thresholds matching offline masses x1 >= x2.

    lambda1 solves 1 - poisson_cdf(0, lam) = x1.  lambda2 solves
    x2 = 1 - P0(lam) - P1(lam) + P0(min(lambda1, lam)), whose right side is
    nondecreasing in lam.  Both are capped at `cap`.
    """
    if x2 > x1 + 1e-12:
        raise ValueError("requires x1 >= x2")
    if x1 < 0 or x2 > 1:
        raise ValueError("masses must lie in [0, 1]")
    if x1 >= 1.0:
        lam1 = cap
    else:
        lam1 = min(-math.log1p(-x1), cap)

    def rhs2(lam: float) -> float:
        return (
            1.0
            - poisson_cdf(0, lam)
            - poisson_cdf(1, lam)
            + poisson_cdf(0, min(lam1, lam))
        )

    if x2 <= 0.0:
        return lam1, 0.0
    r_cap = rhs2(cap)
    if x2 > r_cap + 1e-9:
        raise ValueError("x2 exceeds what any rate below the cap can express")
    if x2 >= r_cap:
        return lam1, cap
    lo, hi = 0.0, cap
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if rhs2(mid) < x2:
            lo = mid
        else:
            hi = mid
    return lam1, 0.5 * (lo + hi)


def _simpson(fn, a: float, b: float, h_max: float) -> float:
    if b <= a:
        return 0.0
    n = 2 * max(1, math.ceil((b - a) / (2.0 * h_max)))
    grid = np.linspace(a, b, n + 1)
    vals = fn(grid)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((grid[1] - grid[0]) / 3.0 * np.dot(w, vals))


def second_level_jensen_check(
    matching: FractionalMatching,
    j1: int,
    j2: int,
    a: float,
    b: float,
    dlambda: float = 1e-4,
    tol: float = 1e-6,
) -> tuple[bool, float, float]:
    """Doubleton Jensen bound for a second-level-feasible matching.

    With rho_ij = x_ij / lambda_i, checks

        sum_i lambda_i f(rho_{i j1}, rho_{i j1} + rho_{i j2})  >=  integral,

    where f = two_slot_value(., ., a, b) and the right side integrates f along
    the Poisson availability curves up to the rate thresholds of the two
    offline masses.  Requires a >= b > 0 and load(j1) >= load(j2).
    Returns (ok, lhs, rhs) with ok = (lhs >= rhs - tol).
    """
    if not (a >= b > 0):
        raise ValueError("requires a >= b > 0")
    inst = matching.instance
    x1 = matching.load(j1)
    x2 = matching.load(j2)
    if x1 < x2 - 1e-12:
        raise ValueError("requires load(j1) >= load(j2)")
    lhs = math.fsum(
        t.rate
        * two_slot_value(
            matching.rho(i, j1),
            matching.rho(i, j1) + matching.rho(i, j2),
            a,
            b,
        )
        for i, t in enumerate(inst.online_types)
    )
    lam1, lam2 = lambda_star_solve(min(x1, 1.0), max(min(x2, 1.0), 0.0))

    def f_01(lam):
        return two_slot_value(poisson_cdf(0, lam), poisson_cdf(1, lam), a, b)

    def f_1_only(lam):
        return two_slot_value(np.zeros_like(np.asarray(lam)), poisson_cdf(1, lam), a, b)

    def f_00(lam):
        p0 = poisson_cdf(0, lam)
        return two_slot_value(p0, p0, a, b)

    if lam1 <= lam2:
        rhs = _simpson(f_01, 0.0, lam1, dlambda) + _simpson(f_1_only, lam1, lam2, dlambda)
    else:
        rhs = _simpson(f_01, 0.0, lam2, dlambda) + _simpson(f_00, lam2, lam1, dlambda)
    return lhs >= rhs - tol, lhs, rhs
