"""Arrival samplers, the Monte Carlo harness, and an exact expectation oracle.

The harness reports the competitive-ratio ingredients E[ALG] and E[OPT] as
means over trials (ratio of means, not mean of ratios).  Trials run in a
compiled kernel with per-trial derived randomness; `reference_trials` is a
pure-Python mirror of that kernel used to cross-check it bitwise.
"""

from __future__ import annotations

import json
import math
import os
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _mc_kernels as _K
from .algorithms import Algo, ocs_probs, top_half_probs
from .model import FractionalMatching, Instance
from .offline import max_weight_matching, realized_graph

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def configure_threads() -> None:
    """Apply STOCHMATCH_THREADS to the compiled kernels, if set."""
    val = os.environ.get("STOCHMATCH_THREADS")
    if not val:
        return
    import numba

    n = max(1, int(val))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ------------------------------------------------------------------ samplers


def _strictly_increasing(arrivals: list[tuple[float, int]]) -> list[tuple[float, int]]:
    out = []
    prev = -math.inf
    for t, i in arrivals:
        if t <= prev:
            t = math.nextafter(prev, math.inf)
        out.append((t, i))
        prev = t
    return out


def sample_poisson_arrivals(instance: Instance, seed: int) -> list[tuple[float, int]]:
    """Per type, Poisson(lambda_i) arrivals at i.i.d. uniform times in [0,1];
    merged, time-sorted, equal timestamps nudged to be strictly increasing."""
    rng = np.random.default_rng(seed)
    counts = rng.poisson(instance.rates)
    arrivals: list[tuple[float, int]] = []
    for i, c in enumerate(counts):
        for t in rng.random(int(c)):
            arrivals.append((float(t), i))
    arrivals.sort(key=lambda a: a[0])
    return _strictly_increasing(arrivals)


def sample_fixed_arrivals(
    instance: Instance, Lambda: int, seed: int
) -> list[tuple[float, int]]:
    """Lambda arrivals at times k/Lambda, types i.i.d. lambda_i / sum lambda."""
    if Lambda < 1:
        raise ValueError("Lambda must be >= 1")
    rng = np.random.default_rng(seed)
    probs = instance.rates / instance.total_rate
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    us = rng.random(Lambda)
    idx = np.minimum(np.searchsorted(cum, us, side="right"), instance.n_types - 1)
    return [((k + 1) / Lambda, int(i)) for k, i in enumerate(idx)]


# ------------------------------------------------------------------- reports


@dataclass
class McReport:
    alg_mean: float
    opt_mean: Optional[float]
    ratio: Optional[float]
    alg_stderr: float
    opt_stderr: Optional[float]
    trials: int
    per_vertex_match_prob: dict[int, tuple[float, float]]
    alg_values: Optional[np.ndarray] = field(default=None, repr=False)
    opt_values: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "alg_mean": self.alg_mean,
            "opt_mean": self.opt_mean,
            "ratio": self.ratio,
            "alg_stderr": self.alg_stderr,
            "opt_stderr": self.opt_stderr,
            "trials": self.trials,
            "per_vertex_match_prob": {
                str(j): {"estimate": p, "stderr": se}
                for j, (p, se) in sorted(self.per_vertex_match_prob.items())
            },
        }

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def _stderr(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def _bernoulli_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / (n - 1))


# ------------------------------------------------------ kernel argument prep


_ALGO_CODES = {
    Algo.SUGGESTED: _K.ALGO_SUGGESTED,
    Algo.TOP_HALF: _K.ALGO_TOP_HALF,
    Algo.OCS: _K.ALGO_OCS,
    Algo.GREEDY: _K.ALGO_GREEDY,
}


def _csr_arrays(instance: Instance, x: Optional[FractionalMatching]):
    ptr = [0]
    js: list[int] = []
    ws: list[float] = []
    xs: list[float] = []
    for i, t in enumerate(instance.online_types):
        for j, w in zip(t.neighbors, t.weights):
            js.append(j)
            ws.append(w)
            xs.append(x.value(i, j) if x is not None else 0.0)
        ptr.append(len(js))
    loads = (
        x.loads.astype(np.float64)
        if x is not None
        else np.zeros(instance.offline_count)
    )
    return (
        np.array(ptr, dtype=np.int64),
        np.array(js, dtype=np.int64),
        np.array(ws, dtype=np.float64),
        np.array(xs, dtype=np.float64),
        loads,
    )


def _cum_type_probs(instance: Instance) -> np.ndarray:
    cum = np.cumsum(instance.rates / instance.total_rate)
    cum[-1] = 1.0
    return cum


def _check_algo_args(instance: Instance, x: Optional[FractionalMatching], algo: Algo):
    if algo is not Algo.GREEDY and x is None:
        raise ValueError(f"{algo.value} needs a fractional matching")
    if algo is Algo.OCS and float(np.max(x.loads, initial=0.0)) > 1.0 + 1e-9:
        raise ValueError("OCS requires every offline load <= 1")


# --------------------------------------------------------------- monte carlo


def monte_carlo(
    instance: Instance,
    x: Optional[FractionalMatching],
    algo: Algo | str,
    trials: int,
    seed: int,
    model: str = "poisson",
    Lambda: int = 0,
    compute_opt: bool = True,
    t_max: float = 1.0,
    keep_values: bool = False,
) -> McReport:
    """Monte Carlo estimate of E[ALG], E[OPT], their ratio, and per-vertex
    match frequencies.  Fully determined by (instance, x, algo, trials, seed,
    model); per-trial randomness is derived from (seed, trial index), so the
    result is independent of thread count."""
    algo = Algo(algo)
    _check_algo_args(instance, x, algo)
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if model not in ("poisson", "fixed"):
        raise ValueError("model must be 'poisson' or 'fixed'")
    if model == "fixed" and Lambda < 1:
        raise ValueError("fixed model needs Lambda >= 1")
    configure_threads()
    ptr, js, ws, xs, loads = _csr_arrays(instance, x)
    cum = _cum_type_probs(instance)
    J = instance.offline_count
    alg_vals = np.empty(trials)
    opt_vals = np.empty(trials)
    matched = np.empty((trials, J), dtype=np.uint8)
    kernel_opt = compute_opt and J <= _K.OPT_J_LIMIT
    _K.run_trials(
        trials,
        seed,
        _K.MODEL_POISSON if model == "poisson" else _K.MODEL_FIXED,
        Lambda,
        t_max,
        instance.rates,
        cum,
        ptr,
        js,
        ws,
        xs,
        loads,
        _ALGO_CODES[algo],
        instance.free_disposal,
        kernel_opt,
        alg_vals,
        opt_vals,
        matched,
    )
    if compute_opt and not kernel_opt:
        for trial in range(trials):
            arrivals = _trial_arrivals(
                instance, seed, trial, model, Lambda, cum
            )
            arrivals = [(t, i) for t, i in arrivals if t <= t_max]
            opt_vals[trial], _ = max_weight_matching(realized_graph(instance, arrivals))
    alg_mean = float(np.mean(alg_vals))
    per_vertex = {}
    for j in range(J):
        p = float(np.mean(matched[:, j]))
        per_vertex[j] = (p, _bernoulli_stderr(p, trials))
    if compute_opt:
        opt_mean = float(np.mean(opt_vals))
        report = McReport(
            alg_mean=alg_mean,
            opt_mean=opt_mean,
            ratio=alg_mean / opt_mean if opt_mean > 0 else math.inf,
            alg_stderr=_stderr(alg_vals),
            opt_stderr=_stderr(opt_vals),
            trials=trials,
            per_vertex_match_prob=per_vertex,
        )
    else:
        report = McReport(
            alg_mean=alg_mean,
            opt_mean=None,
            ratio=None,
            alg_stderr=_stderr(alg_vals),
            opt_stderr=None,
            trials=trials,
            per_vertex_match_prob=per_vertex,
        )
    if keep_values:
        report.alg_values = alg_vals
        report.opt_values = opt_vals if compute_opt else None
    return report


def unmatched_probability_estimate(
    instance: Instance,
    x: FractionalMatching,
    T: Sequence[int],
    t: float,
    trials: int,
    seed: int,
) -> tuple[float, float]:
    """Pr[every j in T is still unmatched at time t] under the OCS rule."""
    T = list(T)
    if not T:
        raise ValueError("T must be nonempty")
    if t <= 0.0:
        return 1.0, 0.0
    _check_algo_args(instance, x, Algo.OCS)
    configure_threads()
    ptr, js, ws, xs, loads = _csr_arrays(instance, x)
    cum = _cum_type_probs(instance)
    alg_vals = np.empty(trials)
    opt_vals = np.empty(trials)
    matched = np.empty((trials, instance.offline_count), dtype=np.uint8)
    _K.run_trials(
        trials,
        seed,
        _K.MODEL_POISSON,
        0,
        t,
        instance.rates,
        cum,
        ptr,
        js,
        ws,
        xs,
        loads,
        _K.ALGO_OCS,
        instance.free_disposal,
        False,
        alg_vals,
        opt_vals,
        matched,
    )
    clear = np.all(matched[:, T] == 0, axis=1)
    p = float(np.mean(clear))
    return p, _bernoulli_stderr(p, trials)


# -------------------------------------------- pure-Python kernel twin (tests)


def _mix_py(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


class _Stream:
    """splitmix64 counter stream, identical to the kernel's."""

    def __init__(self, seed: int, trial: int):
        self.s = _mix_py((seed + trial * _GOLDEN) & _MASK64)

    def u01(self) -> float:
        self.s = (self.s + _GOLDEN) & _MASK64
        return (_mix_py(self.s) >> 11) * (2.0 ** -53)


def _trial_arrivals(
    instance: Instance,
    seed: int,
    trial: int,
    model: str,
    Lambda: int,
    cum: np.ndarray,
    stream: Optional[_Stream] = None,
) -> list[tuple[float, int]]:
    """Reproduce the kernel's arrival sequence for one trial."""
    st = stream if stream is not None else _Stream(seed, trial)
    if model == "poisson":
        counts = []
        for rate in instance.rates:
            L = math.exp(-rate)
            p = 1.0
            k = 0
            while True:
                p *= st.u01()
                if p <= L:
                    break
                k += 1
            counts.append(k)
        arrivals = []
        for i, c in enumerate(counts):
            for _ in range(c):
                arrivals.append((st.u01(), i))
        arrivals.sort(key=lambda a: a[0])  # stable, like the kernel sort
    else:
        cum_list = list(cum)
        arrivals = []
        for k in range(Lambda):
            u = st.u01()
            idx = min(bisect_right(cum_list, u), instance.n_types - 1)
            arrivals.append(((k + 1) / Lambda, idx))
    out = []
    prev = None
    for t, i in arrivals:
        if prev is not None and t <= prev:
            t = math.nextafter(prev, math.inf)
        out.append((t, i))
        prev = t
    return out


def reference_trials(
    instance: Instance,
    x: Optional[FractionalMatching],
    algo: Algo | str,
    trials: int,
    seed: int,
    model: str = "poisson",
    Lambda: int = 0,
    compute_opt: bool = True,
    t_max: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pure-Python mirror of the compiled kernel, draw-for-draw and
    float-op-for-float-op on the algorithm side.  Slow; testing only."""
    algo = Algo(algo)
    _check_algo_args(instance, x, algo)
    ptr, js, ws, xs, loads = _csr_arrays(instance, x)
    cum = _cum_type_probs(instance)
    J = instance.offline_count
    alg_vals = np.empty(trials)
    opt_vals = np.zeros(trials)
    matched_out = np.zeros((trials, J), dtype=np.uint8)
    for trial in range(trials):
        st = _Stream(seed, trial)
        arrivals = _trial_arrivals(instance, seed, trial, model, Lambda, cum, st)
        best = [0.0] * J
        mtch = [0] * J
        alg = 0.0
        for t, i in arrivals:
            u = st.u01()
            if t > t_max:
                continue
            lo, hi = int(ptr[i]), int(ptr[i + 1])
            if hi == lo:
                continue
            if algo is Algo.SUGGESTED:
                theta = u * float(instance.rates[i])
                cumx = 0.0
                chosen = -1
                for e in range(lo, hi):
                    cumx += xs[e]
                    if theta < cumx:
                        chosen = e
                        break
            elif algo is Algo.TOP_HALF:
                slots = []
                for e in range(lo, hi):
                    j = int(js[e])
                    if instance.free_disposal:
                        m = max(ws[e] - best[j], 0.0)
                    else:
                        m = 0.0 if mtch[j] else ws[e]
                    slots.append((e, m))
                slots.sort(key=lambda sl: -sl[1])  # stable: ties ascend by index
                theta = u * float(instance.rates[i]) * 0.5
                cumx = 0.0
                chosen = -1
                for e, _ in slots:
                    cumx += xs[e]
                    if theta < cumx:
                        chosen = e
                        break
            elif algo is Algo.OCS:
                wsum = 0.0
                for e in range(lo, hi):
                    j = int(js[e])
                    if not mtch[j] and xs[e] > 0.0:
                        wsum += math.exp(t * float(loads[j])) * xs[e] / float(
                            instance.rates[i]
                        )
                chosen = -1
                if wsum > 0.0:
                    target = u * wsum
                    cumw = 0.0
                    for e in range(lo, hi):
                        j = int(js[e])
                        if not mtch[j] and xs[e] > 0.0:
                            cumw += math.exp(t * float(loads[j])) * xs[e] / float(
                                instance.rates[i]
                            )
                            chosen = e
                            if target < cumw:
                                break
            else:
                chosen = -1
                bw = 0.0
                for e in range(lo, hi):
                    if not mtch[int(js[e])] and ws[e] > bw:
                        bw = ws[e]
                        chosen = e
            if chosen < 0:
                continue
            j = int(js[chosen])
            w = float(ws[chosen])
            fd = instance.free_disposal and algo in (Algo.SUGGESTED, Algo.TOP_HALF)
            if fd:
                g = w - best[j]
                if g > 0.0:
                    best[j] = w
                    mtch[j] = 1
                    alg += g
            else:
                if not mtch[j]:
                    mtch[j] = 1
                    best[j] = w
                    alg += w
        alg_vals[trial] = alg
        for j in range(J):
            matched_out[trial, j] = mtch[j]
        if compute_opt:
            kept = [(t, i) for t, i in arrivals if t <= t_max]
            opt_vals[trial], _ = max_weight_matching(realized_graph(instance, kept))
    return alg_vals, opt_vals, matched_out


# ------------------------------------------------------- exact expectation DP


def exact_expected_value(
    instance: Instance,
    x: Optional[FractionalMatching],
    algo: Algo | str,
    Lambda: int,
) -> float:
    """Exact E[ALG] in the fixed-arrival model (arrival k at time k/Lambda).

    Dynamic program over reachable match states, with each step's closed-form
    decision distribution; states are matched-sets, or per-vertex best-weight
    tuples when free disposal is active.  Rejects ranges beyond the
    enumeration budget.
    """
    algo = Algo(algo)
    _check_algo_args(instance, x, algo)
    if Lambda < 0:
        raise ValueError("Lambda must be >= 0")
    if Lambda == 0:
        return 0.0
    I = instance.n_types
    J = instance.offline_count
    if (I ** Lambda) * (2 ** J) > 1e8:
        raise ValueError("instance exceeds the exact-enumeration budget")
    q = instance.rates / instance.total_rate
    fd = instance.free_disposal and algo in (Algo.SUGGESTED, Algo.TOP_HALF)
    init = tuple([0.0] * J) if fd else 0
    states: dict = {init: [1.0, 0.0]}

    def decisions(key, i, t):
        """List of (prob, chosen j or -1) for one arrival of type i."""
        if fd:
            best = list(key)
            mtch = [1 if b > 0 else 0 for b in best]
        else:
            mtch = [(key >> j) & 1 for j in range(J)]
            best = [1.0 if m else 0.0 for m in mtch]
        if algo is Algo.SUGGESTED:
            out = []
            taken = 0.0
            typ = instance.online_types[i]
            for j in typ.neighbors:
                p = x.value(i, j) / typ.rate
                if p > 0:
                    out.append((p, j))
                    taken += p
            out.append((max(1.0 - taken, 0.0), -1))
            return out
        if algo is Algo.TOP_HALF:
            probs, noop = top_half_probs(instance, x, i, best)
            return [(p, j) for j, p in probs.items()] + [(noop, -1)]
        if algo is Algo.OCS:
            jsel, psel = ocs_probs(instance, x, i, t, mtch)
            if not jsel:
                return [(1.0, -1)]
            return list(zip(psel, jsel))
        # greedy
        bj, bw = -1, 0.0
        typ = instance.online_types[i]
        for j, w in zip(typ.neighbors, typ.weights):
            if not mtch[j] and w > bw:
                bj, bw = j, w
        return [(1.0, bj)]

    def apply_key(key, i, j):
        """(new key, gain) after matching decision j (or -1)."""
        if j < 0:
            return key, 0.0
        w = instance.edge_weight(i, j)
        if fd:
            best = list(key)
            g = max(w - best[j], 0.0)
            if g > 0:
                best[j] = w
            return tuple(best), g
        if (key >> j) & 1:
            return key, 0.0
        return key | (1 << j), w

    for k in range(1, Lambda + 1):
        t = k / Lambda
        new: dict = {}
        for key, (p, acc) in states.items():
            for i in range(I):
                qi = float(q[i])
                if qi <= 0.0:
                    continue
                for pr, j in decisions(key, i, t):
                    if pr <= 0.0:
                        continue
                    nk, g = apply_key(key, i, j)
                    slot = new.setdefault(nk, [0.0, 0.0])
                    slot[0] += p * qi * pr
                    slot[1] += qi * pr * (acc + g * p)
        states = new
        if len(states) > 2_000_000:
            raise RuntimeError("state space exceeded the enumeration budget")
    return math.fsum(acc for _, acc in states.values())


def suggested_match_probability(x_j: float) -> float:
    """Closed-form Pr[j ever matched] for unweighted suggested matching."""
    return 1.0 - math.exp(-x_j)
