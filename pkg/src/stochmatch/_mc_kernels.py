"""Compiled Monte Carlo trial kernel.

Each trial runs on a private counter-based RNG stream keyed by (seed, trial),
so results do not depend on thread count or scheduling.  The pure-Python
reference in simulate.py mirrors every draw and every floating-point step in
the same order; tests compare the two trial-for-trial.
"""

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
INV53 = 1.0 / 9007199254740992.0  # 2^-53

OPT_J_LIMIT = 12  # bitmask DP size cap: 2^12 doubles per trial

ALGO_SUGGESTED = 0
ALGO_TOP_HALF = 1
ALGO_OCS = 2
ALGO_GREEDY = 3

MODEL_POISSON = 0
MODEL_FIXED = 1


@nb.njit(cache=True, inline="always")
def _mix(z):
    z ^= z >> np.uint64(30)
    z = z * _MIX1
    z ^= z >> np.uint64(27)
    z = z * _MIX2
    z ^= z >> np.uint64(31)
    return z


@nb.njit(cache=True, inline="always")
def _u01(s):
    s = s + GOLDEN
    z = _mix(s)
    return (z >> np.uint64(11)) * INV53, s


@nb.njit(cache=True, inline="always")
def _apply(best, mtch, j, w, free_disposal):
    if free_disposal:
        g = w - best[j]
        if g > 0.0:
            best[j] = w
            mtch[j] = 1
            return g
        return 0.0
    if mtch[j] == 1:
        return 0.0
    mtch[j] = 1
    best[j] = w
    return w


@nb.njit(cache=True)
def _run_trial(
    trial,
    seed,
    model,
    Lambda,
    t_max,
    rates,
    cumprob,
    nbr_ptr,
    nbr_j,
    nbr_w,
    nbr_x,
    loads,
    algo,
    free_disposal,
    compute_opt,
    matched_row,
):
    I = rates.shape[0]
    J = matched_row.shape[0]
    s = _mix(np.uint64(seed) + np.uint64(trial) * GOLDEN)

    # ---- arrivals: counts, then times, then a stable sort by time
    if model == MODEL_POISSON:
        counts = np.zeros(I, np.int64)
        n = 0
        for i in range(I):
            L = np.exp(-rates[i])
            p = 1.0
            k = 0
            while True:
                u, s = _u01(s)
                p *= u
                if p <= L:
                    break
                k += 1
            counts[i] = k
            n += k
        times = np.empty(n, np.float64)
        tps = np.empty(n, np.int64)
        pos = 0
        for i in range(I):
            for _ in range(counts[i]):
                u, s = _u01(s)
                times[pos] = u
                tps[pos] = i
                pos += 1
        for a in range(1, n):
            tv = times[a]
            ty = tps[a]
            b = a - 1
            while b >= 0 and times[b] > tv:
                times[b + 1] = times[b]
                tps[b + 1] = tps[b]
                b -= 1
            times[b + 1] = tv
            tps[b + 1] = ty
    else:
        n = Lambda
        times = np.empty(n, np.float64)
        tps = np.empty(n, np.int64)
        for k in range(n):
            u, s = _u01(s)
            idx = np.searchsorted(cumprob, u, side="right")
            if idx >= I:
                idx = I - 1
            times[k] = (k + 1) / n
            tps[k] = idx
    for k in range(1, n):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)

    # ---- online run, one uniform per arrival
    best = np.zeros(J, np.float64)
    for j in range(J):
        matched_row[j] = 0
    alg = 0.0
    for k in range(n):
        u, s = _u01(s)
        t = times[k]
        if t > t_max:
            continue
        i = tps[k]
        lo = nbr_ptr[i]
        hi = nbr_ptr[i + 1]
        deg = hi - lo
        if deg == 0:
            continue
        if algo == ALGO_SUGGESTED:
            theta = u * rates[i]
            cum = 0.0
            chosen = np.int64(-1)
            for e in range(lo, hi):
                cum += nbr_x[e]
                if theta < cum:
                    chosen = e
                    break
            if chosen >= 0:
                alg += _apply(best, matched_row, nbr_j[chosen], nbr_w[chosen], free_disposal)
        elif algo == ALGO_TOP_HALF:
            order = np.empty(deg, np.int64)
            marg = np.empty(deg, np.float64)
            for d in range(deg):
                e = lo + d
                j = nbr_j[e]
                if free_disposal:
                    m = nbr_w[e] - best[j]
                    if m < 0.0:
                        m = 0.0
                else:
                    m = 0.0 if matched_row[j] == 1 else nbr_w[e]
                order[d] = e
                marg[d] = m
            # stable insertion sort, descending marginal; base order is
            # ascending offline index, so ties break ascending
            for a in range(1, deg):
                oe = order[a]
                om = marg[a]
                b = a - 1
                while b >= 0 and marg[b] < om:
                    order[b + 1] = order[b]
                    marg[b + 1] = marg[b]
                    b -= 1
                order[b + 1] = oe
                marg[b + 1] = om
            theta = u * rates[i] * 0.5
            cum = 0.0
            chosen = np.int64(-1)
            for d in range(deg):
                cum += nbr_x[order[d]]
                if theta < cum:
                    chosen = order[d]
                    break
            if chosen >= 0:
                alg += _apply(best, matched_row, nbr_j[chosen], nbr_w[chosen], free_disposal)
        elif algo == ALGO_OCS:
            wsum = 0.0
            for e in range(lo, hi):
                j = nbr_j[e]
                if matched_row[j] == 0 and nbr_x[e] > 0.0:
                    wsum += np.exp(t * loads[j]) * nbr_x[e] / rates[i]
            if wsum > 0.0:
                target = u * wsum
                cum = 0.0
                chosen = np.int64(-1)
                for e in range(lo, hi):
                    j = nbr_j[e]
                    if matched_row[j] == 0 and nbr_x[e] > 0.0:
                        cum += np.exp(t * loads[j]) * nbr_x[e] / rates[i]
                        chosen = e
                        if target < cum:
                            break
                alg += _apply(best, matched_row, nbr_j[chosen], nbr_w[chosen], False)
        else:  # greedy
            bw = 0.0
            be = np.int64(-1)
            for e in range(lo, hi):
                if matched_row[nbr_j[e]] == 0 and nbr_w[e] > bw:
                    bw = nbr_w[e]
                    be = e
            if be >= 0:
                alg += _apply(best, matched_row, nbr_j[be], nbr_w[be], False)

    # ---- offline optimum: in-place subset DP, masks descending
    opt = 0.0
    if compute_opt and J <= OPT_J_LIMIT:
        size = 1 << J
        dp = np.zeros(size, np.float64)
        for k in range(n):
            if times[k] > t_max:
                continue
            i = tps[k]
            lo = nbr_ptr[i]
            hi = nbr_ptr[i + 1]
            for mask in range(size - 1, -1, -1):
                v = dp[mask]
                for e in range(lo, hi):
                    bit = 1 << nbr_j[e]
                    if mask & bit == 0:
                        nv = v + nbr_w[e]
                        if nv > dp[mask | bit]:
                            dp[mask | bit] = nv
        for mask in range(size):
            if dp[mask] > opt:
                opt = dp[mask]
    return alg, opt


@nb.njit(cache=True, parallel=True)
def run_trials(
    trials,
    seed,
    model,
    Lambda,
    t_max,
    rates,
    cumprob,
    nbr_ptr,
    nbr_j,
    nbr_w,
    nbr_x,
    loads,
    algo,
    free_disposal,
    compute_opt,
    alg_out,
    opt_out,
    matched_out,
):
    for trial in nb.prange(trials):
        a, o = _run_trial(
            trial,
            seed,
            model,
            Lambda,
            t_max,
            rates,
            cumprob,
            nbr_ptr,
            nbr_j,
            nbr_w,
            nbr_x,
            loads,
            algo,
            free_disposal,
            compute_opt,
            matched_out[trial],
        )
        alg_out[trial] = a
        opt_out[trial] = o
