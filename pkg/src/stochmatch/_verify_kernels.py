"""Compiled kernels for the bound verifiers.

Hot loops only; drivers, grids, and reports live in verify.py.
"""

import math

import numba as nb
import numpy as np
from numba import njit

# ---------------------------------------------------------- first level ODE


@njit(cache=True, inline="always")
def _first_level_slope(p, t, x):
    q = math.exp(-2.0 * x * t) / p
    denom = 1.0 - q
    if abs(denom) < 1e-9:
        return -p * x
    return p * math.log(1.0 - x + x * q) / denom


@njit(cache=True)
def first_level_rk4(x, dt):
    """Integrate the single-load match-rate recurrence; returns (p(1), status).

    status: 0 ok, 1 lower sandwich e^{-2xt} broken, 2 upper e^{-xt} broken.
    """
    n = int(round(1.0 / dt))
    p = 1.0
    for k in range(n):
        t = k * dt
        k1 = _first_level_slope(p, t, x)
        k2 = _first_level_slope(p + 0.5 * dt * k1, t + 0.5 * dt, x)
        k3 = _first_level_slope(p + 0.5 * dt * k2, t + 0.5 * dt, x)
        k4 = _first_level_slope(p + dt * k3, t + dt, x)
        p = p + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        t1 = (k + 1) * dt
        if p < math.exp(-2.0 * x * t1) - 1e-9:
            return p, 1
        if p > math.exp(-x * t1) + 1e-9:
            return p, 2
    return p, 0


@njit(cache=True, parallel=True)
def first_level_grid(xs, dt, p_out, status_out):
    for k in nb.prange(xs.shape[0]):
        p_out[k], status_out[k] = first_level_rk4(xs[k], dt)


# ------------------------------------------------------- second level sweep


@njit(cache=True, inline="always")
def _fhat_integral(D, t, x1, x2, w1, y1, v1, w2, v2, has_tail, ea, eb):
    """Case-split rate integral of the pairwise decay density at value D.

    Segment 1 carries (y, z-y) = (e^-l, l e^-l) nodes, segment 2 carries
    y = 0, z = (1+l) e^-l nodes; the (e^-l, e^-l) tail has a closed form.
    """
    A = math.exp(t * (2.0 * x1 + x2)) * D
    B = math.exp(t * (x1 + 2.0 * x2)) * D
    Am = A - 1.0 if A > 1.0 else 0.0
    Bm = B - 1.0 if B > 1.0 else 0.0
    total = 0.0
    for k in range(w1.shape[0]):
        total += w1[k] * (A * y1[k] + B * v1[k]) / (Am * y1[k] + Bm * v1[k] + 1.0)
    for k in range(w2.shape[0]):
        total += w2[k] * (B * v2[k]) / (Bm * v2[k] + 1.0)
    if has_tail:
        if Am > 0.0:
            total += (A / Am) * (
                math.log(Am * ea + 1.0) - math.log(Am * eb + 1.0)
            )
        else:
            total += A * (ea - eb)
    return total


@njit(cache=True, inline="always")
def _simpson_count(a, b, h):
    if b - a <= 1e-15:
        return 0
    return 2 * max(1, int(math.ceil((b - a) / (2.0 * h))))


@njit(cache=True)
def _simpson_fill(a, b, n, lams, weights):
    h = (b - a) / n
    for k in range(n + 1):
        lams[k] = a + k * h
        if k == 0 or k == n:
            c = 1.0
        elif k % 2 == 1:
            c = 4.0
        else:
            c = 2.0
        weights[k] = c * h / 3.0


@njit(cache=True, parallel=True)
def level2_chunk(x, dx, dt, dlam, xps, lam1s, lam2s, d_rows, excess_out, flag_out):
    """Pairwise decay trajectories for a chunk of the x' sweep.

    Fills d_rows[c, it] = d(t_it) for each x' in the chunk; excess_out[c] is
    the largest d - e^{-t (x1+x2)} seen, flag_out[c] != 0 on a broken
    invariant (1: d increased, 2: d left (0, 1]).
    """
    T = int(round(1.0 / dt))
    for c in nb.prange(xps.shape[0]):
        xp = xps[c]
        x1 = x if x > xp else xp
        x2 = x + xp - x1
        lam1 = lam1s[c]
        lam2 = lam2s[c]
        case_a = lam1 <= lam2
        if case_a:
            a1, b1 = 0.0, lam1
            a2, b2 = lam1, lam2
        else:
            a1, b1 = 0.0, lam2
            a2, b2 = 0.0, 0.0
        n1 = _simpson_count(a1, b1, dlam)
        n2 = _simpson_count(a2, b2, dlam)
        lam_1 = np.empty(n1 + 1 if n1 else 0)
        w1 = np.empty(n1 + 1 if n1 else 0)
        if n1:
            _simpson_fill(a1, b1, n1, lam_1, w1)
        y1 = np.empty(w1.shape[0])
        v1 = np.empty(w1.shape[0])
        for k in range(w1.shape[0]):
            e = math.exp(-lam_1[k])
            y1[k] = e
            v1[k] = lam_1[k] * e
        lam_2 = np.empty(n2 + 1 if n2 else 0)
        w2 = np.empty(n2 + 1 if n2 else 0)
        if n2:
            _simpson_fill(a2, b2, n2, lam_2, w2)
        v2 = np.empty(w2.shape[0])
        for k in range(w2.shape[0]):
            v2[k] = (1.0 + lam_2[k]) * math.exp(-lam_2[k])
        has_tail = (not case_a) and lam1 - lam2 > 1e-15
        ea = math.exp(-lam2)
        eb = math.exp(-lam1)

        d = 1.0
        exc = -1.0
        flag = 0
        for it in range(T + 1):
            t = it * dt
            d_rows[c, it] = d
            e = d - math.exp(-t * (x1 + x2))
            if e > exc:
                exc = e
            if it == T:
                break
            g1 = -_fhat_integral(d, t, x1, x2, w1, y1, v1, w2, v2, has_tail, ea, eb)
            d_mid = d * math.exp(dt * g1)
            g2 = -_fhat_integral(
                d_mid, t, x1, x2, w1, y1, v1, w2, v2, has_tail, ea, eb
            )
            d_next = d * math.exp(dt * g2)
            if d_next > d + 1e-12:
                flag = 1
            d = d_next
            if d <= 0.0 or d > 1.0 + 1e-12:
                flag = 2
        excess_out[c] = exc
        flag_out[c] = flag


@njit(cache=True, inline="always")
def _s_log_slope(s, qv, x):
    r = qv / s
    denom = 1.0 - r
    if abs(denom) < 1e-9:
        return -x
    return math.log(1.0 - x + x * r) / denom


@njit(cache=True)
def level2_s_integrate(x, dt, qhat):
    """Two-stage exponential update of the single-vertex survival bound.

    qhat holds the grid values of the pairwise envelope; both stages of the
    step at t use qhat at t.  Returns (s(1), status): 0 ok, 1 s dropped
    below e^{-tx} q - 1e-9, 2 s increased, 3 s left (0, 1].
    """
    T = int(round(1.0 / dt))
    s = 1.0
    status = 0
    for it in range(T + 1):
        t = it * dt
        qv = math.exp(-t * x) * qhat[it]
        if s < qv - 1e-9 and status == 0:
            status = 1
        if it == T:
            break
        g1 = _s_log_slope(s, qv, x)
        s_mid = s * math.exp(dt * g1)
        g2 = _s_log_slope(s_mid, qv, x)
        s_next = s * math.exp(dt * g2)
        if s_next > s + 1e-12 and status == 0:
            status = 2
        s = s_next
        if (s <= 0.0 or s > 1.0 + 1e-12) and status == 0:
            status = 3
    return s, status


# ------------------------------------------------------ hardness recurrence


@njit(cache=True)
def hardness_curve(n, m_frac):
    """F[s]: expected matched mass after s arrivals of the sparse gadget mix."""
    F = np.empty(n + 1)
    F[0] = 0.0
    m = m_frac * n
    nf = float(n)
    c2 = nf * (nf - 1.0) / 2.0
    c3 = nf * (nf - 1.0) * (nf - 2.0) / 6.0
    a2 = m / (nf * c2)
    a3 = m / (nf * c3)
    for s in range(n):
        f = F[s]
        F[s + 1] = (
            f
            + 1.0
            - a2 * (f * (f - 1.0) / 2.0)
            - a3 * (f * (f - 1.0) * (f - 2.0) / 6.0)
        )
    return F


@njit(cache=True)
def hardness_scan(F, S, x, n):
    """max over cutoffs k of the matched-mass upper bound; returns (val, k)."""
    best = -1.0
    k_best = -1
    denom = (1.0 + x) * n
    for k in range(n + 1):
        r = n - k
        val = (F[r] + x * (n - S[r] / n) + 1.0) / denom
        if val > best:
            best = val
            k_best = k
    return best, k_best
