"""Compiled event loops. Each kernel simulates one batch and returns raw tallies."""

import numba
import numpy as np

EXP, DET, ERLANG, HYPER = 0, 1, 2, 3


@numba.njit(cache=True)
def draw(rng, code, p):
    """One variate from the law encoded as ``(code, params)``."""
    if code == EXP:
        return rng.standard_exponential() / p[0]
    if code == DET:
        return p[0]
    if code == ERLANG:
        k = int(p[0])
        s = 0.0
        for _ in range(k):
            s += rng.standard_exponential()
        return s / p[1]
    k = int(p[0])
    u = rng.random()
    acc = 0.0
    for i in range(k):
        acc += p[1 + i]
        if u < acc or i == k - 1:
            return rng.standard_exponential() / p[1 + k + i]
    return 0.0


@numba.njit(cache=True)
def _close_run(run, tally, kmax):
    # tally layout: [..., runs, runs_k(kmax), losses_k(kmax)]
    tally[5] += 1.0
    for k in range(1, kmax + 1):
        if run >= k:
            tally[5 + k] += 1.0
            tally[5 + kmax + k] += run


@numba.njit(cache=True)
def mg1_batch(rng, lam, scode, sp, n, periods, kmax):
    """Busy periods of M/GI/1 with ``n`` waiting places.

    Returns ``[periods, T, L, nu, arrivals, runs, runs_k..., losses_k...]`` as sums.
    """
    tally = np.zeros(6 + 2 * kmax)
    cap = n + 1
    for _ in range(periods):
        x = 1
        run = 0
        gap = rng.standard_exponential() / lam
        while x > 0:
            s = draw(rng, scode, sp)
            tally[1] += s
            tally[3] += 1.0
            remaining = s
            while gap <= remaining:
                remaining -= gap
                tally[4] += 1.0
                if x < cap:
                    if run > 0:
                        _close_run(run, tally, kmax)
                        run = 0
                    x += 1
                else:
                    tally[2] += 1.0
                    run += 1
                gap = rng.standard_exponential() / lam
            gap -= remaining
            x -= 1
        if run > 0:
            _close_run(run, tally, kmax)
        tally[0] += 1.0
    return tally


@numba.njit(cache=True)
def gim_batch(rng, acode, ap, mu, m, capacity, arrivals, warm):
    """GI/M/m with room for ``capacity`` customers. Returns ``[counted, lost]``."""
    out = np.zeros(2)
    x = 0
    for a in range(arrivals):
        tau = draw(rng, acode, ap)
        t = 0.0
        while x > 0:
            rate = mu * min(x, m)
            e = rng.standard_exponential() / rate
            if t + e > tau:
                break
            t += e
            x -= 1
        lost = x >= capacity
        if not lost:
            x += 1
        if a >= warm:
            out[0] += 1.0
            if lost:
                out[1] += 1.0
    return out


@numba.njit(cache=True)
def dam_batch(rng, lam, c1, p1, c2, p2, n, arrivals, warm):
    """State-dependent M/GI/1: a service begun with at most ``n`` present uses law 1.

    Returns time sums: phase ``[idle, law-2, law-1 begun at i = 1..n]`` followed by
    level ``[Q = 0, Q = 1..n, Q > n]``.
    """
    phase = np.zeros(n + 2)
    level = np.zeros(n + 2)
    q = 0
    count = 0
    gap = rng.standard_exponential() / lam
    while count < arrivals:
        if q == 0:
            if count >= warm:
                phase[0] += gap
                level[0] += gap
            q = 1
            count += 1
            gap = rng.standard_exponential() / lam
            continue
        if q <= n:
            slot = 1 + q
            s = draw(rng, c1, p1)
        else:
            slot = 1
            s = draw(rng, c2, p2)
        remaining = s
        while gap <= remaining:
            remaining -= gap
            if count >= warm:
                phase[slot] += gap
                level[min(q, n + 1)] += gap
            q += 1
            count += 1
            gap = rng.standard_exponential() / lam
        if count >= warm:
            phase[slot] += remaining
            level[min(q, n + 1)] += remaining
        gap -= remaining
        q -= 1
    return np.concatenate((phase, level))


@numba.njit(cache=True)
def priority_batch(rng, acode, ap, cum_probs, mu, C, caps, cum_caps, arrivals, warm):
    """Priority buffer with group departures plus one shadow cumulative queue per class.

    Returns ``[arrivals_k, lost_k, arrivals_cum_k, lost_cum_k, shadow_lost_k]``
    stacked per class (each block of length ``l``).
    """
    nc = caps.size
    out = np.zeros(5 * nc)
    x = np.zeros(nc, dtype=np.int64)
    shadow = np.zeros(nc, dtype=np.int64)
    for a in range(arrivals):
        tau = draw(rng, acode, ap)
        d = rng.poisson(mu * tau)
        if d > 0:
            room = C * d
            for c in range(nc):
                r = min(x[c], room)
                x[c] -= r
                room -= r
            for k in range(nc):
                shadow[k] = max(shadow[k] - C * d, 0)
        u = rng.random()
        c = nc - 1
        for i in range(nc):
            if u < cum_probs[i]:
                c = i
                break
        count = a >= warm
        lost = x[c] >= caps[c]
        if not lost:
            x[c] += 1
        if count:
            out[c] += 1.0
            if lost:
                out[nc + c] += 1.0
        for k in range(c, nc):
            if count:
                out[2 * nc + k] += 1.0
                if lost:
                    out[3 * nc + k] += 1.0
            if shadow[k] >= cum_caps[k]:
                if count:
                    out[4 * nc + k] += 1.0
            else:
                shadow[k] += 1
    return out
