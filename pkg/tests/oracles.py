"""Independent reference computations for the test suite.

Nothing here calls the recurrence or the closed-form mixed-Poisson code of the
package: counts come from numerical integration or matrix transforms and
stationary laws from explicit Markov chains.
"""

from __future__ import annotations

from fractions import Fraction

import mpmath
import numpy as np
from scipy import integrate, linalg, stats

from finbuf import dist as fd


# interval laws


def density(d):
    """Density of a continuous interval law (``None`` for a point mass)."""
    if isinstance(d, fd.Exponential):
        return lambda x: d.rate * np.exp(-d.rate * x)
    if isinstance(d, fd.Erlang):
        return lambda x: stats.gamma.pdf(x, d.shape, scale=1.0 / d.rate)
    if isinstance(d, fd.HyperExponential):
        return lambda x: sum(w * r * np.exp(-r * x) for w, r in zip(d.weights, d.rates))
    return None


def count_pmf(d, rate, J):
    """``P(j Poisson(rate) events in X)`` for ``j < J`` by quadrature."""
    if isinstance(d, fd.Deterministic):
        return stats.poisson.pmf(np.arange(J), rate * d.d)
    f = density(d)
    out = np.empty(J)
    for j in range(J):
        out[j] = integrate.quad(lambda x: stats.poisson.pmf(j, rate * x) * f(x), 0, np.inf,
                                limit=200, epsabs=1e-15, epsrel=1e-12)[0]
    return out


def lst_quad(d, s):
    if isinstance(d, fd.Deterministic):
        return float(np.exp(-s * d.d))
    f = density(d)
    return integrate.quad(lambda x: np.exp(-s * x) * f(x), 0, np.inf, epsabs=1e-14, epsrel=1e-12)[0]


def matrix_lst(d, G):
    """``E[exp(G X)]`` for a generator-like matrix ``G``."""
    eye = np.eye(G.shape[0])
    if isinstance(d, fd.Deterministic):
        return linalg.expm(G * d.d)
    if isinstance(d, fd.Exponential):
        return d.rate * np.linalg.inv(d.rate * eye - G)
    if isinstance(d, fd.Erlang):
        return np.linalg.matrix_power(d.rate * np.linalg.inv(d.rate * eye - G), d.shape)
    return sum(w * r * np.linalg.inv(r * eye - G) for w, r in zip(d.weights, d.rates))


# Markov chains


def stationary_dtmc(P):
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def stationary_ctmc(Q):
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def birth_death(birth, death):
    """Stationary law of a finite birth-death chain; ``birth[i]`` from ``i``, ``death[i]`` from ``i+1``."""
    # detailed balance p[i+1] death[i] = p[i] birth[i], accumulated in exact rationals
    w = [Fraction(1)]
    for b, d in zip(birth, death):
        w.append(w[-1] * Fraction(b) / Fraction(d))
    total = sum(w)
    return np.array([float(x / total) for x in w])


def mmm_loss(lam, mu, m, K):
    """M/M/m with room for ``K``: fraction of arrivals lost."""
    p = birth_death([lam] * K, [mu * min(i + 1, m) for i in range(K)])
    return p[-1]


def death_generator(mu, m, K):
    G = np.zeros((K + 1, K + 1))
    for i in range(1, K + 1):
        G[i, i - 1] = mu * min(i, m)
        G[i, i] = -mu * min(i, m)
    return G


def gim_loss(arrival, mu, m, K):
    """GI/M/m with room for ``K`` via the chain embedded at arrival epochs."""
    M = matrix_lst(arrival, death_generator(mu, m, K))
    P = np.zeros((K + 1, K + 1))
    for x in range(K + 1):
        P[x] = M[min(x + 1, K)]
    return stationary_dtmc(P)[K]


def batch_departure_generator(mu, C, N):
    G = np.zeros((N + 1, N + 1))
    for i in range(1, N + 1):
        G[i, max(i - C, 0)] += mu
        G[i, i] -= mu
    return G


def group_service_loss(arrival, mu, C, N, q=1.0):
    """GI/M^C/1/N loss where the input keeps each arrival of ``arrival`` with probability ``q``.

    Thinning is applied at the matrix level: the queue evolves over one base
    interval by ``M`` and a kept arrival lands after a geometric number of them.
    """
    M = matrix_lst(arrival, batch_departure_generator(mu, C, N))
    Mk = q * M @ np.linalg.inv(np.eye(N + 1) - (1.0 - q) * M)
    P = np.zeros((N + 1, N + 1))
    for x in range(N + 1):
        P[x] = Mk[min(x + 1, N)]
    return stationary_dtmc(P)[N]


def mg1_visits(service, lam, n, J=None):
    """Expected service starts per busy period by number present, ``1..n+1``."""
    J = J or 200
    pi = count_pmf(service, lam, J)
    S = n + 1
    P = np.zeros((S, S))
    for i in range(1, S + 1):
        for a in range(J):
            nxt = min(i + a, n + 1) - 1
            if nxt >= 1:
                P[i - 1, nxt - 1] += pi[a]
    return np.linalg.inv(np.eye(S) - P)[0], pi


def mg1_reference(service, lam, n, kmax=3, J=200):
    """Busy-period means and consecutive-loss tallies from the visit chain."""
    v, pi = mg1_visits(service, lam, n, J)
    free = n + 1 - np.arange(1, n + 2)
    a = np.arange(J)
    served = v.sum()
    losses = sum(v[i] * np.dot(np.maximum(a - free[i], 0), pi) for i in range(n + 1))
    out = {"served": served, "busy_period": served * service.mean, "losses": losses,
           "arrivals": lam * served * service.mean}
    out["runs"] = sum(v[i] * pi[a > free[i]].sum() for i in range(n + 1))
    for k in range(1, kmax + 1):
        over = a - free[:, None]
        mask = over >= k
        out[f"runs_k{k}"] = float(sum(v[i] * pi[mask[i]].sum() for i in range(n + 1)))
        out[f"losses_in_runs_k{k}"] = float(sum(v[i] * np.dot(over[i][mask[i]], pi[mask[i]])
                                                for i in range(n + 1)))
    return out


def dam_ctmc(lam, mu1, mu2, n, L=400):
    """Exponential dam queue with the service law chosen at service start.

    Returns ``(p1, p2, q, level)``: idle fraction, fraction in law-2 service,
    law-1 service fractions by starting level (via start rates times the
    mean) and the level distribution ``P(Q = 0..L)``.
    """
    idx = {0: 0}
    k = 1
    for i in range(1, L + 1):
        for s in (1, 2):
            idx[(i, s)] = k
            k += 1
    Q = np.zeros((k, k))
    Q[0, idx[(1, 1)]] += lam
    for i in range(1, L + 1):
        for s in (1, 2):
            a = idx[(i, s)]
            if i < L:
                Q[a, idx[(i + 1, s)]] += lam
            m = mu1 if s == 1 else mu2
            if i == 1:
                Q[a, 0] += m
            else:
                Q[a, idx[(i - 1, 1 if i - 1 <= n else 2)]] += m
    np.fill_diagonal(Q, -Q.sum(axis=1))
    p = stationary_ctmc(Q)
    level = np.zeros(L + 1)
    level[0] = p[0]
    p2 = 0.0
    for i in range(1, L + 1):
        for s in (1, 2):
            level[i] += p[idx[(i, s)]]
        p2 += p[idx[(i, 2)]]
    start = np.zeros(n + 1)
    start[1] += lam * p[0]
    for i in range(1, n + 1):
        for s in (1, 2):
            start[i] += (mu1 if s == 1 else mu2) * p[idx[(i + 1, s)]]
    return p[0], p2, start[1:] / mu1, level


def zeta_enumerate(support, probs, N):
    """Exact law of the number of whole messages fitting in ``N`` packets by enumeration."""
    support = list(support)
    probs = [Fraction(p).limit_denominator(10**12) for p in probs]
    out = {}

    def walk(total, count, weight):
        for s, p in zip(support, probs):
            if total + s > N:
                out[count] = out.get(count, Fraction(0)) + weight * p
            else:
                walk(total + s, count + 1, weight * p)

    walk(0, 0, Fraction(1))
    top = max(out)
    return [out.get(i, Fraction(0)) for i in range(top + 1)]


def mp_root(func, lo, hi):
    """Root of ``func`` in ``(lo, hi)`` with 40-digit arithmetic."""
    with mpmath.workdps(40):
        return float(mpmath.findroot(func, (mpmath.mpf(lo), mpmath.mpf(hi)), solver="anderson"))


def finite_difference(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)

