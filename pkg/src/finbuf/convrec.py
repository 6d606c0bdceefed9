"""Convolution recurrence engine.

Solves ``Q_k = sum_{j=0}^k pi_j Q_{k-j+1}`` forward from ``Q_0``, checks the
solution against the generating function ``Q_0 pi(z) / (pi(z) - z)`` by an
independent power-series division, and locates the roots of the fixed-point
equations ``z = pi(z)`` and ``z = F(r - r z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import CoeffSeq, Dist, lst, lst_continued, lst_deriv
from .errors import RegimeError, RootNotFoundError, ValidationError

REGIME_TOL = 1e-12
ROOT_TOL = 1e-13
MAX_ITER = 200

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"

__all__ = [
    "CoeffSeq", "QSeq", "RootResult", "solve_q", "gf_check", "find_sigma", "find_phi",
    "find_tau", "classify", "residual",
]


def classify(gamma1: float, tol: float = REGIME_TOL) -> str:
    """Regime of a recurrence from its mean ``gamma_1``."""
    if abs(gamma1 - 1.0) <= tol:
        return CRITICAL
    return SUBCRITICAL if gamma1 < 1.0 else SUPERCRITICAL


@dataclass(frozen=True)
class QSeq:
    """Solution ``Q_0..Q_kmax`` of the recurrence, stored in extended precision."""

    q: np.ndarray
    q0: float
    source: CoeffSeq

    @property
    def kmax(self) -> int:
        return self.q.size - 1

    def as_float(self) -> np.ndarray:
        return self.q.astype(float)


@dataclass(frozen=True)
class RootResult:
    value: float
    iterations: int
    residual: float


def solve_q(pi: CoeffSeq, q0: float, kmax: int) -> QSeq:
    """Forward solution of the convolution recurrence.

    Uses ``Q_{k+1} = (Q_k - sum_{j=1}^k pi_j Q_{k-j+1}) / pi_0`` with long double
    accumulation. Coefficients beyond ``pi.jmax`` are taken as zero.

    Args:
        pi: Coefficient sequence with ``pi_0 > 0``.
        q0: Nonzero starting value.
        kmax: Last index to compute (``kmax >= 1``).

    Returns:
        QSeq with ``kmax + 1`` entries.
    """
    if not isinstance(pi, CoeffSeq):
        raise ValidationError("pi must be a CoeffSeq")
    q0 = float(q0)
    if q0 == 0.0 or not math.isfinite(q0):
        raise ValidationError("Q_0 must be finite and nonzero")
    if int(kmax) != kmax or kmax < 1:
        raise ValidationError("kmax must be an integer >= 1")
    kmax = int(kmax)
    c = pi.coeffs.astype(np.longdouble)
    jmax = c.size - 1
    p0 = c[0]
    q = np.zeros(kmax + 1, dtype=np.longdouble)
    q[0] = q0
    for k in range(kmax):
        m = min(k, jmax)
        acc = q[k]
        if m > 0:
            # sum_{j=1}^m pi_j Q_{k-j+1}
            acc -= np.dot(c[1:m + 1], q[k:k - m:-1])
        q[k + 1] = acc / p0
    q.setflags(write=False)
    return QSeq(q, q0, pi)


def residual(qs: QSeq) -> float:
    """Largest relative recurrence residual ``|Q_k - sum_j pi_j Q_{k-j+1}|``."""
    c = qs.source.coeffs
    q = qs.q.astype(float)
    worst = 0.0
    for k in range(qs.kmax):
        m = min(k, c.size - 1)
        s = float(np.dot(c[:m + 1], q[k + 1:k - m:-1]))
        worst = max(worst, abs(q[k] - s) / max(abs(q[k]), 1.0))
    return worst


def gf_check(qs: QSeq) -> float:
    """Max relative deviation between ``qs`` and the generating-function expansion.

    The comparison sequence comes from dividing the series ``Q_0 pi(z)`` by
    ``d(z) = pi(z) - z`` term by term in float64, so it shares no intermediate
    values with :func:`solve_q`.
    """
    c = qs.source.coeffs
    n = qs.kmax
    num = np.zeros(n + 1)
    m = min(c.size, n + 1)
    num[:m] = qs.q0 * c[:m]
    den = np.zeros(n + 1)
    den[:m] = c[:m]
    if n >= 1:
        den[1] -= 1.0
    out = np.zeros(n + 1)
    for k in range(n + 1):
        s = num[k]
        for i in range(1, min(k, den.size - 1) + 1):
            if den[i] != 0.0:
                s -= den[i] * out[k - i]
        out[k] = s / den[0]
    ref = qs.q.astype(float)
    scale = np.maximum(np.abs(ref), np.abs(out))
    scale[scale == 0] = 1.0
    return float(np.max(np.abs(ref - out) / scale))


def _bisect_newton(f, fprime, lo, hi, tol=ROOT_TOL, max_iter=MAX_ITER):
    """Root of ``f`` in [lo, hi] with a sign change: bisection then Newton polish."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return RootResult(lo, 0, 0.0)
    if fhi == 0.0:
        return RootResult(hi, 0, 0.0)
    if np.sign(flo) == np.sign(fhi):
        raise RootNotFoundError("no sign change on the bracket")
    it = 0
    while hi - lo > 1e-6 and it < max_iter:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        it += 1
        if fm == 0.0:
            return RootResult(mid, it, 0.0)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(max_iter - it):
        it += 1
        fx = f(x)
        if abs(fx) <= tol * 0.01:
            break
        d = fprime(x)
        step = fx / d if d != 0 else 0.0
        nx = x - step
        if not (lo <= nx <= hi) or d == 0:
            # keep the bracket when Newton leaves it
            nx = 0.5 * (lo + hi)
        fn = f(nx)
        if np.sign(fn) == np.sign(flo):
            lo, flo = nx, fn
        else:
            hi = nx
        if abs(nx - x) <= 1e-17 * max(1.0, abs(x)):
            x = nx
            break
        x = nx
    res = abs(f(x))
    if res > tol:
        raise RootNotFoundError(f"root residual {res:.3e} above tolerance")
    return RootResult(float(x), it, float(res))


def find_sigma(pi: CoeffSeq) -> RootResult:
    """Least nonnegative root of ``z = pi(z)`` when ``gamma_1 > 1``.

    Raises:
        RegimeError: If ``gamma_1 <= 1`` so that the least root is one.
    """
    regime = classify(pi.gamma[0])
    if regime != SUPERCRITICAL:
        raise RegimeError(f"gamma_1 = {pi.gamma[0]!r}: least root of z = pi(z) is 1 ({regime})")

    def f(z):
        return float(pi.pgf(z)) - z

    def fp(z):
        return float(pi.pgf_deriv(z)) - 1.0

    return _bisect_newton(f, fp, 0.0, 1.0 - 1e-9)


def find_phi(dist: Dist, rate: float, scale: float = 1.0) -> RootResult:
    """Least root in (0, 1) of ``z = F(r - r z)`` with ``r = rate * scale``.

    For M/GI/1 pass the service law and the arrival rate; for GI/M/m pass the
    interarrival law, the service rate and ``scale = m``.

    Raises:
        RegimeError: If ``r * mean <= 1`` (the root is then one).
    """
    r = float(rate) * float(scale)
    if r <= 0:
        raise ValidationError("rate must be positive")
    load = r * dist.mean
    if classify(load) != SUPERCRITICAL:
        raise RegimeError(f"mean count {load!r} <= 1: no root in (0, 1)")

    def f(z):
        return lst(dist, r - r * z) - z

    def fp(z):
        return -r * lst_deriv(dist, r - r * z) - 1.0

    return _bisect_newton(f, fp, 0.0, 1.0 - 1e-9)


def find_tau(dist: Dist, lam: float) -> RootResult:
    """Root above one of ``z = B(lam - lam z)`` for load ``lam * mean < 1``.

    The bracket ends just below the pole ``1 + |abscissa| / lam``; for laws whose
    LST is entire the upper end is found by doubling.

    Raises:
        RegimeError: If the load is not below one.
        RootNotFoundError: If no root exists inside the analyticity domain.
    """
    lam = float(lam)
    load = lam * dist.mean
    if classify(load) != SUBCRITICAL:
        raise RegimeError(f"load {load!r} >= 1: no root above one")

    def f(z):
        return lst_continued(dist, lam - lam * z) - z

    def fp(z):
        return -lam * lst_continued(dist, lam - lam * z, deriv=True) - 1.0

    lo = 1.0 + 1e-9
    if f(lo) >= 0:
        raise RootNotFoundError("function not negative just above one")
    if math.isinf(dist.abscissa):
        hi = 2.0
        while f(hi) < 0:
            hi = 1.0 + 2.0 * (hi - 1.0)
            if hi > 1e6:
                raise RootNotFoundError("no root above one found")
    else:
        cap = 1.0 - dist.abscissa / lam
        gap = cap - 1.0
        hi = None
        for k in range(1, 60):
            cand = cap - gap * 2.0**-k
            if f(cand) > 0:
                hi = cand
                break
        if hi is None:
            raise RootNotFoundError("no root above one inside the analyticity domain")
    return _bisect_newton(f, fp, lo, hi)
