"""Priority buffer with group departures.

Arrivals form a renewal process; each arrival is independently of class ``k``
with probability ``p^(k)``. Departure epochs form a Poisson(mu) process and
each removes up to ``C`` customers, highest priority first. Class ``k`` has
its own buffer of ``N^(k)`` places and its arrivals are rejected when it is full.

The first ``k`` classes taken together see a thinned renewal input. Their
cumulative content is approximated by a GI/M^C/1/N_k queue with
``N_k = N^(1) + ... + N^(k)``; for ``k = 1`` this is exact. Its loss
probability is ``1 / rtilde_{N_k}`` where ``rtilde`` are the coefficients of
``P(z) / (P(z) - z)`` with ``P(z) = A_k(mu - mu z^C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist as _dist
from .asymptotics import Prediction
from .convrec import SUBCRITICAL, RootResult, _bisect_newton, classify, solve_q
from .dist import CoeffSeq, Dist, lst, lst_deriv, mixed_poisson
from .errors import RegimeError, ValidationError


def thin_lst(base: Dist, q: float, s, deriv: bool = False):
    """LST (or its derivative) of the interarrival law after keeping each arrival with probability ``q``.

    ``A_q(s) = q A(s) / (1 - (1 - q) A(s))``.
    """
    q = float(q)
    if not 0.0 < q <= 1.0:
        raise ValidationError("thinning probability must lie in (0, 1]")
    a = lst(base, s)
    den = 1.0 - (1.0 - q) * a
    if not deriv:
        return q * a / den
    return q * lst_deriv(base, s) / den**2


@dataclass(frozen=True)
class PrioritySpec:
    """Base interarrival law, class probabilities, departure rate, group size and class capacities.

    ``capacities`` are the per-class limits ``N^(1)..N^(l)``; the cumulative
    limits ``N_k`` are their partial sums.
    """

    arrival: Dist
    class_probs: tuple
    mu: float
    C: int
    capacities: tuple

    def __post_init__(self):
        if not isinstance(self.arrival, _dist.FAMILY_TYPES):
            raise ValidationError("arrival must be a distribution object")
        probs = tuple(float(p) for p in self.class_probs)
        caps = tuple(self.capacities)
        if len(probs) == 0 or len(probs) != len(caps):
            raise ValidationError("need one capacity per class")
        if any(p <= 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValidationError("class probabilities must be positive and sum to one")
        if any(isinstance(c, bool) or int(c) != c or c < 1 for c in caps):
            raise ValidationError("capacities must be integers >= 1")
        if isinstance(self.C, bool) or int(self.C) != self.C or self.C < 1:
            raise ValidationError("group size C must be an integer >= 1")
        mu = float(self.mu)
        if not math.isfinite(mu) or mu <= 0:
            raise ValidationError("departure rate must be positive")
        object.__setattr__(self, "class_probs", probs)
        object.__setattr__(self, "capacities", tuple(int(c) for c in caps))
        object.__setattr__(self, "C", int(self.C))
        object.__setattr__(self, "mu", mu)
        if self.rho(self.classes) >= 1.0:
            raise ValidationError(f"total load {self.rho(self.classes)!r} must be below one")

    @property
    def classes(self) -> int:
        return len(self.class_probs)

    @property
    def lam(self) -> float:
        return 1.0 / self.arrival.mean

    def q(self, k: int) -> float:
        """Probability that an arrival belongs to one of the first ``k`` classes."""
        self._check_class(k)
        return float(sum(self.class_probs[:k])) if k < self.classes else 1.0

    def lam_k(self, k: int) -> float:
        return self.lam * self.q(k)

    def rho(self, k: int) -> float:
        return self.lam_k(k) / (self.mu * self.C)

    def N(self, k: int) -> int:
        """Cumulative capacity of the first ``k`` classes."""
        self._check_class(k)
        return int(sum(self.capacities[:k]))

    def _check_class(self, k):
        if int(k) != k or not 1 <= k <= self.classes:
            raise ValidationError(f"class index must be in 1..{self.classes}")


def thinned_counts(spec: PrioritySpec, k: int, top: int) -> CoeffSeq:
    """Lattice coefficients of ``A_k(mu - mu z^C)`` up to ``z^top``.

    The count of Poisson(mu) epochs during one thinned interarrival has coefficients
    ``g`` obeying ``g_j (1 - (1-q) a_0) = q a_j + (1-q) sum_{i>=1} a_i g_{j-i}`` where
    ``a`` are the base law's mixed-Poisson coefficients. ``g_j`` sits at ``z^(C j)``.
    """
    q = spec.q(k)
    C = spec.C
    jtop = top // C + 1
    base = mixed_poisson(spec.arrival, spec.mu)
    if base.jmax < jtop:
        base = mixed_poisson(spec.arrival, spec.mu, jmax=jtop)
    a = base.coeffs[: jtop + 1]
    g = np.zeros(jtop + 1)
    scale = 1.0 - (1.0 - q) * a[0]
    for j in range(jtop + 1):
        acc = q * a[j]
        if j > 0:
            acc += (1.0 - q) * np.dot(a[1:j + 1], g[j - 1::-1])
        g[j] = acc / scale
    lattice = np.zeros(C * jtop + 1)
    lattice[::C] = g
    lattice = lattice[: max(top, 1) + 1]
    tail = max(1.0 - float(lattice.sum()), 0.0)
    # factorial moments of the lattice count C * M with M ~ thinned mixed Poisson
    mean_a = spec.arrival.mean / q
    second_a = (spec.arrival.raw_moment(2) - spec.arrival.mean**2) / q + \
        (2.0 - q) / q**2 * spec.arrival.mean**2
    em = spec.mu * mean_a
    emm = spec.mu**2 * second_a
    gamma = (C * em, C * C * emm + (C * C - C) * em, math.nan)
    return CoeffSeq(lattice, tail, gamma)


@dataclass(frozen=True)
class PrioritySeries:
    """Cumulative-buffer series for class ``k``.

    Attributes:
        k: Class index.
        N: Cumulative capacity ``N_k``.
        rtilde: ``rtilde_0..rtilde_N``.
        pi_exact: ``1 / rtilde_N``.
        pi_asymptotic: Geometric estimate (``None`` when not requested).
        phi: Least root of ``z = A_k(mu - mu z^C)``.
    """

    k: int
    N: int
    rtilde: np.ndarray
    pi_exact: float
    pi_asymptotic: float | None
    phi: float | None


def rtilde_priority(spec: PrioritySpec, k: int, lattice_factor: bool = False,
                    asymptotic: bool = True) -> PrioritySeries:
    """Exact cumulative loss probability of the first ``k`` classes.

    Args:
        spec: Priority spec.
        k: Class index (1-based).
        lattice_factor: Multiply the series by ``1 + z + ... + z^(C-1)`` before
            reading off the coefficient. Off by default since the factor-free
            series matches the embedded Markov chain.
        asymptotic: Also evaluate :func:`pi_asymptotic`.
    """
    N = spec.N(k)
    pi = thinned_counts(spec, k, N)
    rt = np.array(solve_q(pi, 1.0, max(N, 1)).q)[: N + 1]
    if lattice_factor and spec.C > 1:
        rt = np.convolve(rt, np.ones(spec.C, dtype=rt.dtype))[: N + 1]
    phi = pa = None
    if asymptotic:
        phi = find_phi_priority(spec, k).value
        pa = pi_asymptotic(spec, k, literal=lattice_factor, phi=phi)
    return PrioritySeries(k, N, rt, float(1 / rt[N]), pa, phi)


def series(spec: PrioritySpec, lattice_factor: bool = False) -> list:
    return [rtilde_priority(spec, k, lattice_factor) for k in range(1, spec.classes + 1)]


def find_phi_priority(spec: PrioritySpec, k: int) -> RootResult:
    """Least root in (0, 1) of ``z = A_k(mu - mu z^C)``."""
    if classify(spec.rho(k)) != SUBCRITICAL:
        raise RegimeError("root in (0, 1) exists only for load below one")
    q, mu, C = spec.q(k), spec.mu, spec.C

    def f(z):
        return thin_lst(spec.arrival, q, mu - mu * z**C) - z

    def fp(z):
        return -C * mu * z ** (C - 1) * thin_lst(spec.arrival, q, mu - mu * z**C, deriv=True) - 1.0

    return _bisect_newton(f, fp, 0.0, 1.0 - 1e-9)


def pi_asymptotic(spec: PrioritySpec, k: int, literal: bool = False, phi: float | None = None) -> float:
    """Geometric estimate of the cumulative loss probability.

    The default form is ``(1-rho) D phi^N / ((1-rho) - rho D phi^N)`` with
    ``D = 1 + C mu phi^(C-1) A_k'(mu - mu phi^C)``. ``literal=True`` drops the
    ``phi^(C-1)`` factor from ``D`` and multiplies ``(1 - rho)`` in the
    denominator by ``1 + phi + ... + phi^(C-1)``.
    """
    if phi is None:
        phi = find_phi_priority(spec, k).value
    rho, N, C, mu = spec.rho(k), spec.N(k), spec.C, spec.mu
    deriv = thin_lst(spec.arrival, spec.q(k), mu - mu * phi**C, deriv=True)
    g = phi**N
    if literal:
        d = 1.0 + C * mu * deriv
        s = float(np.sum(phi ** np.arange(C)))
        return (1.0 - rho) * d * g / ((1.0 - rho) * s - rho * d * g)
    d = 1.0 + C * mu * phi ** (C - 1) * deriv
    return (1.0 - rho) * d * g / ((1.0 - rho) - rho * d * g)


@dataclass(frozen=True)
class PriorityReport:
    spec: PrioritySpec
    rho: list
    series: list
    asymptotic: list = field(default_factory=list)


def analyze(spec: PrioritySpec, lattice_factor: bool = False) -> PriorityReport:
    entries = series(spec, lattice_factor)
    preds = []
    for e in entries:
        preds.append(Prediction(f"priority.class{e.k}.root", e.phi, SUBCRITICAL))
        preds.append(Prediction(f"priority.class{e.k}.cumulative_loss_probability", e.pi_asymptotic,
                                SUBCRITICAL, "accurate when lower classes lose much more often"))
    rhos = [spec.rho(k) for k in range(1, spec.classes + 1)]
    return PriorityReport(spec, rhos, entries, preds)
