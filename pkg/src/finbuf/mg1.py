"""M/GI/1/n with ``n`` waiting places (the service position is not counted).

Busy periods come from the convolution recurrence with the mixed-Poisson
coefficients of the service law. Losses, served counts and the loss
probability follow from Wald's identities. Consecutive-loss statistics use the
expected number of service starts at each queue level during a busy period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist as _dist
from .asymptotics import HeavyTrafficParams, Prediction
from .convrec import CRITICAL, SUBCRITICAL, SUPERCRITICAL, classify, find_phi, solve_q
from .dist import Dist, lst_deriv, mixed_poisson, mixed_poisson_tail
from .errors import ValidationError


@dataclass(frozen=True)
class Mg1Spec:
    """Arrival rate, service law and number of waiting places."""

    lam: float
    service: Dist
    n: int

    def __post_init__(self):
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise ValidationError("arrival rate must be positive")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 0:
            raise ValidationError("n must be a nonnegative integer")
        if not isinstance(self.service, _dist.FAMILY_TYPES):
            raise ValidationError("service must be a distribution object")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "n", int(self.n))

    @property
    def mu(self) -> float:
        return 1.0 / self.service.mean

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    @property
    def regime(self) -> str:
        return classify(self.rho)


@dataclass(frozen=True)
class Mg1Report:
    """Exact busy-period quantities and the matching asymptotic predictions.

    Attributes:
        et: Expected busy periods ``ET_0..ET_n``.
        el: Expected losses per busy period ``EL_0..EL_n``.
        nu: Expected numbers served ``mu ET_0..mu ET_n``.
        ea_n: Expected arrivals during a busy period, ``lam ET_n``.
        p_loss: Stationary loss probability ``EL_n / (1 + lam ET_n)``.
    """

    spec: Mg1Spec
    rho: float
    regime: str
    et: np.ndarray
    el: np.ndarray
    nu: np.ndarray
    ea_n: float
    p_loss: float
    asymptotic: list = field(default_factory=list)


def busy_periods(spec: Mg1Spec) -> np.ndarray:
    """Expected busy periods ``ET_0..ET_n`` (long double)."""
    et0 = spec.service.mean
    if spec.n == 0:
        return np.array([et0], dtype=np.longdouble)
    pi = mixed_poisson(spec.service, spec.lam)
    return np.array(solve_q(pi, et0, spec.n).q)


def expected_losses(spec: Mg1Spec, et: np.ndarray | None = None) -> np.ndarray:
    """``EL_k = (lam - mu) ET_k + 1`` for ``k = 0..n``."""
    et = busy_periods(spec) if et is None else et
    return (np.longdouble(spec.lam) - np.longdouble(spec.mu)) * et + 1


def loss_probability(spec: Mg1Spec) -> float:
    """Renewal-reward loss probability ``EL_n / (1 + lam ET_n)``."""
    et = busy_periods(spec)
    el = expected_losses(spec, et)
    return float(el[-1] / (1 + spec.lam * et[-1]))


def _denominator(spec: Mg1Spec, phi: float) -> float:
    # 1 + lam B'(lam - lam phi)
    return 1.0 + spec.lam * lst_deriv(spec.service, spec.lam - spec.lam * phi)


def predictions(spec: Mg1Spec) -> list:
    """Asymptotic predictions for the regime of ``spec`` evaluated at ``spec.n``."""
    rho, lam, mu, n = spec.rho, spec.lam, spec.mu, spec.n
    regime = spec.regime
    out = []
    if regime == SUBCRITICAL:
        out.append(Prediction("mg1.subcritical.busy_period_limit", 1.0 / (mu * (1.0 - rho)), regime))
        out.append(Prediction("mg1.subcritical.losses_limit", 0.0, regime))
        out.append(Prediction("mg1.subcritical.loss_probability_limit", 0.0, regime))
    elif regime == CRITICAL:
        rho2 = _dist.moments(spec.service, lam).rho2
        slope = 2.0 * spec.service.mean / rho2
        out.append(Prediction("mg1.critical.losses", 1.0, regime, "exact for every n"))
        out.append(Prediction("mg1.critical.busy_period_slope", slope, regime, "ET_n / n limit"))
        out.append(Prediction("mg1.critical.busy_period", slope * n, regime, "slope * n"))
        out.append(Prediction("mg1.critical.loss_probability", 1.0 / (1.0 + lam * slope * n), regime))
    else:
        phi = find_phi(spec.service, lam).value
        d = _denominator(spec, phi)
        g = phi**n
        out.append(Prediction("mg1.supercritical.root", phi, regime, "least root of z = B(lam - lam z)"))
        out.append(Prediction("mg1.supercritical.denominator", d, regime, "1 + lam B'(lam - lam phi)"))
        out.append(Prediction("mg1.supercritical.busy_period",
                              rho / (lam * d * g) + rho / (lam * (1.0 - rho)), regime))
        out.append(Prediction("mg1.supercritical.losses", (rho - 1.0) / (d * g), regime))
        out.append(Prediction("mg1.supercritical.arrivals", rho / (d * g) + rho / (1.0 - rho), regime))
        out.append(Prediction("mg1.supercritical.loss_probability",
                              (rho - 1.0) ** 2 / (rho * (rho - 1.0) - g * d), regime))
        out.append(Prediction("mg1.supercritical.loss_probability_limit", (rho - 1.0) / rho, regime))
    return out


def analyze(spec: Mg1Spec) -> Mg1Report:
    """Exact report for ``spec`` with asymptotic predictions attached."""
    et = busy_periods(spec)
    el = expected_losses(spec, et)
    nu = np.longdouble(spec.mu) * et
    ea = float(spec.lam * et[-1])
    p = float(el[-1] / (1 + spec.lam * et[-1]))
    return Mg1Report(spec, spec.rho, spec.regime, et, el, nu, ea, p, predictions(spec))


def ht_mg1(delta: float, C: float, rho2_tilde: float) -> tuple:
    """Heavy-traffic predictions ``(EL_n, P_loss)`` for load ``1 + delta`` and ``n delta -> C``."""
    hp = HeavyTrafficParams(delta, C, rho2_tilde)
    if delta <= 0:
        raise ValidationError("heavy-traffic M/GI/1 formulas need delta > 0")
    b = hp.exponent
    return math.exp(b), delta / (1.0 + delta - math.exp(-b))


def ht_instance(service_shape: Dist, delta: float, C: float = 1.0) -> tuple:
    """Spec with unit mean service, ``lam = 1 + delta`` and ``n = ceil(C / delta)``.

    Returns:
        ``(spec, realized_C, rho2_tilde)`` where ``rho2_tilde`` is the second
        moment of the unit-mean service law.
    """
    service = _dist.with_mean(service_shape, 1.0)
    n = int(math.ceil(C / delta - 1e-12))
    spec = Mg1Spec(1.0 + delta, service, n)
    return spec, n * delta, service.raw_moment(2)


# consecutive losses

@dataclass(frozen=True)
class CclReport:
    """Consecutive-loss statistics for ``k = 1..kmax``.

    Attributes:
        k: The run lengths ``1..kmax``.
        c: Fraction of loss runs with length at least ``k``.
        el_k: ``c_k EL_n``.
        runs: Expected number of loss runs per busy period.
        runs_k: Expected number of runs with length at least ``k``.
        losses_in_k: Expected number of losses lying in runs of length at least ``k``.
        el_n: ``EL_n``.
        el0_literal: For ``n = 0`` only, ``rho P(A >= k)`` with A the arrivals in one service.
        limit_k: Large-n limits from :func:`ccl_limit`.
    """

    spec: Mg1Spec
    k: np.ndarray
    c: np.ndarray
    el_k: np.ndarray
    runs: float
    runs_k: np.ndarray
    losses_in_k: np.ndarray
    el_n: float
    el0_literal: np.ndarray | None
    limit_k: list


def service_start_visits(spec: Mg1Spec, et: np.ndarray | None = None) -> np.ndarray:
    """Expected service starts per busy period by number in system at the start.

    Entry ``i - 1`` is for ``i`` customers present, ``i = 1..max(n, 1)``. With
    ``n >= 1`` these are ``mu ET_1`` for ``i = 1`` and ``mu (ET_i - ET_{i-1})`` above.
    """
    et = busy_periods(spec) if et is None else et
    mu = np.longdouble(spec.mu)
    if spec.n == 0:
        return np.array([1.0])
    v = np.empty(spec.n, dtype=np.longdouble)
    v[0] = mu * et[1]
    v[1:] = mu * np.diff(et[1:])
    return v.astype(float)


def _tail_tables(service: Dist, lam: float, top: int):
    """Tails ``T(m) = P(A >= m)`` and ``S(m) = sum_{i >= m} T(i)`` for ``m = 0..top``."""
    extra = _dist.auto_jmax(service, lam, tol=1e-18)
    size = top + extra + 2
    t = np.asarray(mixed_poisson_tail(service, lam, np.arange(size)), dtype=float)
    s = np.cumsum(t[::-1])[::-1]
    return t[:top + 1], s[:top + 1]


def ccl_coefficients(spec: Mg1Spec, kmax: int) -> CclReport:
    """Consecutive-loss coefficients ``c_{n,k}`` and expectations for ``k = 1..kmax``.

    A loss run is the maximal group of losses inside one service interval.
    With ``s`` free places at a service start and A arrivals during the
    service, the run has length ``A - s`` when positive.
    """
    if int(kmax) != kmax or kmax < 1:
        raise ValidationError("kmax must be an integer >= 1")
    kmax = int(kmax)
    et = busy_periods(spec)
    el_n = float(expected_losses(spec, et)[-1])
    v = service_start_visits(spec, et)
    n = spec.n
    free = n + 1 - np.arange(1, v.size + 1) if n > 0 else np.array([0])
    t, s = _tail_tables(spec.service, spec.lam, n + kmax + 2)
    ks = np.arange(1, kmax + 1)
    runs_k = np.array([np.dot(v, t[free + k]) for k in ks])
    # E[(A - s) 1{A - s >= k}] = k T(s + k) + S(s + k + 1)
    losses_k = np.array([np.dot(v, k * t[free + k] + s[free + k + 1]) for k in ks])
    runs = runs_k[0]
    c = runs_k / runs if runs > 0 else np.zeros(kmax)
    lit = spec.rho * t[ks] if n == 0 else None
    limits = [ccl_limit(spec.service, spec.lam, int(k)) for k in ks]
    return CclReport(spec, ks, c, c * el_n, float(runs), runs_k, losses_k, el_n, lit, limits)


@dataclass(frozen=True)
class CclLimit:
    """Large-n limit of a consecutive-loss statistic.

    Attributes:
        value: The limit.
        quantity: ``"el_k"`` for ``lim EL_{n,k}``, ``"c_k"`` for ``lim c_{n,k}``.
        regime: Load regime.
        note: Short explanation.
    """

    value: float
    quantity: str
    regime: str
    note: str = ""


def ccl_limit(service: Dist, lam: float, k: int) -> CclLimit:
    """Large-n limit of the consecutive-loss statistics.

    Below load one ``EL_{n,k} -> 0``. At load one ``EL_{n,k} -> E[(A - k)^+] / P(A = 0)``.
    Above load one ``EL_n`` diverges and the limit of ``c_{n,k}`` is returned,
    a ratio of tail sums weighted by powers of the root ``phi``.
    """
    if int(k) != k or k < 1:
        raise ValidationError("k must be an integer >= 1")
    k = int(k)
    rho = lam * service.mean
    regime = classify(rho)
    if regime == SUBCRITICAL:
        return CclLimit(0.0, "el_k", regime, "losses vanish below load one")
    if regime == CRITICAL:
        t, s = _tail_tables(service, lam, k + 2)
        p0 = float(_dist.mixed_poisson_pmf(service, lam, 0))
        return CclLimit(float(s[k + 1] / p0), "el_k", regime, "E[(A-k)^+] / P(A=0)")
    phi = find_phi(service, lam).value
    m_top = 64
    prev = None
    while True:
        m = np.arange(m_top + 1)
        t = np.asarray(mixed_poisson_tail(service, lam, np.arange(m_top + k + 3)), dtype=float)
        w = phi**m
        val = float(np.dot(w, t[m + k + 1]) / np.dot(w, t[m + 2]))
        if prev is not None and abs(val - prev) <= 1e-10 * max(abs(val), 1e-300):
            return CclLimit(val, "c_k", regime, "phi-weighted tail ratio")
        prev = val
        m_top *= 2
        if m_top > 1 << 20:
            return CclLimit(val, "c_k", regime, "truncation did not stabilize")
