"""GI/M/1/n exact loss probability and GI/M/m/n asymptotics.

For one server the loss probability is ``1 / rtilde_n`` where ``rtilde`` are the
coefficients of ``A(mu - mu z) / (A(mu - mu z) - z)``, i.e. the convolution
recurrence started at one with coefficients ``int exp(-mu x) (mu x)^j / j! dA(x)``.
Here ``n`` counts the total number of customers the system can hold. For ``m``
servers ``n`` is the same series index and the system holds ``n + m - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist as _dist
from .asymptotics import HeavyTrafficParams, Prediction
from .convrec import CRITICAL, SUBCRITICAL, SUPERCRITICAL, classify, find_phi, solve_q
from .dist import Dist, lst, lst_deriv, mixed_poisson
from .errors import NumericalError, RegimeError, ValidationError


@dataclass(frozen=True)
class GimSpec:
    """Interarrival law, service rate, number of servers and series index ``n``."""

    arrival: Dist
    mu: float
    n: int
    m: int = 1

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu) or mu <= 0:
            raise ValidationError("service rate must be positive")
        for name in ("n", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ValidationError(f"{name} must be an integer")
        if self.m < 1:
            raise ValidationError("m must be >= 1")
        if self.n < 0:
            raise ValidationError("n must be >= 0")
        if not isinstance(self.arrival, _dist.FAMILY_TYPES):
            raise ValidationError("arrival must be a distribution object")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @property
    def lam(self) -> float:
        return 1.0 / self.arrival.mean

    @property
    def rho(self) -> float:
        return self.lam / (self.m * self.mu)

    @property
    def capacity(self) -> int:
        return self.n + self.m - 1

    @property
    def regime(self) -> str:
        return classify(self.rho)

    @property
    def rho2(self) -> float:
        """``int (m mu x)^2 dA(x)``."""
        return (self.m * self.mu) ** 2 * self.arrival.raw_moment(2)


@dataclass(frozen=True)
class RSeries:
    """Coefficients ``rtilde_0..rtilde_n`` and their first differences."""

    rtilde: np.ndarray
    r: np.ndarray

    @property
    def p_loss(self) -> float:
        return float(1 / self.rtilde[-1])


def rtilde_series(spec: GimSpec) -> RSeries:
    """Exact series for one server; ``P_loss = 1 / rtilde_n``."""
    if spec.m != 1:
        raise ValidationError("the exact series is available for one server only")
    if spec.n == 0:
        rt = np.array([1.0], dtype=np.longdouble)
    else:
        pi = mixed_poisson(spec.arrival, spec.mu)
        rt = np.array(solve_q(pi, 1.0, spec.n).q)
    r = np.diff(rt, prepend=np.longdouble(0))
    return RSeries(rt, r)


def exact_loss(spec: GimSpec) -> float:
    """Exact one-server loss probability with total capacity ``n``."""
    return rtilde_series(spec).p_loss


@dataclass(frozen=True)
class MultiserverK:
    """Ingredients of the multiserver coefficient ``K_m``.

    Attributes:
        sigma: ``sigma_j = A(j mu)`` for ``j = 1..m``.
        c_prod: ``C_j = prod_{i<=j} (1 - sigma_i) / sigma_i``.
        phi: Least root of ``z = A(m mu - m mu z)``.
        k_m: The coefficient; equals ``phi`` when ``m = 1``.
    """

    sigma: np.ndarray
    c_prod: np.ndarray
    phi: float
    k_m: float


def km_coefficient(spec: GimSpec) -> MultiserverK:
    """Coefficient ``K_m`` of the multiserver geometric loss formula (load below one)."""
    if spec.regime != SUBCRITICAL:
        raise RegimeError("K_m is defined for load below one")
    m, mu = spec.m, spec.mu
    phi = find_phi(spec.arrival, mu, scale=m).value
    j = np.arange(1, m + 1)
    sigma = np.asarray(lst(spec.arrival, j * mu), dtype=float)
    c_prod = np.cumprod((1.0 - sigma) / sigma)
    denom = m * (1.0 - phi) - j
    if np.any(np.abs(denom) < 1e-12):
        raise NumericalError("K_m is singular: m (1 - phi) equals an integer j <= m")
    binom = np.array([math.comb(m, int(x)) for x in j], dtype=float)
    total = np.sum(binom * c_prod / (1.0 - sigma) * (m * (1.0 - sigma) - j) / denom)
    return MultiserverK(sigma, c_prod, phi, float(1.0 / (1.0 + (1.0 - phi) * total)))


def _denominator(spec: GimSpec, phi: float) -> float:
    r = spec.m * spec.mu
    return 1.0 + r * lst_deriv(spec.arrival, r - r * phi)


def geometric_loss(spec: GimSpec) -> float:
    """Load-below-one loss prediction ``K_m (1-rho) D phi^(n-1) / (1 - rho - rho D phi^(n-1))``."""
    k = km_coefficient(spec)
    d = _denominator(spec, k.phi)
    rho = spec.rho
    g = k.phi ** (spec.n - 1)
    return k.k_m * (1.0 - rho) * d * g / (1.0 - rho - rho * d * g)


def ht_gim(delta: float, C: float, rho2_tilde: float, n: int | None = None) -> float:
    """Heavy-traffic loss prediction for load ``1 - delta`` with ``n delta -> C``.

    For ``C > 0`` this is ``delta e^{-b} / (1 - e^{-b})`` with ``b = 2C / rho2_tilde``;
    for ``C = 0`` it is ``rho2_tilde / (2 n)``.
    """
    hp = HeavyTrafficParams(delta, C, rho2_tilde)
    if delta <= 0:
        raise ValidationError("heavy-traffic GI/M formulas need delta > 0")
    if C == 0:
        if not n:
            raise ValidationError("C = 0 needs the buffer index n")
        return rho2_tilde / (2.0 * n)
    b = hp.exponent
    return delta * math.exp(-b) / (-math.expm1(-b))


def ht_instance(arrival_shape: Dist, delta: float, C: float = 1.0, mu: float = 1.0) -> tuple:
    """One-server spec at load ``1 - delta`` with ``n = ceil(C / delta)``.

    Returns:
        ``(spec, realized_C, rho2_tilde)``; ``rho2_tilde`` is computed at load one.
    """
    arrival = _dist.with_mean(arrival_shape, 1.0 / (mu * (1.0 - delta)))
    n = int(math.ceil(C / delta - 1e-12))
    limit = _dist.with_mean(arrival_shape, 1.0 / mu)
    return GimSpec(arrival, mu, n), n * delta, mu**2 * limit.raw_moment(2)


def predictions(spec: GimSpec) -> list:
    """Asymptotic loss predictions at ``spec.n`` for the regime of ``spec``."""
    rho, n, m = spec.rho, spec.n, spec.m
    regime = spec.regime
    tag = "gim1" if m == 1 else "gimm"
    out = []
    if regime == SUPERCRITICAL:
        out.append(Prediction(f"{tag}.supercritical.loss_probability_limit", (rho - 1.0) / rho, regime))
    elif regime == CRITICAL:
        rho2 = spec.rho2
        out.append(Prediction(f"{tag}.critical.scaled_loss_limit", rho2 / 2.0, regime, "n P_loss limit"))
        if n > 0:
            out.append(Prediction(f"{tag}.critical.loss_probability", rho2 / (2.0 * n), regime))
        out.append(Prediction(f"{tag}.critical.inverse_loss_increment", 2.0 / rho2, regime,
                              "1/P(n+1) - 1/P(n) limit"))
    else:
        k = km_coefficient(spec)
        out.append(Prediction(f"{tag}.subcritical.root", k.phi, regime))
        out.append(Prediction(f"{tag}.subcritical.k_coefficient", k.k_m, regime))
        out.append(Prediction(f"{tag}.subcritical.loss_probability", geometric_loss(spec), regime))
    return out


@dataclass(frozen=True)
class GimReport:
    spec: GimSpec
    rho: float
    regime: str
    capacity: int
    p_loss: float | None
    series: RSeries | None
    asymptotic: list = field(default_factory=list)


def analyze(spec: GimSpec) -> GimReport:
    """Exact loss (one server) plus asymptotic predictions."""
    series = rtilde_series(spec) if spec.m == 1 else None
    p = series.p_loss if series is not None else None
    return GimReport(spec, spec.rho, spec.regime, spec.capacity, p, series, predictions(spec))
