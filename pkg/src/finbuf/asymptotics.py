"""Limiting forms of the convolution recurrence and heavy-traffic expansions.

The functions here only produce predictions; how fast exact values approach
them is checked by the test suite, never claimed by this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .convrec import CRITICAL, SUBCRITICAL, SUPERCRITICAL, CoeffSeq, classify, find_sigma
from .errors import OutOfScopeError, RegimeError, ValidationError


@dataclass(frozen=True)
class Prediction:
    """One asymptotic prediction with a descriptive label."""

    label: str
    value: float
    regime: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "value": self.value, "regime": self.regime, "note": self.note}


@dataclass(frozen=True)
class TakacsPrediction:
    """Large-k behaviour of ``Q_k`` by regime; only the active regime's fields are set.

    Attributes:
        regime: subcritical, critical or supercritical.
        limit_value: ``Q_0 / (1 - gamma_1)`` when ``gamma_1 < 1``.
        slope: ``2 Q_0 / gamma_2`` when ``gamma_1 = 1``.
        sigma: Least root of ``z = pi(z)`` when ``gamma_1 > 1``.
        amplitude_denominator: ``1 - pi'(sigma)``.
        offset: ``Q_0 / (1 - gamma_1)``, the constant left after the geometric term.
    """

    regime: str
    q0: float
    limit_value: float | None = None
    slope: float | None = None
    sigma: float | None = None
    amplitude_denominator: float | None = None
    offset: float | None = None

    def geometric_term(self, k: int) -> float:
        """``Q_0 / (sigma^k (1 - pi'(sigma)))``."""
        if self.regime != SUPERCRITICAL:
            raise RegimeError("geometric term exists only in the supercritical regime")
        return self.q0 / (self.sigma**k * self.amplitude_denominator)

    def predict(self, k: int) -> float:
        """Leading-order approximation to ``Q_k``."""
        if self.regime == SUBCRITICAL:
            return self.limit_value
        if self.regime == CRITICAL:
            return self.slope * k
        return self.geometric_term(k) + self.offset


def takacs_predict(pi: CoeffSeq, q0: float) -> TakacsPrediction:
    """Takacs' limits for the recurrence driven by ``pi``.

    Raises:
        OutOfScopeError: Critical regime with infinite ``gamma_2``.
    """
    q0 = float(q0)
    g1, g2 = pi.gamma[0], pi.gamma[1]
    regime = classify(g1)
    if regime == SUBCRITICAL:
        return TakacsPrediction(regime, q0, limit_value=q0 / (1.0 - g1))
    if regime == CRITICAL:
        if not math.isfinite(g2):
            raise OutOfScopeError("critical regime with infinite second factorial moment "
                                  "(slowly varying Tauberian case) is not implemented")
        return TakacsPrediction(regime, q0, slope=2.0 * q0 / g2)
    root = find_sigma(pi)
    sigma = root.value
    return TakacsPrediction(regime, q0, sigma=sigma,
                            amplitude_denominator=1.0 - float(pi.pgf_deriv(sigma)),
                            offset=q0 / (1.0 - g1))


@dataclass(frozen=True)
class PostnikovPrediction:
    """Critical-regime slope and per-step increment of ``Q_k``.

    Attributes:
        slope: ``2 Q_0 / gamma_2`` for ``Q_k / k``.
        increment: Same constant for ``Q_{k+1} - Q_k``; ``None`` when withheld.
        slope_hypothesis: Whether ``gamma_3 < inf`` holds.
        increment_hypothesis: Whether ``gamma_2 < inf`` and ``pi_0 + pi_1 < 1`` hold.
    """

    slope: float
    increment: float | None
    slope_hypothesis: bool
    increment_hypothesis: bool


def postnikov_predict(pi: CoeffSeq, q0: float) -> PostnikovPrediction:
    """Slope and increment predictions at ``gamma_1 = 1``."""
    g1, g2, g3 = pi.gamma
    if classify(g1) != CRITICAL:
        raise RegimeError(f"gamma_1 = {g1!r} != 1")
    if not math.isfinite(g2) or g2 <= 0:
        raise OutOfScopeError("second factorial moment must be finite and positive")
    value = 2.0 * float(q0) / g2
    c = pi.coeffs
    head = c[0] + (c[1] if c.size > 1 else 0.0)
    inc_ok = head < 1.0 - 1e-12
    return PostnikovPrediction(value, value if inc_ok else None, math.isfinite(g3), inc_ok)


@dataclass(frozen=True)
class HeavyTrafficParams:
    """Load offset ``delta``, limit ``C`` of ``n * delta`` and second moment limit."""

    delta: float
    C: float
    rho2_tilde: float

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta == 0:
            raise ValidationError("delta must be finite and nonzero")
        if not math.isfinite(self.C) or self.C < 0:
            raise ValidationError("C must be finite and nonnegative")
        if not math.isfinite(self.rho2_tilde) or self.rho2_tilde <= 0:
            raise ValidationError("rho2_tilde must be finite and positive")

    @property
    def exponent(self) -> float:
        """``2 C / rho2_tilde``."""
        return 2.0 * self.C / self.rho2_tilde


def ht_phi(params: HeavyTrafficParams) -> float:
    """First-order root ``1 - 2 delta / rho2_tilde`` for load ``1 + delta``; error O(delta^2)."""
    return 1.0 - 2.0 * params.delta / params.rho2_tilde


def ht_denominator(params: HeavyTrafficParams) -> float:
    """First-order value ``delta`` of ``1 + lam B'(lam - lam phi)``."""
    return params.delta


def regime_of_load(rho: float) -> str:
    return classify(rho)


__all__ = [
    "Prediction", "TakacsPrediction", "takacs_predict", "PostnikovPrediction",
    "postnikov_predict", "HeavyTrafficParams", "ht_phi", "ht_denominator",
    "SUBCRITICAL", "CRITICAL", "SUPERCRITICAL", "regime_of_load",
]
