"""Interarrival and service-time laws.

Each family exposes its Laplace-Stieltjes transform (LST), raw moments and the
mixed-Poisson coefficients ``pi_j = int exp(-r x) (r x)^j / j! dF(x)`` in closed
form, so no downstream recurrence carries quadrature error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np
from scipy.special import betainc, gammainc, gammaln

from .errors import ValidationError

WEIGHT_TOL = 1e-12
DEFAULT_TAIL_TOL = 1e-14


def _positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class Exponential:
    """Exponential law with the given rate."""

    rate: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def abscissa(self) -> float:
        # LST is analytic for s > abscissa
        return -self.rate

    def _lst(self, s):
        return self.rate / (self.rate + s)

    def _lst_deriv(self, s):
        return -self.rate / (self.rate + s) ** 2

    def raw_moment(self, j: int) -> float:
        return math.factorial(j) / self.rate**j

    def _pmf(self, r, j):
        b = r / (r + self.rate)
        return (1.0 - b) * b**j

    def _tail(self, r, m):
        b = r / (r + self.rate)
        return b ** np.maximum(m, 0)

    def scaled(self, factor: float) -> "Exponential":
        return Exponential(self.rate / factor)

    def to_dict(self) -> dict:
        return {"family": self.family, "rate": self.rate}

    def kernel_params(self):
        return 0, np.array([self.rate])


@dataclass(frozen=True)
class Deterministic:
    """Point mass at ``d > 0``."""

    d: float
    family: ClassVar[str] = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "d", _positive("d", self.d))

    @property
    def mean(self) -> float:
        return self.d

    @property
    def abscissa(self) -> float:
        return -math.inf

    def _lst(self, s):
        return np.exp(-s * self.d)

    def _lst_deriv(self, s):
        return -self.d * np.exp(-s * self.d)

    def raw_moment(self, j: int) -> float:
        return self.d**j

    def _pmf(self, r, j):
        x = r * self.d
        return np.exp(j * math.log(x) - x - gammaln(j + 1.0))

    def _tail(self, r, m):
        x = r * self.d
        m = np.asarray(m, dtype=float)
        return np.where(m <= 0, 1.0, gammainc(np.maximum(m, 1.0), x))

    def scaled(self, factor: float) -> "Deterministic":
        return Deterministic(self.d * factor)

    def to_dict(self) -> dict:
        return {"family": self.family, "d": self.d}

    def kernel_params(self):
        return 1, np.array([self.d])


@dataclass(frozen=True)
class Erlang:
    """Sum of ``shape`` independent exponentials with common ``rate``."""

    shape: int
    rate: float
    family: ClassVar[str] = "erlang"

    def __post_init__(self):
        if isinstance(self.shape, bool) or int(self.shape) != self.shape or self.shape < 1:
            raise ValidationError(f"Erlang shape must be an integer >= 1, got {self.shape!r}")
        object.__setattr__(self, "shape", int(self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def abscissa(self) -> float:
        return -self.rate

    def _lst(self, s):
        return (self.rate / (self.rate + s)) ** self.shape

    def _lst_deriv(self, s):
        k, r = self.shape, self.rate
        return -k * r**k / (r + s) ** (k + 1)

    def raw_moment(self, j: int) -> float:
        out = 1.0
        for i in range(j):
            out *= (self.shape + i) / self.rate
        return out

    def _pmf(self, r, j):
        # negative binomial: events of rate r before `shape` phase completions
        k = self.shape
        p = r / (r + self.rate)
        logc = gammaln(j + k) - gammaln(j + 1.0) - gammaln(k)
        return np.exp(logc + j * math.log(p) + k * math.log1p(-p))

    def _tail(self, r, m):
        p = r / (r + self.rate)
        m = np.asarray(m, dtype=float)
        return np.where(m <= 0, 1.0, betainc(np.maximum(m, 1.0), self.shape, p))

    def scaled(self, factor: float) -> "Erlang":
        return Erlang(self.shape, self.rate / factor)

    def to_dict(self) -> dict:
        return {"family": self.family, "shape": self.shape, "rate": self.rate}

    def kernel_params(self):
        return 2, np.array([float(self.shape), self.rate])


@dataclass(frozen=True)
class HyperExponential:
    """Finite mixture of exponentials."""

    weights: tuple
    rates: tuple
    family: ClassVar[str] = "hyperexponential"

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        r = tuple(_positive("rate", x) for x in self.rates)
        if len(w) == 0 or len(w) != len(r):
            raise ValidationError("weights and rates must be nonempty and of equal length")
        if any(x < 0 or not math.isfinite(x) for x in w):
            raise ValidationError("hyperexponential weights must be nonnegative")
        if abs(sum(w) - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"hyperexponential weights must sum to 1, got {sum(w)!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    @property
    def _w(self):
        return np.array(self.weights)

    @property
    def _r(self):
        return np.array(self.rates)

    @property
    def mean(self) -> float:
        return float(np.sum(self._w / self._r))

    @property
    def abscissa(self) -> float:
        return -min(self.rates)

    def _lst(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        return np.sum(self._w * self._r / (self._r + s), axis=-1)

    def _lst_deriv(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        return -np.sum(self._w * self._r / (self._r + s) ** 2, axis=-1)

    def raw_moment(self, j: int) -> float:
        return float(math.factorial(j) * np.sum(self._w / self._r**j))

    def _pmf(self, r, j):
        b = r / (r + self._r)
        j = np.asarray(j, dtype=float)[..., None]
        return np.sum(self._w * (1.0 - b) * b**j, axis=-1)

    def _tail(self, r, m):
        b = r / (r + self._r)
        m = np.maximum(np.asarray(m, dtype=float), 0.0)[..., None]
        return np.sum(self._w * b**m, axis=-1)

    def scaled(self, factor: float) -> "HyperExponential":
        return HyperExponential(self.weights, tuple(x / factor for x in self.rates))

    def to_dict(self) -> dict:
        return {"family": self.family, "weights": list(self.weights), "rates": list(self.rates)}

    def kernel_params(self):
        k = len(self.weights)
        return 3, np.concatenate([[float(k)], self._w, self._r])


Dist = Union[Exponential, Deterministic, Erlang, HyperExponential]
FAMILY_TYPES = (Exponential, Deterministic, Erlang, HyperExponential)


def _check_dist(dist):
    if not isinstance(dist, FAMILY_TYPES):
        raise ValidationError(f"unsupported distribution object {dist!r}")


def _scalar_or_array(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def lst(dist: Dist, s):
    """Laplace-Stieltjes transform ``int exp(-s x) dF(x)`` for ``s >= 0``.

    Args:
        dist: Distribution object.
        s: Nonnegative scalar or array.

    Returns:
        Transform value(s) in (0, 1].

    Raises:
        ValidationError: If any ``s`` is negative.
    """
    _check_dist(dist)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValidationError("LST argument must be nonnegative")
    return _scalar_or_array(dist._lst(s_arr))


def lst_deriv(dist: Dist, s):
    """Derivative of the LST, ``-int x exp(-s x) dF(x)``, for ``s >= 0``."""
    _check_dist(dist)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValidationError("LST argument must be nonnegative")
    return _scalar_or_array(dist._lst_deriv(s_arr))


def lst_continued(dist: Dist, s, deriv: bool = False):
    """Analytic continuation of the LST to ``s > dist.abscissa`` (possibly negative).

    Used for roots of ``z = F(r - r z)`` above one.
    """
    _check_dist(dist)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= dist.abscissa):
        raise ValidationError(f"LST is not analytic at s <= {dist.abscissa}")
    val = dist._lst_deriv(s_arr) if deriv else dist._lst(s_arr)
    return _scalar_or_array(val)


@dataclass(frozen=True)
class MomentSet:
    """Raw moments and their rate-scaled versions ``rho_j = rate^j m_j``."""

    m1: float
    m2: float
    m3: float
    rate: float
    rho: float
    rho2: float
    rho3: float


def moments(dist: Dist, rate: float) -> MomentSet:
    """Raw moments up to order three and the moments scaled by ``rate``."""
    _check_dist(dist)
    rate = _positive("rate", rate)
    m = [dist.raw_moment(j) for j in (1, 2, 3)]
    return MomentSet(m[0], m[1], m[2], rate, rate * m[0], rate**2 * m[1], rate**3 * m[2])


@dataclass(frozen=True)
class CoeffSeq:
    """Probabilities ``pi_0..pi_jmax`` of a nonnegative integer law plus the tail mass.

    Attributes:
        coeffs: Probabilities, ``coeffs[j] = pi_j``.
        tail_mass: Mass beyond the stored support.
        gamma: Factorial moments ``(gamma_1, gamma_2, gamma_3)``; ``inf`` allowed.
    """

    coeffs: np.ndarray
    tail_mass: float = 0.0
    gamma: tuple = field(default=None)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            raise ValidationError("coefficient sequence is empty")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("coefficients must be finite and nonnegative")
        if c[0] <= 0:
            raise ValidationError("pi_0 must be strictly positive")
        tail = float(self.tail_mass)
        if tail < -1e-12:
            raise ValidationError(f"coefficients sum to {c.sum()!r}, more than 1")
        if abs(c.sum() + tail - 1.0) > 1e-12:
            raise ValidationError(f"coefficients plus tail sum to {c.sum() + tail!r}, not 1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "tail_mass", tail)
        if self.gamma is None:
            j = np.arange(c.size, dtype=float)
            g = (float(np.dot(j, c)), float(np.dot(j * (j - 1), c)),
                 float(np.dot(j * (j - 1) * (j - 2), c)))
            object.__setattr__(self, "gamma", g)
        else:
            object.__setattr__(self, "gamma", tuple(float(x) for x in self.gamma))

    @classmethod
    def from_probs(cls, probs, gamma=None) -> "CoeffSeq":
        """Finite-support law; trailing rounding is absorbed into the tail term."""
        c = np.asarray(probs, dtype=float)
        tail = 1.0 - float(c.sum())
        if abs(tail) <= 1e-12:
            tail = 0.0
        return cls(c, tail, gamma)

    @property
    def jmax(self) -> int:
        return self.coeffs.size - 1

    def pgf(self, z):
        """Probability generating function of the stored coefficients."""
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def pgf_deriv(self, z):
        d = self.coeffs[1:] * np.arange(1, self.coeffs.size)
        if d.size == 0:
            return 0.0 * np.asarray(z, dtype=float)
        return np.polynomial.polynomial.polyval(z, d)


def mixed_poisson_pmf(dist: Dist, rate: float, j):
    """``P(N = j)`` where N counts Poisson(rate) events during a random interval."""
    _check_dist(dist)
    rate = _positive("rate", rate)
    return _scalar_or_array(dist._pmf(rate, np.asarray(j, dtype=float)))


def mixed_poisson_tail(dist: Dist, rate: float, m):
    """Closed-form survival ``P(N >= m)`` of the mixed-Poisson count."""
    _check_dist(dist)
    rate = _positive("rate", rate)
    return _scalar_or_array(dist._tail(rate, np.asarray(m, dtype=float)))


def auto_jmax(dist: Dist, rate: float, tol: float = DEFAULT_TAIL_TOL, start: int = 16,
              cap: int = 1 << 22) -> int:
    """Smallest ``jmax`` with ``P(N > jmax) < tol``."""
    hi = max(int(start), 1)
    while float(mixed_poisson_tail(dist, rate, hi + 1)) >= tol:
        hi *= 2
        if hi > cap:
            raise ValidationError("mixed-Poisson tail decays too slowly for the jmax cap")
    tails = mixed_poisson_tail(dist, rate, np.arange(1, hi + 2))
    return max(int(np.argmax(tails < tol)), 1)


def mixed_poisson(dist: Dist, rate: float, jmax: int | None = None, tol: float | None = None) -> CoeffSeq:
    """Mixed-Poisson coefficients ``pi_0..pi_jmax`` with the closed-form tail attached.

    Args:
        dist: Law of the random interval.
        rate: Poisson rate.
        jmax: Highest stored index. Chosen by :func:`auto_jmax` when omitted.
        tol: If given, raise when the tail mass exceeds it.

    Returns:
        CoeffSeq whose factorial moments are ``rate^l E[X^l]``.
    """
    _check_dist(dist)
    rate = _positive("rate", rate)
    if jmax is None:
        jmax = auto_jmax(dist, rate, DEFAULT_TAIL_TOL if tol is None else tol)
    if int(jmax) != jmax or jmax < 1:
        raise ValidationError(f"jmax must be an integer >= 1, got {jmax!r}")
    jmax = int(jmax)
    coeffs = np.asarray(dist._pmf(rate, np.arange(jmax + 1, dtype=float)), dtype=float)
    tail = float(dist._tail(rate, np.asarray(jmax + 1.0)))
    if tol is not None and tail > tol:
        raise ValidationError(f"tail mass {tail:.3e} exceeds tolerance {tol:.1e}; increase jmax")
    # closed-form pmf and tail can disagree with the ulp-level sum; absorb the difference
    resid = 1.0 - coeffs.sum() - tail
    if abs(resid) > 1e-12:
        raise ValidationError(f"mixed-Poisson normalization failed (residual {resid:.3e})")
    gamma = tuple(rate**l * dist.raw_moment(l) for l in (1, 2, 3))
    return CoeffSeq(coeffs, tail, gamma)


def scaled(dist: Dist, factor: float) -> Dist:
    """Multiply the random time by ``factor``."""
    _check_dist(dist)
    return dist.scaled(_positive("factor", factor))


def with_mean(dist: Dist, mean: float) -> Dist:
    """Same shape, rescaled to the requested mean."""
    return scaled(dist, _positive("mean", mean) / dist.mean)


_ALIASES = {
    "exp": "exponential", "exponential": "exponential", "m": "exponential",
    "det": "deterministic", "deterministic": "deterministic", "d": "deterministic",
    "erlang": "erlang", "erl": "erlang", "e": "erlang",
    "hyper": "hyperexponential", "hyperexponential": "hyperexponential", "h": "hyperexponential",
}


def _from_dict(obj: dict) -> Dist:
    fam = _ALIASES.get(str(obj.get("family", "")).lower())
    try:
        if fam == "exponential":
            return Exponential(obj["rate"])
        if fam == "deterministic":
            return Deterministic(obj["d"])
        if fam == "erlang":
            return Erlang(obj["shape"], obj["rate"])
        if fam == "hyperexponential":
            return HyperExponential(tuple(obj["weights"]), tuple(obj["rates"]))
    except KeyError as exc:
        raise ValidationError(f"distribution literal missing field {exc.args[0]!r}") from None
    raise ValidationError(f"unknown distribution family {obj.get('family')!r}")


def from_literal(lit) -> Dist:
    """Parse ``"exp:2"``, ``"det:1"``, ``"erlang:2:4"``, ``"hyper:0.5,0.5:1,3"`` or a dict.

    JSON object strings are accepted too.
    """
    if isinstance(lit, FAMILY_TYPES):
        return lit
    if isinstance(lit, dict):
        return _from_dict(lit)
    if not isinstance(lit, str):
        raise ValidationError(f"cannot parse distribution literal {lit!r}")
    text = lit.strip()
    if text.startswith("{"):
        try:
            return _from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad JSON distribution literal: {exc}") from None
    parts = text.split(":")
    fam = _ALIASES.get(parts[0].lower())
    try:
        if fam == "exponential" and len(parts) == 2:
            return Exponential(float(parts[1]))
        if fam == "deterministic" and len(parts) == 2:
            return Deterministic(float(parts[1]))
        if fam == "erlang" and len(parts) == 3:
            shape = float(parts[1])
            return Erlang(int(shape) if shape.is_integer() else shape, float(parts[2]))
        if fam == "hyperexponential" and len(parts) == 3:
            w = tuple(float(x) for x in parts[1].split(","))
            r = tuple(float(x) for x in parts[2].split(","))
            return HyperExponential(w, r)
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad number in distribution literal {lit!r}") from None
    raise ValidationError(f"cannot parse distribution literal {lit!r}")


def to_literal(dist: Dist) -> dict:
    _check_dist(dist)
    return dist.to_dict()
