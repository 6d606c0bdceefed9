"""Message-loss model on top of M/GI/1/n.

A buffer of ``N`` packets accepts whole messages; the number of packets per
message is random, so the number of messages that fit is the random threshold
``zeta = max{m : kappa_1 + ... + kappa_m <= N}``. Busy-period quantities are
mixtures of the M/GI/1/i results over the law of ``zeta``. A processed
message is still lost with probability ``p`` when one of its packets is corrupted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dist as _dist
from . import mg1
from .asymptotics import HeavyTrafficParams, Prediction
from .convrec import CRITICAL, SUBCRITICAL, SUPERCRITICAL, classify, find_phi
from .dist import Dist, lst_deriv
from .errors import ValidationError


@dataclass(frozen=True)
class BatchLaw:
    """Law of the number of packets per message on ``support`` (integers >= 1)."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        sup = tuple(int(x) for x in self.support)
        pr = tuple(float(x) for x in self.probs)
        if len(sup) == 0 or len(sup) != len(pr):
            raise ValidationError("support and probs must be nonempty and of equal length")
        if any(x < 1 for x in sup) or len(set(sup)) != len(sup):
            raise ValidationError("support must be distinct integers >= 1")
        if any(p < 0 or not math.isfinite(p) for p in pr) or abs(sum(pr) - 1.0) > 1e-12:
            raise ValidationError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def fixed(cls, size: int) -> "BatchLaw":
        return cls((size,), (1.0,))

    @property
    def lower(self) -> int:
        return min(s for s, p in zip(self.support, self.probs) if p > 0)

    @property
    def upper(self) -> int:
        return max(s for s, p in zip(self.support, self.probs) if p > 0)

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))


@dataclass(frozen=True)
class ZetaDist:
    """Law of the number of whole messages fitting into ``N`` packets."""

    N: int
    pmf: np.ndarray
    lower: int
    upper: int

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def expect(self, values) -> float:
        """``E f(zeta)`` for ``values[i] = f(i)``."""
        v = np.asarray(values)
        return float(np.dot(self.pmf, v[:self.pmf.size]))


def zeta_distribution(batch: BatchLaw, N: int, exact: bool = False) -> ZetaDist:
    """Exact law of ``zeta`` by dynamic programming over partial sums.

    ``P(zeta = m) = P(S_m <= N) - P(S_{m+1} <= N)`` where ``S_m`` is the total
    size of the first ``m`` messages. With ``exact=True`` the DP runs in
    rational arithmetic.
    """
    if isinstance(N, bool) or int(N) != N or N < 0:
        raise ValidationError("N must be a nonnegative integer")
    N = int(N)
    if N < batch.lower:
        warnings.warn("buffer smaller than the smallest message: zeta = 0", stacklevel=2)
    top = N // batch.lower
    if exact:
        probs = [Fraction(p) for p in batch.probs]
        cur = [Fraction(0)] * (N + 1)
        cur[0] = Fraction(1)
        below = [Fraction(1)]
        for _ in range(top + 1):
            nxt = [Fraction(0)] * (N + 1)
            for tot, w in enumerate(cur):
                if w:
                    for s, p in zip(batch.support, probs):
                        if tot + s <= N and p:
                            nxt[tot + s] += w * p
            cur = nxt
            below.append(sum(cur))
        pmf = np.array([float(below[m] - below[m + 1]) for m in range(top + 1)])
    else:
        cur = np.zeros(N + 1)
        cur[0] = 1.0
        below = [1.0]
        for _ in range(top + 1):
            nxt = np.zeros(N + 1)
            for s, p in zip(batch.support, batch.probs):
                if s <= N and p > 0:
                    nxt[s:] += p * cur[:N + 1 - s]
            cur = nxt
            below.append(float(cur.sum()))
        below = np.array(below)
        pmf = below[:top + 1] - below[1:top + 2]
    return ZetaDist(N, pmf, N // batch.upper, top)


@dataclass(frozen=True)
class MessageSpec:
    """Arrival rate of messages, service law, packet-count law, buffer size, corruption probability."""

    lam: float
    service: Dist
    batch: BatchLaw
    N: int
    p: float

    def __post_init__(self):
        if not (0.0 <= float(self.p) <= 1.0):
            raise ValidationError("p must lie in [0, 1]")
        if float(self.lam) <= 0:
            raise ValidationError("arrival rate must be positive")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    @property
    def mu(self) -> float:
        return 1.0 / self.service.mean


@dataclass(frozen=True)
class MessageReport:
    """Mixture expectations per busy period.

    Attributes:
        et_zeta: Expected busy period.
        ep: Expected processed messages.
        em: Expected processed but corrupted messages.
        er: Expected refused messages.
        pi: Loss probability ``(ER + p EP) / (ER + EP)``.
    """

    spec: MessageSpec
    zeta: ZetaDist
    et_zeta: float
    ep: float
    em: float
    er: float
    pi: float
    p_mark: float
    asymptotic: list = field(default_factory=list)


def _busy(spec: MessageSpec, top: int):
    m = mg1.Mg1Spec(spec.lam, spec.service, top)
    et = mg1.busy_periods(m)
    return m, et


def message_expectations(spec: MessageSpec) -> MessageReport:
    """Exact mixture expectations and loss probability for ``spec``."""
    z = zeta_distribution(spec.batch, spec.N)
    _, et = _busy(spec, z.upper)
    et_z = z.expect(et.astype(float))
    ep = spec.mu * et_z
    er = (spec.rho - 1.0) * ep + 1.0
    pi = (er + spec.p * ep) / (er + ep)
    return MessageReport(spec, z, et_z, ep, spec.p * ep, er, pi, spec.p,
                         message_asymptotics(spec, z))


def message_asymptotics(spec: MessageSpec, z: ZetaDist | None = None,
                        heavy: HeavyTrafficParams | None = None) -> list:
    """Large-N predictions for the regime of ``spec``.

    Above load one the supercritical forms use ``X = E[phi^(-zeta)]``.
    With ``heavy`` given, the heavy-traffic forms with ``C = delta E zeta`` are added.
    """
    z = zeta_distribution(spec.batch, spec.N) if z is None else z
    rho, p, lam = spec.rho, spec.p, spec.lam
    regime = classify(rho)
    ez = z.mean
    out = []
    if regime == SUBCRITICAL:
        out.append(Prediction("messages.subcritical.processed_limit", 1.0 / (1.0 - rho), regime))
        out.append(Prediction("messages.subcritical.refused_limit", 0.0, regime))
        out.append(Prediction("messages.subcritical.loss_probability_limit", p, regime))
    elif regime == CRITICAL:
        rho2 = _dist.moments(spec.service, lam).rho2
        ep = 2.0 * ez / rho2
        out.append(Prediction("messages.critical.refused", 1.0, regime, "exact for every N"))
        out.append(Prediction("messages.critical.processed", ep, regime, "2 E zeta / rho2"))
        out.append(Prediction("messages.critical.processed_increment", 2.0 / rho2, regime,
                              "fixed message size"))
        if ez > 0:
            out.append(Prediction("messages.critical.loss_probability",
                                  p + (1.0 - p) * rho2 / (2.0 * ez), regime))
        out.append(Prediction("messages.critical.loss_probability_limit", p, regime))
    else:
        phi = find_phi(spec.service, lam).value
        d = 1.0 + lam * lst_deriv(spec.service, lam - lam * phi)
        x = z.expect(phi ** -np.arange(z.pmf.size, dtype=float))
        e = 1.0 / x
        out.append(Prediction("messages.supercritical.processed", x / d + 1.0 / (1.0 - rho), regime))
        out.append(Prediction("messages.supercritical.refused", (rho - 1.0) * x / d, regime))
        out.append(Prediction("messages.supercritical.loss_probability",
                              ((rho - 1.0) * (rho - 1.0 + p) - p * d * e)
                              / (rho * (rho - 1.0) - d * e), regime, "uses 1 / E phi^(-zeta)"))
        out.append(Prediction("messages.supercritical.loss_probability_limit",
                              (p + rho - 1.0) / rho, regime))
    if heavy is not None:
        out.extend(heavy_traffic_predictions(heavy, p, ez))
    return out


def heavy_traffic_predictions(heavy: HeavyTrafficParams, p: float, ez: float) -> list:
    """Heavy-traffic forms for load ``1 + delta`` with ``C = delta E zeta``."""
    delta, C, r2 = heavy.delta, heavy.C, heavy.rho2_tilde
    reg = "heavy_traffic"
    if C == 0:
        out = [Prediction("messages.heavy.processed", 2.0 * ez / r2, reg),
               Prediction("messages.heavy.refused", 1.0, reg)]
        if ez > 0:
            out.append(Prediction("messages.heavy.loss_probability", p + r2 / (2.0 * ez), reg))
        return out
    eb = math.exp(heavy.exponent)
    return [
        Prediction("messages.heavy.processed", (eb - 1.0) / delta, reg),
        Prediction("messages.heavy.refused", eb, reg),
        Prediction("messages.heavy.loss_probability", (p / delta + eb / (eb - 1.0)) * delta, reg,
                   "small p with p / delta fixed"),
    ]


def loss_increment_prediction(n: int, rho2: float, p: float) -> float:
    """Critical-load prediction of ``Pi_{n+1} - Pi_n`` for fixed message size."""
    a = 2.0 / rho2
    return (a * (p - 1.0) / (n * (n + 1.0))) / ((a + 1.0 / (n + 1.0)) * (a + 1.0 / n))


@dataclass(frozen=True)
class RefusedRuns:
    """Consecutive refused messages for ``k = 1..kmax``.

    Attributes:
        er_k: ``sum_i P(zeta = i) c_{i,k} EL_i``.
        limit_k: Large-N limits (same as M/GI/1 consecutive-loss limits).
    """

    k: np.ndarray
    er_k: np.ndarray
    limit_k: list


def consecutive_refused(spec: MessageSpec, kmax: int) -> RefusedRuns:
    """Mixture of the M/GI/1/i consecutive-loss expectations over ``zeta``."""
    z = zeta_distribution(spec.batch, spec.N)
    ks = np.arange(1, int(kmax) + 1)
    acc = np.zeros(ks.size)
    for i, w in enumerate(z.pmf):
        if w > 0:
            rep = mg1.ccl_coefficients(mg1.Mg1Spec(spec.lam, spec.service, i), int(kmax))
            acc += w * rep.el_k
    limits = [mg1.ccl_limit(spec.service, spec.lam, int(k)) for k in ks]
    return RefusedRuns(ks, acc, limits)


@dataclass(frozen=True)
class RedundancyRow:
    r: int
    p: float
    rho: float
    pi: float | None
    stable: bool


@dataclass(frozen=True)
class RedundancyScan:
    rows: list
    argmin: int


def redundancy_scan(spec: MessageSpec, gamma: float, gamma_tilde: float, max_redundant: int
                    ) -> RedundancyScan:
    """Loss probability as redundant packets are added.

    Each redundant packet divides ``p`` by ``gamma`` and multiplies the mean
    service time by ``gamma_tilde``. Rows with load above one are flagged
    unstable but still evaluated.
    """
    if gamma <= 1 or gamma_tilde < 1:
        raise ValidationError("need gamma > 1 and gamma_tilde >= 1")
    rows = []
    for r in range(int(max_redundant) + 1):
        svc = _dist.scaled(spec.service, gamma_tilde**r)
        s = MessageSpec(spec.lam, svc, spec.batch, spec.N, spec.p / gamma**r)
        rep = message_expectations(s)
        rows.append(RedundancyRow(r, s.p, s.rho, rep.pi, s.rho <= 1.0))
    best = min(rows, key=lambda row: row.pi)
    return RedundancyScan(rows, best.r)
