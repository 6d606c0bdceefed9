"""Dam release control as a state-dependent M/GI/1 queue.

Customers are units of water above the lower level. A service that starts
with at most ``n`` customers present uses law ``B1`` (the controlled normal
release); otherwise it uses ``B2``. The served count ``nu^(1)`` of the B1 part
solves the convolution recurrence, and everything else follows from Wald's
identities and renewal reward.

Two partitions of time are reported. The phase partition (idle, a B2
service in progress, a B1 service that started at level ``i`` in progress) is
the one the control objective uses. The level partition (``Q = 0``,
``Q > n``, ``Q = i``) is given for reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist as _dist
from .asymptotics import HeavyTrafficParams, Prediction
from .convrec import CRITICAL, SUBCRITICAL, classify, find_phi, solve_q
from .dist import Dist, lst_deriv, mixed_poisson
from .errors import InvariantError, ValidationError

NORMALIZATION_TOL = 1e-9
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CostProfile:
    """Water costs ``c_1 >= c_2 >= ... >= c_n`` by level.

    Either an explicit list (resampled as a step function when the buffer
    size differs from its length) or a linear ramp from ``a`` at level 1 to
    ``b`` at level ``n``.
    """

    values: tuple | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if self.values is not None:
            vals = tuple(float(x) for x in self.values)
            if len(vals) == 0:
                raise ValidationError("explicit cost list is empty")
            if any(vals[i + 1] > vals[i] + 1e-15 for i in range(len(vals) - 1)):
                raise ValidationError("costs must be nonincreasing in the level")
            object.__setattr__(self, "values", vals)
        else:
            if self.a is None or self.b is None:
                raise ValidationError("linear cost profile needs both end values")
            if float(self.b) > float(self.a):
                raise ValidationError("costs must be nonincreasing in the level")
            object.__setattr__(self, "a", float(self.a))
            object.__setattr__(self, "b", float(self.b))

    @classmethod
    def zero(cls) -> "CostProfile":
        return cls(a=0.0, b=0.0)

    @classmethod
    def constant(cls, c: float) -> "CostProfile":
        return cls(a=c, b=c)

    @classmethod
    def linear(cls, a: float, b: float) -> "CostProfile":
        return cls(a=a, b=b)

    @classmethod
    def parse(cls, obj) -> "CostProfile":
        """Accept ``None``, a list, a number, ``"linear(a,b)"`` or ``{"linear": [a, b]}``."""
        if obj is None:
            return cls.zero()
        if isinstance(obj, CostProfile):
            return obj
        if isinstance(obj, (int, float)):
            return cls.constant(float(obj))
        if isinstance(obj, (list, tuple)):
            return cls(values=tuple(obj))
        if isinstance(obj, dict) and "linear" in obj:
            a, b = obj["linear"]
            return cls.linear(a, b)
        if isinstance(obj, str):
            text = obj.replace(" ", "")
            if text.startswith("linear(") and text.endswith(")"):
                try:
                    a, b = (float(x) for x in text[7:-1].split(","))
                except ValueError:
                    raise ValidationError(f"bad linear cost profile {obj!r}") from None
                return cls.linear(a, b)
        raise ValidationError(f"cannot parse cost profile {obj!r}")

    @property
    def is_zero(self) -> bool:
        if self.values is not None:
            return all(v == 0.0 for v in self.values)
        return self.a == 0.0 and self.b == 0.0

    def at(self, n: int) -> np.ndarray:
        """Costs ``c_1..c_n`` for a buffer of size ``n``."""
        n = int(n)
        if n < 1:
            return np.zeros(0)
        if self.values is not None:
            vals = np.array(self.values)
            idx = (np.arange(n) * vals.size) // n
            return vals[idx]
        if n == 1:
            return np.array([0.5 * (self.a + self.b)])
        return self.a + (self.b - self.a) * np.arange(n) / (n - 1.0)

    @property
    def c_star(self) -> float:
        """Limit of the average cost ``(1/n) sum c_i``."""
        if self.values is not None:
            return float(np.mean(self.values))
        return 0.5 * (self.a + self.b)

    def to_obj(self):
        if self.values is not None:
            return list(self.values)
        return f"linear({self.a!r},{self.b!r})"


@dataclass(frozen=True)
class DamSpec:
    """Inflow rate, the two release laws, capacity ``n``, costs and penalty slopes."""

    lam: float
    b1: Dist
    b2: Dist
    n: int
    j1: float = 0.0
    j2: float = 0.0
    costs: CostProfile = field(default_factory=CostProfile.zero)

    def __post_init__(self):
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise ValidationError("inflow rate must be positive")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be an integer >= 1")
        for name in ("b1", "b2"):
            if not isinstance(getattr(self, name), _dist.FAMILY_TYPES):
                raise ValidationError(f"{name} must be a distribution object")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "j1", float(self.j1))
        object.__setattr__(self, "j2", float(self.j2))
        object.__setattr__(self, "costs", CostProfile.parse(self.costs))
        if self.j1 < 0 or self.j2 < 0:
            raise ValidationError("penalty slopes must be nonnegative")
        if self.rho2 >= 1.0:
            raise ValidationError(f"rho2 = {self.rho2!r} must be below one for stationarity")

    @property
    def rho1(self) -> float:
        return self.lam * self.b1.mean

    @property
    def rho2(self) -> float:
        return self.lam * self.b2.mean

    @property
    def rho12(self) -> float:
        """``int (lam x)^2 dB1(x)``."""
        return self.lam**2 * self.b1.raw_moment(2)

    @property
    def rho12_tilde(self) -> float:
        """Second scaled moment of ``B1`` rescaled to load one."""
        return self.b1.raw_moment(2) / self.b1.mean**2

    def with_rho1(self, rho1: float) -> "DamSpec":
        """Same spec with ``B1`` rescaled to load ``rho1``."""
        b1 = _dist.with_mean(self.b1, rho1 / self.lam)
        return DamSpec(self.lam, b1, self.b2, self.n, self.j1, self.j2, self.costs)


@dataclass(frozen=True)
class DamStationary:
    """Stationary quantities of the dam queue.

    Attributes:
        nu1: ``E nu_0^(1) .. E nu_n^(1)`` (starting at one).
        nu2: ``E nu_n^(2)``.
        p1: Idle fraction.
        p2: Fraction of time a B2 service is in progress.
        q: ``q_1..q_n``, fraction of time a B1 service begun at level ``i`` is in progress.
        level_above: ``P(Q > n)``.
        level_q: ``P(Q = i)`` for ``i = 1..n``.
        et1, et2, idle: Expected B1 time, B2 time and idle time per cycle.
    """

    spec: DamSpec
    nu1: np.ndarray
    nu2: float
    p1: float
    p2: float
    q: np.ndarray
    level_above: float
    level_q: np.ndarray
    et1: float
    et2: float
    idle: float

    @property
    def total(self) -> float:
        return self.p1 + self.p2 + float(np.sum(self.q))


def served_counts(spec: DamSpec) -> np.ndarray:
    """``E nu_i^(1)`` for ``i = 0..n``, base value one."""
    pi = mixed_poisson(spec.b1, spec.lam)
    return np.array(solve_q(pi, 1.0, spec.n).q)


def stationary(spec: DamSpec, check: bool = True) -> DamStationary:
    """Stationary probabilities from the served-count recurrence.

    Raises:
        InvariantError: If ``p1 + p2 + sum q`` differs from one by more than 1e-9.
    """
    nu = served_counts(spec)
    r1, r2 = spec.rho1, spec.rho2
    nun = nu[-1]
    p1 = (1.0 - r2) / (1 + (r1 - r2) * nun)
    nu2 = (1 - (1.0 - r1) * nun) / (1.0 - r2)
    p2 = r2 * p1 * nu2
    d = np.diff(nu)
    # the level-1 term is measured against zero, not against nu_0 = 1
    dq = np.concatenate([[nu[1]], d[1:]])
    q = (r1 * p1 * dq).astype(float)
    level_q = (p1 * d).astype(float)
    out = DamStationary(spec, nu, float(nu2), float(p1), float(p2), q, float(p1 * nu2), level_q,
                        float(nun / spec.lam * r1), float(nu2 * spec.b2.mean), 1.0 / spec.lam)
    if check and abs(out.total - 1.0) > NORMALIZATION_TOL:
        raise InvariantError(f"phase probabilities sum to {out.total!r}")
    return out


def finite_objective(spec: DamSpec, st: DamStationary | None = None) -> float:
    """``j1 n p1 + j2 n p2 + sum c_i q_i`` at the spec's buffer size."""
    st = stationary(spec) if st is None else st
    c = spec.costs.at(spec.n)
    return spec.j1 * spec.n * st.p1 + spec.j2 * spec.n * st.p2 + float(np.dot(c, st.q))


def dam_asymptotics(spec: DamSpec, heavy: HeavyTrafficParams | None = None) -> list:
    """Large-n predictions for the load regime of ``B1``.

    With ``heavy`` the heavy-traffic forms are returned instead; ``delta > 0``
    means load ``1 + delta`` and ``delta < 0`` load ``1 - |delta|``.
    """
    r1, r2, n = spec.rho1, spec.rho2, spec.n
    ratio = r2 / (1.0 - r2)
    out = []
    if heavy is not None:
        delta = abs(heavy.delta)
        rt = heavy.rho2_tilde
        b = heavy.exponent
        x = 2.0 * delta / rt
        reg = "heavy_traffic"
        if heavy.C == 0:
            out.append(Prediction("dam.heavy.scaled_idle", rt / 2.0, reg, "n p1 limit"))
            out.append(Prediction("dam.heavy.scaled_overflow", ratio * rt / 2.0, reg, "n p2 limit"))
            return out
        em1 = math.expm1(b)
        if heavy.delta > 0:
            out.append(Prediction("dam.heavy.upper.idle", delta / em1, reg))
            out.append(Prediction("dam.heavy.upper.overflow", delta * ratio * math.exp(b) / em1, reg))
            out.append(Prediction("dam.heavy.upper.top_level", math.exp(b) / em1 * x, reg,
                                  "q_n; q_{n-j} / q_n = (1 - x)^j"))
            out.append(Prediction("dam.heavy.upper.profile_ratio", 1.0 - x, reg))
        else:
            out.append(Prediction("dam.heavy.lower.idle", delta * math.exp(b) / em1, reg))
            out.append(Prediction("dam.heavy.lower.overflow", delta * ratio / em1, reg))
            out.append(Prediction("dam.heavy.lower.top_level", x / em1, reg,
                                  "q_n; q_{n-j} / q_n = (1 + x)^j"))
            out.append(Prediction("dam.heavy.lower.profile_ratio", 1.0 + x, reg))
        return out
    regime = classify(r1)
    if regime == SUBCRITICAL:
        out.append(Prediction("dam.subcritical.idle_limit", 1.0 - r1, regime))
        out.append(Prediction("dam.subcritical.overflow_limit", 0.0, regime))
    elif regime == CRITICAL:
        r12 = spec.rho12
        out.append(Prediction("dam.critical.scaled_idle", r12 / 2.0, regime, "n p1 limit"))
        out.append(Prediction("dam.critical.scaled_overflow", ratio * r12 / 2.0, regime, "n p2 limit"))
        out.append(Prediction("dam.critical.scaled_level", 1.0, regime, "n q_{n-i} limit"))
        out.append(Prediction("dam.critical.served_increment", 2.0 / r12, regime))
        out.append(Prediction("dam.critical.objective_limit",
                              spec.j1 * r12 / 2.0 + spec.j2 * ratio * r12 / 2.0 + spec.costs.c_star,
                              regime))
    else:
        phi = find_phi(spec.b1, spec.lam).value
        d = 1.0 + spec.lam * lst_deriv(spec.b1, spec.lam - spec.lam * phi)
        out.append(Prediction("dam.supercritical.idle_ratio", (1.0 - r2) * d / (r1 - r2), regime,
                              "p1 / phi^n limit"))
        out.append(Prediction("dam.supercritical.idle", (1.0 - r2) * d / (r1 - r2) * phi**n, regime))
        out.append(Prediction("dam.supercritical.overflow_limit", r2 * (r1 - 1.0) / (r1 - r2), regime))
    return out


# objective functionals

def psi_n(costs: CostProfile, C: float, rho_tilde: float, n: int, sign: int = -1) -> float:
    """Pre-limit weighted cost average with ratio ``x = 1 + sign * 2C / (rho_tilde n)``.

    ``sign = -1`` gives the upper-side function, ``sign = +1`` the lower-side one.
    """
    x = 1.0 + sign * 2.0 * C / (rho_tilde * n)
    if x <= 0:
        raise ValidationError("buffer size too small for this C")
    c = costs.at(n)[::-1]  # c_{n-j} for j = 0..n-1
    logw = np.arange(n) * math.log(x)
    w = np.exp(logw - logw.max())
    return float(np.dot(c, w) / np.sum(w))


def eta_n(costs: CostProfile, C: float, rho_tilde: float, n: int) -> float:
    return psi_n(costs, C, rho_tilde, n, sign=+1)


def cost_limit(costs: CostProfile, C: float, rho_tilde: float, sign: int = -1,
               n_eval: int = 2000, rtol: float = 1e-6, max_n: int = 1 << 22) -> float:
    """Limit of :func:`psi_n` by Richardson extrapolation ``2 f(2n) - f(n)``.

    The estimate from ``(n, 2n)`` must agree with the one from ``(2n, 4n)``
    within ``rtol``; otherwise ``n`` is doubled.
    """
    if costs.is_zero:
        return 0.0
    n = max(int(n_eval), int(math.ceil(8.0 * C / rho_tilde)) + 1)
    f1 = psi_n(costs, C, rho_tilde, n, sign)
    f2 = psi_n(costs, C, rho_tilde, 2 * n, sign)
    while True:
        f4 = psi_n(costs, C, rho_tilde, 4 * n, sign)
        e1, e2 = 2.0 * f2 - f1, 2.0 * f4 - f2
        if abs(e2 - e1) <= rtol * max(abs(e2), 1e-12) or 4 * n >= max_n:
            return e2
        n *= 2
        f1, f2 = f2, f4


def psi(costs, C, rho_tilde, n_eval=2000):
    return cost_limit(costs, C, rho_tilde, -1, n_eval)


def eta(costs, C, rho_tilde, n_eval=2000):
    return cost_limit(costs, C, rho_tilde, +1, n_eval)


def _b_over_expm1(b):
    return 1.0 if b == 0 else b / math.expm1(b)


def penalty(spec: DamSpec, C: float, side: str) -> float:
    """Penalty part of the objective in heavy traffic.

    Upper side (load ``1 + C/n``): ``C [j1 + j2 r e^b] / (e^b - 1)``.
    Lower side (load ``1 - C/n``): ``C [j1 e^b + j2 r] / (e^b - 1)``.
    Here ``b = 2C / rho_tilde`` and ``r = rho2 / (1 - rho2)``.
    """
    if C < 0:
        raise ValidationError("C must be nonnegative")
    rt = spec.rho12_tilde
    r = spec.rho2 / (1.0 - spec.rho2)
    b = 2.0 * C / rt
    small = _b_over_expm1(b)          # b / (e^b - 1)
    large = _b_over_expm1(-b)         # b e^b / (e^b - 1)
    if side == "upper":
        return 0.5 * rt * (spec.j1 * small + spec.j2 * r * large)
    if side == "lower":
        return 0.5 * rt * (spec.j1 * large + spec.j2 * r * small)
    raise ValidationError("side must be 'upper' or 'lower'")


def objective(spec: DamSpec, C: float, side: str, n_eval: int = 2000) -> float:
    """Heavy-traffic objective ``J^upper(C)`` or ``J^lower(C)``."""
    sign = -1 if side == "upper" else +1
    pen = penalty(spec, C, side)
    return pen + cost_limit(spec.costs, C, spec.rho12_tilde, sign, n_eval)


@dataclass(frozen=True)
class DamObjective:
    """Objective functionals on a grid of ``C`` values."""

    grid: np.ndarray
    j_upper: np.ndarray
    j_lower: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    c_star: float


def objective_table(spec: DamSpec, grid, n_eval: int = 2000) -> DamObjective:
    grid = np.asarray(grid, dtype=float)
    rt = spec.rho12_tilde
    ps = np.array([cost_limit(spec.costs, c, rt, -1, n_eval) for c in grid])
    et = np.array([cost_limit(spec.costs, c, rt, +1, n_eval) for c in grid])
    ju = np.array([penalty(spec, c, "upper") for c in grid]) + ps
    jl = np.array([penalty(spec, c, "lower") for c in grid]) + et
    return DamObjective(grid, ju, jl, ps, et, spec.costs.c_star)


def golden_min(f, lo: float, hi: float, tol: float = 1e-5):
    """Golden-section minimum of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    x = 0.5 * (a + b)
    return x, f(x)


@dataclass(frozen=True)
class SideMinimum:
    argmin: float
    value: float
    c_max: float


def minimize_side(spec: DamSpec, side: str, n_eval: int = 2000, tol: float = 1e-5) -> SideMinimum:
    """Minimize one functional over ``C >= 0``, extending the range while the minimum sits at its end."""
    f = lambda c: objective(spec, c, side, n_eval)  # noqa: E731
    c_max = 10.0 * spec.rho12_tilde
    for _ in range(11):
        x, fx = golden_min(f, 0.0, c_max, tol)
        if c_max - x > 10 * tol:
            break
        c_max *= 2.0
    f0 = f(0.0)
    if f0 <= fx + 1e-12:
        x, fx = 0.0, f0
    return SideMinimum(x, fx, c_max)


@dataclass(frozen=True)
class OptimizeResult:
    """Control decision.

    Attributes:
        decision: ``"rho1=1"``, ``"rho1=1+delta"``, ``"rho1=1-delta"`` or ``"inconsistent"``.
        C_star: Minimizing ``C`` of the chosen side (0 for ``rho1=1``).
        value: Minimized limiting objective.
        rho1: Realized load ``1 +/- C_star / n``.
        realized: Spec with ``B1`` rescaled to that load.
        stationary: Its stationary solution.
    """

    decision: str
    C_star: float
    value: float
    upper: SideMinimum
    lower: SideMinimum
    rho1: float
    realized: DamSpec
    stationary: DamStationary
    consistent: bool
    diagnostics: list


def optimize(spec: DamSpec, n_eval: int = 2000, tol: float = 1e-5, zero_tol: float = 1e-3) -> OptimizeResult:
    """Choose the normal release load by minimizing both heavy-traffic functionals."""
    up = minimize_side(spec, "upper", n_eval, tol)
    lo = minimize_side(spec, "lower", n_eval, tol)
    up_pos, lo_pos = up.argmin > zero_tol, lo.argmin > zero_tol
    diag = []
    consistent = True
    if not up_pos and not lo_pos:
        decision, c_star, value, rho1 = "rho1=1", 0.0, min(up.value, lo.value), 1.0
    elif up_pos and not lo_pos:
        decision, c_star, value = "rho1=1+delta", up.argmin, up.value
        rho1 = 1.0 + c_star / spec.n
    elif lo_pos and not up_pos:
        decision, c_star, value = "rho1=1-delta", lo.argmin, lo.value
        rho1 = 1.0 - c_star / spec.n
    else:
        consistent = False
        diag.append(f"both argmins positive: upper {up.argmin:.6g}, lower {lo.argmin:.6g}")
        if up.value <= lo.value:
            decision, c_star, value, rho1 = "inconsistent", up.argmin, up.value, 1.0 + up.argmin / spec.n
        else:
            decision, c_star, value, rho1 = "inconsistent", lo.argmin, lo.value, 1.0 - lo.argmin / spec.n
    if rho1 <= 0:
        diag.append("C_star exceeds n; realized load clipped")
        rho1 = 1.0 / spec.n
    realized = spec.with_rho1(rho1)
    return OptimizeResult(decision, c_star, value, up, lo, rho1, realized, stationary(realized),
                          consistent, diag)
