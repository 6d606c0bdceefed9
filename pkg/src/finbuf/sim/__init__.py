"""Discrete-event simulation oracle for the analytic models.

Every batch draws from its own Philox stream keyed by ``(seed, batch)``, so a
fixed seed reproduces the output bit for bit. Standard errors come from the
spread of the batch estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dam as _dam
from .. import gim as _gim
from .. import mg1 as _mg1
from .. import priority as _priority
from ..errors import ValidationError
from . import kernels

MIN_REPLICATIONS = 1000
MIN_BATCHES = 30
RARE_EVENTS = 30


@dataclass(frozen=True)
class SimConfig:
    """What to simulate and how much.

    Attributes:
        model: An ``Mg1Spec``, ``GimSpec``, ``DamSpec`` or ``PrioritySpec``.
        replications: Busy periods (mg1) or arrivals (other models).
        seed: Nonnegative integer seed.
        batch_count: Independent batches used for the standard error.
        kmax: Longest loss run tracked (mg1 only).
        warmup: Fraction of each batch's arrivals discarded (not used for mg1).
    """

    model: object
    replications: int = 10**6
    seed: int = 0
    batch_count: int = 50
    kmax: int = 3
    warmup: float = 0.1

    def __post_init__(self):
        if not isinstance(self.model, (_mg1.Mg1Spec, _gim.GimSpec, _dam.DamSpec, _priority.PrioritySpec)):
            raise ValidationError("model must be an mg1, gim, dam or priority spec")
        for name, low in (("replications", MIN_REPLICATIONS), ("batch_count", MIN_BATCHES), ("kmax", 1)):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < low:
                raise ValidationError(f"{name} must be an integer >= {low}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.replications < self.batch_count:
            raise ValidationError("need at least one replication per batch")
        if not 0.0 <= self.warmup < 1.0:
            raise ValidationError("warmup must lie in [0, 1)")

    @property
    def per_batch(self) -> int:
        return int(self.replications) // int(self.batch_count)

    def rng(self, batch: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(self.seed), batch])))


@dataclass(frozen=True)
class MetricEstimate:
    est: float
    se: float
    n: int

    def z_score(self, exact: float) -> float:
        return (self.est - exact) / self.se if self.se > 0 else (0.0 if self.est == exact else np.inf)

    def to_dict(self) -> dict:
        return {"est": self.est, "se": self.se, "n": self.n}


@dataclass(frozen=True)
class SimEstimate:
    """Per-metric estimates from one simulation run."""

    model: str
    seed: int
    replications: int
    batches: int
    metrics: dict

    def __getitem__(self, name) -> MetricEstimate:
        return self.metrics[name]

    def compare(self, exact: dict, threshold: float = 3.5) -> dict:
        """``{metric: (z, passed)}`` for every metric with an exact value."""
        out = {}
        for name, value in exact.items():
            if name in self.metrics:
                z = self.metrics[name].z_score(value)
                out[name] = (z, bool(abs(z) <= threshold))
        return out

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.metrics.items()}


def _ratio(num: np.ndarray, den: np.ndarray, n: int, count: bool = False) -> MetricEstimate:
    """Pooled ratio with a batch-means standard error.

    For event counts with fewer than ``RARE_EVENTS`` occurrences the batch
    spread says little, so the error is floored at the Poisson value
    ``sqrt(max(events, 1)) / sum(den)``.
    """
    per = num / den
    se = float(np.std(per, ddof=1) / np.sqrt(per.size))
    events = float(num.sum())
    if count and events < RARE_EVENTS:
        se = max(se, float(np.sqrt(max(events, 1.0)) / den.sum()))
    return MetricEstimate(float(events / den.sum()), se, n)


def _batches(config: SimConfig, fn) -> np.ndarray:
    return np.array([fn(config.rng(b)) for b in range(config.batch_count)])


def sim_mg1(config: SimConfig) -> SimEstimate:
    """Busy-period tallies for M/GI/1 with ``n`` waiting places."""
    spec = config.model
    if not isinstance(spec, _mg1.Mg1Spec):
        raise ValidationError("sim_mg1 needs an Mg1Spec")
    code, params = spec.service.kernel_params()
    k = config.kmax
    t = _batches(config, lambda rng: kernels.mg1_batch(rng, spec.lam, code, params, spec.n,
                                                        config.per_batch, k))
    n_total = config.per_batch * config.batch_count
    periods = t[:, 0]
    m = {
        "busy_period": _ratio(t[:, 1], periods, n_total),
        "losses": _ratio(t[:, 2], periods, n_total, count=True),
        "served": _ratio(t[:, 3], periods, n_total),
        "arrivals": _ratio(t[:, 4], periods, n_total),
        "loss_probability": _ratio(t[:, 2], periods + t[:, 4], n_total, count=True),
        "runs": _ratio(t[:, 5], periods, n_total, count=True),
    }
    for j in range(1, k + 1):
        m[f"runs_k{j}"] = _ratio(t[:, 5 + j], periods, n_total, count=True)
        m[f"losses_in_runs_k{j}"] = _ratio(t[:, 5 + k + j], periods, n_total, count=True)
        if np.all(t[:, 5] > 0):
            m[f"c_k{j}"] = _ratio(t[:, 5 + j], t[:, 5], n_total)
    return SimEstimate("mg1", config.seed, n_total, config.batch_count, m)


def sim_gim(config: SimConfig) -> SimEstimate:
    """Fraction of lost arrivals in GI/M/m with room for ``n + m - 1``."""
    spec = config.model
    if not isinstance(spec, _gim.GimSpec):
        raise ValidationError("sim_gim needs a GimSpec")
    code, params = spec.arrival.kernel_params()
    per = config.per_batch
    warm = int(round(config.warmup * per / (1.0 - config.warmup)))
    t = _batches(config, lambda rng: kernels.gim_batch(rng, code, params, spec.mu, spec.m,
                                                        spec.capacity, per + warm, warm))
    n_total = int(t[:, 0].sum())
    return SimEstimate("gim", config.seed, n_total, config.batch_count,
                       {"loss_probability": _ratio(t[:, 1], t[:, 0], n_total, count=True)})


def sim_dam(config: SimConfig) -> SimEstimate:
    """Phase and level time fractions of the dam queue."""
    spec = config.model
    if not isinstance(spec, _dam.DamSpec):
        raise ValidationError("sim_dam needs a DamSpec")
    c1, p1 = spec.b1.kernel_params()
    c2, p2 = spec.b2.kernel_params()
    per = config.per_batch
    warm = int(round(config.warmup * per / (1.0 - config.warmup)))
    n = spec.n
    t = _batches(config, lambda rng: kernels.dam_batch(rng, spec.lam, c1, p1, c2, p2, n,
                                                        per + warm, warm))
    phase, level = t[:, : n + 2], t[:, n + 2:]
    total = phase.sum(axis=1)
    reps = per * config.batch_count
    m = {"p1": _ratio(phase[:, 0], total, reps), "p2": _ratio(phase[:, 1], total, reps)}
    for i in range(1, n + 1):
        m[f"q{i}"] = _ratio(phase[:, 1 + i], total, reps)
    for i in range(n + 1):
        m[f"level{i}"] = _ratio(level[:, i], total, reps)
    m["level_above"] = _ratio(level[:, n + 1], total, reps)
    return SimEstimate("dam", config.seed, reps, config.batch_count, m)


def sim_priority(config: SimConfig) -> SimEstimate:
    """Per-class, cumulative and shadow-queue loss fractions of the priority buffer.

    The shadow queue for class ``k`` is fed by the first ``k`` classes and holds
    ``N_k`` customers; it shares the departure epochs of the real system.
    """
    spec = config.model
    if not isinstance(spec, _priority.PrioritySpec):
        raise ValidationError("sim_priority needs a PrioritySpec")
    code, params = spec.arrival.kernel_params()
    cum_probs = np.cumsum(spec.class_probs)
    caps = np.array(spec.capacities, dtype=np.int64)
    cum_caps = np.cumsum(caps)
    per = config.per_batch
    warm = int(round(config.warmup * per / (1.0 - config.warmup)))
    t = _batches(config, lambda rng: kernels.priority_batch(rng, code, params, cum_probs, spec.mu,
                                                             spec.C, caps, cum_caps, per + warm, warm))
    nc = spec.classes
    reps = per * config.batch_count
    m = {}
    for k in range(nc):
        if np.all(t[:, k] > 0):
            m[f"class{k + 1}.loss_fraction"] = _ratio(t[:, nc + k], t[:, k], reps, count=True)
        m[f"cum{k + 1}.loss_fraction"] = _ratio(t[:, 3 * nc + k], t[:, 2 * nc + k], reps, count=True)
        m[f"shadow{k + 1}.loss_fraction"] = _ratio(t[:, 4 * nc + k], t[:, 2 * nc + k], reps, count=True)
    return SimEstimate("priority", config.seed, reps, config.batch_count, m)


def run(config: SimConfig) -> SimEstimate:
    """Dispatch on the model type."""
    spec = config.model
    if isinstance(spec, _mg1.Mg1Spec):
        return sim_mg1(config)
    if isinstance(spec, _gim.GimSpec):
        return sim_gim(config)
    if isinstance(spec, _dam.DamSpec):
        return sim_dam(config)
    return sim_priority(config)


def exact_values(spec, kmax: int = 3) -> dict:
    """Analytic values keyed like the simulation metrics they should match."""
    if isinstance(spec, _mg1.Mg1Spec):
        rep = _mg1.analyze(spec)
        ccl = _mg1.ccl_coefficients(spec, kmax)
        out = {"busy_period": float(rep.et[-1]), "losses": float(rep.el[-1]),
               "served": float(rep.nu[-1]), "arrivals": float(rep.ea_n),
               "loss_probability": float(rep.p_loss), "runs": float(ccl.runs)}
        for j in range(1, kmax + 1):
            out[f"runs_k{j}"] = float(ccl.runs_k[j - 1])
            out[f"losses_in_runs_k{j}"] = float(ccl.losses_in_k[j - 1])
            if ccl.runs > 0:
                out[f"c_k{j}"] = float(ccl.c[j - 1])
        return out
    if isinstance(spec, _gim.GimSpec):
        if spec.m != 1:
            return {}
        return {"loss_probability": _gim.exact_loss(spec)}
    if isinstance(spec, _dam.DamSpec):
        st = _dam.stationary(spec)
        out = {"p1": st.p1, "p2": st.p2, "level0": st.p1, "level_above": st.level_above}
        for i in range(1, spec.n + 1):
            out[f"q{i}"] = float(st.q[i - 1])
            out[f"level{i}"] = float(st.level_q[i - 1])
        return out
    if isinstance(spec, _priority.PrioritySpec):
        out = {}
        for k in range(1, spec.classes + 1):
            out[f"shadow{k}.loss_fraction"] = _priority.rtilde_priority(spec, k, asymptotic=False).pi_exact
        out["class1.loss_fraction"] = out["cum1.loss_fraction"] = out["shadow1.loss_fraction"]
        return out
    raise ValidationError("unknown model spec")


__all__ = ["SimConfig", "SimEstimate", "MetricEstimate", "sim_mg1", "sim_gim", "sim_dam",
           "sim_priority", "run", "exact_values"]
