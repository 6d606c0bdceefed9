"""Command-line front end.

Every subcommand takes a scenario (``--scenario file.json``) and/or inline
flags that mirror the scenario fields; flags override file values. The merged
scenario is schema-validated before anything is computed.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from . import dam as _dam
from . import dist as _dist
from . import gim as _gim
from . import messages as _messages
from . import mg1 as _mg1
from . import priority as _priority
from . import sim as _sim
from .asymptotics import postnikov_predict, takacs_predict
from .convrec import CRITICAL, CoeffSeq, classify, gf_check, residual, solve_q
from .errors import NumericalError, RegimeError, ValidationError

SCHEMA_VERSION = 1
OUT_DIR_ENV = "FINBUF_OUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# schemas

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_INT0 = {"type": "integer", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_DIST = {
    "oneOf": [
        {"type": "string", "minLength": 1},
        {"type": "object", "required": ["family"],
         "properties": {"family": {"type": "string"}, "rate": _POS, "d": _POS, "shape": _INT1,
                        "weights": {"type": "array", "items": _PROB},
                        "rates": {"type": "array", "items": _POS}},
         "additionalProperties": False},
    ]
}
_BATCH = {
    "oneOf": [
        _INT1,
        {"type": "object", "required": ["support", "probs"],
         "properties": {"support": {"type": "array", "items": _INT1, "minItems": 1},
                        "probs": {"type": "array", "items": _PROB, "minItems": 1}},
         "additionalProperties": False},
    ]
}
_COSTS = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {"type": "string", "pattern": r"^\s*linear\(\s*[-+0-9.eE]+\s*,\s*[-+0-9.eE]+\s*\)\s*$"},
    ]
}


def _model_schema(model: str, props: dict, required: list) -> dict:
    base = {"schema": {"const": SCHEMA_VERSION}, "model": {"const": model}}
    base.update(props)
    return {"type": "object", "properties": base, "required": ["schema", "model"] + required,
            "additionalProperties": False}


SCHEMAS = {
    "recurrence": _model_schema("recurrence", {
        "coeffs": {"type": "array", "items": _NONNEG, "minItems": 1},
        "dist": _DIST, "rate": _POS,
        "q0": {"type": "number", "not": {"const": 0}}, "kmax": _INT1,
    }, ["kmax"]),
    "mg1": _model_schema("mg1", {
        "lam": _POS, "service": _DIST, "n": _INT0, "kmax": _INT1,
    }, ["lam", "service", "n"]),
    "gim": _model_schema("gim", {
        "arrival": _DIST, "mu": _POS, "n": _INT0, "m": _INT1,
    }, ["arrival", "mu", "n"]),
    "messages": _model_schema("messages", {
        "lam": _POS, "service": _DIST, "batch": _BATCH, "N": _INT0, "p": _PROB, "kmax": _INT1,
        "redundancy": {"type": "object", "required": ["gamma", "gamma_tilde", "max_redundant"],
                       "properties": {"gamma": _POS, "gamma_tilde": _POS, "max_redundant": _INT0},
                       "additionalProperties": False},
    }, ["lam", "service", "batch", "N", "p"]),
    "dam": _model_schema("dam", {
        "action": {"enum": ["stationary", "objective", "optimize"]},
        "lam": _POS, "b1": _DIST, "b2": _DIST, "n": _INT1, "j1": _NONNEG, "j2": _NONNEG,
        "costs": _COSTS, "n_eval": {"type": "integer", "minimum": 10},
        "grid": {"type": "array", "items": _NONNEG, "minItems": 1},
    }, ["lam", "b1", "b2", "n"]),
    "priority": _model_schema("priority", {
        "arrival": _DIST, "class_probs": {"type": "array", "items": _PROB, "minItems": 1},
        "mu": _POS, "C": _INT1, "capacities": {"type": "array", "items": _INT1, "minItems": 1},
        "lattice_factor": {"type": "boolean"},
    }, ["arrival", "class_probs", "mu", "C", "capacities"]),
}
SIM_MODELS = ("mg1", "gim", "dam", "priority")
SWEEP_MODELS = ("mg1", "gim", "messages")
SWEEP_PARAMETERS = ("n", "rho", "delta", "C", "k", "p")
SCHEMAS["sim"] = _model_schema("sim", {
    "target": {"type": "object", "required": ["model"]},
    "replications": {"type": "integer", "minimum": _sim.MIN_REPLICATIONS},
    "seed": _INT0, "batch_count": {"type": "integer", "minimum": _sim.MIN_BATCHES},
    "kmax": _INT1, "warmup": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
}, ["target"])
SCHEMAS["sweep"] = _model_schema("sweep", {
    "target": {"type": "object", "required": ["model"]},
    "parameter": {"enum": list(SWEEP_PARAMETERS)},
    "grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    "C": _NONNEG, "delta": _POS, "kmax": _INT1,
}, ["target", "parameter", "grid"])


def validate(scenario: dict, model: str | None = None) -> dict:
    """Check ``scenario`` against its model schema.

    Raises:
        ValidationError: With a ``path: message`` description of the first problem.
    """
    if not isinstance(scenario, dict):
        raise ValidationError("scenario must be a JSON object")
    model = model or scenario.get("model")
    if model not in SCHEMAS:
        raise ValidationError(f"model: unknown model {model!r}")
    validator = jsonschema.Draft202012Validator(SCHEMAS[model])
    errors = sorted(validator.iter_errors(scenario), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ValidationError(f"{path}: {err.message}")
    if model in ("sim", "sweep"):
        target = dict(scenario["target"])
        target.setdefault("schema", SCHEMA_VERSION)
        allowed = SIM_MODELS if model == "sim" else SWEEP_MODELS
        if target.get("model") not in allowed:
            raise ValidationError(f"target/model: must be one of {', '.join(allowed)}")
        try:
            validate(target)
        except ValidationError as exc:
            raise ValidationError(f"target/{exc}") from None
    return scenario


# scenario -> spec

def _parse_dist(value, field):
    try:
        return _dist.from_literal(value)
    except ValidationError as exc:
        raise ValidationError(f"{field}: {exc}") from None


def _batch(obj) -> _messages.BatchLaw:
    if isinstance(obj, int):
        return _messages.BatchLaw.fixed(obj)
    return _messages.BatchLaw(tuple(obj["support"]), tuple(obj["probs"]))


def build_spec(sc: dict):
    """Model spec object for an ``mg1``, ``gim``, ``messages``, ``dam`` or ``priority`` scenario."""
    model = sc["model"]
    if model == "mg1":
        return _mg1.Mg1Spec(sc["lam"], _parse_dist(sc["service"], "service"), sc["n"])
    if model == "gim":
        return _gim.GimSpec(_parse_dist(sc["arrival"], "arrival"), sc["mu"], sc["n"], sc.get("m", 1))
    if model == "messages":
        return _messages.MessageSpec(sc["lam"], _parse_dist(sc["service"], "service"),
                                     _batch(sc["batch"]), sc["N"], sc["p"])
    if model == "dam":
        return _dam.DamSpec(sc["lam"], _parse_dist(sc["b1"], "b1"), _parse_dist(sc["b2"], "b2"),
                            sc["n"], sc.get("j1", 0.0), sc.get("j2", 0.0),
                            _dam.CostProfile.parse(sc.get("costs")))
    if model == "priority":
        return _priority.PrioritySpec(_parse_dist(sc["arrival"], "arrival"), tuple(sc["class_probs"]),
                                      sc["mu"], sc["C"], tuple(sc["capacities"]))
    raise ValidationError(f"model: no spec for {model!r}")


# handlers

def _preds(items) -> list:
    return [p.to_dict() for p in items]


def run_recurrence(sc: dict) -> dict:
    if "coeffs" in sc:
        pi = CoeffSeq.from_probs(sc["coeffs"])
    elif "dist" in sc and "rate" in sc:
        pi = _dist.mixed_poisson(_parse_dist(sc["dist"], "dist"), sc["rate"])
    else:
        raise ValidationError("coeffs: give either coeffs or both dist and rate")
    q0 = sc.get("q0", 1.0)
    qs = solve_q(pi, q0, sc["kmax"])
    regime = classify(pi.gamma[0])
    preds = []
    try:
        tk = takacs_predict(pi, q0)
        preds.append({"label": f"recurrence.{regime}.leading_term", "value": tk.predict(sc["kmax"]),
                      "regime": regime, "note": "leading-order Q_kmax"})
        for name in ("limit_value", "slope", "sigma", "amplitude_denominator", "offset"):
            v = getattr(tk, name)
            if v is not None:
                preds.append({"label": f"recurrence.{regime}.{name}", "value": v, "regime": regime,
                              "note": ""})
    except RegimeError as exc:
        preds.append({"label": f"recurrence.{regime}.unavailable", "value": None, "regime": regime,
                      "note": str(exc)})
    if regime == CRITICAL:
        try:
            pk = postnikov_predict(pi, q0)
            preds.append({"label": "recurrence.critical.increment", "value": pk.increment,
                          "regime": regime,
                          "note": f"slope hypothesis {pk.slope_hypothesis}, "
                                  f"increment hypothesis {pk.increment_hypothesis}"})
        except RegimeError as exc:
            preds.append({"label": "recurrence.critical.increment", "value": None, "regime": regime,
                          "note": str(exc)})
    return {"exact": {"q": qs.as_float(), "regime": regime, "gamma": list(pi.gamma),
                      "residual": residual(qs), "gf_check": gf_check(qs)},
            "asymptotic": preds}


def run_mg1(sc: dict) -> dict:
    spec = build_spec(sc)
    rep = _mg1.analyze(spec)
    exact = {"rho": spec.rho, "regime": spec.regime, "et": rep.et, "el": rep.el, "nu": rep.nu,
             "et_n": rep.et[-1], "el_n": rep.el[-1], "ea_n": rep.ea_n, "p_loss": rep.p_loss}
    out = {"exact": exact, "asymptotic": _preds(rep.asymptotic)}
    if "kmax" in sc:
        ccl = _mg1.ccl_coefficients(spec, sc["kmax"])
        exact["ccl"] = {"k": ccl.k, "c": ccl.c, "el_k": ccl.el_k, "runs": ccl.runs,
                        "runs_k": ccl.runs_k, "losses_in_k": ccl.losses_in_k,
                        "el0_literal": ccl.el0_literal}
        out["asymptotic"] += [{"label": f"mg1.consecutive_losses.{lim.quantity}_limit.k{k}",
                               "value": lim.value, "regime": lim.regime, "note": lim.note}
                              for k, lim in zip(ccl.k, ccl.limit_k)]
    return out


def run_gim(sc: dict) -> dict:
    spec = build_spec(sc)
    rep = _gim.analyze(spec)
    exact = {"rho": spec.rho, "regime": spec.regime, "capacity": spec.capacity, "p_loss": rep.p_loss}
    if rep.series is not None:
        exact["rtilde"] = rep.series.rtilde
    return {"exact": exact, "asymptotic": _preds(rep.asymptotic)}


def run_messages(sc: dict) -> dict:
    spec = build_spec(sc)
    rep = _messages.message_expectations(spec)
    exact = {"rho": spec.rho, "zeta_mean": rep.zeta.mean, "zeta_pmf": rep.zeta.pmf,
             "et_zeta": rep.et_zeta, "ep": rep.ep, "em": rep.em, "er": rep.er, "pi": rep.pi}
    out = {"exact": exact, "asymptotic": _preds(rep.asymptotic)}
    if "kmax" in sc:
        runs = _messages.consecutive_refused(spec, sc["kmax"])
        exact["refused_runs"] = {"k": runs.k, "er_k": runs.er_k}
    if "redundancy" in sc:
        r = sc["redundancy"]
        scan = _messages.redundancy_scan(spec, r["gamma"], r["gamma_tilde"], r["max_redundant"])
        exact["redundancy"] = {"argmin": scan.argmin,
                               "rows": [{"r": row.r, "p": row.p, "rho": row.rho, "pi": row.pi,
                                         "stable": row.stable} for row in scan.rows]}
    return out


def _stationary_dict(st: _dam.DamStationary) -> dict:
    return {"nu1": st.nu1, "nu2": st.nu2, "p1": st.p1, "p2": st.p2, "q": st.q,
            "level_above": st.level_above, "level_q": st.level_q, "total": st.total}


def run_dam(sc: dict) -> dict:
    spec = build_spec(sc)
    action = sc.get("action", "stationary")
    n_eval = sc.get("n_eval", 2000)
    if action == "stationary":
        st = _dam.stationary(spec)
        exact = {"rho1": spec.rho1, "rho2": spec.rho2, **_stationary_dict(st),
                 "objective": _dam.finite_objective(spec, st)}
        return {"exact": exact, "asymptotic": _preds(_dam.dam_asymptotics(spec))}
    if action == "objective":
        grid = sc.get("grid") or list(np.linspace(0.0, 5.0 * spec.rho12_tilde, 11))
        tab = _dam.objective_table(spec, grid, n_eval)
        return {"exact": {"rho12_tilde": spec.rho12_tilde, "c_star": tab.c_star, "C": tab.grid,
                          "j_upper": tab.j_upper, "j_lower": tab.j_lower, "psi": tab.psi,
                          "eta": tab.eta}}
    res = _dam.optimize(spec, n_eval)
    return {"exact": {"decision": res.decision, "C_star": res.C_star, "value": res.value,
                      "rho1": res.rho1, "consistent": res.consistent,
                      "upper": {"argmin": res.upper.argmin, "value": res.upper.value},
                      "lower": {"argmin": res.lower.argmin, "value": res.lower.value},
                      "b1": _dist.to_literal(res.realized.b1),
                      "stationary": _stationary_dict(res.stationary)},
            "diagnostics": res.diagnostics}


def run_priority(sc: dict) -> dict:
    spec = build_spec(sc)
    lf = bool(sc.get("lattice_factor", False))
    classes = []
    for e in _priority.series(spec, lf):
        classes.append({"k": e.k, "N": e.N, "rho": spec.rho(e.k), "pi_exact": e.pi_exact,
                        "phi": e.phi, "rtilde": e.rtilde})
    preds = []
    for e in _priority.series(spec, lf):
        preds.append({"label": f"priority.class{e.k}.cumulative_loss_probability",
                      "value": e.pi_asymptotic, "regime": "subcritical",
                      "note": "accurate when lower classes lose much more often"})
    return {"exact": {"classes": classes}, "asymptotic": preds}


def _target(sc: dict) -> dict:
    t = dict(sc["target"])
    t.setdefault("schema", SCHEMA_VERSION)
    return t


def run_sim(sc: dict) -> dict:
    target = _target(sc)
    spec = build_spec(target)
    kmax = sc.get("kmax", 3)
    cfg = _sim.SimConfig(spec, sc.get("replications", 10**5), sc.get("seed", 0),
                         sc.get("batch_count", 50), kmax, sc.get("warmup", 0.1))
    est = _sim.run(cfg)
    exact = _sim.exact_values(spec, kmax)
    table = []
    for name, (z, ok) in est.compare(exact).items():
        m = est[name]
        table.append({"metric": name, "exact": exact[name], "est": m.est, "se": m.se, "z": z,
                      "pass": ok})
    return {"simulation": est.to_dict(), "comparison": table}


# sweeps

def _loss_and_prediction(spec):
    if isinstance(spec, _mg1.Mg1Spec):
        rep = _mg1.analyze(spec)
        exact = rep.p_loss
        preds = rep.asymptotic
    else:
        rep = _gim.analyze(spec)
        exact = rep.p_loss
        preds = rep.asymptotic
    approx = None
    for p in preds:
        if p.label.endswith(".loss_probability"):
            approx = p.value
    if approx is None:
        for p in preds:
            if p.label.endswith("loss_probability_limit"):
                approx = p.value
    return exact, approx


def _gap(exact, approx):
    if exact is None or approx is None or exact == 0:
        return None
    return abs(approx / exact - 1.0)


def _with(sc: dict, **kw) -> dict:
    out = copy.deepcopy(sc)
    out.update(kw)
    return out


def _rescale(target: dict, rho: float) -> dict:
    """Scenario at load ``rho`` by rescaling the arrival rate (mg1, messages) or interarrival law (gim)."""
    model = target["model"]
    if model in ("mg1", "messages"):
        svc = _parse_dist(target["service"], "service")
        return _with(target, lam=rho / svc.mean)
    if model == "gim":
        arr = _parse_dist(target["arrival"], "arrival")
        m = target.get("m", 1)
        new = _dist.with_mean(arr, 1.0 / (rho * m * target["mu"]))
        return _with(target, arrival=_dist.to_literal(new))
    raise ValidationError("parameter: rho sweeps need an mg1, gim or messages target")


def run_sweep(sc: dict) -> dict:
    target = _target(sc)
    param = sc["parameter"]
    grid = sc["grid"]
    model = target["model"]
    columns = [param, "exact", "asymptotic", "relative_gap"]
    rows = []
    if param in ("n", "rho"):
        if model not in ("mg1", "gim"):
            raise ValidationError(f"parameter: {param} sweeps need an mg1 or gim target")
        for v in grid:
            if param == "n":
                if float(v) != int(v):
                    raise ValidationError("grid: n values must be integers")
                t = _with(target, n=int(v))
            else:
                t = _rescale(target, float(v))
            exact, approx = _loss_and_prediction(build_spec(t))
            rows.append([v, exact, approx, _gap(exact, approx)])
    elif param in ("delta", "C"):
        if model not in ("mg1", "gim"):
            raise ValidationError(f"parameter: {param} sweeps need an mg1 or gim target")
        columns = [param, "n", "exact", "asymptotic", "relative_gap"]
        shape_key = "service" if model == "mg1" else "arrival"
        shape = _parse_dist(target[shape_key], shape_key)
        for v in grid:
            delta = float(v) if param == "delta" else sc.get("delta", 0.05)
            C = sc.get("C", 1.0) if param == "delta" else float(v)
            if delta <= 0:
                raise ValidationError("grid: delta must be positive")
            if model == "mg1":
                spec, c_real, r2 = _mg1.ht_instance(shape, delta, C)
                exact = _mg1.loss_probability(spec)
                approx = _mg1.ht_mg1(delta, c_real, r2)[1]
            else:
                spec, c_real, r2 = _gim.ht_instance(shape, delta, C, target["mu"])
                exact = _gim.exact_loss(spec)
                approx = _gim.ht_gim(delta, c_real, r2, spec.n)
            rows.append([v, spec.n, exact, approx, _gap(exact, approx)])
    elif param == "k":
        if model != "mg1":
            raise ValidationError("parameter: k sweeps need an mg1 target")
        columns = ["k", "exact", "asymptotic", "relative_gap", "el_k", "limit_quantity"]
        spec = build_spec(target)
        ks = [int(k) for k in grid]
        if any(k < 1 or k != v for k, v in zip(ks, grid)):
            raise ValidationError("grid: k values must be integers >= 1")
        ccl = _mg1.ccl_coefficients(spec, max(ks))
        for k in ks:
            lim = ccl.limit_k[k - 1]
            c, elk = float(ccl.c[k - 1]), float(ccl.el_k[k - 1])
            ref = c if lim.quantity == "c_k" else elk
            rows.append([k, c, lim.value, _gap(ref, lim.value), elk, lim.quantity])
    else:
        if model != "messages":
            raise ValidationError("parameter: p sweeps need a messages target")
        for v in grid:
            spec = build_spec(_with(target, p=float(v)))
            rep = _messages.message_expectations(spec)
            approx = None
            for p in rep.asymptotic:
                if p.label.endswith(".loss_probability"):
                    approx = p.value
            rows.append([v, rep.pi, approx, _gap(rep.pi, approx)])
    return {"table": {"columns": columns, "rows": rows}}


HANDLERS = {
    "recurrence": run_recurrence, "mg1": run_mg1, "gim": run_gim, "messages": run_messages,
    "dam": run_dam, "priority": run_priority, "sim": run_sim, "sweep": run_sweep,
}


def execute(scenario: dict) -> dict:
    """Validate ``scenario`` and return the full report."""
    validate(scenario)
    body = HANDLERS[scenario["model"]](scenario)
    report = {"schema": SCHEMA_VERSION, "model": scenario["model"], "version": __version__,
              "inputs": scenario}
    report.update(body)
    return report


# output

def to_jsonable(obj):
    """Plain JSON types; arrays become lists and non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()] if obj.dtype != np.longdouble else \
            [to_jsonable(float(v)) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(report: dict) -> str:
    return json.dumps(to_jsonable(report), indent=2) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def dumps_csv(report: dict) -> str:
    """Sweep tables as a table; other reports as ``key,value`` rows."""
    data = to_jsonable(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if "table" in data:
        w.writerow(data["table"]["columns"])
        for row in data["table"]["rows"]:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()
    rows = []
    _flatten("", {k: v for k, v in data.items() if k != "inputs"}, rows)
    w.writerow(["key", "value"])
    for k, v in rows:
        w.writerow([k, _fmt(v)])
    return buf.getvalue()


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    base = os.environ.get(OUT_DIR_ENV)
    path = out if os.path.isabs(out) or not base else os.path.join(base, out)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


# argument parsing

def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _batch_flag(text):
    """``4`` for a fixed size or ``1,2,3:0.2,0.3,0.5`` for support and probabilities."""
    if ":" not in text:
        try:
            return int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad batch law {text!r}") from None
    sup, probs = text.split(":", 1)
    return {"support": _ints(sup), "probs": _floats(probs)}


def _costs_flag(text):
    t = text.strip()
    if t.startswith("linear"):
        return t
    vals = _floats(t)
    return vals[0] if len(vals) == 1 and "," not in t else vals


# (flag, dest, type) per model; dests are scenario field names
MODEL_FLAGS = {
    "recurrence": [("--coeffs", "coeffs", _floats), ("--dist", "dist", str), ("--rate", "rate", float),
                   ("--q0", "q0", float), ("--kmax", "kmax", int)],
    "mg1": [("--lam", "lam", float), ("--service", "service", str), ("--n", "n", int),
            ("--kmax", "kmax", int)],
    "gim": [("--arrival", "arrival", str), ("--mu", "mu", float), ("--n", "n", int), ("--m", "m", int)],
    "messages": [("--lam", "lam", float), ("--service", "service", str), ("--batch", "batch", _batch_flag),
                 ("--N", "N", int), ("--p", "p", float), ("--kmax", "kmax", int)],
    "dam": [("--lam", "lam", float), ("--b1", "b1", str), ("--b2", "b2", str), ("--n", "n", int),
            ("--j1", "j1", float), ("--j2", "j2", float), ("--costs", "costs", _costs_flag),
            ("--n-eval", "n_eval", int), ("--grid", "grid", _floats)],
    "priority": [("--arrival", "arrival", str), ("--class-probs", "class_probs", _floats),
                 ("--mu", "mu", float), ("--C", "C", int), ("--capacities", "capacities", _ints)],
}
RUN_FLAGS = {
    "sim": [("--replications", "replications", int), ("--seed", "seed", int),
            ("--batch-count", "batch_count", int), ("--kmax", "kmax", int), ("--warmup", "warmup", float)],
    "sweep": [("--parameter", "parameter", str), ("--grid", "grid", _floats), ("--C", "C", float),
              ("--delta", "delta", float), ("--kmax", "kmax", int)],
}


def _add_flags(parser, flags, prefix=""):
    seen = set()
    for flag, dest, typ in flags:
        if flag in seen:
            continue
        seen.add(flag)
        parser.add_argument(flag, dest=prefix + dest, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finbuf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"finbuf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, csv_default=False):
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", help=f"output path (relative paths resolve against ${OUT_DIR_ENV})")
        p.add_argument("--format", choices=["json", "csv"], default="csv" if csv_default else "json")

    for model in ("recurrence", "mg1", "gim", "messages", "priority"):
        p = sub.add_parser(model)
        common(p)
        _add_flags(p, MODEL_FLAGS[model], "f_")
        if model == "messages":
            p.add_argument("--redundancy", type=_floats, default=None, dest="f_redundancy",
                           help="gamma,gamma_tilde,max_redundant")
        if model == "priority":
            p.add_argument("--lattice-factor", action="store_true", default=None, dest="f_lattice_factor")
    p = sub.add_parser("dam")
    p.add_argument("action", nargs="?", choices=["stationary", "objective", "optimize"])
    common(p)
    _add_flags(p, MODEL_FLAGS["dam"], "f_")
    for name, models in (("sim", SIM_MODELS), ("sweep", SWEEP_MODELS)):
        p = sub.add_parser(name)
        p.add_argument("target", nargs="?", choices=models)
        common(p, csv_default=(name == "sweep"))
        _add_flags(p, RUN_FLAGS[name], "r_")
        union = [f for m in models for f in MODEL_FLAGS[m] if f[0] not in {x[0] for x in RUN_FLAGS[name]}]
        _add_flags(p, union, "f_")
    return parser


def _load_scenario(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"scenario: cannot read {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario: invalid JSON ({exc})") from None


def _collect(args, prefix):
    return {k[len(prefix):]: v for k, v in vars(args).items() if k.startswith(prefix) and v is not None}


def scenario_from_args(args) -> dict:
    cmd = args.command
    base = _load_scenario(args.scenario) if args.scenario else {}
    if not isinstance(base, dict):
        raise ValidationError("scenario: must be a JSON object")
    flags = _collect(args, "f_")
    if cmd in ("sim", "sweep"):
        sc = dict(base)
        sc.setdefault("schema", SCHEMA_VERSION)
        sc.setdefault("model", cmd)
        target = dict(sc.get("target") or {})
        if args.target:
            target["model"] = args.target
        target.update(flags)
        sc["target"] = target
        sc.update(_collect(args, "r_"))
        return sc
    sc = dict(base)
    sc.setdefault("schema", SCHEMA_VERSION)
    sc.setdefault("model", cmd)
    if "redundancy" in flags:
        vals = flags.pop("redundancy")
        if len(vals) != 3:
            raise ValidationError("redundancy: expected gamma,gamma_tilde,max_redundant")
        flags["redundancy"] = {"gamma": vals[0], "gamma_tilde": vals[1], "max_redundant": int(vals[2])}
    sc.update(flags)
    if cmd == "dam" and args.action:
        sc["action"] = args.action
    if sc.get("model") != cmd:
        raise ValidationError(f"model: scenario is for {sc.get('model')!r}, not {cmd!r}")
    return sc


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    try:
        scenario = scenario_from_args(args)
        report = execute(scenario)
        text = dumps_csv(report) if args.format == "csv" else dumps_json(report)
        _write(text, args.out)
    except (ValidationError, RegimeError) as exc:
        print(f"finbuf: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"finbuf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
