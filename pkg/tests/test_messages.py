import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finbuf import dist as fd
from finbuf import messages as ms
from finbuf import mg1
from finbuf.asymptotics import HeavyTrafficParams
from finbuf.errors import ValidationError

import oracles

MIXED = ms.BatchLaw((1, 2, 3), (0.5, 0.3, 0.2))


def label_value(preds, label):
    return next(p.value for p in preds if p.label == label)


@pytest.mark.parametrize("N", [0, 1, 2, 5, 9])
def test_zeta_matches_enumeration(N):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = ms.zeta_distribution(MIXED, N)
    ref = oracles.zeta_enumerate(MIXED.support, MIXED.probs, N)
    np.testing.assert_allclose(z.pmf[:len(ref)], [float(x) for x in ref], atol=1e-14)
    assert z.pmf[len(ref):].sum() == pytest.approx(0.0, abs=1e-14)


def test_zeta_float_and_rational_agree():
    law = ms.BatchLaw((2, 3, 5), (0.25, 0.5, 0.25))
    a = ms.zeta_distribution(law, 23)
    b = ms.zeta_distribution(law, 23, exact=True)
    np.testing.assert_allclose(a.pmf, b.pmf, atol=1e-14)
    assert a.pmf.sum() == pytest.approx(1.0, abs=1e-13)
    assert (a.lower, a.upper) == (4, 11)


def test_fixed_size_zeta_is_point_mass():
    z = ms.zeta_distribution(ms.BatchLaw.fixed(3), 20)
    assert z.mean == pytest.approx(6.0)
    assert z.pmf[6] == pytest.approx(1.0)


def test_buffer_below_smallest_message_warns():
    with pytest.warns(UserWarning):
        z = ms.zeta_distribution(ms.BatchLaw.fixed(4), 3)
    assert z.pmf.tolist() == [1.0]


@pytest.mark.parametrize("service", [fd.Exponential(1.0), fd.Deterministic(1.0)],
                         ids=lambda d: type(d).__name__)
@pytest.mark.parametrize("rho", [0.7, 1.3])
def test_processed_matches_visit_chain_mixture(service, rho):
    spec = ms.MessageSpec(rho, service, MIXED, 8, 0.05)
    rep = ms.message_expectations(spec)
    ref = oracles.zeta_enumerate(MIXED.support, MIXED.probs, 8)
    ep = sum(float(w) * oracles.mg1_reference(service, rho, i, J=120)["served"]
             for i, w in enumerate(ref) if w)
    assert rep.ep == pytest.approx(ep, rel=1e-9)
    assert rep.er == pytest.approx((rho - 1.0) * ep + 1.0, rel=1e-9)
    assert rep.em == pytest.approx(0.05 * rep.ep)
    assert rep.pi == pytest.approx((rep.er + 0.05 * ep) / (rep.er + ep), rel=1e-9)


@pytest.mark.parametrize("N", [1, 7, 40])
def test_refused_is_one_at_critical_load(N):
    spec = ms.MessageSpec(1.0, fd.Erlang(2, 2.0), MIXED, N, 0.1)
    assert ms.message_expectations(spec).er == pytest.approx(1.0, abs=1e-10)


def test_fixed_size_one_reduces_to_single_queue():
    spec = ms.MessageSpec(0.8, fd.Deterministic(1.0), ms.BatchLaw.fixed(1), 12, 0.0)
    rep = ms.message_expectations(spec)
    assert rep.pi == pytest.approx(mg1.loss_probability(mg1.Mg1Spec(0.8, fd.Deterministic(1.0), 12)),
                                   rel=1e-12)


def test_subcritical_limits():
    spec = ms.MessageSpec(0.5, fd.Exponential(1.0), MIXED, 120, 0.02)
    rep = ms.message_expectations(spec)
    assert rep.ep == pytest.approx(label_value(rep.asymptotic, "messages.subcritical.processed_limit"),
                                   rel=1e-10)
    assert rep.pi == pytest.approx(0.02, rel=1e-8)


def test_critical_predictions():
    spec = ms.MessageSpec(1.0, fd.Deterministic(1.0), ms.BatchLaw.fixed(1), 400, 0.1)
    rep = ms.message_expectations(spec)
    assert rep.ep == pytest.approx(label_value(rep.asymptotic, "messages.critical.processed"), rel=1e-3)
    assert rep.pi == pytest.approx(label_value(rep.asymptotic, "messages.critical.loss_probability"),
                                   rel=1e-4)
    nxt = ms.message_expectations(ms.MessageSpec(1.0, fd.Deterministic(1.0), ms.BatchLaw.fixed(1), 401, 0.1))
    assert nxt.pi - rep.pi == pytest.approx(ms.loss_increment_prediction(400, 1.0, 0.1), rel=5e-3)


def test_supercritical_predictions_converge():
    gaps = []
    for N in (10, 30, 60):
        spec = ms.MessageSpec(1.4, fd.Erlang(2, 2.0), MIXED, N, 0.05)
        rep = ms.message_expectations(spec)
        ep = label_value(rep.asymptotic, "messages.supercritical.processed")
        er = label_value(rep.asymptotic, "messages.supercritical.refused")
        pi = label_value(rep.asymptotic, "messages.supercritical.loss_probability")
        gaps.append(max(abs(ep / rep.ep - 1), abs(er / rep.er - 1), abs(pi / rep.pi - 1)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6
    limit = label_value(rep.asymptotic, "messages.supercritical.loss_probability_limit")
    assert rep.pi == pytest.approx(limit, rel=1e-3)


def test_heavy_traffic_predictions_converge():
    gaps = []
    for delta in (0.04, 0.02, 0.01):
        spec = ms.MessageSpec(1 + delta, fd.Exponential(1.0), ms.BatchLaw.fixed(1), round(1 / delta), 0.0)
        rep = ms.message_expectations(spec)
        hp = HeavyTrafficParams(delta, delta * rep.zeta.mean, 2.0)
        preds = ms.message_asymptotics(spec, heavy=hp)
        gaps.append((abs(label_value(preds, "messages.heavy.processed") / rep.ep - 1),
                     abs(label_value(preds, "messages.heavy.refused") / rep.er - 1)))
    for a, b in zip(gaps, gaps[1:]):
        assert a[0] > b[0] and a[1] > b[1]
    assert gaps[-1][1] < 0.01


def test_heavy_traffic_zero_constant():
    preds = ms.heavy_traffic_predictions(HeavyTrafficParams(0.01, 0.0, 2.0), 0.1, 50.0)
    assert label_value(preds, "messages.heavy.processed") == pytest.approx(50.0)
    assert label_value(preds, "messages.heavy.refused") == 1.0


def test_consecutive_refused_fixed_size_one():
    spec = ms.MessageSpec(1.2, fd.Exponential(1.0), ms.BatchLaw.fixed(1), 9, 0.0)
    runs = ms.consecutive_refused(spec, 3)
    direct = mg1.ccl_coefficients(mg1.Mg1Spec(1.2, fd.Exponential(1.0), 9), 3)
    np.testing.assert_allclose(runs.er_k, direct.el_k, rtol=1e-12)
    assert len(runs.limit_k) == 3


def test_redundancy_scan():
    spec = ms.MessageSpec(0.6, fd.Deterministic(1.0), ms.BatchLaw.fixed(2), 10, 0.2)
    scan = ms.redundancy_scan(spec, 4.0, 1.2, 4)
    assert scan.rows[0].pi == pytest.approx(ms.message_expectations(spec).pi)
    ps = [row.p for row in scan.rows]
    assert ps == pytest.approx([0.2 / 4**r for r in range(5)])
    assert scan.rows[scan.argmin].pi == min(row.pi for row in scan.rows)
    assert [row.stable for row in scan.rows] == [row.rho <= 1 for row in scan.rows]
    with pytest.raises(ValidationError):
        ms.redundancy_scan(spec, 1.0, 1.2, 2)


def test_validation():
    with pytest.raises(ValidationError):
        ms.BatchLaw((0, 1), (0.5, 0.5))
    with pytest.raises(ValidationError):
        ms.BatchLaw((1, 2), (0.5, 0.4))
    with pytest.raises(ValidationError):
        ms.MessageSpec(1.0, fd.Exponential(1.0), MIXED, 5, 1.5)
    with pytest.raises(ValidationError):
        ms.zeta_distribution(MIXED, -1)


@settings(max_examples=30, deadline=None)
@given(w=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4), N=st.integers(1, 30))
def test_zeta_is_a_distribution(w, N):
    probs = np.array(w) / np.sum(w)
    law = ms.BatchLaw(tuple(range(1, len(w) + 1)), tuple(probs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = ms.zeta_distribution(law, N)
    assert abs(z.pmf.sum() - 1.0) <= 1e-12
    assert np.all(z.pmf >= -1e-15)
    assert z.lower <= z.mean + 1e-12 and z.mean <= z.upper + 1e-12


@settings(max_examples=30, deadline=None)
@given(rho=st.floats(0.3, 2.0), p=st.floats(0.0, 1.0), N=st.integers(1, 25))
def test_loss_probability_in_range(rho, p, N):
    rep = ms.message_expectations(ms.MessageSpec(rho, fd.Exponential(1.0), MIXED, N, p))
    assert p - 1e-12 <= rep.pi <= 1.0 + 1e-12
