import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finbuf import dist as fd
from finbuf import gim
from finbuf import priority as pr
from finbuf.errors import ValidationError

import oracles

ARRIVALS = [fd.Exponential(1.0), fd.Erlang(2, 2.0), fd.Deterministic(1.0)]


def two_class(arrival=fd.Exponential(1.0), caps=(3, 5), mu=0.8, C=2):
    return pr.PrioritySpec(arrival, (0.3, 0.7), mu, C, caps)


def test_thin_lst_identities():
    base = fd.Erlang(2, 2.0)
    for s in (0.0, 0.5, 2.0):
        assert pr.thin_lst(base, 1.0, s) == pytest.approx(fd.lst(base, s))
    # thinning Poisson input stays Poisson
    for s in (0.1, 1.0, 3.0):
        assert pr.thin_lst(fd.Exponential(2.0), 0.25, s) == pytest.approx(0.5 / (0.5 + s))
        fdiff = oracles.finite_difference(lambda x: pr.thin_lst(base, 0.4, x), s)
        assert pr.thin_lst(base, 0.4, s, deriv=True) == pytest.approx(fdiff, rel=1e-7)
    with pytest.raises(ValidationError):
        pr.thin_lst(base, 0.0, 1.0)


@pytest.mark.parametrize("arrival", ARRIVALS, ids=lambda d: type(d).__name__)
@pytest.mark.parametrize("n", [1, 4, 15])
def test_single_class_unit_groups_is_gim(arrival, n):
    spec = pr.PrioritySpec(arrival, (1.0,), 1.4 / arrival.mean, 1, (n,))
    got = pr.rtilde_priority(spec, 1).pi_exact
    assert abs(got - gim.exact_loss(gim.GimSpec(arrival, 1.4 / arrival.mean, n))) <= 1e-12


def test_half_load_closed_form():
    spec = pr.PrioritySpec(fd.Exponential(1.0), (1.0,), 2.0, 1, (2,))
    assert pr.rtilde_priority(spec, 1).pi_exact == pytest.approx(1.0 / 7.0, rel=1e-13)


def test_series_starts_at_one():
    ser = pr.rtilde_priority(two_class(), 2)
    assert float(ser.rtilde[0]) == 1.0
    assert ser.N == 8


@pytest.mark.parametrize("arrival", ARRIVALS, ids=lambda d: type(d).__name__)
@pytest.mark.parametrize("C", [1, 2, 3])
def test_cumulative_loss_matches_embedded_chain(arrival, C):
    spec = pr.PrioritySpec(arrival, (0.3, 0.7), 1.5 / (C * arrival.mean), C, (3, 5))
    for k in (1, 2):
        got = pr.rtilde_priority(spec, k).pi_exact
        ref = oracles.group_service_loss(arrival, spec.mu, C, spec.N(k), spec.q(k))
        assert got == pytest.approx(ref, rel=1e-9)


def test_lattice_option_disagrees_with_chain():
    spec = two_class()
    plain = pr.rtilde_priority(spec, 2).pi_exact
    factor = pr.rtilde_priority(spec, 2, lattice_factor=True).pi_exact
    ref = oracles.group_service_loss(spec.arrival, spec.mu, spec.C, spec.N(2), spec.q(2))
    assert plain == pytest.approx(ref, rel=1e-9)
    assert abs(factor / ref - 1) > 0.1


def test_series_division_residual():
    # rtilde (P(z) - z) = P(z) coefficientwise
    spec = two_class()
    N = spec.N(2)
    P = pr.thinned_counts(spec, 2, N).coeffs[: N + 1].astype(float)
    rt = pr.rtilde_priority(spec, 2).rtilde.astype(float)
    shifted = P.copy()
    shifted[1] -= 1.0
    lhs = np.convolve(rt, shifted)[: N]
    np.testing.assert_allclose(lhs, P[:N], atol=1e-12 * rt.max())


def test_thinned_counts_normalized():
    spec = two_class()
    seq = pr.thinned_counts(spec, 1, 400)
    assert seq.coeffs.sum() + seq.tail_mass == pytest.approx(1.0, abs=1e-12)
    j = np.arange(seq.coeffs.size)
    assert np.dot(j, seq.coeffs) == pytest.approx(seq.gamma[0], rel=1e-9)


def test_roots_ordered_and_fixed_points():
    spec = two_class()
    phis = [pr.find_phi_priority(spec, k).value for k in (1, 2)]
    assert 0 < phis[0] < phis[1] < 1
    for k, phi in zip((1, 2), phis):
        val = pr.thin_lst(spec.arrival, spec.q(k), spec.mu - spec.mu * phi**spec.C)
        assert val == pytest.approx(phi, abs=1e-13)


@pytest.mark.parametrize("arrival", ARRIVALS, ids=lambda d: type(d).__name__)
def test_log_slope_tends_to_root(arrival):
    spec = pr.PrioritySpec(arrival, (0.3, 0.7), 1.5 / (2 * arrival.mean), 2, (20, 40))
    ser = pr.rtilde_priority(spec, 2)
    rt = ser.rtilde.astype(float)
    assert math.log(rt[-1] / rt[-2]) == pytest.approx(-math.log(ser.phi), rel=1e-6)


@pytest.mark.parametrize("arrival", ARRIVALS, ids=lambda d: type(d).__name__)
def test_asymptotic_within_two_percent_once_tail_small(arrival):
    for caps in [(4, 8), (8, 16), (16, 32)]:
        spec = pr.PrioritySpec(arrival, (0.3, 0.7), 1.5 / (2 * arrival.mean), 2, caps)
        for k in (1, 2):
            ser = pr.rtilde_priority(spec, k)
            if ser.phi ** ser.N <= 1e-3:
                assert abs(ser.pi_asymptotic / ser.pi_exact - 1) <= 0.02


def test_asymptotic_gap_shrinks_geometrically():
    gaps = []
    for caps in [(2, 4), (4, 8), (8, 16)]:
        ser = pr.rtilde_priority(two_class(caps=caps), 2)
        gaps.append(abs(ser.pi_asymptotic / ser.pi_exact - 1))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6


def test_literal_form_is_far_off():
    spec = two_class(caps=(16, 32))
    ser = pr.rtilde_priority(spec, 2)
    lit = pr.pi_asymptotic(spec, 2, literal=True)
    assert abs(lit / ser.pi_exact - 1) > 0.1


def test_analyze_report():
    rep = pr.analyze(two_class())
    assert len(rep.series) == 2
    assert rep.rho == pytest.approx([0.3 / 1.6, 1.0 / 1.6])
    labels = [p.label for p in rep.asymptotic]
    assert "priority.class2.cumulative_loss_probability" in labels
    value = next(p.value for p in rep.asymptotic if p.label == "priority.class1.root")
    assert value == rep.series[0].phi


def test_validation():
    with pytest.raises(ValidationError):
        pr.PrioritySpec(fd.Exponential(1.0), (0.5, 0.4), 1.0, 2, (3, 3))
    with pytest.raises(ValidationError):
        pr.PrioritySpec(fd.Exponential(1.0), (0.5, 0.5), 1.0, 2, (3,))
    with pytest.raises(ValidationError):
        pr.PrioritySpec(fd.Exponential(1.0), (1.0,), 0.4, 2, (3,))
    with pytest.raises(ValidationError):
        pr.PrioritySpec(fd.Exponential(1.0), (1.0,), 1.0, 0, (3,))
    with pytest.raises(ValidationError):
        two_class().q(3)


@settings(max_examples=25, deadline=None)
@given(p1=st.floats(0.1, 0.9), load=st.floats(0.2, 0.9), C=st.integers(1, 3),
       caps=st.tuples(st.integers(1, 6), st.integers(1, 6)))
def test_cumulative_loss_properties(p1, load, C, caps):
    spec = pr.PrioritySpec(fd.Erlang(2, 2.0), (p1, 1 - p1), 1.0 / (load * C), C, caps)
    ser = [pr.rtilde_priority(spec, k, asymptotic=False) for k in (1, 2)]
    for s in ser:
        assert 0.0 < s.pi_exact <= 1.0
        assert np.all(np.diff(s.rtilde.astype(float)) >= -1e-12)
    ref = oracles.group_service_loss(spec.arrival, spec.mu, C, spec.N(1), spec.q(1))
    assert ser[0].pi_exact == pytest.approx(ref, rel=1e-8)
