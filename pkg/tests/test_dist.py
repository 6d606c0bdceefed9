import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finbuf import dist as fd
from finbuf.errors import ValidationError

import oracles

LAWS = [
    fd.Exponential(1.5),
    fd.Deterministic(0.8),
    fd.Erlang(3, 2.0),
    fd.HyperExponential((0.3, 0.7), (0.5, 3.0)),
]


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_lst_matches_quadrature(law):
    for s in (0.0, 0.3, 1.0, 4.0):
        assert fd.lst(law, s) == pytest.approx(oracles.lst_quad(law, s), rel=1e-10)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_lst_derivative_matches_finite_difference(law):
    for s in (0.2, 1.0, 2.5):
        fdiff = oracles.finite_difference(lambda x: fd.lst(law, x), s)
        assert fd.lst_deriv(law, s) == pytest.approx(fdiff, rel=1e-7)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_mixed_poisson_matches_quadrature(law):
    seq = fd.mixed_poisson(law, 1.3, jmax=30)
    np.testing.assert_allclose(seq.coeffs[:25], oracles.count_pmf(law, 1.3, 25), atol=1e-13)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_mixed_poisson_moments_and_normalization(law):
    seq = fd.mixed_poisson(law, 0.9)
    assert seq.coeffs.sum() + seq.tail_mass == pytest.approx(1.0, abs=1e-12)
    j = np.arange(seq.coeffs.size)
    assert np.dot(j, seq.coeffs) == pytest.approx(0.9 * law.mean, rel=1e-10)
    assert seq.gamma[1] == pytest.approx(0.81 * law.raw_moment(2), rel=1e-12)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_tail_matches_partial_sums(law):
    pmf = fd.mixed_poisson_pmf(law, 2.0, np.arange(200))
    tails = fd.mixed_poisson_tail(law, 2.0, np.arange(1, 10))
    np.testing.assert_allclose(tails, 1.0 - np.cumsum(pmf)[:9], atol=1e-12)


def test_raw_moments():
    assert fd.Erlang(2, 4.0).raw_moment(2) == pytest.approx(6 / 16)
    assert fd.Deterministic(2.0).raw_moment(3) == 8.0
    assert fd.Exponential(2.0).raw_moment(2) == pytest.approx(0.5)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_with_mean_keeps_shape(law):
    new = fd.with_mean(law, 3.0)
    assert new.mean == pytest.approx(3.0)
    assert new.raw_moment(2) / new.mean**2 == pytest.approx(law.raw_moment(2) / law.mean**2)


@pytest.mark.parametrize("text,expected", [
    ("exp:2", fd.Exponential(2.0)),
    ("det:1", fd.Deterministic(1.0)),
    ("erlang:2:4", fd.Erlang(2, 4.0)),
    ("hyper:0.5,0.5:1,3", fd.HyperExponential((0.5, 0.5), (1.0, 3.0))),
    ({"family": "exponential", "rate": 3}, fd.Exponential(3.0)),
    ('{"family": "det", "d": 2}', fd.Deterministic(2.0)),
])
def test_literal_parsing(text, expected):
    assert fd.from_literal(text) == expected


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_literal_round_trip(law):
    assert fd.from_literal(fd.to_literal(law)) == law


@pytest.mark.parametrize("bad", ["exp", "exp:-1", "gamma:2", "erlang:2", "hyper:0.5:1", 3, "{bad"])
def test_bad_literals(bad):
    with pytest.raises(ValidationError):
        fd.from_literal(bad)


def test_negative_argument_rejected():
    with pytest.raises(ValidationError):
        fd.lst(fd.Exponential(1.0), -0.5)


def test_coeffseq_validation():
    with pytest.raises(ValidationError):
        fd.CoeffSeq.from_probs([0.0, 1.0])
    with pytest.raises(ValidationError):
        fd.CoeffSeq.from_probs([0.5, 0.6])
    seq = fd.CoeffSeq.from_probs([0.25, 0.5, 0.25])
    assert seq.gamma == pytest.approx((1.0, 0.5, 0.0))


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.05, 20.0), mean=st.floats(0.05, 5.0),
       family=st.sampled_from(["exp", "det", "erl"]))
def test_mixed_poisson_sums_to_one(rate, mean, family):
    law = {"exp": fd.Exponential(1 / mean), "det": fd.Deterministic(mean),
           "erl": fd.Erlang(2, 2 / mean)}[family]
    seq = fd.mixed_poisson(law, rate)
    assert abs(seq.coeffs.sum() + seq.tail_mass - 1.0) <= 1e-12
    assert seq.tail_mass < 1e-13
    assert np.all(seq.coeffs >= 0)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.0, 50.0))
def test_lst_monotone_and_bounded(s):
    for law in LAWS:
        v = fd.lst(law, s)
        assert 0.0 <= v <= 1.0
        assert fd.lst_deriv(law, s) <= 0.0
        assert fd.lst(law, s + 0.1) <= v + 1e-15


def test_lst_at_zero_is_one():
    for law in LAWS:
        assert fd.lst(law, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert -fd.lst_deriv(law, 0.0) == pytest.approx(law.mean)
        assert math.isfinite(law.abscissa) or law.abscissa == -math.inf
