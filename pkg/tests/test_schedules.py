import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holdersgd.core import PLSpec, SmoothnessSpec
from holdersgd.schedules import (
    Schedule,
    ScheduleWarning,
    const_schedule,
    log_schedule,
    pl_schedule,
    pl_threshold,
    poly_schedule,
    resolve_step_expr,
    schedule_from_dict,
    summability_report,
)


def test_poly_examples():
    assert poly_schedule(0.1, 0.75, 1.0)(1) == 0.1
    with pytest.warns(ScheduleWarning):
        assert poly_schedule(0.1, 0.5, 1.0)(16) == pytest.approx(0.025, rel=1e-15)
    assert poly_schedule(1.0, 0.6, 1.0).flags().sum_eta_power_convergent
    with pytest.warns(ScheduleWarning):
        s = poly_schedule(1.0, 0.4, 1.0)
    assert not s.flags().sum_eta_power_convergent
    assert not s.theorem_valid and "theta" in s.reason


def test_poly_rejects_bad_parameters():
    for args in [(0.0, 0.75, 1.0), (1.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 0.5, 0.0), (1.0, 0.5, 1.5)]:
        with pytest.raises(ValueError):
            poly_schedule(*args)


def test_log_schedule_first_step():
    s = log_schedule(1.0, 2.0, 1.0)
    with mpmath.workdps(50):
        expected = 1 / mpmath.sqrt(mpmath.log(2) ** 2)
    assert s(1) == pytest.approx(float(expected), rel=1e-14)
    assert s(1) == pytest.approx(1.442695, abs=1e-6)
    with pytest.raises(ValueError):
        log_schedule(0.0, 2.0, 1.0)
    with pytest.warns(ScheduleWarning):
        assert not log_schedule(1.0, 1.0, 1.0).theorem_valid


def test_log_schedule_partial_sums_slow_down():
    s = log_schedule(1.0, 2.0, 1.0)
    Ts = [10**k for k in range(1, 7)]
    sums = [summability_report(s, 1.0, T).partial_sum_eta_power for T in Ts]
    incr = np.diff(sums)
    assert np.all(incr > 0)
    assert np.all(np.diff(incr) < 0)
    assert s.flags().sum_eta_power_convergent and s.flags().sum_eta_divergent
    # sum_t 1 / (t ln^2(t+1)) converges; the tail from 10^6 is about 1 / ln(10^6)
    assert sums[-1] < 4.0


def test_pl_schedule_examples():
    s, cert = pl_schedule(1.0, SmoothnessSpec(1.0, 1.0))
    assert s(1) == 1.0
    assert cert.t0 == 2.0
    s2, _ = pl_schedule(2.0, SmoothnessSpec(1.0, 1.0))
    assert s2(3) == 0.25
    assert pl_threshold(0.5, 2.0, 0.5) == pytest.approx(2 * 2.0**4 * 0.5**-3)


@pytest.mark.parametrize("mu,L,alpha", [(0.1, 1.0, 1.0), (1.0, 3.0, 1.0), (0.5, 2.0, 0.5), (0.2, 0.7, 0.3)])
def test_pl_cert_holds_after_t0(mu, L, alpha):
    _, cert = pl_schedule(mu, SmoothnessSpec(alpha, L))
    start = math.ceil(cert.t0)
    t = np.unique(np.concatenate([np.arange(start, start + 1000), np.geomspace(start, 1e6, 2000).astype(int)]))
    assert np.all(cert.holds_at(t))


def test_const_schedule_validity():
    pl = PLSpec(1.0, 0.0)
    sm = SmoothnessSpec(1.0, 1.0)
    assert const_schedule(0.5, pl, sm).theorem_valid
    with pytest.warns(ScheduleWarning):
        assert not const_schedule(2.0, pl, sm).theorem_valid
    pl2, sm2 = PLSpec(0.3, 0.0), SmoothnessSpec(1.0, 1.7)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert const_schedule(0.3 / 1.7**2, pl2, sm2).theorem_valid


def test_summability_report_examples():
    r = summability_report(poly_schedule(1.0, 0.75, 1.0), 1.0, 4)
    brute = sum(t**-0.75 for t in range(1, 5))
    assert r.partial_sum_eta == pytest.approx(brute, rel=1e-15)
    assert r.partial_sum_eta == pytest.approx(2.387, abs=1e-3)
    c = Schedule("constant", {"eta": 0.1}, 1.0)
    assert summability_report(c, 1.0, 10).partial_sum_eta == pytest.approx(1.0, rel=1e-15)
    with pytest.warns(ScheduleWarning):
        assert not summability_report(poly_schedule(1.0, 0.4, 1.0), 1.0, 10).flags.sum_eta_power_convergent


def test_summability_chunking_consistent():
    s = poly_schedule(1.0, 0.75, 1.0)
    a = summability_report(s, 1.0, 5000)
    b = summability_report(s, 1.0, 5000, chunk=7)
    assert a.partial_sum_eta == pytest.approx(b.partial_sum_eta, rel=1e-14)


@given(st.floats(0.01, 0.99), st.floats(0.01, 1.0))
def test_poly_flags_predicate(theta, alpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        s = poly_schedule(1.0, theta, alpha)
    f = s.flags()
    assert f.sum_eta_divergent
    assert f.sum_eta_power_convergent == (theta * (1 + alpha) > 1)
    assert s.theorem_valid == (theta > 1 / (1 + alpha))


def test_schedules_positive_nonincreasing():
    sm = SmoothnessSpec(1.0, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        scheds = [poly_schedule(0.5, 0.75, 1.0), poly_schedule(1.0, 0.3, 0.5), log_schedule(1.0, 2.0, 0.5),
                  pl_schedule(0.3, sm)[0], const_schedule(0.1, PLSpec(1.0, 0.0), sm)]
    t = np.unique(np.geomspace(1, 1e6, 5000).astype(int))
    for s in scheds:
        eta = s(t)
        assert np.all(eta > 0) and np.all(np.diff(eta) <= 0), s.kind


def test_schedule_rejects_t_below_one():
    with pytest.raises(ValueError):
        poly_schedule(1.0, 0.75, 1.0)(0)


def test_step_expressions():
    sm, pl = SmoothnessSpec(1.0, 2.0), PLSpec(0.5, 0.0)
    got = [resolve_step_expr(e, sm, pl) for e in ("1/L", "0.5/L", "mu/L^2", "4/L", "0.5*mu/L^2")]
    assert got == [0.5, 0.25, 0.125, 2.0, 0.0625]
    with pytest.raises(ValueError):
        resolve_step_expr("L/2", sm, pl)
    with pytest.raises(ValueError):
        resolve_step_expr("mu/L", sm, None)


def test_schedule_from_dict():
    sm, pl = SmoothnessSpec(1.0, 2.0), PLSpec(0.5, 0.0)
    s = schedule_from_dict({"kind": "polynomial", "eta1": "1/L", "theta": 0.75}, 1.0, sm, pl)
    assert s(1) == 0.5
    s = schedule_from_dict({"kind": "pl_matched", "mu": "certified"}, 1.0, sm, pl)
    assert s(1) == 2.0
    with pytest.raises(ValueError):
        schedule_from_dict({"kind": "nope"}, 1.0, sm, pl)
