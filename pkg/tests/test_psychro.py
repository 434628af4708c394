import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from humidmpc import psychro
from humidmpc.exceptions import DomainError


def wet_bulb_energy_balance(t, rh):
    """Independent wet-bulb: adiabatic-saturation balance on Magnus humidity ratios."""
    w = psychro.humidity_ratio(t, rh)

    def gap(tw):
        ws = psychro.humidity_ratio(tw, 1.0)
        return ((2501.0 - 2.326 * tw) * ws - 1.006 * (t - tw)) / (2501.0 + 1.86 * t - 4.186 * tw) - w

    return brentq(gap, -40.0, t + 1e-9)


# Stull's own worked example: 20 °C at 50 % gives 13.7 °C.
def test_stull_worked_example():
    assert psychro.wet_bulb(20.0, 0.5) == pytest.approx(13.7, abs=0.05)


def test_wet_bulb_ordering_and_saturation():
    assert psychro.wet_bulb(24.0, 0.5) < psychro.wet_bulb(24.0, 1.0)
    assert psychro.wet_bulb(24.0, 1.0) == pytest.approx(24.0, abs=0.1)


def test_wet_bulb_array_matches_scalar():
    t = np.array([18.0, 24.0, 31.0])
    rh = np.array([0.3, 0.55, 0.8])
    np.testing.assert_allclose(psychro.wet_bulb(t, rh), [psychro.wet_bulb(a, b) for a, b in zip(t, rh)])


@pytest.mark.parametrize("t, rh", [(-25.0, 0.5), (55.0, 0.5), (20.0, 0.01), (20.0, 1.2), (float("nan"), 0.5)])
def test_wet_bulb_domain(t, rh):
    with pytest.raises(DomainError):
        psychro.wet_bulb(t, rh)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 45.0), st.floats(0.1, 0.99))
def test_wet_bulb_tracks_energy_balance(t, rh):
    assert abs(psychro.wet_bulb(t, rh) - wet_bulb_energy_balance(t, rh)) < 1.1


# The empirical fit folds over in the cold, dry corner (below about 4 °C at
# low humidity), which is outside the cooling season.
@settings(max_examples=200, deadline=None)
@given(st.floats(5.0, 45.0), st.floats(0.05, 0.95), st.floats(0.001, 0.05))
def test_wet_bulb_monotone_in_humidity(t, rh, bump):
    assert psychro.wet_bulb(t, min(rh + bump, 1.0)) > psychro.wet_bulb(t, rh)


@settings(max_examples=100, deadline=None)
@given(st.floats(10.0, 40.0), st.floats(0.1, 0.95))
def test_wet_bulb_below_dry_bulb_and_inverse(t, rh):
    tw = psychro.wet_bulb(t, rh)
    assert tw <= t + 1e-9
    assert psychro.rh_from_wet_bulb(t, tw) == pytest.approx(rh, abs=1e-6)


def test_humidity_ratio_round_trip():
    w = psychro.humidity_ratio(26.0, 0.6)
    assert psychro.rh_from_humidity_ratio(26.0, w) == pytest.approx(0.6, rel=1e-12)
    assert psychro.dew_point(26.0, 1.0) == pytest.approx(26.0, abs=1e-9)


def test_ppd_closed_form():
    assert psychro.ppd(0.0) == 5.0
    hand = 100.0 - 95.0 * math.exp(-(0.03353 + 0.2179))
    assert psychro.ppd(1.0) == pytest.approx(hand, abs=1e-9)
    with pytest.raises(DomainError):
        psychro.ppd(4.5)


@settings(max_examples=200)
@given(st.floats(-4.0, 4.0))
def test_ppd_symmetric_and_bounded(x):
    assert abs(psychro.ppd(x) - psychro.ppd(-x)) <= 1e-12
    assert 5.0 <= psychro.ppd(x) <= 100.0


# Worked rows of the ISO 7730 annex table (t_a, t_r, v_ar, RH, met, clo, PMV).
ISO_ROWS = [
    (22.0, 22.0, 0.1, 0.6, 1.2, 0.5, -0.75),
    (27.0, 27.0, 0.1, 0.6, 1.2, 0.5, 0.77),
    (27.0, 27.0, 0.3, 0.6, 1.2, 0.5, 0.44),
    (23.5, 25.5, 0.1, 0.6, 1.2, 0.5, -0.01),
    (23.5, 25.5, 0.3, 0.6, 1.2, 0.5, -0.55),
    (19.0, 19.0, 0.1, 0.4, 1.2, 1.0, -0.60),
    (22.0, 22.0, 0.1, 0.6, 1.6, 0.5, 0.05),
]


@pytest.mark.parametrize("ta, tr, v, rh, met, clo, expected", ISO_ROWS)
def test_pmv_iso_rows(ta, tr, v, rh, met, clo, expected):
    value = psychro.pmv(psychro.ComfortInputs(t_db=ta, t_r=tr, v_air=v, rh=rh, met=met, clo=clo))
    assert value == pytest.approx(expected, abs=0.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(16.0, 32.0), st.floats(0.05, 1.0))
def test_pmv_increases_with_air_temperature(t, step):
    lo = psychro.pmv(psychro.ComfortInputs(t_db=t, rh=0.5))
    hi = psychro.pmv(psychro.ComfortInputs(t_db=t + step, rh=0.5))
    assert hi > lo


def test_comfort_inputs_validation():
    with pytest.raises(DomainError):
        psychro.ComfortInputs(met=0.0)
    with pytest.raises(DomainError):
        psychro.ComfortInputs(v_air=-0.1)


def test_comfort_series_at_neutral_temperature():
    template = psychro.ComfortInputs(rh=0.5)
    t0 = psychro.neutral_temperature(template)
    frame = pd.DataFrame({"timestamp": pd.date_range("2023-07-01", periods=6, freq="h"),
                          "t_in": t0, "rh_in": 0.5})
    series = psychro.comfort_series(frame)
    assert series.mean_ppd == pytest.approx(5.0, abs=1e-6)
    assert series.hours_above_threshold == 0.0
    assert not series.rh_fallback


def test_comfort_series_is_a_time_average():
    frame = pd.DataFrame({"timestamp": pd.date_range("2023-07-01", periods=2, freq="30min"),
                          "t_in": [24.0, 29.0], "rh_in": [0.5, 0.5]})
    series = psychro.comfort_series(frame)
    a = psychro.comfort(psychro.ComfortInputs(t_db=24.0, rh=0.5)).ppd
    b = psychro.comfort(psychro.ComfortInputs(t_db=29.0, rh=0.5)).ppd
    assert series.mean_ppd == pytest.approx((a + b) / 2)
    assert series.hours_above_threshold == pytest.approx(0.5 * ((a > 10) + (b > 10)))


def test_comfort_series_without_humidity_flags_fallback():
    frame = pd.DataFrame({"timestamp": pd.date_range("2023-07-01", periods=3, freq="h"), "t_in": 25.0})
    series = psychro.comfort_series(frame)
    assert series.rh_fallback
    assert any("rh_in missing" in n for n in series.notes)
