import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humidmpc import metrics
from humidmpc.exceptions import MetricError
from humidmpc.metrics import DailySummary, SlopeFit
from humidmpc.telemetry import TelemetryLog


def day_log(p_kw, t_in=23.0, t_out=31.0, start="2023-07-10"):
    n = len(p_kw)
    frame = pd.DataFrame({"timestamp": pd.date_range(start, periods=n, freq="5min"), "t_in": t_in,
                          "t_out": t_out, "q_cool_kw": 0.0, "p_kw": p_kw, "rh_in": 0.5, "rh_out": 0.6})
    return TelemetryLog(frame)


def test_violation_case():
    p = np.full(288, 1.0)
    p[16 * 12] = p[16 * 12 + 1] = 3.1  # two 5-minute steps 0.6 kW over the 16:00 limit
    p[12 * 12] = 4.0  # noon is outside the window
    stats = metrics.violation_stats(day_log(p))
    assert stats.minutes_per_day == pytest.approx(10.0)
    assert stats.mean_magnitude_kw == pytest.approx(0.6)
    assert stats.violated


def test_no_violation_reports_zero():
    assert metrics.violation_stats(day_log(np.full(288, 2.0))) == (0.0, 0.0, False)


def test_daily_summaries():
    p = np.concatenate([np.full(288, 1.0), np.full(288, 2.0)])
    days = metrics.daily_summaries(day_log(p), "x", metrics.power_limit_schedule)
    assert [d.energy_kwh for d in days] == pytest.approx([24.0, 48.0])
    assert days[0].delta_t == pytest.approx(8.0)
    assert days[1].date == "2023-07-11"


def test_weather_normalized_energy():
    assert metrics.weather_normalized_energy([DailySummary("d", 24.0, 8.0)]) == pytest.approx(3.0)
    with pytest.raises(MetricError):
        metrics.weather_normalized_energy([])


def test_summary_validation():
    with pytest.raises(MetricError):
        DailySummary("d", -1.0, 5.0)


def summaries(slope, dts, offset=metrics.DEFAULT_OFFSET_C):
    return [DailySummary(f"d{i}", slope * (dt + offset), dt) for i, dt in enumerate(dts)]


@settings(max_examples=50)
@given(st.floats(0.5, 5.0), st.floats(0.5, 5.0))
def test_slope_round_trip(m1, m2):
    dts = [3.0, 5.5, 7.0, 8.2, 10.0, 4.4]
    f1, f2 = metrics.fit_savings_slopes(summaries(m1, dts), summaries(m2, dts))
    assert f1.mean == pytest.approx(m1, rel=1e-12)
    assert f2.mean == pytest.approx(m2, rel=1e-12)
    assert f1.std == pytest.approx(0.0, abs=1e-9)


def test_slope_needs_enough_days():
    with pytest.raises(MetricError):
        metrics.fit_savings_slopes(summaries(2.0, [3, 4, 5]), summaries(3.0, [3, 4, 5]))


def test_zero_variance_interval_is_exact():
    ci = metrics.savings_ci(SlopeFit(2.5, 0.0), SlopeFit(3.0, 0.0))
    assert ci.mean == ci.low == ci.high == pytest.approx(1.0 - 2.5 / 3.0)


def test_interval_sample_floor():
    with pytest.raises(MetricError):
        metrics.savings_ci(SlopeFit(2.5, 0.1), SlopeFit(3.0, 0.1), samples=1000)


def test_interval_is_seeded():
    a = metrics.savings_ci(SlopeFit(2.62, 0.096), SlopeFit(3.04, 0.049), seed=7)
    b = metrics.savings_ci(SlopeFit(2.62, 0.096), SlopeFit(3.04, 0.049), seed=7)
    assert a == b


def test_near_zero_baseline_draws_are_rejected():
    with pytest.warns(RuntimeWarning):
        ci = metrics.savings_ci(SlopeFit(1.0, 0.1), SlopeFit(0.1, 0.1))
    assert ci.rejected > 0


def test_cost_projection_closed_form():
    dts = np.array([-8.0, -2.0, 0.0, 5.0, 10.0])
    proj = metrics.annual_cost_projection(SlopeFit(2.0, 0.0), SlopeFit(3.0, 0.0), 0.14, dts)
    drive = np.maximum(dts + 6.2, 0.0)
    assert proj.mean == pytest.approx(1.0 * drive.sum() * 0.14)
    assert proj.low == pytest.approx(proj.high)
    np.testing.assert_allclose(proj.cumulative, np.cumsum(drive * 0.14))
    assert list(proj.series().columns) == ["day", "cumulative_usd"]


def test_cost_projection_input_checks():
    with pytest.raises(MetricError):
        metrics.annual_cost_projection(SlopeFit(2.0, 0.0), SlopeFit(3.0, 0.0), 0.14, [])
    with pytest.raises(MetricError):
        metrics.annual_cost_projection(SlopeFit(2.0, 0.0, offset=5.0), SlopeFit(3.0, 0.0), 0.14, [1.0])
