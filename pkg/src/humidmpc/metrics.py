"""Daily summaries, weather-normalized energy, slope savings and violation statistics."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from .exceptions import MetricError
from .optimizer import power_limit_schedule
from .telemetry import TelemetryLog

DEFAULT_OFFSET_C = 6.2
MIN_SAMPLES = 100_000
MIN_DAYS = 5

# Field reference values, kept for reports. kWh/°C, min/day and kW.
REFERENCE_NORMALIZED_ENERGY = {"sensible": 2.32, "latent": 2.34, "benchmark": 3.14}
REFERENCE_VIOLATIONS = {"sensible": (54.0, 0.8), "latent": (11.0, 0.3)}
REFERENCE_SLOPES = {"m1": (2.62, 0.096), "m2": (3.04, 0.049)}


@dataclass(frozen=True)
class DailySummary:
    date: str
    energy_kwh: float
    delta_t: float
    controller: str = ""
    violation_minutes: float = 0.0
    violation_magnitude_mean_kw: float = 0.0

    def __post_init__(self):
        if self.energy_kwh < 0 or self.violation_minutes < 0 or self.violation_magnitude_mean_kw < 0:
            raise MetricError("energy and violation fields must be nonnegative")


class ViolationStats(NamedTuple):
    minutes_per_day: float
    mean_magnitude_kw: float
    violated: bool


@dataclass(frozen=True)
class SlopeFit:
    """Slope of daily energy against (delta_t + offset), with its standard error."""

    mean: float
    std: float
    offset: float = DEFAULT_OFFSET_C
    n_days: int = 0

    def __post_init__(self):
        if not self.std >= 0:
            raise MetricError(f"slope std must be nonnegative, got {self.std}")

    def energy(self, delta_t):
        return self.mean * np.maximum(np.asarray(delta_t, float) + self.offset, 0.0)


def _step_hours(log: TelemetryLog):
    if log.dt_hours is None:
        raise MetricError("log needs at least two rows to define a step")
    return log.dt_hours


def _limits(hours, schedule):
    return np.array([schedule(int(h)) for h in hours], dtype=float)


def violation_stats(log: TelemetryLog, schedule=power_limit_schedule) -> ViolationStats:
    """Minutes per day above the power limit and the mean excess while above it.

    ``schedule`` maps hour of day to a limit in kW (inf outside the window).
    With no violations the magnitude is 0 and ``violated`` is False.
    """
    dt = _step_hours(log)
    frame = log.frame
    limit = _limits(frame["timestamp"].dt.hour, schedule)
    excess = frame["p_kw"].to_numpy(float) - limit
    over = excess > 0
    days = len(frame) * dt / 24.0
    minutes = over.sum() * dt * 60.0 / days
    if not over.any():
        return ViolationStats(0.0, 0.0, False)
    return ViolationStats(float(minutes), float(excess[over].mean()), True)


def daily_summaries(log: TelemetryLog, label="", schedule=None) -> list[DailySummary]:
    """One summary per complete day of ``log``.

    ``delta_t`` is the day's mean outdoor minus indoor temperature. Violation
    fields are filled only when a limit ``schedule`` is given.
    """
    dt = _step_hours(log)
    per_day = round(24.0 / dt)
    frame = log.frame
    n = len(frame) // per_day * per_day
    if n == 0:
        raise MetricError("log covers less than one day")
    out = []
    for start in range(0, n, per_day):
        day = frame.iloc[start:start + per_day]
        minutes = magnitude = 0.0
        if schedule is not None:
            stats = violation_stats(TelemetryLog(day), schedule)
            minutes, magnitude = stats.minutes_per_day, stats.mean_magnitude_kw
        out.append(DailySummary(
            date=day["timestamp"].iloc[0].strftime("%Y-%m-%d"),
            energy_kwh=float(day["p_kw"].sum() * dt),
            delta_t=float((day["t_out"] - day["t_in"]).mean()),
            controller=label,
            violation_minutes=float(minutes),
            violation_magnitude_mean_kw=float(magnitude),
        ))
    return out


def summaries_frame(summaries) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in summaries])


def weather_normalized_energy(summaries) -> float:
    """Total energy over total indoor-outdoor temperature difference (kWh/°C)."""
    if len(summaries) == 0:
        raise MetricError("need at least one day")
    energy = sum(s.energy_kwh for s in summaries)
    dtemp = sum(s.delta_t for s in summaries)
    if dtemp == 0:
        raise MetricError("temperature differences sum to zero")
    return energy / dtemp


def _fit_through_offset(summaries, offset):
    if len(summaries) < MIN_DAYS:
        raise MetricError(f"need at least {MIN_DAYS} days per arm, got {len(summaries)}")
    x = np.array([s.delta_t for s in summaries]) + offset
    y = np.array([s.energy_kwh for s in summaries])
    sxx = float(x @ x)
    if sxx <= 0 or np.ptp(x) < 1e-9:
        raise MetricError("temperature differences are degenerate")
    m = float(x @ y) / sxx
    resid = y - m * x
    se = math.sqrt(float(resid @ resid) / (len(x) - 1) / sxx)
    return SlopeFit(mean=m, std=se, offset=offset, n_days=len(x))


def fit_savings_slopes(mpc, baseline, offset=DEFAULT_OFFSET_C):
    """Least-squares slopes for both arms sharing the x-intercept ``-offset``."""
    return _fit_through_offset(mpc, offset), _fit_through_offset(baseline, offset)


@dataclass
class SavingsInterval:
    mean: float
    low: float
    high: float
    rejected: int = 0

    def as_percent(self):
        return 100.0 * self.mean, 100.0 * self.low, 100.0 * self.high


def savings_ci(m1: SlopeFit, m2: SlopeFit, samples=1_000_000, seed=0, min_m2=1e-6) -> SavingsInterval:
    """Monte Carlo distribution of relative savings 1 - m1/m2.

    Slopes are drawn as independent Gaussians. Draws with ``m2`` below
    ``min_m2`` are rejected and counted.
    """
    if samples < MIN_SAMPLES:
        raise MetricError(f"need at least {MIN_SAMPLES} samples")
    if m1.std == 0 and m2.std == 0:
        if abs(m2.mean) < min_m2:
            raise MetricError("baseline slope is zero")
        v = 1.0 - m1.mean / m2.mean
        return SavingsInterval(v, v, v)
    rng = np.random.default_rng(seed)
    a = rng.normal(m1.mean, m1.std, samples)
    b = rng.normal(m2.mean, m2.std, samples)
    keep = b > min_m2
    rejected = int(samples - keep.sum())
    if rejected:
        warnings.warn(f"rejected {rejected} baseline slope draws near zero", RuntimeWarning, stacklevel=2)
    if not keep.any():
        raise MetricError("every baseline slope draw was rejected")
    s = 1.0 - a[keep] / b[keep]
    low, high = np.percentile(s, [2.5, 97.5])
    return SavingsInterval(float(s.mean()), float(low), float(high), rejected)


@dataclass
class CostProjection:
    mean: float
    low: float
    high: float
    cumulative: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def series(self):
        """Plot-ready (day, cumulative mean savings $) frame."""
        return pd.DataFrame({"day": np.arange(1, len(self.cumulative) + 1), "cumulative_usd": self.cumulative})


def annual_cost_projection(m1: SlopeFit, m2: SlopeFit, price, delta_t_year, samples=100_000, seed=0):
    """Dollar savings of the MPC arm over a year of daily temperature differences.

    Each day's energy follows the slope model and is zero when
    ``delta_t + offset`` is negative. Slope uncertainty is sampled as in
    ``savings_ci``; ``cumulative`` uses the mean slopes.
    """
    dts = np.asarray(delta_t_year, float)
    if dts.size == 0 or not np.all(np.isfinite(dts)):
        raise MetricError("a finite series of daily temperature differences is required")
    if price < 0:
        raise MetricError("price must be nonnegative")
    if m1.offset != m2.offset:
        raise MetricError("both slope fits must share the same offset")
    driver = np.maximum(dts + m1.offset, 0.0)
    total = float(driver.sum())
    rng = np.random.default_rng(seed)
    a = rng.normal(m1.mean, m1.std, samples)
    b = rng.normal(m2.mean, m2.std, samples)
    usd = (b - a) * total * price
    cumulative = np.cumsum((m2.mean - m1.mean) * driver * price)
    low, high = np.percentile(usd, [2.5, 97.5])
    return CostProjection(float(usd.mean()), float(low), float(high), cumulative)
