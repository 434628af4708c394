"""Psychrometric conversions and Fanger PMV/PPD comfort evaluation.

All functions are pure. Temperatures are in °C and relative humidity is a
fraction in [0, 1] unless a name says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, NumericError

ATM_KPA = 101.325
H_FG_KJ_KG = 2257.0
PPD_THRESHOLD = 10.0


@dataclass(frozen=True)
class MoistAirState:
    t_db: float
    rh: float

    def __post_init__(self):
        if not 0.0 <= self.rh <= 1.0:
            raise DomainError("rh", self.rh)

    @property
    def t_wb(self):
        return wet_bulb(self.t_db, max(self.rh, 0.05))

    @property
    def humidity_ratio(self):
        return humidity_ratio(self.t_db, self.rh)


@dataclass(frozen=True)
class ComfortInputs:
    """Inputs to the Fanger heat balance.

    ``t_r`` of ``None`` means the mean radiant temperature equals ``t_db``.
    """

    t_db: float = 24.0
    rh: float = 0.5
    v_air: float = 0.1
    met: float = 1.1
    clo: float = 0.5
    t_r: float | None = None

    def __post_init__(self):
        if self.v_air < 0:
            raise DomainError("v_air", self.v_air)
        if self.met <= 0:
            raise DomainError("met", self.met)
        if self.clo < 0:
            raise DomainError("clo", self.clo)
        if not 0.0 <= self.rh <= 1.0:
            raise DomainError("rh", self.rh)

    @property
    def radiant(self):
        return self.t_db if self.t_r is None else self.t_r


@dataclass(frozen=True)
class ComfortResult:
    pmv: float
    ppd: float


@dataclass(frozen=True)
class ComfortAssumptions:
    """Fixed comfort inputs used when only temperature and humidity are logged.

    ``t_offset`` is added to every logged temperature before evaluation, which
    lets a report apply a zoning safety margin.
    """

    v_air: float = 0.1
    met: float = 1.1
    clo: float = 0.5
    rh_default: float = 0.5
    t_offset: float = 0.0

    def inputs(self, t_db, rh):
        return ComfortInputs(t_db=t_db + self.t_offset, rh=rh, v_air=self.v_air,
                             met=self.met, clo=self.clo)


@dataclass
class ComfortSeries:
    pmv: np.ndarray
    ppd: np.ndarray
    mean_ppd: float
    hours_above_threshold: float
    rh_fallback: bool = False
    notes: list = field(default_factory=list)


def saturation_pressure(t_c):
    """Saturation vapour pressure over water (kPa), Magnus form."""
    return 0.61094 * np.exp(17.625 * np.asarray(t_c, dtype=float) / (np.asarray(t_c, dtype=float) + 243.04))


def humidity_ratio(t_c, rh, p_kpa=ATM_KPA):
    """Humidity ratio (kg water / kg dry air)."""
    pw = np.asarray(rh, dtype=float) * saturation_pressure(t_c)
    return 0.621945 * pw / (p_kpa - pw)


def rh_from_humidity_ratio(t_c, w, p_kpa=ATM_KPA):
    pw = np.asarray(w, dtype=float) * p_kpa / (0.621945 + np.asarray(w, dtype=float))
    return pw / saturation_pressure(t_c)


def dew_point(t_c, rh):
    """Dew point (°C) by inverting the Magnus saturation curve."""
    gamma = np.log(np.maximum(np.asarray(rh, dtype=float), 1e-9)) + 17.625 * np.asarray(t_c) / (243.04 + np.asarray(t_c))
    return 243.04 * gamma / (17.625 - gamma)


def _check_wet_bulb_domain(t_db, rh):
    t = np.asarray(t_db, dtype=float)
    r = np.asarray(rh, dtype=float)
    if np.any(~np.isfinite(t)) or np.any((t < -20.0) | (t > 50.0)):
        raise DomainError("t_db", t_db, f"t_db={t_db!r} outside [-20, 50] °C")
    if np.any(~np.isfinite(r)) or np.any((r < 0.05 - 1e-12) | (r > 1.0 + 1e-12)):
        raise DomainError("rh", rh, f"rh={rh!r} outside [0.05, 1]")
    return t, r


def wet_bulb(t_db, rh):
    """Wet-bulb temperature (°C) at standard pressure.

    Uses Stull's (2011) empirical fit, accurate to about ±0.35 °C for
    0.05 <= rh <= 0.99 and -20 <= t_db <= 50 °C. Accepts scalars or arrays.
    """
    t, r = _check_wet_bulb_domain(t_db, rh)
    rp = 100.0 * r
    tw = (
        t * np.arctan(0.151977 * np.sqrt(rp + 8.313659))
        + np.arctan(t + rp)
        - np.arctan(rp - 1.676331)
        + 0.00391838 * rp**1.5 * np.arctan(0.023101 * rp)
        - 4.686035
    )
    return float(tw) if np.ndim(tw) == 0 else tw


def rh_from_wet_bulb(t_db, t_wb):
    """Relative humidity whose wet-bulb matches ``t_wb`` at ``t_db``.

    Saturates at the ends of the wet-bulb formula's domain rather than failing.
    Accepts scalars or equal-shape arrays.
    """
    if np.ndim(t_db) or np.ndim(t_wb):
        t_db, t_wb = np.broadcast_arrays(np.asarray(t_db, float), np.asarray(t_wb, float))
        return np.array([rh_from_wet_bulb(float(a), float(b)) for a, b in zip(t_db.ravel(), t_wb.ravel())]
                        ).reshape(t_db.shape)
    lo, hi = wet_bulb(t_db, 0.05), wet_bulb(t_db, 1.0)
    if t_wb <= lo:
        return 0.05
    if t_wb >= hi:
        return 1.0
    return brentq(lambda r: wet_bulb(t_db, r) - t_wb, 0.05, 1.0, xtol=1e-10)


def pmv(inputs: ComfortInputs, max_iter=150, tol=1e-5):
    """Predicted mean vote by the ISO 7730 Fanger heat balance.

    The clothing surface temperature is found by damped fixed-point iteration;
    ``tol`` is in °C.
    """
    ta = inputs.t_db
    tr = inputs.radiant
    pa = inputs.rh * 1000.0 * math.exp(16.6536 - 4030.183 / (ta + 235.0))
    icl = 0.155 * inputs.clo
    m = inputs.met * 58.15
    mw = m  # no external work
    fcl = 1.0 + 1.29 * icl if icl <= 0.078 else 1.05 + 0.645 * icl
    hcf = 12.1 * math.sqrt(inputs.v_air)
    taa = ta + 273.0
    tra = tr + 273.0

    tcla = taa + (35.5 - ta) / (3.5 * (6.45 * icl + 0.1))
    p1 = icl * fcl
    p2 = p1 * 3.96
    p3 = p1 * 100.0
    p4 = p1 * taa
    p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0) ** 4
    xn = tcla / 100.0
    xf = tcla / 50.0
    eps = tol / 100.0
    for _ in range(max_iter):
        xf = (xf + xn) / 2.0
        hcn = 2.38 * abs(100.0 * xf - taa) ** 0.25
        hc = max(hcf, hcn)
        xn = (p5 + p4 * hc - p2 * xf**4) / (100.0 + p3 * hc)
        if abs(xn - xf) <= eps:
            break
    else:
        raise NumericError(f"clothing surface temperature did not converge in {max_iter} iterations")
    tcl = 100.0 * xn - 273.0

    hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa)
    hl2 = 0.42 * (mw - 58.15) if mw > 58.15 else 0.0
    hl3 = 1.7e-5 * m * (5867.0 - pa)
    hl4 = 0.0014 * m * (34.0 - ta)
    hl5 = 3.96 * fcl * (xn**4 - (tra / 100.0) ** 4)
    hl6 = fcl * hc * (tcl - ta)
    ts = 0.303 * math.exp(-0.036 * m) + 0.028
    return ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6)


def ppd(pmv_value):
    """Predicted percentage dissatisfied (%) for a given PMV."""
    x = np.asarray(pmv_value, dtype=float)
    if np.any(np.abs(x) > 4.0):
        raise DomainError("pmv", pmv_value, "ppd is defined for |pmv| <= 4")
    out = 100.0 - 95.0 * np.exp(-(0.03353 * x**4 + 0.2179 * x**2))
    return float(out) if out.ndim == 0 else out


def comfort(inputs: ComfortInputs) -> ComfortResult:
    value = pmv(inputs)
    return ComfortResult(pmv=value, ppd=ppd(float(np.clip(value, -4.0, 4.0))))


def neutral_temperature(template: ComfortInputs, lo=10.0, hi=40.0):
    """Air temperature (with t_r = t_db) at which PMV is zero."""
    return brentq(lambda t: pmv(replace(template, t_db=t, t_r=None)), lo, hi, xtol=1e-12)


def evaluate_trajectory(t_db, rh, assumptions=ComfortAssumptions()):
    """PMV and PPD arrays for paired temperature and humidity sequences."""
    t_db = np.asarray(t_db, dtype=float)
    rh = np.broadcast_to(np.asarray(rh, dtype=float), t_db.shape)
    pmvs = np.array([pmv(assumptions.inputs(t, float(np.clip(r, 0.0, 1.0)))) for t, r in zip(t_db, rh)])
    return pmvs, ppd(np.clip(pmvs, -4.0, 4.0))


def comfort_series(log, assumptions=ComfortAssumptions()) -> ComfortSeries:
    """Per-step comfort of a telemetry log plus its time-average PPD.

    ``log`` is a TelemetryLog or a DataFrame with ``timestamp`` and ``t_in``
    columns. Without an ``rh_in`` channel the configured constant humidity is
    used and the result is flagged.
    """
    frame = getattr(log, "frame", log)
    if len(frame) == 0:
        raise DomainError("log", "empty", "comfort_series needs a nonempty log")
    notes = ["mean radiant temperature assumed equal to air temperature"]
    fallback = "rh_in" not in frame.columns or frame["rh_in"].isna().all()
    if fallback:
        rh = np.full(len(frame), assumptions.rh_default)
        notes.append(f"rh_in missing; constant rh={assumptions.rh_default} used")
    else:
        rh = frame["rh_in"].to_numpy(dtype=float)
    pmvs, ppds = evaluate_trajectory(frame["t_in"].to_numpy(dtype=float), rh, assumptions)
    dt_h = _step_hours(frame)
    return ComfortSeries(
        pmv=pmvs,
        ppd=np.atleast_1d(ppds),
        mean_ppd=float(np.mean(ppds)),
        hours_above_threshold=float(np.sum(np.atleast_1d(ppds) > PPD_THRESHOLD) * dt_h),
        rh_fallback=fallback,
        notes=notes,
    )


def _step_hours(frame):
    if len(frame) < 2 or "timestamp" not in frame.columns:
        return 1.0
    ts = np.asarray(frame["timestamp"].to_numpy(), dtype="datetime64[s]")
    steps = np.diff(ts).astype(float) / 3600.0
    if not np.allclose(steps, steps[0]):
        raise DomainError("timestamp", "non-uniform", "comfort_series needs a uniform time step")
    return float(steps[0])
