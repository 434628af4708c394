"""Heat pump COP maps and sensible heat ratio (SHR) models.

Two formulations are supported. The *sensible* one treats SHR as a constant
and COP as a quadratic in outdoor temperature. The *latent* one uses a full
bivariate quadratic COP over (indoor wet-bulb, outdoor dry-bulb) and a linear
SHR in indoor wet-bulb. COP here is total (sensible + latent) cooling divided
by electrical power, so electrical power is ``q_sensible / (shr * cop)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, FitError, UsageError

NOMINAL_SHR = 0.86
RATED_CAPACITY_KW = 14.0
RATED_WET_BULB = 19.4  # 67 °F entering wet-bulb of the standard rating point
RATED_COP = 5.3
REFERENCE_INDOOR_DB = 24.0
SHR_FLOOR = 0.05
PERFORMANCE_COLUMNS = ("t_wb_c", "t_out_c", "sensible_kw", "total_kw", "power_kw")


class RangeWarning(RuntimeWarning):
    """An input was clamped to a map's valid range."""


def _features(form, t_wb, t_out):
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    if form == "sensible":
        return np.column_stack([np.ones_like(t_out), t_out, t_out**2])
    t_wb = np.atleast_1d(np.asarray(t_wb, dtype=float))
    t_wb, t_out = np.broadcast_arrays(t_wb, t_out)
    return np.column_stack([np.ones_like(t_out), t_wb, t_out, t_wb**2, t_wb * t_out, t_out**2])


class CopMap(BaseEstimator, RegressorMixin):
    """Quadratic COP map.

    ``form="sensible"`` regresses COP on outdoor temperature only; ``X`` has a
    single column. ``form="latent"`` uses ``X`` columns (t_wb, t_out).
    Inputs outside the training range are clamped with a RangeWarning.
    """

    def __init__(self, form="latent", reference_db=REFERENCE_INDOOR_DB):
        self.form = form
        self.reference_db = reference_db

    @property
    def n_coef(self):
        return 3 if self.form == "sensible" else 6

    def fit(self, X, y):
        if self.form not in ("sensible", "latent"):
            raise UsageError(f"unknown COP form {self.form!r}")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=float)
        need = max(10, self.n_coef)
        if len(y) < need:
            raise FitError(f"{self.form} COP fit needs at least {need} rows ({self.n_coef} coefficients), got {len(y)}")
        X = check_array(X)
        if self.form == "sensible":
            A = _features("sensible", None, X[:, -1])
            self.t_out_range_ = (X[:, -1].min(), X[:, -1].max())
            self.t_wb_range_ = None
        else:
            if X.shape[1] != 2:
                raise UsageError("latent COP fit needs (t_wb, t_out) columns")
            A = _features("latent", X[:, 0], X[:, 1])
            self.t_wb_range_ = (X[:, 0].min(), X[:, 0].max())
            self.t_out_range_ = (X[:, 1].min(), X[:, 1].max())
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise FitError("performance rows do not span enough distinct conditions for a quadratic fit")
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        self.coef_ = coef
        resid = y - A @ coef
        self.r2_ = float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))
        self.rmse_ = float(np.sqrt(np.mean(resid**2)))
        self._check_invariants()
        return self

    def _grid(self, n=25):
        outs = np.linspace(*self.t_out_range_, n)
        if self.form == "sensible":
            return None, outs
        wbs = np.linspace(*self.t_wb_range_, n)
        return wbs, outs

    def _check_invariants(self):
        wbs, outs = self._grid()
        if self.form == "sensible":
            vals = _features("sensible", None, outs) @ self.coef_
            slope = self.coef_[1] + 2 * self.coef_[2] * outs
            if np.any(vals <= 0):
                raise FitError(f"fitted COP not positive over t_out range {self.t_out_range_}")
            if np.any(slope >= 0):
                raise FitError("fitted COP does not decrease with outdoor temperature over its range")
            return
        W, O = np.meshgrid(wbs, outs, indexing="ij")
        vals = (_features("latent", W.ravel(), O.ravel()) @ self.coef_).reshape(W.shape)
        if np.any(vals <= 0):
            raise FitError("fitted COP not positive over the valid region")
        c = self.coef_
        slope = c[2] + c[4] * W + 2 * c[5] * O
        if np.any(slope >= 0):
            raise FitError("fitted COP does not decrease with outdoor temperature at fixed wet-bulb")

    def _clamp(self, values, rng, name):
        v = np.asarray(values, dtype=float)
        clipped = np.clip(v, *rng)
        if np.any(clipped != v):
            warnings.warn(f"{name} clamped to valid range [{float(rng[0]):g}, {float(rng[1]):g}]", RangeWarning,
                          stacklevel=3)
        return clipped

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.form == "sensible":
            return _features("sensible", None, self._clamp(X[:, -1], self.t_out_range_, "t_out")) @ self.coef_
        if X.shape[1] != 2:
            raise UsageError("latent COP map needs (t_wb, t_out) columns")
        wb = self._clamp(X[:, 0], self.t_wb_range_, "t_wb")
        out = self._clamp(X[:, 1], self.t_out_range_, "t_out")
        return _features("latent", wb, out) @ self.coef_


def fit_cop(table, form="latent", reference_wb=None):
    """Fit a COP map from performance rows.

    ``table`` is a DataFrame with ``t_wb_c``, ``t_out_c`` and either ``cop``
    or ``total_kw`` and ``power_kw``, or an array of (t_wb, t_out, cop) rows.
    For the sensible form, rows nearest ``reference_wb`` are used when the
    table spans several wet-bulb temperatures (default: the rating-point
    wet-bulb, as a specification sheet would quote it).
    """
    if isinstance(table, pd.DataFrame):
        t_wb = table["t_wb_c"].to_numpy(float)
        t_out = table["t_out_c"].to_numpy(float)
        if "cop" in table.columns:
            cop_values = table["cop"].to_numpy(float)
        else:
            cop_values = table["total_kw"].to_numpy(float) / table["power_kw"].to_numpy(float)
    else:
        arr = np.asarray(table, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise UsageError("performance rows must be (t_wb, t_out, cop)")
        t_wb, t_out, cop_values = arr.T
    if form == "sensible":
        levels = np.unique(t_wb)
        if len(levels) > 1:
            if reference_wb is None:
                reference_wb = RATED_WET_BULB
            mask = np.isclose(t_wb, levels[np.argmin(np.abs(levels - reference_wb))])
            t_out, cop_values = t_out[mask], cop_values[mask]
        return CopMap("sensible").fit(t_out[:, None], cop_values)
    if form != "latent":
        raise UsageError(f"unknown COP form {form!r}")
    return CopMap("latent").fit(np.column_stack([t_wb, t_out]), cop_values)


def cop(cop_map: CopMap, t_out, t_wb=None):
    """Evaluate a COP map; the latent form requires ``t_wb``."""
    if cop_map.form == "latent":
        if t_wb is None:
            raise UsageError("latent COP map needs an indoor wet-bulb temperature")
        t_wb, t_out = np.broadcast_arrays(np.asarray(t_wb, float), np.asarray(t_out, float))
        out = cop_map.predict(np.column_stack([np.ravel(t_wb), np.ravel(t_out)]))
    else:
        out = cop_map.predict(np.atleast_1d(np.asarray(t_out, float))[:, None])
    return float(out[0]) if np.ndim(t_out) == 0 else out.reshape(np.shape(t_out))


@dataclass(frozen=True)
class ShrModel:
    """Constant SHR, or ``a * t_wb + b``; outputs clamped to (0, 1]."""

    variant: str = "constant"
    value: float = NOMINAL_SHR
    a: float = 0.0
    b: float = NOMINAL_SHR
    r2: float | None = None
    rmse: float | None = None

    def __post_init__(self):
        if self.variant not in ("constant", "linear"):
            raise UsageError(f"unknown SHR variant {self.variant!r}")
        if self.variant == "constant" and not 0.0 < self.value <= 1.0:
            raise DataError(f"constant SHR {self.value} outside (0, 1]")

    @classmethod
    def constant(cls, value=NOMINAL_SHR):
        return cls("constant", value=value)

    @classmethod
    def linear(cls, a, b, r2=None, rmse=None):
        return cls("linear", a=a, b=b, r2=r2, rmse=rmse)

    def to_dict(self):
        if self.variant == "constant":
            return {"variant": "constant", "value": self.value}
        return {"variant": "linear", "a": self.a, "b": self.b, "r2": self.r2, "rmse": self.rmse}


def shr(model: ShrModel, t_wb=None):
    """SHR at indoor wet-bulb ``t_wb`` (ignored by the constant variant)."""
    if model.variant == "constant":
        if t_wb is None or np.ndim(t_wb) == 0:
            return model.value
        return np.full(np.shape(t_wb), model.value)
    if t_wb is None:
        raise UsageError("linear SHR model needs a wet-bulb temperature")
    out = np.clip(model.a * np.asarray(t_wb, float) + model.b, SHR_FLOOR, 1.0)
    return float(out) if out.ndim == 0 else out


class LinearShrRegressor(BaseEstimator, RegressorMixin):
    """Least-squares SHR line against indoor wet-bulb temperature."""

    def fit(self, X, y):
        X = check_array(np.asarray(X, float).reshape(len(y), -1))
        t_wb = X[:, 0]
        y = np.asarray(y, float)
        if np.ptp(t_wb) == 0:
            raise FitError("rank-deficient SHR fit: all rows share one wet-bulb temperature")
        A = np.column_stack([t_wb, np.ones_like(t_wb)])
        (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ [a, b]
        self.coef_ = np.array([a, b])
        self.r2_ = float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))
        self.rmse_ = float(np.sqrt(np.mean(resid**2)))
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        t_wb = np.asarray(X, float).reshape(-1)
        return np.clip(self.coef_[0] * t_wb + self.coef_[1], SHR_FLOOR, 1.0)

    def to_model(self):
        check_is_fitted(self, "coef_")
        return ShrModel.linear(float(self.coef_[0]), float(self.coef_[1]), self.r2_, self.rmse_)


def fit_shr(table) -> ShrModel:
    """Fit the linear SHR model from (t_wb, sensible_rate, total_rate) rows.

    Accepts a performance-table DataFrame or an (n, 3) array.
    """
    if isinstance(table, pd.DataFrame):
        arr = table[["t_wb_c", "sensible_kw", "total_kw"]].to_numpy(float)
    else:
        arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise UsageError("SHR rows must be (t_wb, sensible_rate, total_rate)")
    if len(arr) < 5:
        raise FitError(f"SHR fit needs at least 5 rows, got {len(arr)}")
    t_wb, sens, total = arr.T
    if np.any(total <= 0):
        raise DataError(f"row {int(np.argmax(total <= 0))}: total cooling rate must be positive")
    bad = np.flatnonzero(sens > total)
    if len(bad):
        raise DataError(f"row {int(bad[0])}: sensible rate exceeds total rate")
    return LinearShrRegressor().fit(t_wb[:, None], sens / total).to_model()


def electrical_power(q_sensible, shr_value, cop_value):
    """Electrical power (kW) drawn to deliver sensible cooling ``q_sensible``."""
    return np.asarray(q_sensible) / (np.asarray(shr_value) * np.asarray(cop_value))


# Manufacturer-like performance data. The COP surface is a documented
# quadratic anchored at RATED_COP for (17 °C wet-bulb, 27.8 °C outdoor) plus a
# small wet-bulb ripple that keeps the latent fit below R^2 = 1; SHR is linear
# in wet-bulb with a weak outdoor-temperature term.
def true_cop(t_wb, t_out):
    d_wb = np.asarray(t_wb, float) - 17.0
    d_out = np.asarray(t_out, float) - 27.8
    return (RATED_COP + 0.12 * d_wb - 0.11 * d_out - 0.002 * d_wb**2 + 0.001 * d_wb * d_out
            + 0.0008 * d_out**2 + 0.08 * np.sin(1.3 * d_wb))


def true_shr(t_wb, t_out):
    d_wb = np.asarray(t_wb, float) - 17.0
    d_out = np.asarray(t_out, float) - 30.0
    return np.clip(NOMINAL_SHR - 0.045 * d_wb + 0.0025 * d_out + 0.012 * np.cos(2.1 * d_wb + 0.3 * d_out), 0.5, 1.0)


def true_total_capacity(t_wb, t_out, rated=RATED_CAPACITY_KW):
    return rated * (1.0 + 0.03 * (np.asarray(t_wb, float) - RATED_WET_BULB)
                                - 0.008 * (np.asarray(t_out, float) - 35.0))


def manufacturer_table():
    """Regenerate the bundled performance table deterministically."""
    wb, out = np.meshgrid(np.arange(14.0, 22.5, 1.0), np.arange(20.0, 43.0, 2.5), indexing="ij")
    wb, out = wb.ravel(), out.ravel()
    total = true_total_capacity(wb, out)
    frame = pd.DataFrame({
        "t_wb_c": wb,
        "t_out_c": out,
        "sensible_kw": total * true_shr(wb, out),
        "total_kw": total,
        "power_kw": total / true_cop(wb, out),
    })
    return frame.round(4)


def load_performance_table(path=None):
    """Read a performance-table CSV (the bundled one by default)."""
    from .telemetry import read_checked_csv

    if path is None:
        with resources.files("humidmpc").joinpath("data/performance_table.csv").open("r", encoding="utf-8") as fh:
            frame = read_checked_csv(fh, ("t_wb_c", "t_out_c") + PERFORMANCE_COLUMNS[2:])
    else:
        frame = read_checked_csv(path, ("t_wb_c", "t_out_c") + PERFORMANCE_COLUMNS[2:])
    if (frame["sensible_kw"] > frame["total_kw"]).any():
        raise DataError("performance table has sensible rate above total rate")
    return frame


@dataclass(frozen=True)
class EquipmentModel:
    """COP maps and SHR models for both formulations."""

    cop_sensible: CopMap
    cop_latent: CopMap
    shr_latent: ShrModel
    shr_sensible: ShrModel = ShrModel.constant(NOMINAL_SHR)
    p_hp_max: float = 4.5
    rated_capacity: float = RATED_CAPACITY_KW

    @classmethod
    def from_table(cls, table=None, **kwargs):
        table = load_performance_table() if table is None else table
        return cls(cop_sensible=fit_cop(table, "sensible"), cop_latent=fit_cop(table, "latent"),
                   shr_latent=fit_shr(table), **kwargs)

    def sensible_capacity(self, t_wb, t_out):
        """Maximum sensible extraction (kW) at the given conditions."""
        s = shr(self.shr_latent, t_wb)
        c = cop(self.cop_latent, t_out, t_wb)
        return np.minimum(self.rated_capacity * s, self.p_hp_max * s * c)
