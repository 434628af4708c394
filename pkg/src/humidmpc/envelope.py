"""Discrete-time 2R1C indoor air model and its least-squares identification.

The indoor air node exchanges heat with the outdoors through ``r_out`` and
with a fixed-temperature mass boundary through ``r_m``. Over one controller
step of length dt,

    T[k+1] = alpha*T[k] + (1 - alpha)*(T_eq[k] + R*(q_e[k] - q_cool[k]))

where R is the parallel combination of the two resistances and T_eq their
resistance-weighted boundary temperature. ``q_cool >= 0`` is heat extracted
by the air conditioner. The capacitance only enters through ``alpha`` and is
not separately identifiable from one-step data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DataError, IdentificationError, UsageError
from .telemetry import TelemetryLog

REGRESSOR_NAMES = ("t_in", "t_out", "q_cool", "intercept")
MIN_RECORDS = 48


@dataclass(frozen=True)
class ThermalCircuitParams:
    alpha: float
    r_out: float
    r_m: float = math.inf
    t_m: float = 22.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise IdentificationError(f"alpha={self.alpha} must lie in (0, 1)")
        if not (self.r_out > 0 and self.r_m > 0):
            raise IdentificationError("resistances must be positive")

    @property
    def r_eff(self):
        if math.isinf(self.r_m):
            return self.r_out
        return 1.0 / (1.0 / self.r_out + 1.0 / self.r_m)

    @property
    def outdoor_weight(self):
        """Share of the boundary temperature contributed by the outdoors."""
        return self.r_eff / self.r_out

    @classmethod
    def from_effective(cls, alpha, r_eff, outdoor_weight=1.0, t_m=22.0):
        if not 0.0 < outdoor_weight <= 1.0:
            raise IdentificationError(f"outdoor weight {outdoor_weight} must lie in (0, 1]")
        r_m = math.inf if outdoor_weight == 1.0 else r_eff / (1.0 - outdoor_weight)
        return cls(alpha=alpha, r_out=r_eff / outdoor_weight, r_m=r_m, t_m=t_m)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "r_eff": self.r_eff,
            "r_out": self.r_out,
            "r_m": None if math.isinf(self.r_m) else self.r_m,
            "t_m": self.t_m,
        }


def equivalent_boundary(t_out, params: ThermalCircuitParams):
    """Resistance-weighted boundary temperature seen by the air node."""
    if math.isinf(params.r_m):
        return np.asarray(t_out, dtype=float) if np.ndim(t_out) else float(t_out)
    g_out, g_m = 1.0 / params.r_out, 1.0 / params.r_m
    return (np.asarray(t_out) * g_out + params.t_m * g_m) / (g_out + g_m)


def step(params: ThermalCircuitParams, t_k, t_eq, q_cool, q_e):
    """Indoor temperature one step ahead."""
    a = params.alpha
    return a * t_k + (1.0 - a) * (t_eq + params.r_eff * (q_e - q_cool))


def simulate(params, t0, t_eq, q_cool, q_e):
    """Iterate :func:`step` over aligned sequences; returns length n+1."""
    t_eq, q_cool, q_e = np.broadcast_arrays(np.asarray(t_eq, float), np.asarray(q_cool, float),
                                            np.asarray(q_e, float))
    out = np.empty(len(t_eq) + 1)
    out[0] = t0
    for k in range(len(t_eq)):
        out[k + 1] = step(params, out[k], t_eq[k], q_cool[k], q_e[k])
    return out


def implied_cooling(params, t_k, t_next, t_eq, q_e):
    """Cooling rate that moves the model from ``t_k`` to ``t_next``."""
    a = params.alpha
    return q_e + (t_eq - (t_next - a * t_k) / (1.0 - a)) / params.r_eff


def exogenous_residuals(params, t_k, t_next, t_eq, q_cool):
    """Per-step exogenous power that reconciles the model with data."""
    a = params.alpha
    return ((t_next - a * t_k) / (1.0 - a) - t_eq) / params.r_eff + q_cool


@dataclass
class EnvelopeFit:
    params: ThermalCircuitParams
    qe_series: np.ndarray
    rmse_temp: float
    rmse_cool: float
    alpha_se: float = float("nan")
    r_eff_se: float = float("nan")
    n_train: int = 0
    n_valid: int = 0
    frozen: bool = False
    qe_mean: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "alpha_se": _finite_or_none(self.alpha_se),
            "r_eff_se": _finite_or_none(self.r_eff_se),
            "rmse_temp_c": self.rmse_temp,
            "rmse_cool_kw": self.rmse_cool,
            "n_train": self.n_train,
            "n_valid": self.n_valid,
            "frozen": self.frozen,
            "qe_mean_kw": self.qe_mean,
            "qe_series_kw": [float(v) for v in self.qe_series],
            "notes": list(self.notes),
        }


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


class ThermalCircuitRegressor(BaseEstimator, RegressorMixin):
    """One-step indoor temperature regression for the 2R1C model.

    ``X`` columns are (indoor temperature, outdoor temperature, cooling rate)
    at step k; ``y`` is the indoor temperature at step k+1. The mass
    boundary temperature ``t_m`` is configuration: together with the
    intercept it fixes the mean exogenous power.
    """

    def __init__(self, t_m=22.0):
        self.t_m = t_m

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 3:
            raise UsageError(f"expected 3 regressor columns, got {X.shape[1]}")
        design = np.column_stack([X, np.ones(len(X))])
        _check_rank(design)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        dof = max(len(y) - design.shape[1], 1)
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)

        a, b_out, b_q, c0 = coef
        if not 0.0 < a < 1.0:
            raise IdentificationError(
                f"fitted alpha={a:.4f} outside (0, 1); the data do not show stable first-order decay")
        r_eff = -b_q / (1.0 - a)
        if r_eff <= 0:
            raise IdentificationError(
                f"fitted resistance {r_eff:.4f} is not positive; cooling does not lower the temperature")
        w_out = b_out / (1.0 - a)
        if not 0.0 < w_out <= 1.0 + 1e-12:
            raise IdentificationError(
                f"fitted outdoor weight {w_out:.4f} outside (0, 1]; implied mass resistance is not positive")
        self.params_ = ThermalCircuitParams.from_effective(a, r_eff, min(w_out, 1.0), self.t_m)
        self.coef_ = coef
        self.cov_ = cov
        grad_r = np.array([-b_q / (1.0 - a) ** 2, 0.0, -1.0 / (1.0 - a), 0.0])
        self.alpha_se_ = math.sqrt(cov[0, 0])
        self.r_eff_se_ = math.sqrt(float(grad_r @ cov @ grad_r))
        # intercept = (1 - a) * ((1 - w) * t_m + R * mean q_e)
        self.qe_mean_ = (c0 / (1.0 - a) - (1.0 - min(w_out, 1.0)) * self.t_m) / r_eff
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return np.column_stack([X, np.ones(len(X))]) @ self.coef_

    def implied_cooling(self, X, y):
        """Cooling rate the fitted model needs to produce ``y`` from ``X``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        a, b_out, b_q, c0 = self.coef_
        return (np.asarray(y) - a * X[:, 0] - b_out * X[:, 1] - c0) / b_q


def _check_rank(design):
    scale = np.linalg.norm(design, axis=0)
    zero = scale == 0
    scaled = design / np.where(zero, 1.0, scale)
    _, s, vt = np.linalg.svd(scaled, full_matrices=False)
    tol = s.max() * max(design.shape) * 1e-10 if s.size else 0.0
    null = vt[s <= tol]
    if zero.any() or len(null):
        involved = set(np.flatnonzero(zero))
        for v in null:
            involved.update(np.flatnonzero(np.abs(v) > 1e-6))
        names = [REGRESSOR_NAMES[i] for i in sorted(involved)]
        raise IdentificationError(
            "rank-deficient regressor matrix; collinear columns: " + ", ".join(names), columns=names)


def regression_arrays(log: TelemetryLog):
    """(X, y) one-step regression arrays from an hourly telemetry log."""
    f = log.frame
    t_in = f["t_in"].to_numpy(float)
    X = np.column_stack([t_in[:-1], f["t_out"].to_numpy(float)[:-1], f["q_cool_kw"].to_numpy(float)[:-1]])
    return X, t_in[1:]


def identify(telemetry: TelemetryLog, t_m=22.0, validation_fraction=0.25, frozen=None,
             qe_constant=None) -> EnvelopeFit:
    """Fit the 2R1C model to telemetry by ordinary least squares.

    Sub-hourly logs are aggregated to hourly records first. The final
    ``validation_fraction`` of transitions is held out for the reported
    RMSEs, during which the exogenous power is predicted by its training mean
    (or by ``qe_constant`` when given). Passing ``frozen`` parameters skips
    the regression and only evaluates them.
    """
    log = telemetry.hourly()
    if len(log) < MIN_RECORDS:
        raise DataError(f"identification needs at least {MIN_RECORDS} hourly records, got {len(log)}")
    X, y = regression_arrays(log)
    n = len(y)
    n_train = n - int(round(validation_fraction * n))
    if n_train < 4:
        raise DataError("training split too short")

    if frozen is None:
        reg = ThermalCircuitRegressor(t_m=t_m).fit(X[:n_train], y[:n_train])
        params = reg.params_
        alpha_se, r_se, qe_mean = reg.alpha_se_, reg.r_eff_se_, reg.qe_mean_
    else:
        params = frozen
        alpha_se = r_se = float("nan")
        qe_mean = None

    t_eq = equivalent_boundary(X[:, 1], params)
    qe = exogenous_residuals(params, X[:, 0], y, t_eq, X[:, 2])
    if qe_mean is None:
        qe_mean = float(np.mean(qe[:n_train]))
    if qe_constant is not None:
        qe_mean = float(qe_constant)

    val = slice(n_train, n) if n_train < n else slice(0, n)
    pred = step(params, X[val, 0], t_eq[val], X[val, 2], qe_mean)
    rmse_temp = float(np.sqrt(np.mean((pred - y[val]) ** 2)))
    q_hat = implied_cooling(params, X[val, 0], y[val], t_eq[val], qe_mean)
    rmse_cool = float(np.sqrt(np.mean((q_hat - X[val, 2]) ** 2)))
    notes = ["capacitance is folded into alpha and is not identified"]
    if frozen is not None:
        notes.append("parameters supplied by the user; regression skipped")
    return EnvelopeFit(params=params, qe_series=qe, rmse_temp=rmse_temp, rmse_cool=rmse_cool,
                       alpha_se=alpha_se, r_eff_se=r_se, n_train=n_train, n_valid=n - n_train,
                       frozen=frozen is not None, qe_mean=float(qe_mean), notes=notes)
