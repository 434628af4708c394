"""Wet-bulb and exogenous-power forecasting and forecast-bundle assembly.

The indoor return-air wet-bulb temperature is predicted open-loop from
weather features with Gaussian process regression. Features are outdoor
relative humidity, outdoor temperature, hour of day, solar irradiance and
wind speed; the hour is encoded as a (sin, cos) pair by default.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted

from . import envelope, equipment
from .exceptions import DataError, HumidMpcError, NumericError, UsageError

DEFAULT_QE_KW = 3.4
GRID_FACTORS = (1.0 / 3.0, 1.0, 3.0)
MIN_GPR_ROWS = 24


def weather_features(weather: pd.DataFrame, hour_encoding="periodic"):
    """Feature matrix for the wet-bulb and exogenous-power regressors."""
    ts = pd.to_datetime(weather["timestamp"])
    hour = (ts.dt.hour + ts.dt.minute / 60.0).to_numpy(float)
    base = [weather["rh_out"].to_numpy(float), weather["t_out_c"].to_numpy(float)]
    if hour_encoding == "periodic":
        hours = [np.sin(2 * np.pi * hour / 24.0), np.cos(2 * np.pi * hour / 24.0)]
    elif hour_encoding == "raw":
        hours = [hour]
    else:
        raise UsageError(f"unknown hour encoding {hour_encoding!r}")
    rest = [weather["ghi_kw_m2"].to_numpy(float), weather["wind_m_s"].to_numpy(float)]
    return np.column_stack(base + hours + rest)


class GPRegressor(BaseEstimator, RegressorMixin):
    """Gaussian process regression with an anisotropic squared-exponential kernel.

    Hyperparameters left as ``None`` are chosen by a deterministic
    coordinate-wise search over a 3-point log grid that maximizes the log
    marginal likelihood, evaluated on at most ``search_points`` evenly
    strided training rows. Inputs are standardized with training statistics
    unless ``standardize=False``; targets are centred on their mean.
    """

    def __init__(self, length_scales=None, signal_variance=None, noise_variance=None,
                 standardize=True, search_sweeps=2, search_points=300, max_jitter=1e-4):
        self.length_scales = length_scales
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.standardize = standardize
        self.search_sweeps = search_sweeps
        self.search_points = search_points
        self.max_jitter = max_jitter

    def _kernel(self, A, B, ls, sf2):
        d = (A[:, None, :] - B[None, :, :]) / ls
        return sf2 * np.exp(-0.5 * np.sum(d * d, axis=-1))

    def _factor(self, X, ls, sf2, sn2):
        K = self._kernel(X, X, ls, sf2)
        K[np.diag_indices_from(K)] += sn2
        jitter = 0.0
        scale = max(sf2, 1e-300)
        while True:
            try:
                L = np.linalg.cholesky(K + jitter * np.eye(len(K)) if jitter else K)
                return L, jitter
            except np.linalg.LinAlgError:
                jitter = 1e-12 * scale if jitter == 0.0 else jitter * 10.0
                if jitter > self.max_jitter * scale:
                    raise NumericError("kernel matrix not positive definite after jitter escalation")

    def _lml(self, X, y, ls, sf2, sn2):
        try:
            L, _ = self._factor(X, ls, sf2, sn2)
        except NumericError:
            return -np.inf
        alpha = cho_solve((L, True), y)
        return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * math.log(2 * math.pi))

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise UsageError("X and y lengths differ")
        if not np.all(np.isfinite(y)):
            raise DataError("targets must be finite")
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.x_mean_ = X.mean(axis=0)
            std = X.std(axis=0)
            self.x_scale_ = np.where(std > 0, std, 1.0)
        else:
            self.x_mean_ = np.zeros(X.shape[1])
            self.x_scale_ = np.ones(X.shape[1])
        Z = (X - self.x_mean_) / self.x_scale_
        self.y_mean_ = float(y.mean())
        yc = y - self.y_mean_
        var_y = max(float(yc.var()), 1e-6)

        ls = np.ones(X.shape[1]) if self.length_scales is None else np.broadcast_to(
            np.asarray(self.length_scales, float), (X.shape[1],)).copy()
        sf2 = var_y if self.signal_variance is None else float(self.signal_variance)
        sn2 = 0.1 * var_y if self.noise_variance is None else float(self.noise_variance)
        free = []
        if self.length_scales is None:
            free += [("ls", d) for d in range(X.shape[1])]
        if self.signal_variance is None:
            free.append(("sf2", None))
        if self.noise_variance is None:
            free.append(("sn2", None))
        if free:
            if len(y) < MIN_GPR_ROWS:
                raise DataError(f"hyperparameter search needs at least {MIN_GPR_ROWS} rows, got {len(y)}")
            ls, sf2, sn2 = self._search(Z, yc, ls, sf2, sn2, free)

        self.length_scales_ = ls
        self.signal_variance_ = sf2
        self.noise_variance_ = sn2
        self.X_train_ = Z
        self.L_, self.jitter_ = self._factor(Z, ls, sf2, sn2)
        self.alpha_ = cho_solve((self.L_, True), yc)
        self.log_marginal_likelihood_ = self._lml(Z, yc, ls, sf2, sn2)
        return self

    def refit(self, X, y):
        """Copy conditioned on new data, keeping hyperparameters and input scaling."""
        try:
            check_is_fitted(self, "alpha_")
        except NotFittedError as exc:
            raise UsageError("GP model has not been fitted") from exc
        X = check_array(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X) or X.shape[1] != self.n_features_in_:
            raise UsageError("refit data do not match the fitted feature layout")
        new = copy.copy(self)
        new.X_train_ = (X - self.x_mean_) / self.x_scale_
        new.y_mean_ = float(y.mean())
        yc = y - new.y_mean_
        new.L_, new.jitter_ = self._factor(new.X_train_, self.length_scales_, self.signal_variance_,
                                           self.noise_variance_)
        new.alpha_ = cho_solve((new.L_, True), yc)
        new.log_marginal_likelihood_ = self._lml(new.X_train_, yc, self.length_scales_, self.signal_variance_,
                                                 self.noise_variance_)
        return new

    def _search(self, Z, y, ls, sf2, sn2, free):
        stride = max(1, int(math.ceil(len(y) / self.search_points)))
        Zs, ys = Z[::stride], y[::stride]
        best = self._lml(Zs, ys, ls, sf2, sn2)
        for _ in range(self.search_sweeps):
            for kind, d in free:
                for f in GRID_FACTORS:
                    if f == 1.0:
                        continue
                    cand_ls, cand_sf2, cand_sn2 = ls.copy(), sf2, sn2
                    if kind == "ls":
                        cand_ls[d] *= f
                    elif kind == "sf2":
                        cand_sf2 *= f
                    else:
                        cand_sn2 *= f
                    score = self._lml(Zs, ys, cand_ls, cand_sf2, cand_sn2)
                    if score > best + 1e-9:
                        best, ls, sf2, sn2 = score, cand_ls, cand_sf2, cand_sn2
        return ls, sf2, sn2

    def predict(self, X, return_var=False):
        try:
            check_is_fitted(self, "alpha_")
        except NotFittedError as exc:
            raise UsageError("GP model has not been fitted") from exc
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise UsageError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        Zs = (X - self.x_mean_) / self.x_scale_
        Ks = self._kernel(Zs, self.X_train_, self.length_scales_, self.signal_variance_)
        mean = self.y_mean_ + Ks @ self.alpha_
        if not return_var:
            return mean
        v = solve_triangular(self.L_, Ks.T, lower=True)
        var = np.maximum(self.signal_variance_ - np.sum(v * v, axis=0), 0.0)
        return mean, var


def gpr_fit(X, y, length_scales=None, signal_variance=None, noise_variance=None, **kwargs):
    """Fit a :class:`GPRegressor`; any hyperparameter left ``None`` is searched."""
    return GPRegressor(length_scales=length_scales, signal_variance=signal_variance,
                       noise_variance=noise_variance, **kwargs).fit(X, y)


def gpr_predict(model: GPRegressor, X):
    """Posterior mean and variance of the latent function at ``X``."""
    return model.predict(X, return_var=True)


class ConstantPredictor(BaseEstimator, RegressorMixin):
    """Predicts the same value everywhere; fitting is a no-op."""

    def __init__(self, value=DEFAULT_QE_KW):
        self.value = value

    def fit(self, X=None, y=None):
        self.value_ = float(self.value)
        return self

    def predict(self, X):
        return np.full(len(X), float(self.value))


def predict_qe(weather_horizon, predictor, hour_encoding="periodic"):
    """Exogenous thermal power (kW) over a weather horizon.

    ``predictor`` is any fitted regressor with a ``predict`` method over
    :func:`weather_features` columns.
    """
    if predictor is None:
        raise UsageError("no exogenous-power predictor supplied")
    if isinstance(predictor, ConstantPredictor):
        return predictor.predict(np.empty((len(weather_horizon), 0)))
    try:
        if hasattr(predictor, "fit") and not isinstance(predictor, ConstantPredictor):
            check_is_fitted(predictor)
    except NotFittedError as exc:
        raise UsageError("exogenous-power predictor has not been fitted") from exc
    return np.asarray(predictor.predict(weather_features(weather_horizon, hour_encoding)), float)


@dataclass
class ForecastBundle:
    """Per-step optimizer inputs over a horizon of ``len(t_eq)`` steps."""

    t_eq: np.ndarray
    q_e: np.ndarray
    cop: np.ndarray
    shr: np.ndarray
    p_lim: np.ndarray
    dt: float = 1.0
    start_hour: int = 0
    t_wb: np.ndarray | None = None
    t_out: np.ndarray | None = None
    formulation: str = "sensible"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t_eq", "q_e", "cop", "shr", "p_lim"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        n = len(self.t_eq)
        for name in ("q_e", "cop", "shr", "p_lim"):
            if len(getattr(self, name)) != n:
                raise UsageError(f"bundle array {name} has length {len(getattr(self, name))}, expected {n}")
        if self.t_wb is not None:
            self.t_wb = np.asarray(self.t_wb, float).reshape(-1)
        if self.t_out is not None:
            self.t_out = np.asarray(self.t_out, float).reshape(-1)
        bad = np.flatnonzero(~((self.shr > 0) & (self.shr <= 1)))
        if bad.size:
            raise DataError(f"step {bad[0]}: SHR {self.shr[bad[0]]} outside (0, 1]")
        bad = np.flatnonzero(~(self.cop > 0))
        if bad.size:
            raise DataError(f"step {bad[0]}: COP {self.cop[bad[0]]} not positive")
        bad = np.flatnonzero(~(self.p_lim > 0))
        if bad.size:
            raise DataError(f"step {bad[0]}: power limit {self.p_lim[bad[0]]} not positive")
        for name in ("t_eq", "q_e"):
            bad = np.flatnonzero(~np.isfinite(getattr(self, name)))
            if bad.size:
                raise DataError(f"step {bad[0]}: {name} is not finite")

    def __len__(self):
        return len(self.t_eq)

    def hours(self):
        return (self.start_hour + np.arange(len(self)) * self.dt) % 24


def assemble_bundle(weather_horizon: pd.DataFrame, params: envelope.ThermalCircuitParams,
                    equip: equipment.EquipmentModel, wb_model=None, formulation="latent",
                    limit_schedule=None, qe_predictor=None, dt=1.0, hour_encoding="periodic"):
    """Optimizer inputs for one planning horizon.

    The wet-bulb forecast is attached whenever ``wb_model`` is given so that
    comfort can be evaluated for either formulation; only the latent
    formulation feeds it to the SHR and COP models.
    """
    if formulation not in ("sensible", "latent"):
        raise UsageError(f"unknown formulation {formulation!r}")
    if formulation == "latent" and wb_model is None:
        raise UsageError("latent formulation needs a wet-bulb model")
    ts = pd.to_datetime(weather_horizon["timestamp"])
    t_out = weather_horizon["t_out_c"].to_numpy(float)
    hours = ts.dt.hour.to_numpy()
    try:
        t_eq = envelope.equivalent_boundary(t_out, params)
        q_e = predict_qe(weather_horizon, qe_predictor if qe_predictor is not None else ConstantPredictor())
        t_wb = None
        if wb_model is not None:
            t_wb = wb_model.predict(weather_features(weather_horizon, hour_encoding))
        if formulation == "latent":
            shr_k = equipment.shr(equip.shr_latent, t_wb)
            cop_k = equipment.cop(equip.cop_latent, t_out, t_wb)
        else:
            shr_k = equipment.shr(equip.shr_sensible, np.zeros(len(t_out)))
            cop_k = equipment.cop(equip.cop_sensible, t_out)
        if limit_schedule is None:
            p_lim = np.full(len(t_out), np.inf)
        else:
            p_lim = np.array([limit_schedule(int(h)) for h in hours], float)
        return ForecastBundle(t_eq=t_eq, q_e=q_e, cop=cop_k, shr=shr_k, p_lim=p_lim, dt=dt,
                              start_hour=int(hours[0]) if len(hours) else 0, t_wb=t_wb, t_out=t_out,
                              formulation=formulation)
    except HumidMpcError as exc:
        start = ts.iloc[0] if len(ts) else "?"
        raise type(exc)(f"bundle assembly failed for horizon starting {start}: {exc}") if isinstance(
            exc, (DataError, UsageError, NumericError)) else exc
