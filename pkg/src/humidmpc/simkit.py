"""Closed-loop building simulation.

The truth plant has three states: indoor air temperature, a slow internal
mass temperature and indoor humidity ratio. It advances in 5-minute steps
while controllers act hourly. Its thermal structure (a free-floating mass
node) differs from the controller's fixed-boundary 2R1C model, so a
controller never replays its own model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from . import envelope, equipment, forecast, optimizer, psychro
from .exceptions import HumidMpcError, TuningError, UsageError
from .telemetry import TelemetryLog

PLANT_DT_H = 5.0 / 60.0
CONTROLLERS = ("benchmark", "mpc_sensible", "mpc_latent", "excitation")
AIR_DENSITY = 1.2
W_FLOOR = 1e-4


def _two_peak(base, morning, evening):
    s = np.full(24, float(base))
    s[6:9] += morning
    s[18:22] += evening
    return s


DEFAULT_MOISTURE_KG_H = _two_peak(0.15, 0.35, 0.3)


@dataclass(frozen=True)
class PlantParams:
    """Truth-plant constants (kW, kWh/°C, °C/kW, m³, kg)."""

    r_out: float = 1.0
    r_m: float = 4.0
    c_air: float = 4.0
    c_mass: float = 30.0
    solar_aperture: float = 2.5
    internal_gain: tuple = tuple(_two_peak(0.6, 0.4, 0.6))
    volume_m3: float = 400.0
    moisture_mass_kg: float = 2000.0
    tracker: str = "velocity"
    k_p: float = 25.0
    k_i: float = 60.0
    deadband: float = 0.2
    p_hp_max: float = 4.5
    # inverter units run past their rated capacity at full speed; 20 kW keeps the
    # electrical ceiling near p_hp_max
    max_capacity_kw: float = 20.0

    def __post_init__(self):
        if self.tracker not in ("velocity", "proportional"):
            raise UsageError(f"unknown tracker {self.tracker!r}")

    @property
    def air_mass(self):
        return AIR_DENSITY * self.volume_m3


@dataclass
class PlantState:
    t_in: float
    w_in: float
    t_mass: float
    clamp_events: int = 0

    def __post_init__(self):
        if not self.w_in > 0:
            raise UsageError("humidity ratio must be positive")

    @property
    def rh_in(self):
        return float(min(psychro.rh_from_humidity_ratio(self.t_in, self.w_in), 1.0))

    @property
    def t_wb(self):
        return psychro.wet_bulb(self.t_in, max(self.rh_in, 0.05))

    @classmethod
    def initial(cls, t_in=23.0, rh=0.55, t_mass=None):
        return cls(t_in=t_in, w_in=float(psychro.humidity_ratio(t_in, rh)), t_mass=t_in if t_mass is None else t_mass)


def plant_step(state: PlantState, weather, q_cool, shr_realized, dt=PLANT_DT_H, params=PlantParams(),
               moisture_gen=0.0, infiltration_ach=0.5, q_gain=None) -> PlantState:
    """Advance the truth plant by ``dt`` hours.

    ``weather`` is a WeatherRecord or a mapping with t_out, rh_out and
    i_solar. ``q_gain`` overrides the solar-plus-internal heat gain (kW);
    ``moisture_gen`` is the occupant moisture source (kg/h).
    """
    if q_cool < 0 or dt <= 0:
        raise UsageError("q_cool must be nonnegative and dt positive")
    get = weather.get if isinstance(weather, dict) else lambda k: getattr(weather, k)
    t_out, rh_out = get("t_out"), get("rh_out")
    if q_gain is None:
        q_gain = params.solar_aperture * get("i_solar")
    g_out, g_m = 1.0 / params.r_out, 1.0 / params.r_m
    dT = (g_out * (t_out - state.t_in) + g_m * (state.t_mass - state.t_in) + q_gain - q_cool) / params.c_air
    dTm = g_m * (state.t_in - state.t_mass) / params.c_mass
    t_in = state.t_in + dt * dT
    t_mass = state.t_mass + dt * dTm

    w_out = float(psychro.humidity_ratio(t_out, rh_out))
    exchange = infiltration_ach * params.air_mass * (w_out - state.w_in)
    latent_kg_h = q_cool * (1.0 / shr_realized - 1.0) * 3600.0 / psychro.H_FG_KJ_KG
    events = state.clamp_events
    available = (state.w_in - W_FLOOR) * params.moisture_mass_kg / dt + moisture_gen + exchange
    if latent_kg_h > available:
        latent_kg_h = max(available, 0.0)
        events += 1
    w_in = state.w_in + dt * (moisture_gen + exchange - latent_kg_h) / params.moisture_mass_kg
    w_sat = float(psychro.humidity_ratio(t_in, 1.0))
    if w_in > w_sat:
        w_in = w_sat
        events += 1
    if w_in < W_FLOOR:
        w_in = W_FLOOR
        events += 1
    return PlantState(t_in=t_in, w_in=w_in, t_mass=t_mass, clamp_events=events)


def device_tracker(state: PlantState, setpoint, capacity, k_p=3.0, deadband=0.2):
    """Proportional thermostat call (kW) with saturation and a deadband.

    No cooling is requested until the room is more than ``deadband`` above
    the set-point; past that the command is ``k_p * (t_in - setpoint)``.
    """
    if capacity < 0:
        raise UsageError("capacity must be nonnegative")
    err = state.t_in - setpoint
    if err <= deadband:
        return 0.0
    return float(min(k_p * err, capacity))


def velocity_tracker(state: PlantState, setpoint, capacity, k_p=25.0, k_i=60.0, memory=None, dt=PLANT_DT_H):
    """Variable-speed drive loop in velocity form; returns (q, memory).

    Proportional action acts on the measured temperature only, so a set-point
    step is followed by integral action instead of a jump in the command.
    ``memory`` is the previous (command kW, indoor °C) pair; clipping the
    command to [0, capacity] doubles as anti-windup.
    """
    if capacity < 0:
        raise UsageError("capacity must be nonnegative")
    q_prev, t_prev = memory if memory is not None else (0.0, state.t_in)
    q = q_prev + k_p * (state.t_in - t_prev) + k_i * (state.t_in - setpoint) * dt
    q = float(min(max(q, 0.0), capacity))
    return q, (q, state.t_in)


@dataclass(frozen=True)
class WeatherProfile:
    t_mean: float
    t_amp: float
    dew_mean: float
    t_peak_hour: float = 15.0
    dew_amp: float = 0.8
    daily_sd_t: float = 1.5
    daily_sd_dew: float = 1.2
    hourly_sd_t: float = 0.4
    ghi_peak: float = 0.85
    cloudiness: float = 0.3
    wind_mean: float = 2.5
    wind_sd: float = 1.0

    def quiet(self):
        """Same profile with every random term switched off."""
        return replace(self, daily_sd_t=0.0, daily_sd_dew=0.0, hourly_sd_t=0.0, cloudiness=0.0, wind_sd=0.0)


PROFILES = {
    "hot_humid": WeatherProfile(t_mean=31.0, t_amp=5.0, dew_mean=20.5, daily_sd_t=0.8),
    "mild_dry": WeatherProfile(t_mean=22.6, t_amp=3.0, dew_mean=12.0, daily_sd_t=1.0, daily_sd_dew=1.5),
    "july": WeatherProfile(t_mean=26.0, t_amp=5.0, dew_mean=18.5, daily_sd_t=2.0, daily_sd_dew=2.0),
    "neutral": WeatherProfile(t_mean=23.0, t_amp=0.0, dew_mean=12.0, dew_amp=0.0, daily_sd_t=0.0,
                              daily_sd_dew=0.0, hourly_sd_t=0.0, ghi_peak=0.0, cloudiness=0.0,
                              wind_mean=0.0, wind_sd=0.0),
}


def weather_synth(profile="hot_humid", days=8, seed=0, start="2023-07-10"):
    """Hourly weather: diurnal sinusoid, dewpoint-driven RH, clear-sky solar.

    Day-to-day temperature and dewpoint offsets follow an AR(1) process.
    ``profile`` is a WeatherProfile or a name in ``PROFILES``.
    """
    if days < 1:
        raise UsageError("days must be at least 1")
    prof = PROFILES[profile] if isinstance(profile, str) else profile
    rng = np.random.default_rng(seed)
    n = int(days) * 24
    hours = np.arange(n) % 24
    day = np.arange(n) // 24
    drift_t = np.zeros(days)
    drift_dew = np.zeros(days)
    for d in range(days):
        prev_t = drift_t[d - 1] if d else 0.0
        prev_dew = drift_dew[d - 1] if d else 0.0
        drift_t[d] = 0.6 * prev_t + prof.daily_sd_t * 0.8 * rng.standard_normal()
        drift_dew[d] = 0.6 * prev_dew + prof.daily_sd_dew * 0.8 * rng.standard_normal()
    cloud = 1.0 - prof.cloudiness * rng.uniform(size=days)
    phase = 2.0 * np.pi * (hours - prof.t_peak_hour) / 24.0
    t_out = prof.t_mean + drift_t[day] + prof.t_amp * np.cos(phase) + prof.hourly_sd_t * rng.standard_normal(n)
    dew = prof.dew_mean + drift_dew[day] + prof.dew_amp * np.cos(phase - 1.0)
    dew = np.minimum(dew, t_out - 0.3)
    rh = np.clip(psychro.saturation_pressure(dew) / psychro.saturation_pressure(t_out), 0.05, 1.0)
    sun = np.clip(np.sin(np.pi * (hours - 6.0) / 14.0), 0.0, None)
    ghi = prof.ghi_peak * sun**1.2 * cloud[day]
    wind = np.clip(prof.wind_mean + prof.wind_sd * rng.standard_normal(n), 0.0, None)
    ts = pd.date_range(pd.Timestamp(start), periods=n, freq="h")
    return pd.DataFrame({"timestamp": ts, "t_out_c": t_out, "rh_out": rh, "ghi_kw_m2": ghi, "wind_m_s": wind})


def daily_dewpoints(weather):
    """Mean outdoor dewpoint per day."""
    dew = psychro.dew_point(weather["t_out_c"].to_numpy(float), np.clip(weather["rh_out"].to_numpy(float), 0.01, 1.0))
    return pd.Series(dew).groupby(np.arange(len(dew)) // 24).mean().to_numpy()


@dataclass
class ControllerModels:
    """Everything an MPC controller learned from training telemetry."""

    params: envelope.ThermalCircuitParams
    equip: equipment.EquipmentModel
    wb_model: forecast.GPRegressor | None
    qe_model: object
    fit: envelope.EnvelopeFit | None = None
    wb_rmse: float = math.nan
    wb_X: np.ndarray | None = None
    wb_y: np.ndarray | None = None

    def summary(self):
        return {
            "envelope": self.fit.to_dict() if self.fit is not None else {"params": self.params.to_dict()},
            "wet_bulb_validation_rmse_c": None if math.isnan(self.wb_rmse) else self.wb_rmse,
            "shr_latent": self.equip.shr_latent.to_dict(),
        }


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    controller: str = "benchmark"
    mode: str = "cost"
    days: int = 8
    profile: str | WeatherProfile = "hot_humid"
    seed: int = 0
    weather: pd.DataFrame | None = None
    plant: PlantParams = PlantParams()
    moisture_gen: tuple = tuple(DEFAULT_MOISTURE_KG_H)
    infiltration_ach: float = 1.5
    mpc: optimizer.MpcConfig = optimizer.MpcConfig()
    benchmark_setpoint: float = 23.0
    tune_every_h: int = 12
    price_grid: tuple | None = None
    comfort: psychro.ComfortAssumptions = optimizer.TUNING_COMFORT
    t_initial: float = 23.0
    rh_initial: float = 0.55
    mpc_day_fraction: float = 0.25
    gains: bool = True
    wb_online_window_h: int = 168

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise UsageError(f"unknown controller {self.controller!r}; expected one of {CONTROLLERS}")
        if self.mode not in ("cost", "power_limit"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.days < 1:
            raise UsageError("scenario duration must be at least one day")
        if self.infiltration_ach < 0 or min(self.moisture_gen) < 0:
            raise UsageError("rates must be nonnegative")

    @property
    def formulation(self):
        return "sensible" if self.controller == "mpc_sensible" else "latent"

    def weather_frame(self):
        """Hourly weather covering the run plus one horizon of lookahead."""
        if self.weather is not None:
            return self.weather.reset_index(drop=True)
        extra = math.ceil(self.mpc.horizon_l / 24)
        return weather_synth(self.profile, self.days + extra, self.seed)


def _excitation_days(days, fraction, rng):
    n = int(round(fraction * days))
    flags = np.zeros(days, dtype=bool)
    if n:
        flags[rng.choice(days, size=n, replace=False)] = True
    return flags


def run_closed_loop(scenario: ScenarioConfig, models: ControllerModels | None = None) -> TelemetryLog:
    """Simulate ``scenario`` and return 5-minute telemetry.

    MPC controllers re-plan every hour from the measured indoor temperature
    and retune the discomfort price every ``tune_every_h`` hours. The
    ``excitation`` controller produces training data: it holds the benchmark
    set-point except on a random ``mpc_day_fraction`` of days. On those days
    it runs latent MPC when ``models`` is given, and otherwise draws
    set-points inside the comfort band every two hours.
    """
    sc = scenario
    is_mpc = sc.controller.startswith("mpc")
    if is_mpc and models is None:
        raise UsageError(f"controller {sc.controller} needs fitted controller models")
    weather = sc.weather_frame()
    n_hours = sc.days * 24
    L = sc.mpc.horizon_l
    if len(weather) < n_hours + (L if models is not None else 0):
        raise UsageError("weather series too short for the scenario and horizon")
    rng = np.random.default_rng(sc.seed + 7919)
    excite = _excitation_days(sc.days, sc.mpc_day_fraction, rng) if sc.controller == "excitation" else None
    shr_model = models.equip.shr_latent if models is not None else equipment.fit_shr(equipment.load_performance_table())
    plant = sc.plant
    config = sc.mpc
    if models is not None:
        config = replace(sc.mpc, params=models.params, p_hp_max=plant.p_hp_max)
    schedule = optimizer.power_limit_schedule if sc.mode == "power_limit" else None
    wb_model = models.wb_model if models is not None else None
    online = (models is not None and wb_model is not None and models.wb_X is not None
              and sc.wb_online_window_h > 0)
    features = forecast.weather_features(weather) if online else None

    t_out_h = weather["t_out_c"].to_numpy(float)
    rh_out_h = weather["rh_out"].to_numpy(float)
    ghi_h = weather["ghi_kw_m2"].to_numpy(float)
    ts_h = pd.to_datetime(weather["timestamp"])
    hour_of_day = ts_h.dt.hour.to_numpy()
    internal = np.asarray(plant.internal_gain, float)
    moisture = np.asarray(sc.moisture_gen, float)

    state = PlantState.initial(sc.t_initial, sc.rh_initial)
    sub = int(round(1.0 / PLANT_DT_H))
    n = n_hours * sub
    cols = {k: np.empty(n) for k in ("t_in", "t_out", "q_cool_kw", "p_kw", "rh_in", "rh_out",
                                     "t_wb_return", "setpoint", "q_latent_kw", "shr_realized")}
    setpoint = sc.benchmark_setpoint
    memory = None
    price = config.pi_t
    errors = fallbacks = tuning_failures = 0
    prices, ppd_plans = [], []

    for k in range(n_hours):
        h = int(hour_of_day[k])
        mpc_day = sc.controller == "excitation" and excite[k // 24]
        if is_mpc or (mpc_day and models is not None):
            horizon = weather.iloc[k:k + L]
            if online and k % sc.tune_every_h == 0 and k > 0:
                # condition the wet-bulb model on the most recent measured hours
                y_run = cols["t_wb_return"][:k * sub].reshape(k, sub).mean(axis=1)
                X_win = np.vstack([models.wb_X, features[:k]])[-sc.wb_online_window_h:]
                y_win = np.concatenate([models.wb_y, y_run])[-sc.wb_online_window_h:]
                wb_model = models.wb_model.refit(X_win, y_win)
            try:
                bundle = forecast.assemble_bundle(horizon, models.params, models.equip, wb_model,
                                                  sc.formulation, schedule, models.qe_model)
                if k % sc.tune_every_h == 0:
                    try:
                        tuned = optimizer.sweep_discomfort_price(config, bundle, state.t_in, sc.price_grid,
                                                                 sc.comfort, sc.mode)
                        price = tuned.price
                        ppd_plans.append(float(np.nanmin(tuned.mean_ppd)))
                    except TuningError:
                        tuning_failures += 1
                    prices.append(price)
                result, setpoint = optimizer.plan(config.with_price(price), bundle, state.t_in, sc.mode, setpoint)
                if result.status != "optimal":
                    fallbacks += 1
            except HumidMpcError:
                errors += 1
        elif mpc_day:
            setpoint = float(rng.uniform(sc.mpc.t_pref - 2.0, sc.mpc.t_pref + 3.0)) if k % 2 == 0 else setpoint
        else:
            setpoint = sc.benchmark_setpoint

        for j in range(sub):
            i = k * sub + j
            t_wb = state.t_wb
            shr_k = float(equipment.shr(shr_model, t_wb))
            cop_k = float(equipment.true_cop(t_wb, t_out_h[k]))
            capacity = float(min(equipment.true_total_capacity(t_wb, t_out_h[k], plant.max_capacity_kw) * shr_k,
                                 plant.p_hp_max * shr_k * cop_k))
            if plant.tracker == "velocity":
                q, memory = velocity_tracker(state, setpoint, capacity, plant.k_p, plant.k_i, memory)
            else:
                q = device_tracker(state, setpoint, capacity, plant.k_p, plant.deadband)
            cols["t_in"][i] = state.t_in
            cols["t_out"][i] = t_out_h[k]
            cols["q_cool_kw"][i] = q
            cols["p_kw"][i] = q / (shr_k * cop_k)
            cols["rh_in"][i] = state.rh_in
            cols["rh_out"][i] = rh_out_h[k]
            cols["t_wb_return"][i] = t_wb
            cols["setpoint"][i] = setpoint
            cols["q_latent_kw"][i] = q * (1.0 / shr_k - 1.0)
            cols["shr_realized"][i] = shr_k
            gain = plant.solar_aperture * ghi_h[k] + internal[h] if sc.gains else 0.0
            wx = {"t_out": t_out_h[k], "rh_out": rh_out_h[k], "i_solar": ghi_h[k]}
            state = plant_step(state, wx, q, shr_k, PLANT_DT_H, plant,
                               moisture_gen=moisture[h] if sc.gains else 0.0,
                               infiltration_ach=sc.infiltration_ach, q_gain=gain)

    frame = pd.DataFrame({"timestamp": pd.date_range(ts_h.iloc[0], periods=n, freq="5min"), **cols})
    footer = {
        "scenario": sc.name,
        "controller": sc.controller,
        "mode": sc.mode,
        "days": sc.days,
        "seed": sc.seed,
        "controller_errors": errors,
        "fallback_setpoints": fallbacks,
        "tuning_failures": tuning_failures,
        "plant_clamp_events": state.clamp_events,
        "tuned_prices": [round(p, 10) for p in prices],
    }
    if excite is not None:
        footer["excitation_days"] = [int(d) for d in np.flatnonzero(excite)]
    return TelemetryLog(frame, footer=footer)


def hourly_training_arrays(log: TelemetryLog, weather: pd.DataFrame):
    """Hourly weather features aligned with hourly telemetry rows."""
    hourly = log.hourly().frame
    wx = weather.set_index(pd.to_datetime(weather["timestamp"])).loc[hourly["timestamp"]].reset_index(drop=True)
    return hourly, wx


def train_controller_models(days=24, seed=11, profile="july", plant=PlantParams(), t_m=23.0,
                            mpc_day_fraction=0.25, equip=None, mode="cost", scenario_kwargs=None):
    """Simulate a training period and fit every controller model.

    Training runs twice over the same weather. The first pass excites the
    house with random set-points and yields preliminary models; the second
    replaces those days with latent MPC days driven by the preliminary
    models, so the wet-bulb model sees the set-point pattern MPC produces.
    Returns the final models and the second-pass telemetry.
    """
    sc = ScenarioConfig(name="training", controller="excitation", mode=mode, days=days, profile=profile,
                        seed=seed, plant=plant, mpc_day_fraction=mpc_day_fraction, **(scenario_kwargs or {}))
    weather = sc.weather_frame()
    preliminary = fit_controller_models(run_closed_loop(sc), weather, t_m=t_m, equip=equip)
    log = run_closed_loop(sc, preliminary)
    return fit_controller_models(log, weather, t_m=t_m, equip=equip), log


def fit_controller_models(log: TelemetryLog, weather, t_m=22.0, equip=None, frozen=None, qe_constant=None):
    """Identify the envelope and fit the wet-bulb and exogenous-power models."""
    equip = equipment.EquipmentModel.from_table() if equip is None else equip
    fit = envelope.identify(log, t_m=t_m, frozen=frozen)
    hourly, wx = hourly_training_arrays(log, weather)
    X = forecast.weather_features(wx)
    y_wb = hourly["t_wb_return"].to_numpy(float)
    n_val = len(y_wb) // 4
    probe = forecast.gpr_fit(X[:-n_val], y_wb[:-n_val])
    wb_rmse = float(np.sqrt(np.mean((probe.predict(X[-n_val:]) - y_wb[-n_val:]) ** 2)))
    wb_model = forecast.GPRegressor(length_scales=probe.length_scales_, signal_variance=probe.signal_variance_,
                                    noise_variance=probe.noise_variance_).fit(X, y_wb)
    if qe_constant is not None:
        qe_model = forecast.ConstantPredictor(qe_constant).fit()
    else:
        qe_model = forecast.gpr_fit(X[:len(fit.qe_series)], fit.qe_series)
    return ControllerModels(params=fit.params, equip=equip, wb_model=wb_model, qe_model=qe_model, fit=fit,
                            wb_rmse=wb_rmse, wb_X=X, wb_y=y_wb)


def july_month(days=30, seed=11):
    """The bundled synthetic July month: hourly excitation telemetry and its weather."""
    sc = ScenarioConfig(name="july", controller="excitation", days=days, profile="july", seed=seed)
    return run_closed_loop(sc).hourly(), sc.weather_frame()
