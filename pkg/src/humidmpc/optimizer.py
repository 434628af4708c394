"""Receding-horizon cooling plans as linear programs.

For a horizon of L steps the decision variables are laid out as

    T[1..L]   indoor temperature after each step (T[0] is measured)
    Q[0..L-1] sensible cooling rate (kW)
    P[0..L-1] electrical power (kW)
    z         peak power over the horizon
    e[1..L]   |T_pref - T[k]| epigraph
    h[0..L-1] max(P - P_lim, 0) epigraph (power-limit mode only)

The objective is pi_d*z + dt*sum(pi_e*P + pi_t*e) (+ dt*pi_peak*sum(h)).
Comfort deviation is charged on T[1..L], the states the plan controls; the
measured T[0] would only add a constant.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import psychro
from .exceptions import InfeasibleError, NumericError, TuningError, UsageError
from .envelope import ThermalCircuitParams
from .forecast import ForecastBundle
from .lp import LinearProgram, solve_lp

MODES = ("cost", "power_limit")
LIMIT_KW = 2.5
LIMIT_WINDOW = (16, 20)
PRICE_MARGIN = 1.1
# Sedentary activity at home, and comfort judged one degree warmer than the
# modelled air temperature as a margin for rooms that run hotter than the
# mixed return air.
TUNING_COMFORT = psychro.ComfortAssumptions(met=1.2, t_offset=1.0)


def default_price_grid():
    return np.logspace(-3, 1, 15)


@dataclass(frozen=True)
class MpcConfig:
    dt: float = 1.0
    horizon_l: int = 24
    pi_e: float = 0.14
    pi_d: float = 0.8
    pi_t: float = 0.1
    pi_peak: float = 1.4
    t_pref: float = 23.0
    delta: float = 3.0
    p_hp_max: float = 4.5
    params: ThermalCircuitParams = ThermalCircuitParams(alpha=0.86, r_out=1.04)

    def __post_init__(self):
        if not self.dt > 0:
            raise UsageError("dt must be positive")
        if self.horizon_l < 1:
            raise UsageError("horizon must have at least one step")
        if min(self.pi_e, self.pi_d, self.pi_t, self.pi_peak) < 0:
            raise UsageError("prices must be nonnegative")
        if not self.delta > 0 or not self.p_hp_max > 0:
            raise UsageError("delta and p_hp_max must be positive")

    def with_price(self, pi_t):
        return replace(self, pi_t=float(pi_t))


@dataclass
class MpcPlan:
    t_traj: np.ndarray
    q_cool: np.ndarray
    p_elec: np.ndarray
    energy_cost: float
    peak_cost: float
    discomfort_cost: float
    violation_cost: float
    status: str = "optimal"
    mode: str = "cost"
    pi_t: float = 0.0
    message: str = ""

    @property
    def total_cost(self):
        return self.energy_cost + self.peak_cost + self.discomfort_cost + self.violation_cost

    def to_dict(self):
        return {
            "status": self.status,
            "mode": self.mode,
            "pi_t": self.pi_t,
            "objective": {
                "energy_cost": self.energy_cost,
                "peak_cost": self.peak_cost,
                "discomfort_cost": self.discomfort_cost,
                "violation_cost": self.violation_cost,
                "total": self.total_cost,
            },
            "t_traj": [float(v) for v in self.t_traj],
            "q_cool": [float(v) for v in self.q_cool],
            "p_elec": [float(v) for v in self.p_elec],
            "message": self.message,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def power_limit_schedule(hour, limit_kw=LIMIT_KW, window=LIMIT_WINDOW):
    """Power limit at ``hour``: ``limit_kw`` inside [start, end), else unbounded."""
    if not 0 <= hour <= 23:
        raise UsageError(f"hour {hour} outside 0-23")
    start, end = window
    return limit_kw if start <= hour < end else math.inf


class _Layout:
    def __init__(self, L, limit):
        self.L = L
        self.T = np.arange(0, L)
        self.Q = np.arange(L, 2 * L)
        self.P = np.arange(2 * L, 3 * L)
        self.z = 3 * L
        self.e = np.arange(3 * L + 1, 4 * L + 1)
        self.h = np.arange(4 * L + 1, 5 * L + 1) if limit else np.array([], dtype=int)
        self.n = 5 * L + 1 if limit else 4 * L + 1


def build_lp(config: MpcConfig, bundle: ForecastBundle, t_initial, mode="cost") -> LinearProgram:
    """Linear program for one planning horizon; see the module docstring."""
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}; expected one of {MODES}")
    L = config.horizon_l
    if len(bundle) != L:
        raise UsageError(f"bundle has {len(bundle)} steps but the horizon is {L}")
    limit = mode == "power_limit"
    v = _Layout(L, limit)
    p = config.params
    a, R, dt = p.alpha, p.r_eff, config.dt

    c = np.zeros(v.n)
    c[v.P] = dt * config.pi_e
    c[v.z] = config.pi_d
    c[v.e] = dt * config.pi_t
    if limit:
        c[v.h] = dt * config.pi_peak

    A_eq = np.zeros((2 * L, v.n))
    b_eq = np.zeros(2 * L)
    for k in range(L):
        # T[k+1] - a*T[k] + (1-a)*R*Q[k] = (1-a)*(T_eq[k] + R*q_e[k])
        A_eq[k, v.T[k]] = 1.0
        A_eq[k, v.Q[k]] = (1.0 - a) * R
        b_eq[k] = (1.0 - a) * (bundle.t_eq[k] + R * bundle.q_e[k])
        if k == 0:
            b_eq[k] += a * t_initial
        else:
            A_eq[k, v.T[k - 1]] = -a
        # P[k] - Q[k]/(SHR*COP) = 0
        A_eq[L + k, v.P[k]] = 1.0
        A_eq[L + k, v.Q[k]] = -1.0 / (bundle.shr[k] * bundle.cop[k])

    n_ub = 3 * L + (2 * L if limit else 0)
    A_ub = np.zeros((n_ub, v.n))
    b_ub = np.zeros(n_ub)
    for k in range(L):
        A_ub[k, v.P[k]] = 1.0
        A_ub[k, v.z] = -1.0
        A_ub[L + 2 * k, v.T[k]] = 1.0
        A_ub[L + 2 * k, v.e[k]] = -1.0
        b_ub[L + 2 * k] = config.t_pref
        A_ub[L + 2 * k + 1, v.T[k]] = -1.0
        A_ub[L + 2 * k + 1, v.e[k]] = -1.0
        b_ub[L + 2 * k + 1] = -config.t_pref
        if limit:
            r = 3 * L + 2 * k
            # h >= P - P_lim; an unbounded limit is replaced by the capacity,
            # which P can never exceed
            A_ub[r, v.P[k]] = 1.0
            A_ub[r, v.h[k]] = -1.0
            b_ub[r] = min(bundle.p_lim[k], config.p_hp_max)
            A_ub[r + 1, v.h[k]] = -1.0

    lb = np.zeros(v.n)
    ub = np.full(v.n, np.inf)
    lb[v.T] = config.t_pref - config.delta
    ub[v.T] = config.t_pref + config.delta
    ub[v.Q] = config.p_hp_max * bundle.cop
    ub[v.P] = config.p_hp_max
    if limit:
        lb[v.h] = -np.inf

    names = ([f"T[{k + 1}]" for k in range(L)] + [f"Q[{k}]" for k in range(L)]
             + [f"P[{k}]" for k in range(L)] + ["peak"] + [f"dev[{k + 1}]" for k in range(L)]
             + ([f"hinge[{k}]" for k in range(L)] if limit else []))
    ub_names = [f"peak>=P[{k}]" for k in range(L)]
    for k in range(L):
        ub_names += [f"dev[{k + 1}]>=T-pref", f"dev[{k + 1}]>=pref-T"]
    for k in range(L if limit else 0):
        ub_names += [f"hinge[{k}]>=P-lim", f"hinge[{k}]>=0"]
    eq_names = [f"dynamics[{k}]" for k in range(L)] + [f"power[{k}]" for k in range(L)]
    return LinearProgram(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub,
                         var_names=names, ub_names=ub_names, eq_names=eq_names)


def _plan_from_x(config, bundle, t_initial, x, mode):
    L = config.horizon_l
    v = _Layout(L, mode == "power_limit")
    t = np.concatenate([[t_initial], x[v.T]])
    q = np.maximum(x[v.Q], 0.0)
    pw = np.maximum(x[v.P], 0.0)
    over = np.maximum(pw - bundle.p_lim, 0.0)
    return MpcPlan(
        t_traj=t, q_cool=q, p_elec=pw,
        energy_cost=float(config.dt * config.pi_e * pw.sum()),
        peak_cost=float(config.pi_d * pw.max(initial=0.0)),
        discomfort_cost=float(config.dt * config.pi_t * np.abs(config.t_pref - t[1:]).sum()),
        violation_cost=float(config.dt * config.pi_peak * over.sum()) if mode == "power_limit" else 0.0,
        status="optimal", mode=mode, pi_t=config.pi_t,
    )


def plan(config: MpcConfig, bundle: ForecastBundle, t_initial, mode="cost", previous_setpoint=None,
         tol=1e-7):
    """Solve one horizon; returns ``(plan, next_setpoint)``.

    The next set-point is the planned T[1]. When the problem is infeasible or
    the solver fails, the plan carries status ``"fallback"`` and the previous
    set-point (or ``t_pref`` when there is none) is returned instead.
    """
    lp = build_lp(config, bundle, t_initial, mode)
    try:
        sol = solve_lp(lp, tol=tol)
    except (InfeasibleError, NumericError) as exc:
        L = config.horizon_l
        hold = config.t_pref if previous_setpoint is None else float(previous_setpoint)
        fallback = MpcPlan(
            t_traj=np.full(L + 1, np.nan), q_cool=np.full(L, np.nan), p_elec=np.full(L, np.nan),
            energy_cost=math.nan, peak_cost=math.nan, discomfort_cost=math.nan, violation_cost=math.nan,
            status="fallback", mode=mode, pi_t=config.pi_t,
            message=f"{type(exc).__name__}: {exc}",
        )
        return fallback, hold
    result = _plan_from_x(config, bundle, t_initial, sol.x, mode)
    return result, float(result.t_traj[1])


def planned_comfort(result: MpcPlan, bundle: ForecastBundle, assumptions=TUNING_COMFORT, t_ref=23.0):
    """PMV/PPD of the planned temperatures under the forecast humidity.

    The wet-bulb forecast describes return air near ``t_ref``; it is turned
    into a moisture content there, which is then held fixed while the planned
    dry-bulb moves. Without a wet-bulb forecast the assumptions' constant rh
    is used.
    """
    t = result.t_traj[1:]
    if bundle.t_wb is None:
        rh = np.full(len(t), assumptions.rh_default)
    else:
        rh_ref = psychro.rh_from_wet_bulb(np.full(len(t), t_ref), np.minimum(bundle.t_wb, t_ref))
        w = psychro.humidity_ratio(t_ref, rh_ref)
        rh = np.clip(psychro.rh_from_humidity_ratio(t, w), 0.05, 1.0)
    return psychro.evaluate_trajectory(t, rh, assumptions)


@dataclass
class TuningResult:
    price: float
    prices: list = field(default_factory=list)
    mean_ppd: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    qualified: bool = True
    plan: MpcPlan | None = None


def sweep_discomfort_price(config, bundle, t_initial, price_grid=None, assumptions=TUNING_COMFORT,
                           mode="cost", stop_at_first=True) -> TuningResult:
    """Candidate sweep behind :func:`tune_discomfort_price`."""
    grid = default_price_grid() if price_grid is None else np.asarray(price_grid, float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise UsageError("price grid must be nonempty and strictly ascending")
    out = TuningResult(price=math.nan)
    chosen = None
    best_plan = None
    for price in grid:
        result, _ = plan(config.with_price(price), bundle, t_initial, mode)
        out.prices.append(float(price))
        out.statuses.append(result.status)
        if result.status != "optimal":
            out.mean_ppd.append(math.nan)
            continue
        _, ppds = planned_comfort(result, bundle, assumptions, config.t_pref)
        mean_ppd = float(np.mean(ppds))
        out.mean_ppd.append(mean_ppd)
        best_plan = result
        if chosen is None and mean_ppd <= psychro.PPD_THRESHOLD:
            chosen = float(price)
            out.plan = result
            if stop_at_first:
                break
    if all(s != "optimal" for s in out.statuses):
        raise TuningError("every candidate discomfort price produced an infeasible plan")
    if chosen is None:
        warnings.warn("no candidate discomfort price met the PPD threshold; using the grid maximum",
                      RuntimeWarning, stacklevel=3)
        out.qualified = False
        out.plan = best_plan
        chosen = float(grid[-1])
    out.price = PRICE_MARGIN * chosen
    return out


def tune_discomfort_price(config, bundle, t_initial, price_grid=None, assumptions=TUNING_COMFORT,
                          mode="cost"):
    """Smallest grid price whose plan keeps mean PPD at or below 10 %, plus 10 %."""
    return sweep_discomfort_price(config, bundle, t_initial, price_grid, assumptions, mode).price


def check_plan(config, bundle, result: MpcPlan):
    """(dynamics residual, worst constraint violation) of an optimal plan."""
    p = config.params
    t = result.t_traj
    pred = p.alpha * t[:-1] + (1 - p.alpha) * (bundle.t_eq + p.r_eff * (bundle.q_e - result.q_cool))
    dyn = float(np.max(np.abs(pred - t[1:])))
    viol = max(
        float(np.max(result.p_elec - config.p_hp_max)),
        float(np.max(-result.p_elec)),
        float(np.max(result.q_cool - config.p_hp_max * bundle.cop)),
        float(np.max(-result.q_cool)),
        float(np.max(np.abs(t[1:] - config.t_pref) - config.delta)),
        float(np.max(np.abs(result.p_elec - result.q_cool / (bundle.shr * bundle.cop)))),
    )
    return dyn, viol


__all__ = [
    "MpcConfig", "MpcPlan", "TuningResult", "power_limit_schedule", "build_lp", "plan",
    "planned_comfort", "sweep_discomfort_price", "tune_discomfort_price", "check_plan",
    "default_price_grid",
]
