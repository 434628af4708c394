"""Humidity-aware model predictive control for residential air conditioning.

Submodules: psychro (moist air and comfort), envelope (2R1C identification),
equipment (COP and SHR maps), forecast (wet-bulb GP and forecast bundles),
lp (dense simplex), optimizer (MPC and price tuning), simkit (closed-loop
plant), metrics (field-study analytics) and cli.
"""
__version__ = "0.1.0"

from .envelope import EnvelopeFit, ThermalCircuitParams, identify
from .exceptions import (DataError, DomainError, FitError, HumidMpcError, IdentificationError, InfeasibleError,
                         MetricError, NumericError, TuningError, UnboundedError, UsageError)
from .optimizer import MpcConfig, MpcPlan, plan, tune_discomfort_price
from .telemetry import TelemetryLog

__all__ = [
    "DataError", "DomainError", "EnvelopeFit", "FitError", "HumidMpcError", "IdentificationError",
    "InfeasibleError", "MetricError", "MpcConfig", "MpcPlan", "NumericError", "TelemetryLog",
    "ThermalCircuitParams", "TuningError", "UnboundedError", "UsageError", "identify", "plan",
    "tune_discomfort_price", "__version__",
]
