"""Telemetry and weather tables with CSV round-tripping."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataError

TELEMETRY_REQUIRED = ("timestamp", "t_in", "t_out", "q_cool_kw", "p_kw", "rh_in", "rh_out")
TELEMETRY_COLUMNS = (
    "timestamp", "t_in", "t_out", "q_cool_kw", "p_kw", "rh_in", "rh_out",
    "t_wb_return", "setpoint", "q_latent_kw", "shr_realized",
)
WEATHER_COLUMNS = ("timestamp", "t_out_c", "rh_out", "ghi_kw_m2", "wind_m_s")

FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: pd.Timestamp
    t_out: float
    rh_out: float
    i_solar: float
    wind: float

    def __post_init__(self):
        if not 0.0 <= self.rh_out <= 1.0:
            raise DataError(f"rh_out={self.rh_out} outside [0, 1]")
        if self.i_solar < 0 or self.wind < 0:
            raise DataError("solar irradiance and wind speed must be nonnegative")


def _step_hours(timestamps):
    ts = np.asarray(pd.to_datetime(timestamps).to_numpy(), dtype="datetime64[s]")
    if len(ts) < 2:
        return None
    steps = np.diff(ts).astype(float) / 3600.0
    if not np.allclose(steps, steps[0]) or steps[0] <= 0:
        raise DataError("timestamps are not uniformly increasing")
    return float(steps[0])


class TelemetryLog:
    """Uniform-step record of a building run.

    Wraps a DataFrame whose columns follow ``TELEMETRY_COLUMNS``; only
    ``TELEMETRY_REQUIRED`` must be present. ``footer`` carries run metadata
    such as controller error counts.
    """

    def __init__(self, frame: pd.DataFrame, footer=None):
        missing = [c for c in TELEMETRY_REQUIRED if c not in frame.columns]
        if missing:
            raise DataError(f"telemetry is missing required columns: {', '.join(missing)}")
        frame = frame.copy()
        frame["timestamp"] = pd.to_datetime(frame["timestamp"])
        self.frame = frame.reset_index(drop=True)
        self.dt_hours = _step_hours(self.frame["timestamp"])
        self.footer = dict(footer or {})

    def __len__(self):
        return len(self.frame)

    def __getitem__(self, column):
        return self.frame[column].to_numpy()

    @property
    def n_days(self):
        step = self.dt_hours or 1.0
        return len(self.frame) * step / 24.0

    def hourly(self):
        """Aggregate to hourly records.

        Temperatures are taken at the start of each hour (states); fluxes and
        power are hour averages.
        """
        if self.dt_hours is None or abs(self.dt_hours - 1.0) < 1e-9:
            return self
        if self.dt_hours > 1.0:
            raise DataError(f"cannot refine a {self.dt_hours} h log to hourly")
        per_hour = round(1.0 / self.dt_hours)
        n = len(self.frame) // per_hour * per_hour
        f = self.frame.iloc[:n]
        groups = np.arange(n) // per_hour
        state_cols = [c for c in ("timestamp", "t_in", "rh_in", "setpoint") if c in f.columns]
        mean_cols = [c for c in f.columns if c not in state_cols]
        first = f[state_cols].groupby(groups).first()
        means = f[mean_cols].groupby(groups).mean()
        out = pd.concat([first, means], axis=1)
        return TelemetryLog(out[[c for c in f.columns]], footer=self.footer)

    def to_csv(self, path=None):
        cols = [c for c in TELEMETRY_COLUMNS if c in self.frame.columns]
        cols += [c for c in self.frame.columns if c not in cols]
        out = self.frame[cols].copy()
        out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%S")
        text = out.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        if path is None:
            return text
        Path(path).write_text(text, encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path_or_buffer):
        frame = read_checked_csv(path_or_buffer, TELEMETRY_REQUIRED)
        return cls(frame)


def read_checked_csv(path_or_buffer, required):
    """Read a headered UTF-8 CSV, checking columns and numeric cells.

    Raises DataError naming the first offending row and column.
    """
    if isinstance(path_or_buffer, (str, Path)):
        text = Path(path_or_buffer).read_text(encoding="utf-8")
    else:
        text = path_or_buffer.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataError("empty file: a header row is required")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"row 1: missing columns {', '.join(missing)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError("no data rows after header")
    data = {}
    for j, name in enumerate(header):
        col = []
        for i, r in enumerate(body, start=2):
            if j >= len(r):
                raise DataError(f"row {i}, column '{name}': missing value")
            cell = r[j].strip()
            if name == "timestamp":
                try:
                    col.append(pd.Timestamp(cell))
                except ValueError as exc:
                    raise DataError(f"row {i}, column 'timestamp': not ISO-8601 ({cell!r})") from exc
            else:
                try:
                    col.append(float(cell) if cell != "" else np.nan)
                except ValueError as exc:
                    raise DataError(f"row {i}, column '{name}': not a number ({cell!r})") from exc
        data[name] = col
    frame = pd.DataFrame(data)
    for name in required:
        if name != "timestamp" and frame[name].isna().any():
            i = int(np.flatnonzero(frame[name].isna())[0]) + 2
            raise DataError(f"row {i}, column '{name}': missing value")
    return frame


def read_weather_csv(path_or_buffer):
    """Weather or forecast CSV. A ``lead_h`` column, if present, is kept."""
    frame = read_checked_csv(path_or_buffer, WEATHER_COLUMNS)
    check_weather(frame)
    return frame


def write_weather_csv(frame, path=None):
    out = frame.copy()
    out["timestamp"] = pd.to_datetime(out["timestamp"]).dt.strftime("%Y-%m-%dT%H:%M:%S")
    text = out.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return path


def check_weather(frame):
    missing = [c for c in WEATHER_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"weather is missing columns: {', '.join(missing)}")
    if ((frame["rh_out"] < 0) | (frame["rh_out"] > 1)).any():
        raise DataError("rh_out must lie in [0, 1]")
    if (frame["ghi_kw_m2"] < 0).any() or (frame["wind_m_s"] < 0).any():
        raise DataError("solar irradiance and wind speed must be nonnegative")
    return frame
