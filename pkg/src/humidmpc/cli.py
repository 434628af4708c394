"""Command-line pipelines: identify, simulate and report.

Every command writes its artifacts as files. Outputs depend only on inputs
and the seed; wall-clock details go to a separate ``metadata.json``.

Exit codes: 0 success, 2 input error, 3 numeric or solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, envelope, metrics, optimizer, psychro, simkit
from .exceptions import (DataError, DomainError, FitError, IdentificationError, InfeasibleError,
                         MetricError, NumericError, TuningError, UnboundedError, UsageError)
from .telemetry import TelemetryLog, read_weather_csv

log = logging.getLogger("humidmpc")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
# Recalibrated envelope values used by --paper-constants (alpha, R in °C/kW).
PAPER_ENVELOPE = (0.77, 0.42)
MODE_ALIASES = {"cost": "cost", "limit": "power_limit", "power_limit": "power_limit"}
INPUT_ERRORS = (UsageError, DataError, DomainError, MetricError, FileNotFoundError, IsADirectoryError,
                tomllib.TOMLDecodeError, KeyError, ValueError)
NUMERIC_ERRORS = (NumericError, InfeasibleError, UnboundedError, TuningError, IdentificationError, FitError)


class InputError(UsageError):
    """A command-line input or artifact is missing or malformed."""


def exit_code_for(exc) -> int:
    if isinstance(exc, NUMERIC_ERRORS):
        return EXIT_NUMERIC
    if isinstance(exc, (InputError,) + INPUT_ERRORS):
        return EXIT_INPUT
    return EXIT_NUMERIC


def _dump(obj, path):
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_metadata(out, command, started, argv):
    _dump({"command": command, "argv": list(argv), "version": __version__,
           "started_unix": started, "finished_unix": time.time()}, Path(out) / "metadata.json")


def parse_frozen(text):
    """``"alpha,R"`` or a TOML file with ``alpha`` and ``r`` (or ``r_eff``) keys."""
    if text is None:
        return None
    path = Path(text)
    if path.suffix == ".toml" or path.exists():
        data = tomllib.loads(path.read_text(encoding="utf-8"))
        data = data.get("envelope", data)
        alpha, r = data["alpha"], data.get("r_eff", data.get("r"))
    else:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise InputError(f"--frozen-params expects 'alpha,R', got {text!r}")
        alpha, r = map(float, parts)
    return float(alpha), float(r)


def frozen_params(pair, t_m=23.0):
    if pair is None:
        return None
    alpha, r = pair
    return envelope.ThermalCircuitParams.from_effective(alpha, r, 1.0, t_m=t_m)


# --------------------------------------------------------------------------- manifest

@dataclass
class ScenarioSpec:
    label: str
    controller: str
    mode: str = "cost"
    profile: str = "hot_humid"
    days: int = 8
    seed: int | None = None
    weather: Path | None = None


@dataclass
class ExperimentManifest:
    name: str
    seed: int
    out: Path
    scenarios: list
    training: dict = field(default_factory=dict)
    workers: int = 2
    source: Path | None = None


def _resolve(base, value):
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"manifest not found: {path}")
    data = tomllib.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    exp = data.get("experiment", {})
    rows = data.get("scenario", [])
    if not rows:
        raise InputError("manifest defines no [[scenario]] entries")
    scenarios = []
    for i, row in enumerate(rows):
        if "controller" not in row:
            raise InputError(f"scenario #{i + 1} has no controller")
        mode = MODE_ALIASES.get(row.get("mode", "cost"))
        if mode is None:
            raise InputError(f"scenario #{i + 1}: unknown mode {row.get('mode')!r}")
        if row["controller"] not in simkit.CONTROLLERS:
            raise InputError(f"scenario #{i + 1}: unknown controller {row['controller']!r}")
        label = row.get("label", f"{row['controller']}-{mode}")
        scenarios.append(ScenarioSpec(label=label, controller=row["controller"], mode=mode,
                                      profile=row.get("profile", "hot_humid"), days=int(row.get("days", 8)),
                                      seed=row.get("seed"), weather=_resolve(base, row.get("weather"))))
    labels = [s.label for s in scenarios]
    dupes = sorted({x for x in labels if labels.count(x) > 1})
    if dupes:
        raise InputError(f"scenario labels must be unique: {', '.join(dupes)}")
    training = dict(data.get("training", {}))
    for key in ("telemetry", "weather"):
        if key in training:
            training[key] = _resolve(base, training[key])
    for p in [s.weather for s in scenarios] + [training.get("telemetry"), training.get("weather")]:
        if p is not None and not Path(p).is_file():
            raise InputError(f"referenced file does not exist: {p}")
    if ("telemetry" in training) != ("weather" in training):
        raise InputError("training from files needs both telemetry and weather")
    for s in scenarios:
        if s.weather is None and s.profile not in simkit.PROFILES:
            raise InputError(f"scenario {s.label}: unknown profile {s.profile!r}")
    return ExperimentManifest(name=exp.get("name", path.stem), seed=int(exp.get("seed", 0)),
                              out=_resolve(base, exp.get("out", "results")), scenarios=scenarios,
                              training=training, workers=int(exp.get("workers", 2)), source=path)


# --------------------------------------------------------------------------- identify

def cmd_identify(telemetry_path, out, frozen=None, t_m=23.0):
    """Fit the envelope and write ``envelope.json`` plus a residual CSV."""
    path = Path(telemetry_path)
    if not path.is_file():
        raise InputError(f"telemetry file not found: {path}")
    if path.stat().st_size == 0:
        raise InputError(f"telemetry file is empty: {path}")
    telemetry = TelemetryLog.from_csv(path)
    fit = envelope.identify(telemetry, t_m=t_m, frozen=frozen_params(frozen, t_m))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(fit.to_dict(), out / "envelope.json")
    pd.DataFrame({"step": np.arange(len(fit.qe_series)), "qe_kw": fit.qe_series}).to_csv(
        out / "residuals.csv", index=False, float_format="%.6f", lineterminator="\n")
    return fit


# --------------------------------------------------------------------------- simulate

def _training_models(manifest: ExperimentManifest, frozen):
    tr = manifest.training
    params = frozen_params(frozen)
    if "telemetry" in tr:
        train_log = TelemetryLog.from_csv(tr["telemetry"])
        weather = read_weather_csv(tr["weather"])
        return simkit.fit_controller_models(train_log, weather, t_m=float(tr.get("t_m", 23.0)), frozen=params)
    models, _ = simkit.train_controller_models(days=int(tr.get("days", 24)), seed=int(tr.get("seed", 11)),
                                               profile=tr.get("profile", "july"),
                                               mpc_day_fraction=float(tr.get("mpc_day_fraction", 0.25)),
                                               mode=MODE_ALIASES[tr.get("mode", "cost")])
    if params is not None:
        models = replace(models, params=params)
    return models


def _scenario_config(spec: ScenarioSpec, seed):
    weather = read_weather_csv(spec.weather) if spec.weather is not None else None
    if weather is not None and len(weather) < spec.days * 24 + 24:
        raise InputError(f"scenario {spec.label}: weather covers fewer than {spec.days + 1} days")
    return simkit.ScenarioConfig(name=spec.label, controller=spec.controller, mode=spec.mode, days=spec.days,
                                 profile=spec.profile, seed=seed if spec.seed is None else int(spec.seed),
                                 weather=weather)


def scenario_row(spec: ScenarioSpec, telemetry: TelemetryLog):
    """Comparison row for one scenario: energy, violations and comfort."""
    schedule = optimizer.power_limit_schedule
    days = metrics.daily_summaries(telemetry, spec.label, schedule)
    stats = metrics.violation_stats(telemetry, schedule)
    comfort = psychro.comfort_series(telemetry, optimizer.TUNING_COMFORT)
    energy = float(telemetry.frame["p_kw"].sum() * telemetry.dt_hours)
    try:
        wne = metrics.weather_normalized_energy(days)
    except MetricError:
        wne = None
    return {
        "controller": spec.controller,
        "mode": spec.mode,
        "profile": spec.profile if spec.weather is None else str(spec.weather.name),
        "testing_days": spec.days,
        "energy_kwh": energy,
        "weather_normalized_energy_kwh_per_c": wne,
        "violation_minutes_per_day": stats.minutes_per_day,
        "violation_magnitude_kw": stats.mean_magnitude_kw,
        "violated": stats.violated,
        "mean_ppd": comfort.mean_ppd,
        "hours_ppd_above_10": comfort.hours_above_threshold,
        "controller_errors": telemetry.footer.get("controller_errors", 0),
        "fallback_setpoints": telemetry.footer.get("fallback_setpoints", 0),
    }, days


def _run_one(spec, seed, models, out):
    sub = Path(out) / spec.label
    sub.mkdir(parents=True, exist_ok=True)
    sc = _scenario_config(spec, seed)
    telemetry = simkit.run_closed_loop(sc, models if spec.controller != "benchmark" else None)
    telemetry.to_csv(sub / "telemetry.csv")
    row, days = scenario_row(spec, telemetry)
    metrics.summaries_frame(days).to_csv(sub / "daily.csv", index=False, float_format="%.6f", lineterminator="\n")
    _dump(telemetry.footer, sub / "footer.json")
    return row


def select_scenarios(scenarios, formulation=None, mode=None):
    """Drop MPC scenarios of the other formulation and scenarios of the other mode."""
    out = []
    for s in scenarios:
        if mode is not None and s.mode != MODE_ALIASES[mode]:
            continue
        if formulation is not None and s.controller.startswith("mpc") and s.controller != f"mpc_{formulation}":
            continue
        out.append(s)
    return out


def cmd_simulate(manifest_path, seed=None, out=None, frozen=None, formulation=None, mode=None):
    """Run the manifest's scenario matrix; returns the number of failed scenarios."""
    manifest = load_manifest(manifest_path)
    seed = manifest.seed if seed is None else int(seed)
    out = Path(out) if out is not None else manifest.out
    out.mkdir(parents=True, exist_ok=True)
    scenarios = select_scenarios(manifest.scenarios, formulation, mode)
    if not scenarios:
        raise InputError("no scenarios left after applying --formulation/--mode")
    needs_models = any(s.controller != "benchmark" for s in scenarios)
    models = _training_models(manifest, frozen) if needs_models else None
    if models is not None:
        _dump(models.summary(), out / "models.json")

    status, rows = {}, {}
    with ThreadPoolExecutor(max_workers=max(1, manifest.workers)) as pool:
        futures = {s.label: pool.submit(_run_one, s, seed, models, out) for s in scenarios}
        for s in scenarios:
            try:
                rows[s.label] = futures[s.label].result()
                status[s.label] = {"status": "ok"}
            except Exception as exc:  # recorded per scenario, reflected in the exit code
                status[s.label] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}",
                                   "exit_code": exit_code_for(exc)}
                log.error("scenario %s failed: %s", s.label, exc)
    _dump({"experiment": manifest.name, "seed": seed, "scenarios": rows}, out / "comparison.json")
    _dump(status, out / "status.json")
    failed = [v for v in status.values() if v["status"] != "ok"]
    return max((v["exit_code"] for v in failed), default=EXIT_OK)


# --------------------------------------------------------------------------- report

def _load_results(results):
    results = Path(results)
    comp = results / "comparison.json"
    if not results.is_dir() or not comp.is_file():
        raise InputError(f"missing artifacts in {results}: comparison.json")
    data = json.loads(comp.read_text(encoding="utf-8"))
    rows = data.get("scenarios", {})
    missing = [f"{label}/daily.csv" for label in rows if not (results / label / "daily.csv").is_file()]
    if missing:
        raise InputError(f"missing artifacts in {results}: {', '.join(missing)}")
    if not rows:
        raise InputError(f"no completed scenarios in {results}")
    daily = {label: pd.read_csv(results / label / "daily.csv") for label in rows}
    return data, rows, daily


def _summaries(frame):
    return [metrics.DailySummary(date=str(r.date), energy_kwh=float(r.energy_kwh), delta_t=float(r.delta_t),
                                 controller=str(r.controller), violation_minutes=float(r.violation_minutes),
                                 violation_magnitude_mean_kw=float(r.violation_magnitude_mean_kw))
            for r in frame.itertuples()]


def _pool(rows, daily, controllers, mode):
    out = []
    for label, row in rows.items():
        if row["controller"] in controllers and row["mode"] == mode:
            out += _summaries(daily[label])
    return out


def _ordering_note(rows):
    by = {(r["controller"], r["mode"]): r for r in rows.values()}
    sens, lat = by.get(("mpc_sensible", "power_limit")), by.get(("mpc_latent", "power_limit"))
    if sens is None or lat is None:
        return None
    fewer = lat["violation_minutes_per_day"] < sens["violation_minutes_per_day"]
    smaller = lat["violation_magnitude_kw"] < sens["violation_magnitude_kw"]
    verdict = "holds" if fewer and smaller else "does not hold"
    return (f"power-limit ordering latent < sensible {verdict}: "
            f"{lat['violation_minutes_per_day']:.2f} vs {sens['violation_minutes_per_day']:.2f} min/day, "
            f"{lat['violation_magnitude_kw']:.3f} vs {sens['violation_magnitude_kw']:.3f} kW")


def cmd_report(results, out=None, paper_constants=False, seed=0, samples=1_000_000):
    """Aggregate simulation results into ``report.json`` and plot-ready CSVs."""
    out = Path(out) if out is not None else Path(results) / "report"
    if paper_constants:
        rows, daily = {}, {}
    else:
        _, rows, daily = _load_results(results)
    out.mkdir(parents=True, exist_ok=True)

    report = {"scenarios": rows, "reference": {
        "normalized_energy_kwh_per_c": metrics.REFERENCE_NORMALIZED_ENERGY,
        "violations_min_per_day_kw": metrics.REFERENCE_VIOLATIONS,
    }}
    if paper_constants:
        (m1m, m1s), (m2m, m2s) = metrics.REFERENCE_SLOPES["m1"], metrics.REFERENCE_SLOPES["m2"]
        m1, m2 = metrics.SlopeFit(m1m, m1s), metrics.SlopeFit(m2m, m2s)
        slope_source = "reference field slopes"
    else:
        mpc = _pool(rows, daily, ("mpc_sensible", "mpc_latent"), "cost")
        base = _pool(rows, daily, ("benchmark",), "cost")
        try:
            m1, m2 = metrics.fit_savings_slopes(mpc, base)
            slope_source = "simulated cost-mode days"
        except MetricError as exc:
            m1 = m2 = None
            slope_source = f"unavailable: {exc}"
    report["slopes"] = {"source": slope_source}
    if m1 is not None:
        ci = metrics.savings_ci(m1, m2, samples=samples, seed=seed)
        report["slopes"].update({"m1": [m1.mean, m1.std], "m2": [m2.mean, m2.std], "offset_c": m1.offset})
        report["savings"] = {"mean_pct": 100 * ci.mean, "ci95_pct": [100 * ci.low, 100 * ci.high],
                             "samples": samples, "seed": seed, "rejected": ci.rejected}
        dts = np.concatenate([d["delta_t"].to_numpy(float) for d in daily.values()]) if daily else None
        if dts is not None and len(dts):
            proj = metrics.annual_cost_projection(m1, m2, 0.14, dts, seed=seed)
            report["period_cost_savings_usd"] = {"mean": proj.mean, "ci95": [proj.low, proj.high],
                                                 "days": int(len(dts))}
            proj.series().to_csv(out / "cumulative_savings.csv", index=False, float_format="%.6f",
                                 lineterminator="\n")
    note = _ordering_note(rows)
    if note:
        report["footnotes"] = [note]

    if daily:
        scatter = pd.concat([pd.DataFrame({"x": d["delta_t"], "y": d["energy_kwh"], "series": label})
                             for label, d in daily.items()], ignore_index=True)
        scatter.to_csv(out / "energy_vs_dt.csv", index=False, float_format="%.6f", lineterminator="\n")
        hist = pd.concat([pd.DataFrame({"x": d["violation_minutes"], "y": d["violation_magnitude_mean_kw"],
                                        "series": label})
                          for label, d in daily.items() if rows[label]["mode"] == "power_limit"] or
                         [pd.DataFrame(columns=["x", "y", "series"])], ignore_index=True)
        hist.to_csv(out / "violations.csv", index=False, float_format="%.6f", lineterminator="\n")
    _dump(report, out / "report.json")
    return report


# --------------------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="humidmpc", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ident = sub.add_parser("identify", help="fit the 2R1C envelope to a telemetry CSV")
    ident.add_argument("telemetry", nargs="?", help="telemetry CSV (defaults to the manifest's training telemetry)")
    ident.add_argument("--manifest")
    ident.add_argument("--out", default="identify-out")
    ident.add_argument("--frozen-params", help="'alpha,R' or a TOML file; skips the regression")
    ident.add_argument("--paper-constants", action="store_true", help="evaluate the recalibrated alpha=0.77, R=0.42")
    ident.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="run a manifest's scenario matrix")
    sim.add_argument("--manifest", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.add_argument("--frozen-params")
    sim.add_argument("--formulation", choices=("sensible", "latent"))
    sim.add_argument("--mode", choices=("cost", "limit"))
    sim.add_argument("--paper-constants", action="store_true", help="controllers use alpha=0.77, R=0.42")

    rep = sub.add_parser("report", help="aggregate a results directory")
    rep.add_argument("results", nargs="?")
    rep.add_argument("--manifest", help="take the results directory from the manifest")
    rep.add_argument("--out")
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--paper-constants", action="store_true", help="use the reference field slope distributions")
    return p


def _dispatch(args):
    if args.command == "identify":
        frozen = PAPER_ENVELOPE if args.paper_constants else parse_frozen(args.frozen_params)
        path = args.telemetry
        if path is None:
            if args.manifest is None:
                raise InputError("identify needs a telemetry CSV or --manifest with training telemetry")
            path = load_manifest(args.manifest).training.get("telemetry")
            if path is None:
                raise InputError("manifest has no [training] telemetry file")
        fit = cmd_identify(path, args.out, frozen)
        print(f"alpha={fit.params.alpha:.6f} R={fit.params.r_eff:.6f} rmse={fit.rmse_temp:.3f} C")
        return EXIT_OK, args.out
    if args.command == "simulate":
        frozen = PAPER_ENVELOPE if args.paper_constants else parse_frozen(args.frozen_params)
        out = args.out or load_manifest(args.manifest).out
        code = cmd_simulate(args.manifest, args.seed, out, frozen, args.formulation, args.mode)
        print(f"results written to {out}")
        return code, out
    results = args.results
    if results is None and args.manifest is not None:
        results = load_manifest(args.manifest).out
    if results is None and not args.paper_constants:
        raise InputError("report needs a results directory")
    out = args.out or (Path(results) / "report" if results else Path("report"))
    report = cmd_report(results, out, args.paper_constants, args.seed)
    if "savings" in report:
        s = report["savings"]
        print(f"savings {s['mean_pct']:.1f}% (95% CI {s['ci95_pct'][0]:.1f} to {s['ci95_pct'][1]:.1f})")
    return EXIT_OK, out


def _show_once():
    seen = set()
    show = warnings.showwarning

    def once(message, category, filename, lineno, file=None, line=None):
        key = (category, str(message))
        if key not in seen:
            seen.add(key)
            show(message, category, filename, lineno, file, line)

    warnings.showwarning = once
    return show


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    # clamping warnings repeat every plant step; report each distinct one once.
    # Library code toggles filters from worker threads, so dedupe at display time.
    show = _show_once()
    started = time.time()
    try:
        code, out = _dispatch(args)
    except Exception as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            log.exception("details")
        return code
    finally:
        warnings.showwarning = show
    if out is not None and Path(out).is_dir():
        _write_metadata(out, args.command, started, argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
