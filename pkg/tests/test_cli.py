import json
import shutil
import subprocess
import sys
from importlib import resources
from pathlib import Path

import pytest

from humidmpc import cli

DATA = Path(str(resources.files("humidmpc").joinpath("data")))

SMALL_MANIFEST = """
[experiment]
name = "small"
seed = 4
out = "results"
workers = 2

[training]
telemetry = "july_telemetry.csv"
weather = "july_weather.csv"
t_m = 23.0

[[scenario]]
label = "benchmark-cost"
controller = "benchmark"
days = 1

[[scenario]]
label = "latent-cost"
controller = "mpc_latent"
days = 1

[[scenario]]
label = "sensible-limit"
controller = "mpc_sensible"
mode = "limit"
days = 1
"""


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    for name in ("july_telemetry.csv", "july_weather.csv"):
        shutil.copy(DATA / name, root / name)
    path = root / "manifest.toml"
    path.write_text(SMALL_MANIFEST, encoding="utf-8")
    return path


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*"))
            if p.is_file() and p.name != "metadata.json"}


def test_identify_writes_envelope(tmp_path, capsys):
    assert cli.main(["identify", str(DATA / "july_telemetry.csv"), "--out", str(tmp_path)]) == 0
    env = json.loads((tmp_path / "envelope.json").read_text())
    assert 0 < env["params"]["alpha"] < 1
    assert (tmp_path / "residuals.csv").is_file()
    assert (tmp_path / "metadata.json").is_file()
    assert "alpha=" in capsys.readouterr().out


def test_frozen_params_are_echoed(tmp_path):
    code = cli.main(["identify", str(DATA / "july_telemetry.csv"), "--out", str(tmp_path),
                     "--frozen-params", "0.77,0.42"])
    assert code == 0
    env = json.loads((tmp_path / "envelope.json").read_text())
    assert env["params"]["alpha"] == pytest.approx(0.77)
    assert env["params"]["r_eff"] == pytest.approx(0.42)
    assert env["frozen"] is True


def test_paper_constants_identify_matches_frozen(tmp_path):
    assert cli.main(["identify", str(DATA / "july_telemetry.csv"), "--out", str(tmp_path),
                     "--paper-constants"]) == 0
    env = json.loads((tmp_path / "envelope.json").read_text())
    assert (env["params"]["alpha"], env["params"]["r_eff"]) == pytest.approx((0.77, 0.42))


def test_empty_telemetry_is_an_input_error(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert cli.main(["identify", str(empty), "--out", str(tmp_path / "o")]) == 2


def test_malformed_inputs_exit_two(tmp_path):
    assert cli.main(["simulate", "--manifest", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\nname = 'x'\n")
    assert cli.main(["simulate", "--manifest", str(bad)]) == 2
    assert cli.main(["identify", str(DATA / "july_telemetry.csv"), "--frozen-params", "1,2,3"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_numeric_failure_exits_three(tmp_path):
    # alpha outside (0, 1) cannot define an envelope
    assert cli.main(["identify", str(DATA / "july_telemetry.csv"), "--out", str(tmp_path),
                     "--frozen-params", "1.5,0.4"]) == 3


def test_report_without_results_exits_two(tmp_path):
    (tmp_path / "results").mkdir()
    assert cli.main(["report", str(tmp_path / "results")]) == 2


def test_paper_constants_report(tmp_path):
    assert cli.main(["report", "--paper-constants", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["savings"]["mean_pct"] == pytest.approx(14.0, abs=1.0)
    low, high = report["savings"]["ci95_pct"]
    assert low == pytest.approx(7.0, abs=1.0)
    assert high == pytest.approx(21.0, abs=1.0)


def test_manifest_parsing(manifest):
    m = cli.load_manifest(manifest)
    assert [s.mode for s in m.scenarios] == ["cost", "cost", "power_limit"]
    assert m.seed == 4
    assert cli.select_scenarios(m.scenarios, formulation="sensible", mode="cost")[0].label == "benchmark-cost"


def test_simulate_then_report(manifest, tmp_path):
    out = tmp_path / "r"
    assert cli.main(["simulate", "--manifest", str(manifest), "--out", str(out)]) == 0
    status = json.loads((out / "status.json").read_text())
    assert all(v["status"] == "ok" for v in status.values())
    comp = json.loads((out / "comparison.json").read_text())
    assert set(comp["scenarios"]) == {"benchmark-cost", "latent-cost", "sensible-limit"}
    for label in comp["scenarios"]:
        assert (out / label / "telemetry.csv").is_file()
    rep = tmp_path / "rep"
    assert cli.main(["report", str(out), "--out", str(rep)]) == 0
    report = json.loads((rep / "report.json").read_text())
    # one day per arm is too few for slopes; the report says so instead of failing
    assert report["slopes"]["source"].startswith("unavailable")
    assert (rep / "energy_vs_dt.csv").is_file()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "humidmpc", "report", str(tmp_path / "nothing")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "error:" in proc.stderr


def test_simulate_is_byte_identical(manifest, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["simulate", "--manifest", str(manifest), "--out", str(out), "--mode", "cost"]) == 0
    assert tree(a) == tree(b)
