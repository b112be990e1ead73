from __future__ import annotations

import json
from pathlib import Path

import pytest

from harvest_bdi import cli
from harvest_bdi.energy import SimulationHorizonExceeded

ROOT = Path(__file__).resolve().parent.parent
DEMOS = ROOT / "demos"
CORPUS = ROOT / "src" / "harvest_bdi" / "programs" / "temperature_sensor.asl"
CONFIG = DEMOS / "sensor.toml"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_clean(capsys):
    code, out, err = run(["validate", CORPUS, CONFIG], capsys)
    assert code == 0
    assert "ok (5 beliefs, 4 plans)" in out
    assert err == ""


def test_validate_missing_action(tmp_path, capsys):
    prog = tmp_path / "p.asl"
    prog.write_text("b(1).\n\n+!meas_temperature <- read_trh_sensor();\n    foo().\n")
    code, _, err = run(["validate", prog, CONFIG], capsys)
    assert code == 1
    assert f"{prog}:4: error: action 'foo' has no entry in the cost model" in err


def test_validate_unknown_estimate_warns(tmp_path, capsys):
    prog = tmp_path / "p.asl"
    prog.write_text("+!meas_temperature : e_available(A) & e_broadcast(R) & A > R\n"
                    "    <- read_trh_sensor().\n")
    code, out, err = run(["validate", prog, CONFIG], capsys)
    assert code == 0
    assert "warning" in err and "e_broadcast" in err
    assert "ok" in out


def test_validate_syntax_error(tmp_path, capsys):
    prog = tmp_path / "p.asl"
    prog.write_text("b(1).\n+!g <- act(.\n")
    code, _, err = run(["validate", prog, CONFIG], capsys)
    assert code == 1
    assert err.startswith(f"{prog}:2:12: error:")


def test_validate_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("format_version = 3\n")
    code, _, err = run(["validate", CORPUS, cfg], capsys)
    assert code == 1 and "format_version" in err


def test_run_writes_log_and_images(tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    code, out, _ = run(["run", CORPUS, CONFIG, DEMOS / "constant_50uW.csv", "-o", log,
                        "--images", tmp_path / "img"], capsys)
    assert code == 0
    lines = log.read_text().splitlines()
    summary = json.loads(lines[-1])
    assert summary["kind"] == "summary"
    assert summary["measurements"] >= 1 and summary["brown_outs"] == 0
    assert f"wrote {len(lines)} records" in out
    assert (tmp_path / "img" / "fram.img").read_bytes()[:4] == b"HBDI"


def test_run_never_booted(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CONFIG.read_text().replace("initial_uJ = 150.0", "initial_uJ = 5.0"))
    trace = tmp_path / "dark.csv"
    trace.write_text("time_ms,power_uW\n0,0\n")
    log = tmp_path / "run.jsonl"
    assert run(["run", CORPUS, cfg, trace, "-o", log], capsys)[0] == 0
    first, summary = [json.loads(x) for x in log.read_text().splitlines()]
    assert (first["kind"], first["reason"]) == ("brown_out", "never_booted")
    assert summary["kind"] == "summary"


def test_run_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert run(["run", CORPUS, CONFIG, DEMOS / "cloudy.csv", "-o", out], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_env_overrides(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HARVEST_BDI_HORIZON_MS", "120000")
    log = tmp_path / "run.jsonl"
    run(["run", CORPUS, CONFIG, DEMOS / "constant_50uW.csv", "-o", log], capsys)
    assert json.loads(log.read_text().splitlines()[-1])["elapsed_ms"] == 120_000


def test_run_validation_failure(tmp_path, capsys):
    prog = tmp_path / "p.asl"
    prog.write_text("+!meas_temperature <- foo().\n")
    code, _, _ = run(["run", prog, CONFIG, DEMOS / "cloudy.csv", "-o", tmp_path / "x"], capsys)
    assert code == 1
    assert not (tmp_path / "x").exists()


def test_run_horizon_exceeded(tmp_path, capsys, monkeypatch):
    def boom(self):
        raise SimulationHorizonExceeded("stuck")
    monkeypatch.setattr(cli.Simulation, "run", boom)
    code, _, err = run(["run", CORPUS, CONFIG, DEMOS / "cloudy.csv", "-o", tmp_path / "x"],
                       capsys)
    assert code == 2 and "stuck" in err


@pytest.fixture
def run_log(tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    run(["run", CORPUS, CONFIG, DEMOS / "constant_50uW.csv", "-o", log], capsys)
    return log


def test_replay_brown_out_filter_empty(run_log, capsys):
    code, out, _ = run(["replay", run_log, "--filter", "brown_out"], capsys)
    assert (code, out) == (0, "")


def test_replay_actions(run_log, capsys):
    code, out, _ = run(["replay", run_log, "--filter", "action"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines
    records = [json.loads(x) for x in run_log.read_text().splitlines()]
    actions = [r for r in records if r["kind"] == "action"]
    assert len(lines) == len(actions)
    times = [int(line.split()[0]) for line in lines]
    assert times == sorted(times)
    assert "read_trh_sensor()  18.000 uJ" in lines[0]
    # boot level 150 µJ only affords 4 dBm; later wakes find a full buffer
    assert "start_ble_adv(4)  30.000 uJ" in lines[1]
    assert "start_ble_adv(8)  101.000 uJ" in lines[3]


def test_replay_energy_and_summary(run_log, capsys):
    _, out, _ = run(["replay", run_log, "--filter", "energy", "--filter", "summary"], capsys)
    kinds = {line.split()[2] if not line.startswith("summary") else "summary"
             for line in out.splitlines()}
    assert kinds <= {"action", "persist", "restore", "sleep", "wake", "clamp_loss", "summary"}
    assert "summary" in kinds and "persist" in kinds


def test_replay_does_not_modify(run_log, capsys):
    before = run_log.read_bytes()
    run(["replay", run_log], capsys)
    assert run_log.read_bytes() == before


def test_replay_parse_error(tmp_path, capsys):
    log = tmp_path / "bad.jsonl"
    log.write_text('{"kind":"cycle","time_ms":0}\n{"kind": oops}\n')
    code, _, err = run(["replay", log], capsys)
    assert code == 1
    assert "ParseError" in err and "line 2" in err
