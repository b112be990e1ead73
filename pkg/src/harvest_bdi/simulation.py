"""Coupled agent + platform simulation with a replayable JSON-lines log."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .asl import AgentProgram, TriggerKind, parse_literal
from .beliefs import BeliefBase
from .config import SimConfig
from .energy import (
    BrownOut, DeviceMode, EnergyBuffer, EnergyMeter, EnergyPlatform, HarvestTrace,
)
from .engine import new_agent_state, reasoning_cycle_step, wake
from .persistence import NonVolatileStore

__all__ = ["EventLog", "Simulation", "summarize", "read_log", "LogParseError", "LOG_KINDS"]

logger = logging.getLogger(__name__)

LOG_KINDS = (
    "cycle", "event", "plan_selected", "action", "internal_action", "belief_change",
    "persist", "restore", "sleep", "wake", "brown_out", "clamp_loss", "end",
)


class LogParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EventLog:
    """Ordered log records; each carries the energy flows since the previous one.

    The ``energy`` field holds the harvested, clamped and per-class consumed
    µJ that flowed since the previous record, so totals can be rebuilt from
    the log alone.
    """

    def __init__(self, platform: EnergyPlatform):
        self.platform = platform
        self.records: list[dict] = []
        self._pending = EnergyMeter()
        platform.listeners.append(self._on_flow)

    def _on_flow(self, harvested: float, clamp_loss: float, klass: str, consumed: float) -> None:
        p = self._pending
        p.harvested += harvested
        p.clamp_loss += clamp_loss
        if consumed:
            p.consumed[klass] = p.consumed.get(klass, 0.0) + consumed

    def record(self, kind: str, **detail) -> dict:
        rec = {"seq": len(self.records), "time_ms": self.platform.time_ms, "kind": kind,
               "level_uJ": self.platform.level, **detail}
        p, energy = self._pending, {}
        if p.harvested:
            energy["harvested"] = p.harvested
        if p.clamp_loss:
            energy["clamp_loss"] = p.clamp_loss
        if p.consumed:
            energy["consumed"] = dict(sorted(p.consumed.items()))
        if energy:
            rec["energy"] = energy
        self._pending = EnergyMeter()
        self.records.append(rec)
        return rec

    def lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records]


def summarize(records, measure_action: str = "read_trh_sensor",
              radio_action: str = "start_ble_adv") -> dict:
    """Summary metrics computed from log records only."""
    harvested = clamp = 0.0
    by_class: dict[str, float] = {}
    measurements = brown_outs = cycles = 0
    broadcasts: dict[str, int] = {}
    sleeping_since = None
    slept = 0
    start = records[0]["time_ms"] if records else 0
    end = records[-1]["time_ms"] if records else 0
    for r in records:
        e = r.get("energy", {})
        harvested += e.get("harvested", 0.0)
        clamp += e.get("clamp_loss", 0.0)
        for k, v in e.get("consumed", {}).items():
            by_class[k] = by_class.get(k, 0.0) + v
        kind = r["kind"]
        if kind == "cycle":
            cycles += 1
        elif kind == "action":
            if r["name"] == measure_action:
                measurements += 1
            if r["name"] == radio_action and r.get("args"):
                arg = r["args"][0]
                key = str(int(arg)) if isinstance(arg, float) and arg.is_integer() else str(arg)
                broadcasts[key] = broadcasts.get(key, 0) + 1
        elif kind == "brown_out" and r.get("reason") != "never_booted":
            brown_outs += 1
        if kind == "sleep":
            sleeping_since = r["time_ms"]
        elif kind in ("wake", "brown_out", "end") and sleeping_since is not None:
            slept += r["time_ms"] - sleeping_since
            sleeping_since = None
    by_class = dict(sorted(by_class.items()))
    return {
        "kind": "summary",
        "total_harvested_uJ": harvested,
        "total_consumed_uJ": sum(by_class.values()),
        "consumed_by_class_uJ": by_class,
        "clamp_loss_uJ": clamp,
        "measurements": measurements,
        "broadcasts_by_power": dict(sorted(broadcasts.items())),
        "brown_outs": brown_outs,
        "cycles": cycles,
        "sleep_fraction": slept / (end - start) if end > start else 0.0,
        "elapsed_ms": end - start,
        "final_level_uJ": records[-1]["level_uJ"] if records else 0.0,
        "measure_action": measure_action,
        "radio_action": radio_action,
    }


def read_log(path: str | Path) -> list[dict]:
    """Parse a JSON-lines log; raises LogParseError naming the bad line."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict) or "kind" not in rec:
                raise LogParseError("record without a kind", lineno)
            records.append(rec)
    return records


class Simulation:
    """Runs an agent program on the simulated harvesting device.

    Drive it with :meth:`run`, or call :meth:`step` repeatedly to stop at
    interesting points (e.g. after ``deep_sleep`` to tamper with the
    stored images before the next wake).
    """

    def __init__(self, program: AgentProgram, config: SimConfig, trace: HarvestTrace,
                 store: NonVolatileStore | None = None):
        self.program = program
        self.config = config
        if config.trace_jitter > 0:
            trace = trace.jittered(np.random.default_rng(config.seed), config.trace_jitter)
        buffer = EnergyBuffer(config.capacity_uJ, config.initial_uJ, config.brown_out_uJ,
                              config.cold_start_uJ)
        self.platform = EnergyPlatform(buffer, trace, config.costs,
                                       tendency_window_ms=config.tendency_window_ms,
                                       reserve_uJ=config.reserve_uJ,
                                       network_role=config.network_role)
        self.store = store if store is not None else NonVolatileStore()
        self.state = new_agent_state(program, config.alpha)
        self.state.beliefs = BeliefBase()
        self.log = EventLog(self.platform)
        self.boot_goals = [parse_literal(g) for g in config.boot_goals]
        self.booted = False
        self.platform.mode = DeviceMode.OFF
        self._finished = False

    @property
    def done(self) -> bool:
        return self._finished

    def _boot(self, reason: str) -> None:
        try:
            wake(self.state, self.platform, self.store, self.config.profiles, self.log, reason)
        except BrownOut:
            self._brown_out()
            return
        self.booted = True
        for goal in self.boot_goals:
            self.state.post(TriggerKind.GOAL_ADD, goal, "external")

    def _brown_out(self) -> None:
        logger.info("brown-out at t=%d ms", self.platform.time_ms)
        self.log.record("brown_out", reason="supply")
        self.state.beliefs = BeliefBase()
        self.state.events.clear()
        self.state.intentions.clear()
        self.state.checkpoints.clear()
        self.platform.mode = DeviceMode.OFF

    def _passive(self, until: int, threshold: float | None) -> str:
        clamp_before = self.platform.meter.clamp_loss
        _, reason = self.platform.run_until(until, threshold)
        lost = self.platform.meter.clamp_loss - clamp_before
        if lost > 0:
            self.log.record("clamp_loss", amount_uJ=lost)
        return reason

    def step(self) -> None:
        """Advance by one reasoning cycle or one passive period."""
        if self._finished:
            return
        cfg, p = self.config, self.platform
        horizon = cfg.horizon_ms
        if p.time_ms >= horizon:
            self._finish()
            return
        if p.mode is DeviceMode.OFF:
            if p.level >= cfg.cold_start_uJ:
                self._boot("reboot" if self.booted else "boot")
            elif self._passive(horizon, cfg.cold_start_uJ) == "wake":
                self._boot("reboot" if self.booted else "boot")
        elif p.mode is DeviceMode.DEEP_SLEEP:
            until = horizon if cfg.wake_timer_ms is None else min(horizon, p.time_ms + cfg.wake_timer_ms)
            reason = self._passive(until, cfg.wake_threshold_uJ)
            if reason == "brown_out":
                self._brown_out()
            elif reason == "wake" or p.time_ms < horizon:
                self._boot("wake")
        else:
            if self.state.quiescent:
                reason = self._passive(min(horizon, p.time_ms + cfg.idle_poll_ms), None)
                if reason == "brown_out":
                    self._brown_out()
                    return
                if p.time_ms >= horizon:
                    self._finish()
                    return
            try:
                reasoning_cycle_step(self.state, p, self.store, cfg.profiles, self.log)
            except BrownOut:
                self._brown_out()
        if p.time_ms >= horizon:
            self._finish()

    def _finish(self) -> None:
        if self._finished:
            return
        if self.booted:
            self.log.record("end")
        else:
            self.log.record("brown_out", reason="never_booted")
        self._finished = True

    def run(self) -> dict:
        while not self._finished:
            self.step()
        return self.summary()

    def summary(self) -> dict:
        return summarize(self.log.records, self.config.measure_action,
                         self.config.costs.radio_action)

    def log_lines(self) -> list[str]:
        lines = self.log.lines()
        if self._finished:
            lines.append(json.dumps(self.summary(), sort_keys=True, separators=(",", ":")))
        return lines

    def write_log(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.log_lines()) + "\n")
