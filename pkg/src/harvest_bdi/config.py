"""Simulation configuration, read from a versioned TOML file.

Example (every table is optional except ``[buffer]``)::

    format_version = 1
    horizon_ms = 600000
    seed = 7

    [buffer]
    capacity_uJ = 1000.0
    initial_uJ = 500.0
    brown_out_uJ = 0.0
    cold_start_uJ = 50.0
    reserve_uJ = 0.0            # withheld from e_available

    [runtime]
    alpha = 0.5                 # estimate smoothing
    tendency_window_ms = 60000
    cycle_overhead_uJ = 0.05
    cycle_duration_ms = 1
    idle_draw_uW = 0.0
    sleep_draw_uW = 0.5
    idle_poll_ms = 1000
    boot_goals = ["meas_temperature"]
    network_role = "peripheral"

    [wake]                      # timer, threshold, or both (first wins)
    timer_ms = 60000
    threshold_uJ = 300.0

    [radio]
    action = "start_ble_adv"
    power_belief = "transmit_power"

    [metrics]
    measure_action = "read_trh_sensor"

    [trace]
    jitter = 0.0                # seeded +/- fraction applied per sample

    [actions.read_trh_sensor]
    energy_uJ = 18.0
    duration_ms = 15

    [actions.start_ble_adv]
    energy_uJ = 101.0
    duration_ms = 5
    by_arg = { "8" = 101.0, "4" = 30.0 }

    [media.fram]
    write_uJ_per_byte = 0.01
    read_uJ_per_byte = 0.005
    write_ms_per_byte = 0.0
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .beliefs import Lifetime
from .energy import ActionCost, CostModel
from .persistence import DEFAULT_PROFILES, MediumProfile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["SimConfig", "ConfigError", "load_config", "config_from_dict", "CONFIG_VERSION"]

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    capacity_uJ: float = 1000.0
    initial_uJ: float = 0.0
    brown_out_uJ: float = 0.0
    cold_start_uJ: float = 0.0
    reserve_uJ: float = 0.0
    costs: CostModel = field(default_factory=CostModel)
    profiles: dict = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    wake_timer_ms: int | None = 60_000
    wake_threshold_uJ: float | None = None
    alpha: float = 0.5
    tendency_window_ms: int = 60_000
    idle_poll_ms: int = 1000
    horizon_ms: int = 600_000
    seed: int = 0
    trace_jitter: float = 0.0
    boot_goals: tuple = ("meas_temperature",)
    network_role: str = "peripheral"
    measure_action: str = "read_trh_sensor"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.capacity_uJ <= 0:
            raise ConfigError("buffer.capacity_uJ must be positive")
        if not 0 <= self.initial_uJ <= self.capacity_uJ:
            raise ConfigError("buffer.initial_uJ must lie in [0, capacity_uJ]")
        if not 0 <= self.brown_out_uJ <= self.cold_start_uJ <= self.capacity_uJ:
            raise ConfigError("need 0 <= brown_out_uJ <= cold_start_uJ <= capacity_uJ")
        if self.reserve_uJ < 0:
            raise ConfigError("buffer.reserve_uJ must be non-negative")
        if self.horizon_ms <= 0:
            raise ConfigError("horizon_ms must be positive")
        if not 0 < self.alpha <= 1:
            raise ConfigError("runtime.alpha must lie in (0, 1]")
        if self.tendency_window_ms <= 0 or self.idle_poll_ms <= 0:
            raise ConfigError("tendency_window_ms and idle_poll_ms must be positive")
        if self.wake_timer_ms is None and self.wake_threshold_uJ is None:
            raise ConfigError("[wake] needs timer_ms, threshold_uJ or both")
        if self.wake_timer_ms is not None and self.wake_timer_ms <= 0:
            raise ConfigError("wake.timer_ms must be positive")
        if not 0 <= self.trace_jitter < 1:
            raise ConfigError("trace.jitter must lie in [0, 1)")

    def with_overrides(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def _table(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def config_from_dict(data: dict) -> SimConfig:
    version = data.get("format_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config format_version {version}")
    buffer = _table(data, "buffer")
    runtime = _table(data, "runtime")
    wake = _table(data, "wake")
    radio = _table(data, "radio")
    try:
        actions = {
            name: ActionCost(float(entry.get("energy_uJ", 0.0)), int(entry.get("duration_ms", 0)),
                             {str(k): float(v) for k, v in entry.get("by_arg", {}).items()})
            for name, entry in _table(data, "actions").items()
        }
        costs = CostModel(
            actions=actions,
            cycle_overhead_uJ=float(runtime.get("cycle_overhead_uJ", 0.05)),
            cycle_duration_ms=int(runtime.get("cycle_duration_ms", 1)),
            idle_draw_uW=float(runtime.get("idle_draw_uW", 0.0)),
            sleep_draw_uW=float(runtime.get("sleep_draw_uW", 0.0)),
            radio_action=radio.get("action", "start_ble_adv"),
            radio_power_belief=radio.get("power_belief", "transmit_power"),
        )
        profiles = dict(DEFAULT_PROFILES)
        for name, entry in _table(data, "media").items():
            medium = Lifetime(name)
            if medium is Lifetime.VOLATILE:
                raise ConfigError("[media] only configures fram and flash")
            base = profiles[medium]
            profiles[medium] = MediumProfile(
                float(entry.get("write_uJ_per_byte", base.write_cost)),
                float(entry.get("read_uJ_per_byte", base.read_cost)),
                float(entry.get("write_ms_per_byte", base.write_latency)),
            )
        timer = wake.get("timer_ms", 60_000 if "threshold_uJ" not in wake else None)
        threshold = wake.get("threshold_uJ")
        return SimConfig(
            capacity_uJ=float(buffer.get("capacity_uJ", 1000.0)),
            initial_uJ=float(buffer.get("initial_uJ", 0.0)),
            brown_out_uJ=float(buffer.get("brown_out_uJ", 0.0)),
            cold_start_uJ=float(buffer.get("cold_start_uJ", 0.0)),
            reserve_uJ=float(buffer.get("reserve_uJ", 0.0)),
            costs=costs,
            profiles=profiles,
            wake_timer_ms=None if timer is None else int(timer),
            wake_threshold_uJ=None if threshold is None else float(threshold),
            alpha=float(runtime.get("alpha", 0.5)),
            tendency_window_ms=int(runtime.get("tendency_window_ms", 60_000)),
            idle_poll_ms=int(runtime.get("idle_poll_ms", 1000)),
            horizon_ms=int(data.get("horizon_ms", 600_000)),
            seed=int(data.get("seed", 0)),
            trace_jitter=float(_table(data, "trace").get("jitter", 0.0)),
            boot_goals=tuple(runtime.get("boot_goals", ("meas_temperature",))),
            network_role=str(runtime.get("network_role", "peripheral")),
            measure_action=str(_table(data, "metrics").get("measure_action", "read_trh_sensor")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> SimConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
