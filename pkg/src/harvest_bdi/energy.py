"""Harvesting power path: trace -> energy buffer -> load, with device modes.

Units throughout: energy in µJ, power in µW, time in integer ms.  One µW
sustained for 1000 ms delivers 1 µJ.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .asl import Annotation, Literal, Number, Variable, Atom
from .beliefs import BeliefBase, BeliefEntry, ChangeEvent, Origin

__all__ = [
    "DeviceMode", "EnergyBuffer", "buffer_step", "HarvestTrace", "ActionCost",
    "CostModel", "TendencyEstimator", "EnergyMeter", "EnergyPlatform",
    "BrownOut", "UnknownActionError", "SimulationHorizonExceeded",
]


class BrownOut(Exception):
    """Supply fell below the brown-out threshold; RAM content is lost."""


class UnknownActionError(KeyError):
    pass


class SimulationHorizonExceeded(RuntimeError):
    pass


class DeviceMode(enum.Enum):
    ACTIVE = "active"
    DEEP_SLEEP = "deep_sleep"
    OFF = "off"


@dataclass(frozen=True)
class EnergyBuffer:
    capacity_uJ: float
    level_uJ: float
    brown_out_uJ: float = 0.0
    cold_start_uJ: float = 0.0

    def __post_init__(self):
        if self.capacity_uJ <= 0:
            raise ValueError("capacity must be positive")
        if not 0 <= self.level_uJ <= self.capacity_uJ:
            raise ValueError("level must lie in [0, capacity]")
        if self.brown_out_uJ < 0 or self.cold_start_uJ < self.brown_out_uJ:
            raise ValueError("need 0 <= brown_out <= cold_start")
        if self.cold_start_uJ > self.capacity_uJ:
            raise ValueError("cold_start exceeds capacity")


def buffer_step(buffer: EnergyBuffer, harvest_power: float, load_energy: float,
                dt: float) -> tuple[EnergyBuffer, float, bool]:
    """Integrate one step of constant harvest power against a load.

    Returns the new buffer, the harvested energy discarded because the
    buffer was full, and whether the unclamped level dropped below the
    brown-out threshold.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _settle(buffer, harvest_power * dt / 1000.0, load_energy)


def _settle(buffer: EnergyBuffer, harvest: float, load: float) -> tuple[EnergyBuffer, float, bool]:
    pre = buffer.level_uJ + harvest - load
    loss = max(pre - buffer.capacity_uJ, 0.0)
    level = min(max(pre, 0.0), buffer.capacity_uJ)
    return replace(buffer, level_uJ=level), loss, pre < buffer.brown_out_uJ


class HarvestTrace:
    """Step-hold harvest power samples ``(time_ms, power_uW)``.

    Power before the first sample is zero; the last sample holds forever.
    """

    def __init__(self, times_ms, powers_uW):
        self.times = np.asarray(times_ms, dtype=np.int64)
        self.powers = np.asarray(powers_uW, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.powers.shape:
            raise ValueError("times and powers must be 1-D arrays of equal length")
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        if np.any(self.powers < 0) or not np.all(np.isfinite(self.powers)):
            raise ValueError("harvest power must be finite and non-negative")

    @classmethod
    def constant(cls, power_uW: float) -> "HarvestTrace":
        return cls([0], [power_uW])

    @classmethod
    def from_csv(cls, path: str | Path) -> "HarvestTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["time_ms", "power_uW"]:
                raise ValueError(f"{path}: expected header 'time_ms,power_uW', got {header}")
            times, powers = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row or not "".join(row).strip():
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns")
                times.append(int(row[0]))
                powers.append(float(row[1]))
        return cls(times, powers)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_ms", "power_uW"])
            for t, p in zip(self.times.tolist(), self.powers.tolist()):
                writer.writerow([t, repr(p)])

    def jittered(self, rng: np.random.Generator, fraction: float) -> "HarvestTrace":
        """Multiply each sample by ``1 + U(-fraction, fraction)``, clipped at zero."""
        if fraction <= 0:
            return self
        factor = 1.0 + rng.uniform(-fraction, fraction, size=self.powers.shape)
        return HarvestTrace(self.times, np.clip(self.powers * factor, 0.0, None))

    def power_at(self, t_ms: int) -> float:
        i = int(np.searchsorted(self.times, t_ms, side="right")) - 1
        return float(self.powers[i]) if i >= 0 else 0.0

    def next_change(self, t_ms: int) -> int | None:
        i = int(np.searchsorted(self.times, t_ms, side="right"))
        return int(self.times[i]) if i < len(self.times) else None

    def energy_between(self, t0: int, t1: int) -> float:
        total, t = 0.0, t0
        while t < t1:
            nxt = self.next_change(t)
            end = t1 if nxt is None else min(nxt, t1)
            total += self.power_at(t) * (end - t) / 1000.0
            t = end
        return total


@dataclass(frozen=True)
class ActionCost:
    energy_uJ: float
    duration_ms: int = 0
    by_arg: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.energy_uJ < 0 or self.duration_ms < 0 or any(v < 0 for v in self.by_arg.values()):
            raise ValueError("action costs must be non-negative")


@dataclass
class CostModel:
    actions: dict = field(default_factory=dict)
    cycle_overhead_uJ: float = 0.05
    cycle_duration_ms: int = 1
    idle_draw_uW: float = 0.0
    sleep_draw_uW: float = 0.0
    radio_action: str = "start_ble_adv"
    radio_power_belief: str = "transmit_power"

    def __post_init__(self):
        if self.cycle_overhead_uJ <= 0:
            raise ValueError("cycle overhead must be positive")
        if self.cycle_duration_ms < 1:
            raise ValueError("a reasoning cycle must take at least 1 ms")
        if self.idle_draw_uW < 0 or self.sleep_draw_uW < 0:
            raise ValueError("draws must be non-negative")

    def validate(self, action_names) -> None:
        missing = sorted(set(action_names) - set(self.actions))
        if missing:
            raise UnknownActionError(f"actions without a cost entry: {', '.join(missing)}")


class TendencyEstimator:
    """Trailing-window mean of harvested input power, reported in µJ/hr.

    Before a full window has elapsed the mean is taken over the elapsed
    time only.
    """

    def __init__(self, window_ms: int = 60_000, origin_ms: int = 0):
        if window_ms <= 0:
            raise ValueError("window must be positive")
        self.window_ms = window_ms
        self.origin_ms = origin_ms
        self._chunks: deque[tuple[int, int, float]] = deque()

    def record(self, t0: int, t1: int, energy_uJ: float) -> None:
        if t1 <= t0 or energy_uJ <= 0:
            return
        power = energy_uJ / (t1 - t0)
        if self._chunks:
            a0, a1, p = self._chunks[-1]
            if a1 == t0 and math.isclose(p, power, rel_tol=1e-12):
                self._chunks[-1] = (a0, t1, p)
                return
        self._chunks.append((t0, t1, power))

    def rate(self, now_ms: int) -> float:
        start = now_ms - self.window_ms
        while self._chunks and self._chunks[0][1] <= start:
            self._chunks.popleft()
        span = min(self.window_ms, now_ms - self.origin_ms)
        if span <= 0:
            return 0.0
        total = 0.0
        for t0, t1, power in self._chunks:
            lo, hi = max(t0, start), min(t1, now_ms)
            if hi > lo:
                total += power * (hi - lo)
        return total * 3_600_000.0 / span


@dataclass
class EnergyMeter:
    harvested: float = 0.0
    clamp_loss: float = 0.0
    consumed: dict = field(default_factory=dict)

    @property
    def total_consumed(self) -> float:
        return sum(self.consumed.values())

    def snapshot(self) -> "EnergyMeter":
        return EnergyMeter(self.harvested, self.clamp_loss, dict(self.consumed))


class EnergyPlatform:
    """The simulated device: buffer, harvester, loads, mode and radio state.

    ``reserve_uJ`` is withheld from ``e_available`` together with the
    brown-out threshold, so the belief reports what the application may
    spend before the supply collapses.
    """

    def __init__(self, buffer: EnergyBuffer, trace: HarvestTrace, costs: CostModel | None = None,
                 *, tendency_window_ms: int = 60_000, reserve_uJ: float = 0.0,
                 network_role: str = "peripheral", time_ms: int = 0):
        self.buffer = buffer
        self.trace = trace
        self.costs = costs or CostModel()
        self.reserve_uJ = reserve_uJ
        self.time_ms = time_ms
        self.mode = DeviceMode.ACTIVE
        self.network_role = network_role
        self.network_state = "uninit"
        self.meter = EnergyMeter()
        #: callables ``(harvested, clamp_loss, klass, consumed)`` fed on every settle
        self.listeners: list = []
        self.tendency = TendencyEstimator(tendency_window_ms, origin_ms=time_ms)

    # -- accounting ----------------------------------------------------

    @property
    def level(self) -> float:
        return self.buffer.level_uJ

    def available(self) -> float:
        return max(0.0, self.level - self.buffer.brown_out_uJ - self.reserve_uJ)

    def can_fund(self, energy_uJ: float) -> bool:
        return self.level - energy_uJ >= self.buffer.brown_out_uJ

    def _apply(self, harvest: float, load: float, klass: str, t0: int, t1: int) -> bool:
        level = self.level
        self.buffer, loss, brown = _settle(self.buffer, harvest, load)
        delivered = load if level + harvest >= load else level + harvest
        self.meter.harvested += harvest
        self.meter.clamp_loss += loss
        if delivered:
            self.meter.consumed[klass] = self.meter.consumed.get(klass, 0.0) + delivered
        self.tendency.record(t0, t1, harvest)
        for listener in self.listeners:
            listener(harvest, loss, klass, delivered)
        return brown

    def advance(self, dt_ms: int, load_uJ: float, klass: str) -> bool:
        """Spend ``load_uJ`` uniformly over ``dt_ms`` while harvesting.

        Returns True on brown-out; the load stops at the segment where it
        happens and time still advances by ``dt_ms``.
        """
        if dt_ms < 0 or load_uJ < 0:
            raise ValueError("duration and load must be non-negative")
        if dt_ms == 0:
            return self._apply(0.0, load_uJ, klass, self.time_ms, self.time_ms)
        t, t_end, brown = self.time_ms, self.time_ms + dt_ms, False
        while t < t_end:
            nxt = self.trace.next_change(t)
            seg_end = t_end if nxt is None else min(nxt, t_end)
            seg = seg_end - t
            harvest = self.trace.power_at(t) * seg / 1000.0
            load = 0.0 if brown else load_uJ * seg / dt_ms
            brown = self._apply(harvest, load, klass, t, seg_end) or brown
            t = seg_end
        self.time_ms = t_end
        return brown

    def bill(self, energy_uJ: float, duration_ms: int, klass: str) -> None:
        """Charge a load; on brown-out the device switches off and BrownOut is raised."""
        if self.advance(int(duration_ms), energy_uJ, klass):
            self._power_loss()
            raise BrownOut(f"brown-out at t={self.time_ms} ms while billing {klass}")

    def _power_loss(self) -> None:
        self.mode = DeviceMode.OFF
        self.network_state = "uninit"

    # -- actions -------------------------------------------------------

    def draw(self, action: str, args=(), beliefs: BeliefBase | None = None) -> tuple[float, int]:
        """Cost of an external action as ``(energy_uJ, duration_ms)``.

        For the radio action the energy comes from a matching
        ``transmit_power(P)[impact(E)]`` belief when one exists.
        """
        cost = self.costs.actions.get(action)
        if cost is None:
            raise UnknownActionError(action)
        if action == self.costs.radio_action and args:
            if beliefs is not None:
                pattern = Literal(self.costs.radio_power_belief, (args[0],),
                                  (Annotation("impact", (Variable("E"),)),))
                for _, s in beliefs.query(pattern):
                    if isinstance(s.get("E"), Number):
                        return s["E"].value, cost.duration_ms
            key = str(args[0])
            if key in cost.by_arg:
                return float(cost.by_arg[key]), cost.duration_ms
        return cost.energy_uJ, cost.duration_ms

    def execute(self, action: str, args=(), beliefs: BeliefBase | None = None) -> float:
        energy, duration = self.draw(action, args, beliefs)
        self.bill(energy, duration, f"action:{action}")
        if action == self.costs.radio_action:
            self.network_state = "initialized"
        return energy

    # -- internal beliefs ----------------------------------------------

    def internal_beliefs(self) -> list[Literal]:
        mode = "deep_sleep" if self.mode is DeviceMode.DEEP_SLEEP else "active"
        return [
            Literal("device_mode", (Atom(mode),)),
            Literal("network_role", (Atom(self.network_role),)),
            Literal("network_state", (Atom(self.network_state),)),
            Literal("buffer_size", (Number(float(self.buffer.capacity_uJ)),)),
            Literal("e_available", (Number(self.available()),)),
            Literal("e_tendency", (Number(self.tendency.rate(self.time_ms)),)),
        ]

    def publish_internal_beliefs(self, beliefs: BeliefBase) -> list[ChangeEvent]:
        events = []
        for lit in self.internal_beliefs():
            ev = beliefs.assert_belief(BeliefEntry.of(lit, Origin.INTERNAL, self.time_ms))
            if ev is not None:
                events.append(ev)
        return events

    # -- passive time --------------------------------------------------

    def _passive_draw(self) -> tuple[float, str]:
        if self.mode is DeviceMode.ACTIVE:
            return self.costs.idle_draw_uW, "idle"
        if self.mode is DeviceMode.DEEP_SLEEP:
            return self.costs.sleep_draw_uW, "sleep"
        return 0.0, "off"

    def run_until(self, until_ms: int | None = None, threshold_uJ: float | None = None,
                  horizon_ms: int | None = None) -> tuple[int, str]:
        """Let time pass under the mode's passive draw.

        Stops at the first of: ``until_ms`` reached ("time"), level at or
        above ``threshold_uJ`` ("wake"), brown-out ("brown_out", device
        switched off).  Raises SimulationHorizonExceeded when none of these
        can happen before ``horizon_ms`` (or ever, without a horizon).
        """
        start = self.time_ms
        draw, klass = self._passive_draw()
        while True:
            if threshold_uJ is not None and self.level >= threshold_uJ - 1e-9 * max(1.0, threshold_uJ):
                return self.time_ms - start, "wake"
            if until_ms is not None and self.time_ms >= until_ms:
                return self.time_ms - start, "time"
            if horizon_ms is not None and self.time_ms >= horizon_ms:
                raise SimulationHorizonExceeded(f"no stop condition before t={horizon_ms} ms")
            now = self.time_ms
            ends = [t for t in (until_ms, horizon_ms, self.trace.next_change(now)) if t is not None]
            t_event = min(ends) if ends else None
            net = self.trace.power_at(now) - draw
            if threshold_uJ is not None and net > 0:
                need = (threshold_uJ - self.level) * 1000.0 / net
                tc = now + max(1, math.ceil(need - 1e-9))
                if t_event is None or tc < t_event:
                    t_event = tc
            if net < 0:
                tb = now + math.floor((self.level - self.buffer.brown_out_uJ) * 1000.0 / -net) + 1
                if t_event is None or tb < t_event:
                    t_event = tb
            if t_event is None:
                raise SimulationHorizonExceeded("stop condition unreachable: no harvest change, "
                                                "no draw, no timer")
            dt = t_event - now
            if self.advance(dt, draw * dt / 1000.0, klass):
                self._power_loss()
                return self.time_ms - start, "brown_out"
