"""Seeded random scenarios for property checks of the simulator.

``guarded_scenario`` builds a program whose every energy-spending plan is
guarded by ``e_available(A) & e_<task>(R) & A > R`` with each estimate at
least the true cost of the plan's actions, plus a config in which all
non-intent energy use (cycles, persist, restore) is covered by the
buffer reserve and the device only wakes once the buffer has refilled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asl import AgentProgram, parse_program
from .beliefs import BeliefEntry, Lifetime
from .config import SimConfig
from .energy import ActionCost, CostModel, HarvestTrace
from .persistence import MediumProfile, encode_image

__all__ = ["Scenario", "guarded_scenario", "random_trace", "EPISODE_CYCLES"]

#: upper bound on reasoning cycles between a wake and the following deep sleep
EPISODE_CYCLES = 10


@dataclass
class Scenario:
    program: AgentProgram
    config: SimConfig
    trace: HarvestTrace
    true_costs: dict
    estimates: dict


def random_trace(rng: np.random.Generator, horizon_ms: int, max_power_uW: float = 80.0,
                 max_segments: int = 12) -> HarvestTrace:
    """Step-hold trace with random breakpoints; roughly a third of segments are dark."""
    n = int(rng.integers(1, max_segments + 1))
    times = np.unique(np.concatenate([[0], rng.integers(1, horizon_ms, size=n - 1)]))
    powers = rng.uniform(0.0, max_power_uW, size=len(times))
    powers[rng.random(len(times)) < 0.35] = 0.0
    return HarvestTrace(times, np.round(powers, 3))


def _ceil3(x: float) -> float:
    return math.ceil(x * 1000.0) / 1000.0


def guarded_scenario(seed: int, guarded: bool = True, horizon_ms: int = 30_000) -> Scenario:
    rng = np.random.default_rng(seed)
    actions, true_costs, estimates = {}, {}, {}
    beliefs, plans = [], []
    for k in range(int(rng.integers(1, 4))):
        names = [f"act{k}_{j}" for j in range(int(rng.integers(1, 4)))]
        costs = np.round(rng.uniform(5.0, 120.0, size=len(names)), 3)
        for name, cost in zip(names, costs):
            actions[name] = ActionCost(float(cost), int(rng.integers(0, 30)))
        task = f"e_task{k}"
        true_costs[task] = float(costs.sum())
        estimates[task] = _ceil3(true_costs[task] * rng.uniform(1.0, 1.5))
        medium = "fram" if rng.random() < 0.7 else "flash"
        beliefs.append(f'{task}({estimates[task]})[persist("{medium}")].')
        guard = f" : e_available(A) & {task}(R) & A > R" if guarded else ""
        steps = ["energy_checkpoint()"] + [f"{n}()" for n in names] + \
                [f'update_estimate("{task}")', "deep_sleep()"]
        plans.append(f"+!run{guard}\n    <- " + ";\n       ".join(steps) + ".")
    plans.append("-!run <- deep_sleep().")
    program = parse_program("\n".join(beliefs) + "\n\n" + "\n\n".join(plans) + "\n")

    fram_write = float(rng.uniform(0.005, 0.05))
    profiles = {
        Lifetime.FRAM: MediumProfile(fram_write, float(rng.uniform(0.001, 0.02))),
        Lifetime.FLASH: MediumProfile(fram_write * float(rng.uniform(2, 20)),
                                      float(rng.uniform(0.005, 0.05)),
                                      float(rng.uniform(0.0, 0.1))),
    }
    overhead = float(rng.uniform(0.01, 0.5))
    nv_cost = 0.0
    entries = [BeliefEntry.of(b) for b in program.initial_beliefs]
    for medium, profile in profiles.items():
        size = encode_image([e for e in entries if e.lifetime is medium], medium).size
        nv_cost += size * (profile.write_cost + profile.read_cost)
    reserve = EPISODE_CYCLES * overhead + nv_cost + 1.0
    brown_out = float(rng.uniform(0.0, 50.0))
    threshold = brown_out + reserve + float(rng.uniform(0.0, 200.0))
    capacity = threshold + max(estimates.values()) + float(rng.uniform(10.0, 500.0))

    config = SimConfig(
        capacity_uJ=capacity,
        initial_uJ=float(rng.uniform(0.0, capacity)),
        brown_out_uJ=brown_out,
        cold_start_uJ=threshold,
        reserve_uJ=reserve,
        costs=CostModel(actions=actions, cycle_overhead_uJ=overhead,
                        cycle_duration_ms=int(rng.integers(1, 4)),
                        idle_draw_uW=0.0, sleep_draw_uW=0.0),
        profiles=profiles,
        wake_timer_ms=None,
        wake_threshold_uJ=threshold,
        horizon_ms=horizon_ms,
        seed=seed,
        boot_goals=("run",),
        measure_action="act0_0",
    )
    return Scenario(program, config, random_trace(rng, horizon_ms), true_costs, estimates)
