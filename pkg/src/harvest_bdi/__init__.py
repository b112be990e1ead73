"""Energy-aware BDI agents for battery-less, energy-harvesting sensors.

Agent programs in an AgentSpeak dialect (``asl``) run on a simulated
harvesting device (``energy``) through a reasoning cycle (``engine``)
that selects plans against energy beliefs, learns action costs and
persists long-lived beliefs across deep sleep (``persistence``).
``simulation`` couples the pieces and records a replayable log.
"""

from importlib import resources

from .asl import (
    AgentProgram, AslSyntaxError, Literal, SemanticError, format_program, parse_literal,
    parse_program, unify, eval_context,
)
from .beliefs import BeliefBase, BeliefEntry, Lifetime, Origin
from .config import ConfigError, SimConfig, config_from_dict, load_config
from .energy import CostModel, ActionCost, EnergyBuffer, EnergyPlatform, HarvestTrace, buffer_step
from .engine import AgentState, new_agent_state, reasoning_cycle_step, select_plan
from .persistence import MediumProfile, NonVolatileStore, persist, restore
from .simulation import Simulation, summarize

__version__ = "0.1.0"


def corpus_source(name: str = "temperature_sensor") -> str:
    """Source text of a bundled agent program."""
    return resources.files(__package__).joinpath("programs", f"{name}.asl").read_text(encoding="utf-8")


def corpus_program(name: str = "temperature_sensor") -> AgentProgram:
    return parse_program(corpus_source(name))
