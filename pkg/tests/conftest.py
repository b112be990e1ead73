from __future__ import annotations

import pytest

from harvest_bdi import corpus_program, corpus_source
from harvest_bdi.beliefs import BeliefBase, BeliefEntry, Origin
from harvest_bdi.energy import ActionCost, CostModel, EnergyBuffer, EnergyPlatform, HarvestTrace
from harvest_bdi.engine import initial_entries


@pytest.fixture(scope="session")
def corpus_text():
    return corpus_source()


@pytest.fixture(scope="session")
def corpus():
    return corpus_program()


@pytest.fixture
def corpus_beliefs(corpus):
    return BeliefBase(initial_entries(corpus))


@pytest.fixture
def sensor_costs():
    return CostModel(actions={
        "read_trh_sensor": ActionCost(18.0, 15),
        "start_ble_adv": ActionCost(101.0, 5, {"8": 101.0, "4": 30.0}),
        "store_for_later_tx": ActionCost(2.0, 1),
    })


def make_platform(level=500.0, capacity=1000.0, power=0.0, costs=None, brown_out=0.0,
                  cold_start=0.0, **kw) -> EnergyPlatform:
    trace = power if isinstance(power, HarvestTrace) else HarvestTrace.constant(power)
    return EnergyPlatform(EnergyBuffer(capacity, level, brown_out, cold_start), trace,
                          costs or CostModel(), **kw)


def beliefs_of(*texts, origin=Origin.PROGRAM) -> BeliefBase:
    """Belief base from literal source strings; device-state functors become internal."""
    from harvest_bdi.asl import parse_literal
    from harvest_bdi.beliefs import is_internal

    entries = []
    for text in texts:
        lit = parse_literal(text)
        entries.append(BeliefEntry.of(lit, Origin.INTERNAL if is_internal(lit) else origin))
    return BeliefBase(entries)


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
