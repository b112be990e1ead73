"""Reasoning cycle with energy-guarded plan selection and estimate learning.

One call to :func:`reasoning_cycle_step` refreshes the platform's internal
beliefs, handles at most one event and runs one body step of one
intention (round-robin), then bills the cycle overhead.  The three
energy-related internal actions work together::

    energy_checkpoint();          // remember the intention's load meter
    read_trh_sensor(); !transmit_data;
    update_estimate("e_meas_temperature");   // EMA towards what was spent
    deep_sleep().                 // persist, drop RAM, sleep
"""

from __future__ import annotations

import enum
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

from .asl import (
    Action, AgentProgram, Atom, BeliefUpdate, InternalAction, Literal, Number,
    PlanInstance, String, SubGoal, TriggerKind, eval_context, evaluate, ground_literal,
    unify,
)
from .beliefs import BeliefBase, BeliefEntry, Lifetime, Origin, is_internal
from .energy import DeviceMode, EnergyPlatform
from .persistence import (
    DEFAULT_PROFILES, CorruptImageError, InsufficientEnergy, NonVolatileStore,
    VersionError, persist, restore,
)

__all__ = [
    "Event", "Frame", "Intention", "IntentionStatus", "EnergyCheckpoint",
    "EstimateUpdatePolicy", "AgentState", "NoCheckpointError", "UnknownEstimateBelief",
    "select_plan", "reasoning_cycle_step", "exec_internal_energy_checkpoint",
    "exec_internal_update_estimate", "exec_internal_deep_sleep", "wake",
    "initial_entries", "new_agent_state",
]

logger = logging.getLogger(__name__)


class NoCheckpointError(RuntimeError):
    pass


class UnknownEstimateBelief(LookupError):
    pass


@dataclass(frozen=True)
class Event:
    kind: TriggerKind
    literal: Literal
    provenance: str = "external"  # external | internal | subgoal
    parent: int | None = None

    def __str__(self) -> str:
        return f"{self.kind.value}{self.literal}"


class IntentionStatus(enum.Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    DONE = "done"
    FAILED = "failed"


@dataclass
class Frame:
    instance: PlanInstance
    pc: int = 0

    @property
    def finished(self) -> bool:
        return self.pc >= len(self.instance.plan.body)


@dataclass
class Intention:
    id: int
    stack: list = field(default_factory=list)
    status: IntentionStatus = IntentionStatus.ACTIVE
    #: energy billed to this intention's external actions so far (µJ)
    action_energy: float = 0.0


@dataclass(frozen=True)
class EnergyCheckpoint:
    intention_id: int
    buffer_level_uJ: float
    timestamp_ms: int
    meter_uJ: float = 0.0


@dataclass(frozen=True)
class EstimateUpdatePolicy:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def update(self, old: float, measured: float) -> float:
        return max(0.0, self.alpha * measured + (1 - self.alpha) * old)


@dataclass
class AgentState:
    program: AgentProgram
    beliefs: BeliefBase
    policy: EstimateUpdatePolicy = field(default_factory=EstimateUpdatePolicy)
    events: deque = field(default_factory=deque)
    intentions: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)
    cycle: int = 0
    last_run: int = -1
    _ids: itertools.count = field(default_factory=lambda: itertools.count(1), repr=False)

    @property
    def relevant_functors(self) -> set[str]:
        return {p.trigger.literal.functor for p in self.program.plans
                if not p.trigger.kind.is_goal}

    def post(self, kind: TriggerKind, literal: Literal, provenance: str = "external",
             parent: int | None = None) -> Event:
        ev = Event(kind, literal, provenance, parent)
        self.events.append(ev)
        return ev

    def intention(self, intention_id: int) -> Intention | None:
        for it in self.intentions:
            if it.id == intention_id:
                return it
        return None

    @property
    def quiescent(self) -> bool:
        return not self.events and not any(
            it.status is IntentionStatus.ACTIVE for it in self.intentions)


def initial_entries(program: AgentProgram) -> list[BeliefEntry]:
    """Program beliefs; those naming device states become platform-owned."""
    return [BeliefEntry.of(lit, Origin.INTERNAL if is_internal(lit) else Origin.PROGRAM)
            for lit in program.initial_beliefs]


def new_agent_state(program: AgentProgram, alpha: float = 0.5) -> AgentState:
    return AgentState(program, BeliefBase(initial_entries(program)), EstimateUpdatePolicy(alpha))


def _log(log, kind: str, **detail) -> None:
    if log is not None:
        log.record(kind, **detail)


# --------------------------------------------------------------------------
# Plan selection
# --------------------------------------------------------------------------


def select_plan(event: Event, program: AgentProgram, beliefs) -> PlanInstance | None:
    """First plan, in declaration order, whose trigger matches and context holds."""
    for plan in program.plans:
        if plan.trigger.kind is not event.kind:
            continue
        s = unify(plan.trigger.literal, event.literal)
        if s is None:
            continue
        s = eval_context(plan.context, beliefs, s)
        if s is not None:
            return PlanInstance(plan, s)
    return None


def _bindings_json(s: dict) -> dict:
    out = {}
    for k, v in sorted(s.items()):
        if not k.startswith("_"):
            out[k] = v.value if isinstance(v, Number) else str(v)
    return out


def _handle_event(state: AgentState, ev: Event, log) -> None:
    instance = select_plan(ev, state.program, state.beliefs)
    parent = state.intention(ev.parent) if ev.parent is not None else None
    if instance is not None:
        plan = instance.plan
        if parent is not None:
            parent.stack.append(Frame(instance))
            parent.status = IntentionStatus.ACTIVE
            target = parent
        else:
            target = Intention(next(state._ids), [Frame(instance)])
            state.intentions.append(target)
        _log(log, "plan_selected", event=str(ev), line=plan.line, plan=plan.declaration_index,
             intention=target.id, bindings=_bindings_json(instance.bindings))
        return

    if ev.kind is TriggerKind.GOAL_ADD:
        _log(log, "event", event=str(ev), status="no_applicable_plan")
        state.post(TriggerKind.GOAL_DEL, ev.literal, ev.provenance, ev.parent)
    elif ev.kind is TriggerKind.GOAL_DEL:
        logger.warning("goal %s failed and no failure plan handles it", ev.literal)
        _log(log, "event", event=str(ev), status="dropped")
        if parent is not None:
            _fail(state, parent, log, f"sub-goal {ev.literal} failed")
    else:
        _log(log, "event", event=str(ev), status="no_relevant_plan")


def _fail(state: AgentState, intention: Intention, log, reason: str) -> None:
    intention.status = IntentionStatus.FAILED
    state.intentions.remove(intention)
    state.checkpoints.pop(intention.id, None)
    _log(log, "internal_action", name="intention_failed", intention=intention.id, reason=reason)


def _next_runnable(state: AgentState) -> Intention | None:
    runnable = [it for it in state.intentions if it.status is IntentionStatus.ACTIVE]
    if not runnable:
        return None
    for it in runnable:
        if it.id > state.last_run:
            return it
    return runnable[0]


# --------------------------------------------------------------------------
# Internal actions
# --------------------------------------------------------------------------


def exec_internal_energy_checkpoint(state: AgentState, intention_id: int,
                                    platform: EnergyPlatform) -> EnergyCheckpoint:
    """Record the buffer level and the intention's load meter.

    Only runs from an executing intention, so a checkpoint with no
    intention cannot happen.
    """
    intention = state.intention(intention_id)
    meter = intention.action_energy if intention is not None else 0.0
    cp = EnergyCheckpoint(intention_id, platform.level, platform.time_ms, meter)
    state.checkpoints[intention_id] = cp
    return cp


def _estimate_name(arg) -> str:
    if isinstance(arg, Atom):
        return arg.name
    if isinstance(arg, String):
        return arg.value
    raise UnknownEstimateBelief(f"update_estimate needs a belief name, got {arg}")


def exec_internal_update_estimate(state: AgentState, name, intention_id: int,
                                  platform: EnergyPlatform,
                                  policy: EstimateUpdatePolicy | None = None) -> Literal:
    """Blend the energy the intention spent since its checkpoint into ``name``.

    ``measured`` counts only loads billed to this intention's external
    actions (sub-goals included), so harvest inflow and other intentions
    do not distort the estimate.
    """
    policy = policy or state.policy
    if not isinstance(name, str):
        name = _estimate_name(name)
    cp = state.checkpoints.get(intention_id)
    if cp is None:
        raise NoCheckpointError(f"update_estimate({name}) without energy_checkpoint()")
    entry = state.beliefs.find(name, 1)
    if entry is None or not isinstance(entry.literal.args[0], Number):
        raise UnknownEstimateBelief(f"no numeric belief {name}/1")
    intention = state.intention(intention_id)
    spent = intention.action_energy if intention is not None else cp.meter_uJ
    measured = max(0.0, spent - cp.meter_uJ)
    old = entry.literal.args[0].value
    new = policy.update(old, measured)
    lit = Literal(name, (Number(new),), entry.literal.annotations, entry.literal.negated)
    state.beliefs.replace(entry.literal, BeliefEntry(lit, entry.lifetime, Origin.RUNTIME,
                                                     platform.time_ms))
    del state.checkpoints[intention_id]
    return lit


def exec_internal_deep_sleep(state: AgentState, platform: EnergyPlatform,
                             store: NonVolatileStore, profiles=None, log=None) -> AgentState:
    """Persist fram/flash beliefs, drop everything in RAM and enter deep sleep.

    A write the buffer cannot fund is skipped (the previous image stays
    valid) and logged; the device sleeps regardless.
    """
    profiles = profiles or DEFAULT_PROFILES
    for medium in (Lifetime.FRAM, Lifetime.FLASH):
        entries = state.beliefs.entries(medium)
        try:
            image = persist(entries, medium, profiles[medium], platform)
        except InsufficientEnergy as exc:
            logger.warning("insufficient energy to persist: %s", exc)
            _log(log, "persist", medium=medium.value, status="insufficient_energy",
                 beliefs=len(entries))
            continue
        store.write(image)
        _log(log, "persist", medium=medium.value, status="ok", bytes=image.size,
             beliefs=[str(e.literal) for e in entries])
    state.beliefs = BeliefBase()
    state.events.clear()
    state.intentions.clear()
    state.checkpoints.clear()
    platform.mode = DeviceMode.DEEP_SLEEP
    platform.network_state = "uninit"
    _log(log, "sleep")
    return state


def wake(state: AgentState, platform: EnergyPlatform, store: NonVolatileStore,
         profiles=None, log=None, reason: str = "wake") -> AgentState:
    """Rebuild RAM state after deep sleep or a brown-out reboot.

    Volatile beliefs come back at their program values; each medium with a
    valid image replaces the program's beliefs of that lifetime.  A corrupt
    image is reported and the program values are kept.
    """
    profiles = profiles or DEFAULT_PROFILES
    platform.mode = DeviceMode.ACTIVE
    _log(log, "wake", reason=reason)
    entries = initial_entries(state.program)
    for medium in (Lifetime.FRAM, Lifetime.FLASH):
        data = store.read(medium)
        if data is None:
            continue
        try:
            restored = restore(data, profiles[medium], platform)
        except (CorruptImageError, VersionError) as exc:
            logger.warning("discarding %s image: %s", medium.value, exc)
            _log(log, "restore", medium=medium.value, status="corrupt", warning=str(exc))
            continue
        entries = [e for e in entries if e.lifetime is not medium] + restored
        _log(log, "restore", medium=medium.value, status="ok",
             beliefs=[str(e.literal) for e in restored])
    state.beliefs = BeliefBase(entries)
    state.events.clear()
    state.intentions.clear()
    state.checkpoints.clear()
    platform.publish_internal_beliefs(state.beliefs)
    state.post(TriggerKind.BELIEF_ADD, Literal("device_mode", (Atom("active"),)), "internal")
    return state


# --------------------------------------------------------------------------
# Cycle
# --------------------------------------------------------------------------


def _execute_step(state: AgentState, intention: Intention, platform: EnergyPlatform,
                  store: NonVolatileStore, profiles, log) -> None:
    frame = intention.stack[-1]
    step = frame.instance.plan.body[frame.pc]
    s = frame.instance.bindings
    frame.pc += 1

    if isinstance(step, Action):
        args = tuple(evaluate(a, s) for a in step.args)
        energy, duration = platform.draw(step.name, args, state.beliefs)
        _log(log, "action", name=step.name, args=[_arg_json(a) for a in args],
             energy_uJ=energy, duration_ms=duration, intention=intention.id)
        intention.action_energy += energy
        platform.execute(step.name, args, state.beliefs)
    elif isinstance(step, SubGoal):
        goal = ground_literal(step.literal, s)
        state.post(TriggerKind.GOAL_ADD, goal, "subgoal", intention.id)
        intention.status = IntentionStatus.SUSPENDED
    elif isinstance(step, BeliefUpdate):
        lit = ground_literal(step.literal, s)
        if is_internal(lit):
            raise PermissionError(f"plan body may not change internal belief {lit.functor}")
        if step.add:
            changes = [state.beliefs.assert_belief(BeliefEntry.of(lit, Origin.RUNTIME,
                                                                  platform.time_ms))]
        else:
            changes = state.beliefs.retract_belief(lit)
        for ch in filter(None, changes):
            _log(log, "belief_change", change=str(ch))
            state.post(ch.kind, ch.literal, "internal")
    elif step.name == "energy_checkpoint":
        cp = exec_internal_energy_checkpoint(state, intention.id, platform)
        _log(log, "internal_action", name=step.name, intention=intention.id,
             checkpoint_uJ=cp.buffer_level_uJ)
    elif step.name == "update_estimate":
        old = state.beliefs.find(_estimate_name(step.args[0]), 1)
        cp = state.checkpoints.get(intention.id)
        lit = exec_internal_update_estimate(state, step.args[0], intention.id, platform)
        _log(log, "internal_action", name=step.name, intention=intention.id,
             belief=lit.functor, old=old.literal.args[0].value,
             measured=intention.action_energy - cp.meter_uJ, new=lit.args[0].value)
    elif step.name == "deep_sleep":
        _log(log, "internal_action", name=step.name, intention=intention.id)
        exec_internal_deep_sleep(state, platform, store, profiles, log)
        return

    while intention.status is IntentionStatus.ACTIVE and intention.stack and \
            intention.stack[-1].finished:
        intention.stack.pop()
    if intention.status is IntentionStatus.ACTIVE and not intention.stack:
        intention.status = IntentionStatus.DONE
        state.intentions.remove(intention)
        state.checkpoints.pop(intention.id, None)


def _arg_json(term):
    return term.value if isinstance(term, Number) else str(term)


def reasoning_cycle_step(state: AgentState, platform: EnergyPlatform,
                         store: NonVolatileStore | None = None, profiles=None,
                         log=None) -> AgentState:
    """Run one reasoning cycle on an active device.

    BrownOut raised by the platform propagates to the caller.
    """
    if platform.mode is not DeviceMode.ACTIVE:
        raise RuntimeError("reasoning cycle needs an active device")
    store = store if store is not None else NonVolatileStore()
    state.cycle += 1
    _log(log, "cycle", cycle=state.cycle)

    relevant = state.relevant_functors
    for change in platform.publish_internal_beliefs(state.beliefs):
        if change.literal.functor in relevant:
            state.post(change.kind, change.literal, "internal")

    if state.events:
        ev = state.events.popleft()
        _log(log, "event", event=str(ev), provenance=ev.provenance, status="dequeued")
        _handle_event(state, ev, log)

    intention = _next_runnable(state)
    if intention is not None:
        state.last_run = intention.id
        try:
            _execute_step(state, intention, platform, store, profiles, log)
        except (NoCheckpointError, UnknownEstimateBelief, PermissionError, TypeError,
                LookupError) as exc:
            logger.warning("intention %d failed: %s", intention.id, exc)
            if intention in state.intentions:
                _fail(state, intention, log, str(exc))

    platform.bill(platform.costs.cycle_overhead_uJ, platform.costs.cycle_duration_ms, "cycle")
    return state
