"""Belief base with lifetime classes and platform-owned internal beliefs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

from .asl import (
    Atom, Literal, String, TriggerKind, is_ground, unify,
)

__all__ = [
    "Lifetime", "Origin", "BeliefEntry", "ChangeEvent", "BeliefBase",
    "INTERNAL_FUNCTORS", "is_internal", "lifetime_of",
]

#: Device-state vocabulary published by the platform every reasoning cycle.
INTERNAL_FUNCTORS = {
    "device_mode": 1,
    "network_role": 1,
    "network_state": 1,
    "buffer_size": 1,
    "e_available": 1,
    "e_tendency": 1,
}


class Lifetime(enum.Enum):
    VOLATILE = "volatile"
    FRAM = "fram"
    FLASH = "flash"


class Origin(enum.Enum):
    PROGRAM = "program"
    INTERNAL = "internal"
    RUNTIME = "runtime"


def is_internal(lit: Literal) -> bool:
    return INTERNAL_FUNCTORS.get(lit.functor) == lit.arity


def lifetime_of(lit: Literal) -> Lifetime:
    """Map a ``persist(none|fram|flash)`` annotation to a lifetime; none is volatile."""
    ann = lit.annotation("persist")
    if ann is None or len(ann.args) != 1:
        return Lifetime.VOLATILE
    arg = ann.args[0]
    medium = arg.name if isinstance(arg, Atom) else arg.value if isinstance(arg, String) else None
    return {"fram": Lifetime.FRAM, "flash": Lifetime.FLASH}.get(medium, Lifetime.VOLATILE)


@dataclass(frozen=True)
class BeliefEntry:
    literal: Literal
    lifetime: Lifetime = Lifetime.VOLATILE
    origin: Origin = Origin.PROGRAM
    last_updated: int = 0

    @classmethod
    def of(cls, literal: Literal, origin: Origin = Origin.PROGRAM, time_ms: int = 0) -> "BeliefEntry":
        return cls(literal, lifetime_of(literal), origin, time_ms)


@dataclass(frozen=True)
class ChangeEvent:
    kind: TriggerKind
    literal: Literal

    def __str__(self) -> str:
        return f"{self.kind.value}{self.literal}"


class BeliefBase:
    """Ordered collection of ground beliefs.

    Iteration yields literals in insertion order, which is also the order
    in which context evaluation enumerates candidates.  Internal beliefs
    are single-instance per functor/arity and are replaced in place;
    program and runtime beliefs follow set semantics on the full literal.
    """

    def __init__(self, entries: Iterable[BeliefEntry] = ()):
        self._entries: list[BeliefEntry] = []
        for entry in entries:
            self.assert_belief(entry)

    def __iter__(self) -> Iterator[Literal]:
        return (e.literal for e in list(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, lit: Literal) -> bool:
        return any(e.literal == lit for e in self._entries)

    def entries(self, lifetime: Lifetime | None = None) -> list[BeliefEntry]:
        return [e for e in self._entries if lifetime is None or e.lifetime is lifetime]

    def literals(self) -> list[Literal]:
        return [e.literal for e in self._entries]

    def find(self, functor: str, arity: int = 1) -> BeliefEntry | None:
        for e in self._entries:
            if e.literal.key == (functor, arity):
                return e
        return None

    def assert_belief(self, entry: BeliefEntry) -> ChangeEvent | None:
        lit = entry.literal
        if not is_ground(lit):
            raise ValueError(f"cannot assert non-ground belief {lit}")
        if is_internal(lit):
            if entry.origin is not Origin.INTERNAL:
                raise PermissionError(f"{lit.functor}/{lit.arity} is an internal belief "
                                      f"owned by the platform")
            for i, e in enumerate(self._entries):
                if e.literal.key == lit.key:
                    if e.literal == lit:
                        return None
                    self._entries[i] = entry
                    return ChangeEvent(TriggerKind.BELIEF_ADD, lit)
        elif lit in self:
            return None
        self._entries.append(entry)
        return ChangeEvent(TriggerKind.BELIEF_ADD, lit)

    def retract_belief(self, pattern: Literal) -> list[ChangeEvent]:
        removed, kept = [], []
        for e in self._entries:
            if unify(pattern, e.literal) is not None:
                removed.append(ChangeEvent(TriggerKind.BELIEF_DEL, e.literal))
            else:
                kept.append(e)
        self._entries = kept
        return removed

    def replace(self, old: Literal, entry: BeliefEntry) -> list[ChangeEvent]:
        """Swap ``old`` for ``entry`` keeping its position."""
        for i, e in enumerate(self._entries):
            if e.literal == old:
                if entry.literal == old:
                    self._entries[i] = entry
                    return []
                self._entries[i] = entry
                return [ChangeEvent(TriggerKind.BELIEF_DEL, old),
                        ChangeEvent(TriggerKind.BELIEF_ADD, entry.literal)]
        raise KeyError(str(old))

    def query(self, pattern: Literal) -> list[tuple[Literal, dict]]:
        out = []
        for e in self._entries:
            s = unify(pattern, e.literal)
            if s is not None:
                out.append((e.literal, s))
        return out

    def snapshot_persistent(self, medium: Lifetime):
        """Canonical image of the beliefs stored on ``medium`` (unbilled)."""
        from .persistence import encode_image

        if medium is Lifetime.VOLATILE:
            raise ValueError("volatile beliefs are not persisted")
        return encode_image(self.entries(medium), medium)

    def copy(self) -> "BeliefBase":
        clone = BeliefBase()
        clone._entries = [replace(e) for e in self._entries]
        return clone
