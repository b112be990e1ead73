from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harvest_bdi.asl import Literal, Number, TriggerKind, parse_literal
from harvest_bdi.beliefs import (
    INTERNAL_FUNCTORS, BeliefBase, BeliefEntry, ChangeEvent, Lifetime, Origin, lifetime_of,
)
from harvest_bdi.persistence import decode_image, _decode_payload


def entry(text, origin=Origin.PROGRAM):
    return BeliefEntry.of(parse_literal(text), origin)


def test_lifetime_from_annotation():
    assert lifetime_of(parse_literal('a(1)[persist("fram")]')) is Lifetime.FRAM
    assert lifetime_of(parse_literal("a(1)[persist(flash)]")) is Lifetime.FLASH
    assert lifetime_of(parse_literal("a(1)[persist(none)]")) is Lifetime.VOLATILE
    assert lifetime_of(parse_literal("a(1)[impact(3)]")) is Lifetime.VOLATILE


def test_internal_replaced_in_place(corpus_beliefs):
    before = corpus_beliefs.literals()
    ev = corpus_beliefs.assert_belief(entry("e_available(120)", Origin.INTERNAL))
    assert ev == ChangeEvent(TriggerKind.BELIEF_ADD, parse_literal("e_available(120)"))
    after = corpus_beliefs.literals()
    assert len(after) == len(before)
    assert after[1] == parse_literal("e_available(120)")
    assert sum(1 for b in after if b.functor == "e_available") == 1


def test_assert_twice_is_noop():
    bb = BeliefBase()
    assert bb.assert_belief(entry("note(1)", Origin.RUNTIME)) is not None
    assert bb.assert_belief(entry("note(1)", Origin.RUNTIME)) is None
    assert len(bb) == 1
    bb.assert_belief(entry("e_tendency(5)", Origin.INTERNAL))
    assert bb.assert_belief(entry("e_tendency(5)", Origin.INTERNAL)) is None


def test_plan_write_to_internal_rejected():
    with pytest.raises(PermissionError):
        BeliefBase().assert_belief(entry("device_mode(active)", Origin.RUNTIME))


def test_non_ground_rejected():
    with pytest.raises(ValueError):
        BeliefBase().assert_belief(BeliefEntry.of(parse_literal("b(X)")))


def test_program_beliefs_allow_multiple_instances(corpus_beliefs):
    assert len(corpus_beliefs.query(parse_literal("transmit_power(P)"))) == 2


def test_retract_counts(corpus_beliefs):
    events = corpus_beliefs.retract_belief(parse_literal("transmit_power(P)"))
    assert len(events) == 2
    assert all(e.kind is TriggerKind.BELIEF_DEL for e in events)
    assert corpus_beliefs.retract_belief(parse_literal("nothing(here)")) == []
    assert len(corpus_beliefs.retract_belief(parse_literal("e_meas_temperature(R)"))) == 1
    assert len(corpus_beliefs) == 2


def test_query_order(corpus_beliefs):
    got = corpus_beliefs.query(parse_literal("transmit_power(P)[impact(E)]"))
    assert [(s["P"].value, s["E"].value) for _, s in got] == [(8.0, 101.0), (4.0, 30.0)]
    assert BeliefBase().query(parse_literal("a(X)")) == []
    ground = parse_literal("e_tendency(0)")
    assert corpus_beliefs.query(ground) == [(ground, {})]


def _image_literals(image):
    return [e.literal for e in _decode_payload(image.payload, image.medium)]


def test_snapshot_persistent(corpus_beliefs):
    fram = corpus_beliefs.snapshot_persistent(Lifetime.FRAM)
    assert _image_literals(fram) == [parse_literal('e_meas_temperature(30)[persist("fram")]')]
    flash = corpus_beliefs.snapshot_persistent(Lifetime.FLASH)
    assert flash.payload == b""
    with pytest.raises(ValueError):
        corpus_beliefs.snapshot_persistent(Lifetime.VOLATILE)


def test_snapshot_after_update(corpus_beliefs):
    old = corpus_beliefs.find("e_meas_temperature").literal
    new = Literal(old.functor, (Number(35.0),), old.annotations)
    changes = corpus_beliefs.replace(old, BeliefEntry(new, Lifetime.FRAM, Origin.RUNTIME, 10))
    assert [c.kind for c in changes] == [TriggerKind.BELIEF_DEL, TriggerKind.BELIEF_ADD]
    image = corpus_beliefs.snapshot_persistent(Lifetime.FRAM)
    assert decode_image(image.to_bytes()).payload == image.payload
    assert _image_literals(image) == [new]


def test_partition_by_lifetime(corpus_beliefs):
    parts = {lt: corpus_beliefs.entries(lt) for lt in Lifetime}
    assert sum(len(v) for v in parts.values()) == len(corpus_beliefs)
    assert [e.literal.functor for e in parts[Lifetime.FRAM]] == ["e_meas_temperature"]


# -- properties ------------------------------------------------------------------

internal_ops = st.tuples(st.sampled_from(sorted(INTERNAL_FUNCTORS)), st.integers(0, 3))
program_ops = st.tuples(st.sampled_from(["+", "-"]), st.sampled_from(["a", "b"]),
                        st.integers(0, 3))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(internal_ops, program_ops), max_size=40))
def test_events_match_diff_and_single_instance(ops):
    bb = BeliefBase()
    for op in ops:
        before = set(bb.literals())
        if len(op) == 2:
            functor, value = op
            events = [bb.assert_belief(BeliefEntry.of(Literal(functor, (Number(float(value)),)),
                                                      Origin.INTERNAL))]
        else:
            sign, functor, value = op
            lit = Literal(functor, (Number(float(value)),))
            if sign == "+":
                events = [bb.assert_belief(BeliefEntry.of(lit, Origin.RUNTIME))]
            else:
                events = bb.retract_belief(lit)
        events = [e for e in events if e is not None]
        after = set(bb.literals())
        added = {e.literal for e in events if e.kind is TriggerKind.BELIEF_ADD}
        removed = {e.literal for e in events if e.kind is TriggerKind.BELIEF_DEL}
        # internal replacement is reported as the new value only
        assert added == after - before
        assert removed <= before - after
        assert {b for b in before - after if b.functor not in INTERNAL_FUNCTORS} == removed
        for functor in INTERNAL_FUNCTORS:
            assert sum(1 for b in bb if b.functor == functor) <= 1
