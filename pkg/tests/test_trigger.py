import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventground.events import VOCABULARY, Action, ActorId
from eventground.streams import FrameRecord
from eventground.trigger import (
    ActionTrigger,
    DebounceConfig,
    OutOfOrderFrame,
    TriggerState,
    count_label_transitions,
    observe,
    reset,
)

A1 = ActorId("person", 1)
I, G, PD = Action.IDLE, Action.GRASP, Action.PLACE_DOWN


def frames_for(labels, actor=A1, period=0.1):
    return [FrameRecord(k, round(k * period, 9), {actor: lab}, {actor: f"c{k}"}) for k, lab in enumerate(labels)]


def run(labels, hold=2):
    trig = ActionTrigger(hold)
    return [e for f in frames_for(labels) for e in trig.observe(f)]


def test_two_actions():
    fired = run([I, I, G, G, PD, PD])
    assert [(e.action, e.frame_index) for e in fired] == [(G, 2), (PD, 4)]
    assert fired[0].time == pytest.approx(0.2)


def test_short_runs_do_not_fire():
    assert run([G, I, G]) == []


def test_all_idle():
    assert run([I] * 20) == []


def test_initial_label_counts_as_change_from_idle():
    assert [(e.action, e.frame_index) for e in run([G, G, G])] == [(G, 0)]


def test_repeat_after_idle_retriggers():
    fired = run([G, G, I, I, G, G])
    assert [e.frame_index for e in fired] == [0, 4]


def test_flicker_inside_event_does_not_retrigger():
    assert len(run([G, G, PD, G, G, G])) == 1


def test_reset_replays_identically():
    trig = ActionTrigger(2)
    labels = [I, I, G, G, PD, PD]
    first = [e for f in frames_for(labels) for e in trig.observe(f)]
    trig.reset()
    again = [e for f in frames_for(labels) for e in trig.observe(f)]
    assert first == again


def test_reset_mid_run_clears_counts():
    trig = ActionTrigger(3)
    frames = frames_for([G, G, G, G])
    trig.observe(frames[0])
    trig.observe(frames[1])
    trig.reset()
    assert trig.observe(frames[2]) == []
    fired = trig.observe(frames[3])
    assert fired == [] and trig.state.actors[A1].run.length == 2


def test_double_reset():
    st_ = TriggerState(DebounceConfig(3))
    observe(frames_for([G])[0], st_)
    assert reset(reset(st_)) == reset(st_)


def test_out_of_order():
    trig = ActionTrigger()
    f = frames_for([G, G])
    trig.observe(f[1])
    with pytest.raises(OutOfOrderFrame):
        trig.observe(f[0])


def test_absent_actor_breaks_run():
    a2 = ActorId("person", 2)
    frames = [
        FrameRecord(0, 0.0, {A1: G, a2: I}, {}),
        FrameRecord(1, 0.1, {a2: I}, {}),
        FrameRecord(2, 0.2, {A1: G, a2: G}, {}),
        FrameRecord(3, 0.3, {A1: G, a2: G}, {}),
    ]
    trig = ActionTrigger(2)
    fired = [e for f in frames for e in trig.observe(f)]
    assert sorted((str(e.actor), e.frame_index) for e in fired) == [("person_1", 2), ("person_2", 2)]


def test_invalid_hold():
    with pytest.raises(ValueError):
        DebounceConfig(0)


label_lists = st.lists(st.sampled_from(VOCABULARY[:5]), max_size=60)


@settings(max_examples=300)
@given(label_lists)
def test_min_hold_one_counts_transitions_exactly(labels):
    assert len(run(labels, hold=1)) == count_label_transitions(labels)


@settings(max_examples=300)
@given(label_lists, st.integers(1, 5))
def test_bounds_and_distinct_frames(labels, hold):
    fired = run(labels, hold)
    assert len(fired) <= count_label_transitions(labels)
    assert len(fired) <= len(labels)
    assert len({e.frame_index for e in fired}) == len(fired)
    assert all(e.action is not Action.IDLE for e in fired)
    assert run(labels, hold) == fired
