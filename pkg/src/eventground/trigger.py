"""Action-change trigger.

Per actor, frame labels are grouped into runs of identical labels. A run
is *confirmed* once it has lasted ``min_hold_frames`` consecutive
frames. A confirmed run fires a trigger when its label is not ``idle``
and differs from the previously confirmed label; the trigger carries the
time and frame index of the run's first frame. Unconfirmed runs (noise
blips) leave the confirmed label untouched, so ``grasp, push, grasp``
with ``min_hold_frames=2`` does not re-fire ``grasp``.

Every actor starts with ``idle`` confirmed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .events import Action, ActorId
from .streams import FrameRecord


class OutOfOrderFrame(ValueError):
    pass


@dataclass(frozen=True)
class DebounceConfig:
    min_hold_frames: int = 2

    def __post_init__(self) -> None:
        if isinstance(self.min_hold_frames, bool) or not isinstance(self.min_hold_frames, int) \
                or self.min_hold_frames < 1:
            raise ValueError(f"min_hold_frames must be an integer >= 1, got {self.min_hold_frames!r}")


@dataclass(frozen=True)
class TriggerEvent:
    """Request to reason about ``actor`` at ``time``.

    ``action`` is the detected label; it is ``None`` only for the
    frame-by-frame baseline, which queries without a detector label.
    """

    actor: ActorId
    action: Optional[Action]
    time: float
    frame_index: int

    def __post_init__(self) -> None:
        if self.action is Action.IDLE:
            raise ValueError("a trigger never carries idle")

    def describe(self) -> dict:
        return {"actor": str(self.actor), "action": self.action.value if self.action else None,
                "time": self.time, "frame": self.frame_index}


@dataclass
class _Run:
    label: Action
    start_time: float
    start_frame: int
    length: int = 1


@dataclass
class _ActorState:
    confirmed: Action = Action.IDLE
    run: Optional[_Run] = None


@dataclass
class TriggerState:
    config: DebounceConfig = field(default_factory=DebounceConfig)
    actors: dict[ActorId, _ActorState] = field(default_factory=dict)
    last_frame: Optional[int] = None
    last_time: Optional[float] = None


def reset(state: TriggerState) -> TriggerState:
    """Fresh state with the same configuration."""
    return TriggerState(state.config)


def observe(frame: FrameRecord, state: TriggerState) -> list[TriggerEvent]:
    """Advance ``state`` by one frame and return the triggers it fires.

    Actors absent from a frame break their current run but keep their
    confirmed label.
    """
    if state.last_frame is not None and (
            frame.frame_index <= state.last_frame or frame.time <= state.last_time):
        raise OutOfOrderFrame(
            f"frame {frame.frame_index} at t={frame.time} after frame {state.last_frame} at t={state.last_time}")
    state.last_frame = frame.frame_index
    state.last_time = frame.time

    for actor, st in state.actors.items():
        if actor not in frame.actions:
            st.run = None

    fired = []
    hold = state.config.min_hold_frames
    for actor in sorted(frame.actions, key=str):
        label = frame.actions[actor]
        st = state.actors.setdefault(actor, _ActorState())
        if st.run is not None and st.run.label is label:
            st.run.length += 1
        else:
            st.run = _Run(label, frame.time, frame.frame_index)
        if st.run.length == hold:
            if label is not Action.IDLE and label is not st.confirmed:
                fired.append(TriggerEvent(actor, label, st.run.start_time, st.run.start_frame))
            st.confirmed = label
    return fired


class ActionTrigger:
    """Stateful wrapper around :func:`observe` for one stream."""

    def __init__(self, min_hold_frames: int = 2) -> None:
        self.state = TriggerState(DebounceConfig(min_hold_frames))

    def observe(self, frame: FrameRecord) -> list[TriggerEvent]:
        return observe(frame, self.state)

    def reset(self) -> None:
        self.state = reset(self.state)


def count_label_transitions(labels: list[Action]) -> int:
    """Changes into a non-idle label, counting the stream start as idle."""
    prev = Action.IDLE
    n = 0
    for lab in labels:
        if lab is not prev and lab is not Action.IDLE:
            n += 1
        prev = lab
    return n
