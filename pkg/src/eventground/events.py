"""Event-tuple algebra: actor/object identifiers, the verb vocabulary,
spatial relations and the grounded event tuple itself.

Every wire format in the package serializes these types through the
canonical string forms defined here (``person_1``, ``robot_2``,
``object_3``, ``place_down``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union


class EventError(ValueError):
    """Base class for invalid identifiers, verbs and tuples."""


class IdentifierError(EventError):
    pass


class UnknownVerb(EventError):
    pass


class IdleAction(EventError):
    pass


class SelfRelation(EventError):
    pass


class NegativeTime(EventError):
    pass


class RelationTypeError(EventError):
    pass


class Action(str, Enum):
    IDLE = "idle"
    GRASP = "grasp"
    HANDOVER = "handover"
    CUT = "cut"
    PLACE_DOWN = "place_down"
    DROP = "drop"
    TWIST = "twist"
    HOLD = "hold"
    POUR = "pour"
    SQUASH = "squash"
    SHAKE = "shake"
    PUSH = "push"
    STIR = "stir"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> Action:
        """Parse a verb, accepting ``hand_over`` as a spelling of ``handover``."""
        if isinstance(text, Action):
            return text
        if not isinstance(text, str):
            raise UnknownVerb(f"verb must be a string, got {text!r}")
        key = _VERB_ALIASES.get(text, text)
        try:
            return cls(key)
        except ValueError:
            raise UnknownVerb(f"unknown verb {text!r}") from None


_VERB_ALIASES = {"hand_over": "handover"}

VOCABULARY: tuple[Action, ...] = tuple(Action)
EVENT_VERBS: tuple[Action, ...] = tuple(a for a in Action if a is not Action.IDLE)
# verbs annotated in the tabletop evaluation recordings
EVAL_VERBS: tuple[Action, ...] = (
    Action.GRASP,
    Action.HANDOVER,
    Action.PLACE_DOWN,
    Action.HOLD,
    Action.POUR,
)

_ACTOR_RE = re.compile(r"^(person|robot)_([1-9][0-9]*)$")
_OBJECT_RE = re.compile(r"^object_([1-9][0-9]*)$")


@dataclass(frozen=True)
class ActorId:
    kind: str
    index: int

    def __post_init__(self) -> None:
        if self.kind not in ("person", "robot"):
            raise IdentifierError(f"actor kind must be person or robot, got {self.kind!r}")
        if isinstance(self.index, bool) or not isinstance(self.index, int) or self.index < 1:
            raise IdentifierError(f"actor index must be a positive integer, got {self.index!r}")

    def __str__(self) -> str:
        return f"{self.kind}_{self.index}"

    @property
    def is_robot(self) -> bool:
        return self.kind == "robot"

    @classmethod
    def parse(cls, text: str) -> ActorId:
        m = _ACTOR_RE.match(text) if isinstance(text, str) else None
        if m is None:
            raise IdentifierError(f"not an actor id: {text!r}")
        return cls(m.group(1), int(m.group(2)))


@dataclass(frozen=True)
class ObjectId:
    index: int

    def __post_init__(self) -> None:
        if isinstance(self.index, bool) or not isinstance(self.index, int) or self.index < 1:
            raise IdentifierError(f"object index must be a positive integer, got {self.index!r}")

    def __str__(self) -> str:
        return f"object_{self.index}"

    @classmethod
    def parse(cls, text: str) -> ObjectId:
        m = _OBJECT_RE.match(text) if isinstance(text, str) else None
        if m is None:
            raise IdentifierError(f"not an object id: {text!r}")
        return cls(int(m.group(1)))


InstanceId = Union[ActorId, ObjectId]


def parse_instance(text: str) -> InstanceId:
    """Parse either an actor or an object id."""
    if isinstance(text, str) and text.startswith("object_"):
        return ObjectId.parse(text)
    return ActorId.parse(text)


RELATIONS = ("on", "in", "to")


@dataclass(frozen=True)
class SpatialRelation:
    """``(rho, target)``; ``on``/``in`` take an object, ``to`` takes an actor or object."""

    rho: str
    target: InstanceId

    def __post_init__(self) -> None:
        if self.rho not in RELATIONS:
            raise RelationTypeError(f"relation must be one of {RELATIONS}, got {self.rho!r}")
        if not isinstance(self.target, (ActorId, ObjectId)):
            raise RelationTypeError(f"relation target must be an instance id, got {self.target!r}")
        if self.rho in ("on", "in") and not isinstance(self.target, ObjectId):
            raise RelationTypeError(f"relation {self.rho!r} requires an object target, got {self.target}")

    def __str__(self) -> str:
        return f"({self.rho}, {self.target})"


@dataclass(frozen=True)
class EventTuple:
    actor: ActorId
    action: Action
    object: ObjectId
    relation: Optional[SpatialRelation]
    robot_interaction: bool
    time: float

    def __post_init__(self) -> None:
        if not isinstance(self.actor, ActorId):
            raise IdentifierError(f"actor must be an ActorId, got {self.actor!r}")
        if not isinstance(self.object, ObjectId):
            raise IdentifierError(f"object must be an ObjectId, got {self.object!r}")
        if not isinstance(self.action, Action):
            raise UnknownVerb(f"action must be an Action, got {self.action!r}")
        if self.action is Action.IDLE:
            raise IdleAction("idle never appears in an event tuple")
        if self.relation is not None:
            if not isinstance(self.relation, SpatialRelation):
                raise RelationTypeError(f"relation must be a SpatialRelation, got {self.relation!r}")
            if self.relation.target == self.object:
                raise SelfRelation(f"{self.object} cannot relate to itself")
        if not isinstance(self.robot_interaction, bool):
            raise EventError(f"robot_interaction must be a bool, got {self.robot_interaction!r}")
        if isinstance(self.time, bool) or not isinstance(self.time, (int, float)):
            raise EventError(f"time must be a number, got {self.time!r}")
        if not math.isfinite(self.time):
            raise EventError(f"time must be finite, got {self.time!r}")
        if self.time < 0:
            raise NegativeTime(f"time must be >= 0, got {self.time}")
        object.__setattr__(self, "time", float(self.time))

    def at(self, time: float) -> EventTuple:
        """Same event fields at another time."""
        return EventTuple(self.actor, self.action, self.object, self.relation,
                          self.robot_interaction, time)


def _coerce_actor(value) -> ActorId:
    return value if isinstance(value, ActorId) else ActorId.parse(value)


def _coerce_object(value) -> ObjectId:
    return value if isinstance(value, ObjectId) else ObjectId.parse(value)


def make_relation(rho: str, target) -> SpatialRelation:
    if not isinstance(target, (ActorId, ObjectId)):
        target = parse_instance(target)
    return SpatialRelation(rho, target)


def make_tuple(actor, action, object, relation=None, robot_interaction: bool = False,
               time: float = 0.0) -> EventTuple:
    """Build a validated :class:`EventTuple`.

    Identifiers and verbs may be given either parsed or in canonical
    string form; ``relation`` may be a :class:`SpatialRelation`, a
    ``(rho, target)`` pair, or ``None``.
    """
    if relation is not None and not isinstance(relation, SpatialRelation):
        rho, target = relation
        relation = make_relation(rho, target)
    return EventTuple(
        actor=_coerce_actor(actor),
        action=Action.parse(action),
        object=_coerce_object(object),
        relation=relation,
        robot_interaction=robot_interaction,
        time=time,
    )


def order_key(t: EventTuple) -> tuple:
    # time, actor string and verb come first; the rest only separates
    # tuples that agree on those three
    rel = ("", "") if t.relation is None else (t.relation.rho, str(t.relation.target))
    return (t.time, str(t.actor), t.action.value, t.object.index, rel, t.robot_interaction)


def tuple_order(lhs: EventTuple, rhs: EventTuple) -> int:
    """Three-way comparison: negative if ``lhs`` sorts first, 0 if equal."""
    a, b = order_key(lhs), order_key(rhs)
    return (a > b) - (a < b)


def sort_events(tuples) -> list[EventTuple]:
    return sorted(tuples, key=order_key)
