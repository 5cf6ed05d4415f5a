"""Turns triggers into grounded event tuples.

On each trigger the reasoner builds a request from memory and the last
four frames, queries the backend, parses the structured answer and
appends the resulting tuple to memory. Failures drop the event and are
recorded as diagnostics, one JSON object per line::

    {"trigger": {"actor": ..., "action": ..., "time": ..., "frame": ...},
     "error_kind": "ParseFailure", "raw_excerpt": "..."}
"""

from __future__ import annotations

import ast
import io
import json
import logging
import re
import threading
import time
import tokenize
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .events import (
    Action,
    EventError,
    EventTuple,
    IdentifierError,
    ObjectId,
    SpatialRelation,
    UnknownVerb,
    parse_instance,
)
from .memory import DuplicateEvent, Memory, UnknownInstance
from .streams import FrameRecord
from .trigger import TriggerEvent
from .vlm import DEFAULT_INSTRUCTION, ClientError, ReasonerClient, ReasonerRequest, ReasonerResponse

log = logging.getLogger(__name__)

BUFFER_SIZE = 4
EXCERPT_CHARS = 200
_FENCE = re.compile(r"```(?:json)?\s*(.*?)\s*```", re.S)


class InterpretError(ValueError):
    pass


class ParseFailure(InterpretError):
    pass


class UnknownReference(InterpretError):
    pass


class VocabularyError(InterpretError):
    pass


class EmptyBuffer(ValueError):
    pass


class TriggerFailure(RuntimeError):
    """Unexpected error while handling a trigger, tagged with the trigger."""

    def __init__(self, trigger: TriggerEvent, cause: BaseException):
        super().__init__(f"trigger {trigger.describe()}: {type(cause).__name__}: {cause}")
        self.trigger = trigger
        self.cause = cause


class FrameBuffer:
    """Ring of the most recent frames, oldest first."""

    def __init__(self, frames: Iterable[FrameRecord] = ()) -> None:
        self._frames: deque[FrameRecord] = deque(frames, maxlen=BUFFER_SIZE)

    def push(self, frame: FrameRecord) -> None:
        self._frames.append(frame)

    def frames(self) -> list[FrameRecord]:
        return list(self._frames)

    def __len__(self) -> int:
        return len(self._frames)


def assemble_context(trigger: TriggerEvent, mem: Memory, buf: FrameBuffer, *,
                     scene_input: bool = True, instruction: str = DEFAULT_INSTRUCTION) -> ReasonerRequest:
    """Build the request for ``trigger``.

    Person references list every registered person, acting person first.
    With ``scene_input`` the recent frames are full-scene crops; without
    it they are the acting person's crops from those frames.
    """
    actor_rec = mem.instance(trigger.actor)
    frames = buf.frames()
    if not frames:
        raise EmptyBuffer("frame buffer is empty")

    objects = tuple((r.id, r.crop) for r in mem.objects())
    actors = mem.actors()
    persons = [(r.id, r.crop) for r in actors if not r.id.is_robot and r.id != trigger.actor]
    if not trigger.actor.is_robot:
        persons.insert(0, (trigger.actor, actor_rec.crop))
    robots = [r for r in actors if r.id.is_robot]
    robot_hand = robots[0].crop if robots else None

    recent = []
    for f in frames:
        person_crop = f.person_crops.get(trigger.actor, actor_rec.crop)
        if scene_input and f.scene_crop is not None:
            recent.append(f.scene_crop)
        else:
            recent.append(person_crop)
    return ReasonerRequest(
        instruction=instruction,
        object_refs=objects,
        person_refs=tuple(persons),
        robot_hand_ref=robot_hand,
        recent_frames=tuple(recent),
        detected_action=trigger.action,
        acting_actor=trigger.actor,
        time=trigger.time,
    )


def _ref(text, mem: Memory):
    if not isinstance(text, str):
        raise ParseFailure(f"instance reference must be a string, got {text!r}")
    try:
        ref = parse_instance(text)
    except IdentifierError:
        raise UnknownReference(f"{text!r} is not an instance id") from None
    if not mem.is_registered(ref):
        raise UnknownReference(f"{text} is not registered")
    return ref


_LITERAL_NAMES = {"true": "True", "false": "False", "null": "None"}


def _python_literal(text: str):
    # single-quoted dicts with JSON keywords, as models sometimes answer
    toks = []
    for tok in tokenize.generate_tokens(io.StringIO(text).readline):
        if tok.type == tokenize.NAME and tok.string in _LITERAL_NAMES:
            tok = tok._replace(string=_LITERAL_NAMES[tok.string])
        toks.append(tok)
    return ast.literal_eval(tokenize.untokenize(toks))


def load_answer(raw):
    """Decode an answer: JSON, optionally inside a code fence, or a Python-style dict literal."""
    if not isinstance(raw, str):
        raise ParseFailure("answer is not text")
    text = raw.strip()
    fenced = _FENCE.fullmatch(text)
    if fenced:
        text = fenced.group(1).strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return _python_literal(text)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError, tokenize.TokenError):
        raise ParseFailure("answer is not JSON") from None


def interpret_response(resp: ReasonerResponse, trigger: TriggerEvent, mem: Memory) -> EventTuple:
    """Parse a structured answer into a tuple for ``trigger``.

    Actor and time always come from the trigger. The action comes from
    the answer; a disagreement with the detected label is logged.
    """
    answer = load_answer(resp.raw)
    if not isinstance(answer, dict):
        raise ParseFailure("answer is not a JSON object")
    for key in ("object", "action"):
        if key not in answer:
            raise ParseFailure(f"answer lacks {key!r}")
    rel_keys = [k for k in ("on", "in", "to") if answer.get(k) is not None]
    if len(rel_keys) > 1:
        raise ParseFailure(f"answer has several relation keys {rel_keys}")

    raw_action = answer["action"]
    if not isinstance(raw_action, str):
        raise ParseFailure("action must be a string")
    try:
        action = Action.parse(raw_action)
    except UnknownVerb:
        raise VocabularyError(f"action {raw_action!r} outside the vocabulary") from None
    if action is Action.IDLE:
        raise VocabularyError("idle cannot be the action of an event")

    obj = _ref(answer["object"], mem)
    if not isinstance(obj, ObjectId):
        raise ParseFailure(f"object must be an object id, got {obj}")
    relation = None
    if rel_keys:
        rho = rel_keys[0]
        target = _ref(answer[rho], mem)
        try:
            relation = SpatialRelation(rho, target)
        except EventError as exc:
            raise ParseFailure(str(exc)) from None

    flag = answer.get("robot_interaction", False)
    if not isinstance(flag, bool):
        raise ParseFailure("robot_interaction must be true or false")

    if trigger.action is not None and action is not trigger.action:
        log.info("reasoner answered %s for %s where the detector saw %s",
                 action.value, trigger.actor, trigger.action.value)
    try:
        return EventTuple(trigger.actor, action, obj, relation, flag, trigger.time)
    except EventError as exc:
        raise ParseFailure(f"{type(exc).__name__}: {exc}") from None


@dataclass(frozen=True)
class Diagnostic:
    trigger: TriggerEvent
    error_kind: str
    raw_excerpt: str

    def to_dict(self) -> dict:
        return {"trigger": self.trigger.describe(), "error_kind": self.error_kind,
                "raw_excerpt": self.raw_excerpt}


def dumps_diagnostics(diags: Iterable[Diagnostic]) -> str:
    ordered = sorted(diags, key=lambda d: (d.trigger.time, str(d.trigger.actor), d.error_kind))
    return "".join(json.dumps(d.to_dict(), separators=(",", ":")) + "\n" for d in ordered)


class Reasoner:
    """Runs :func:`on_trigger` and collects diagnostics for dropped events."""

    _EXPECTED = (ClientError, InterpretError, DuplicateEvent)

    def __init__(self, mem: Memory, client: ReasonerClient, *, scene_input: bool = True,
                 instruction: str = DEFAULT_INSTRUCTION) -> None:
        self.mem = mem
        self.client = client
        self.scene_input = scene_input
        self.instruction = instruction
        self.diagnostics: list[Diagnostic] = []
        self.calls = 0
        self.call_seconds: list[float] = []
        self._lock = threading.Lock()

    def _record(self, trigger: TriggerEvent, exc: BaseException, raw: str) -> None:
        log.warning("dropped event for %s: %s: %s", trigger.describe(), type(exc).__name__, exc)
        with self._lock:
            self.diagnostics.append(Diagnostic(trigger, type(exc).__name__, raw[:EXCERPT_CHARS]))

    def on_trigger(self, trigger: TriggerEvent, buf: FrameBuffer) -> Optional[EventTuple]:
        try:
            req = assemble_context(trigger, self.mem, buf, scene_input=self.scene_input,
                                   instruction=self.instruction)
        except (UnknownInstance, EmptyBuffer) as exc:
            raise TriggerFailure(trigger, exc) from exc
        raw = ""
        started = time.perf_counter()
        try:
            with self._lock:
                self.calls += 1
            try:
                resp = self.client.query(req)
            finally:
                with self._lock:
                    self.call_seconds.append(time.perf_counter() - started)
            raw = resp.raw
            t = interpret_response(resp, trigger, self.mem)
            self.mem.append_event(t)
            return t
        except self._EXPECTED as exc:
            self._record(trigger, exc, raw)
            return None
        except Exception as exc:
            raise TriggerFailure(trigger, exc) from exc


def on_trigger(trigger: TriggerEvent, mem: Memory, buf: FrameBuffer,
               client: ReasonerClient) -> Optional[EventTuple]:
    """One-shot form of :meth:`Reasoner.on_trigger`; the diagnostic is logged only."""
    return Reasoner(mem, client).on_trigger(trigger, buf)
