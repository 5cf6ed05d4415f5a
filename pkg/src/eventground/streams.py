"""Parsers and writers for the line-delimited wire formats.

Formats (field names are fixed; see ``docs/formats.md``):

* frame stream ``*.frames.jsonl`` -- one :class:`FrameRecord` per line
* object registry ``*.objects.json`` -- one JSON document
* event files ``*.events.jsonl`` -- optional ``{"meta": ...}`` header line
  followed by one event tuple per line (ground truth, predictions and
  oracle scripts share this format)

Parsers reject any schema deviation with an error naming the line
number. Unknown extra fields are ignored on input and never written.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

from .events import (
    Action,
    ActorId,
    EventError,
    EventTuple,
    IdentifierError,
    ObjectId,
    UnknownVerb as _VerbError,
    make_relation,
    sort_events,
)

SCENARIOS = ("sorting", "pouring", "handover")
CONSTELLATIONS = ("1P", "2P", "1P+R", "2P+R")


class FormatError(ValueError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + message)


class MalformedLine(FormatError):
    pass


class NonMonotoneTime(FormatError):
    pass


class UnknownVerb(FormatError):
    pass


class UnknownScenario(FormatError):
    pass


class InvalidEvent(FormatError):
    """A record that is well-formed JSON but violates a tuple invariant."""

    def __init__(self, message: str, line_no: Optional[int] = None, cause: Optional[EventError] = None):
        super().__init__(message, line_no)
        self.cause = cause


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    time: float
    actions: dict[ActorId, Action]
    person_crops: dict[ActorId, str]
    scene_crop: Optional[str] = None

    def __hash__(self) -> int:
        return hash((self.frame_index, self.time))


@dataclass(frozen=True)
class ObjectEntry:
    id: ObjectId
    crop: str
    first_seen: float
    label_hint: Optional[str] = None


@dataclass
class ObjectRegistry:
    entries: list[ObjectEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise MalformedLine(f"duplicate object id {e.id}")
            if not (math.isfinite(e.first_seen) and e.first_seen >= 0):
                raise MalformedLine(f"{e.id}: first_seen must be a finite non-negative number")
            seen.add(e.id)

    def ids(self) -> list[ObjectId]:
        return [e.id for e in self.entries]


@dataclass
class GroundTruthFile:
    tuples: list[EventTuple]
    scenario: str
    constellation: str

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise UnknownScenario(f"unknown scenario {self.scenario!r}")
        if self.constellation not in CONSTELLATIONS:
            raise UnknownScenario(f"unknown constellation {self.constellation!r}")
        self.tuples = sort_events(self.tuples)


Source = Union[str, Path, IO[str], Iterable[str]]


def _lines(source: Source) -> Iterator[str]:
    if isinstance(source, Path):
        with source.open(encoding="utf-8") as fh:
            yield from fh.read().splitlines()
        return
    if isinstance(source, str):
        yield from source.splitlines()
        return
    if hasattr(source, "read"):
        yield from source.read().splitlines()
        return
    for line in source:
        yield line.rstrip("\n")


def _load_object(line: str, line_no: int) -> dict:
    try:
        value = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"invalid JSON ({exc.msg})", line_no) from None
    if not isinstance(value, dict):
        raise MalformedLine("record must be a JSON object", line_no)
    return value


def _number(value, name: str, line_no: Optional[int]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise MalformedLine(f"{name} must be a finite number", line_no)
    return float(value)


def _string(value, name: str, line_no: Optional[int]) -> str:
    if not isinstance(value, str):
        raise MalformedLine(f"{name} must be a string", line_no)
    return value


def _require(rec: dict, key: str, line_no: Optional[int]):
    if key not in rec:
        raise MalformedLine(f"missing field {key!r}", line_no)
    return rec[key]


def _actor(text, line_no: Optional[int]) -> ActorId:
    try:
        return ActorId.parse(text)
    except IdentifierError as exc:
        raise MalformedLine(str(exc), line_no) from None


def _object(text, line_no: Optional[int]) -> ObjectId:
    try:
        return ObjectId.parse(text)
    except IdentifierError as exc:
        raise MalformedLine(str(exc), line_no) from None


def _verb(text, line_no: Optional[int]) -> Action:
    if not isinstance(text, str):
        raise MalformedLine("action label must be a string", line_no)
    try:
        return Action.parse(text)
    except _VerbError:
        raise UnknownVerb(f"unknown verb {text!r}", line_no) from None


# -- frame streams -----------------------------------------------------------

def frame_from_dict(rec: dict, line_no: Optional[int] = None) -> FrameRecord:
    frame = _require(rec, "frame", line_no)
    if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
        raise MalformedLine("frame must be a non-negative integer", line_no)
    time = _number(_require(rec, "time", line_no), "time", line_no)
    if time < 0:
        raise MalformedLine("time must be non-negative", line_no)
    raw_actions = _require(rec, "actions", line_no)
    raw_crops = _require(rec, "person_crops", line_no)
    if not isinstance(raw_actions, dict) or not isinstance(raw_crops, dict):
        raise MalformedLine("actions and person_crops must be JSON objects", line_no)
    if set(raw_actions) != set(raw_crops):
        raise MalformedLine("actions and person_crops must share the same actor keys", line_no)
    actions = {_actor(k, line_no): _verb(v, line_no) for k, v in raw_actions.items()}
    crops = {_actor(k, line_no): _string(v, f"person_crops[{k}]", line_no) for k, v in raw_crops.items()}
    scene = rec.get("scene_crop")
    if scene is not None:
        scene = _string(scene, "scene_crop", line_no)
    return FrameRecord(frame, time, actions, crops, scene)


def frame_to_dict(frame: FrameRecord) -> dict:
    keys = sorted(frame.actions, key=str)
    out = {
        "frame": frame.frame_index,
        "time": frame.time,
        "actions": {str(k): frame.actions[k].value for k in keys},
        "person_crops": {str(k): frame.person_crops[k] for k in keys},
    }
    if frame.scene_crop is not None:
        out["scene_crop"] = frame.scene_crop
    return out


def iter_frames(source: Source) -> Iterator[FrameRecord]:
    """Incrementally parse a frame stream, enforcing monotone frame/time."""
    last: Optional[FrameRecord] = None
    for line_no, line in enumerate(_lines(source), start=1):
        rec = frame_from_dict(_load_object(line, line_no), line_no)
        if last is not None:
            if rec.time <= last.time:
                raise NonMonotoneTime(f"time {rec.time} does not exceed previous {last.time}", line_no)
            if rec.frame_index <= last.frame_index:
                raise MalformedLine(
                    f"frame index {rec.frame_index} does not exceed previous {last.frame_index}", line_no)
        last = rec
        yield rec


def parse_frame_stream(source: Source) -> list[FrameRecord]:
    return list(iter_frames(source))


def dumps_frames(frames: Iterable[FrameRecord]) -> str:
    return "".join(_dumps_line(frame_to_dict(f)) for f in frames)


# -- object registry -----------------------------------------------------------

def parse_registry(source: Union[str, Path, IO[str]]) -> ObjectRegistry:
    text = _read_all(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("objects"), list):
        raise MalformedLine("registry must be an object with an 'objects' list")
    entries = []
    for i, rec in enumerate(doc["objects"]):
        where = f"objects[{i}]"
        if not isinstance(rec, dict):
            raise MalformedLine(f"{where} must be an object")
        try:
            oid = ObjectId.parse(_require(rec, "id", None))
        except IdentifierError as exc:
            raise MalformedLine(f"{where}: {exc}") from None
        crop = _string(_require(rec, "crop", None), f"{where}.crop", None)
        first_seen = _number(_require(rec, "first_seen", None), f"{where}.first_seen", None)
        hint = rec.get("label_hint")
        if hint is not None:
            hint = _string(hint, f"{where}.label_hint", None)
        entries.append(ObjectEntry(oid, crop, first_seen, hint))
    return ObjectRegistry(entries)


def dumps_registry(registry: ObjectRegistry) -> str:
    objects = []
    for e in registry.entries:
        rec = {"id": str(e.id), "crop": e.crop, "first_seen": e.first_seen}
        if e.label_hint is not None:
            rec["label_hint"] = e.label_hint
        objects.append(rec)
    return json.dumps({"objects": objects}, indent=2) + "\n"


# -- event files ---------------------------------------------------------------

def event_from_dict(rec: dict, line_no: Optional[int] = None) -> EventTuple:
    actor = _actor(_require(rec, "actor", line_no), line_no)
    action = _verb(_require(rec, "action", line_no), line_no)
    obj = _object(_require(rec, "object", line_no), line_no)
    relation = None
    raw_rel = rec.get("relation")
    if raw_rel is not None:
        if not isinstance(raw_rel, dict):
            raise MalformedLine("relation must be an object or null", line_no)
        rho = _require(raw_rel, "rho", line_no)
        target = _require(raw_rel, "target", line_no)
        try:
            relation = make_relation(rho, _string(target, "relation.target", line_no))
        except EventError as exc:
            raise MalformedLine(f"bad relation: {exc}", line_no) from None
    flag = _require(rec, "robot_interaction", line_no)
    if not isinstance(flag, bool):
        raise MalformedLine("robot_interaction must be true or false", line_no)
    time = _number(_require(rec, "time", line_no), "time", line_no)
    try:
        return EventTuple(actor, action, obj, relation, flag, time)
    except EventError as exc:
        raise InvalidEvent(f"{type(exc).__name__}: {exc}", line_no, exc) from None


def event_to_dict(t: EventTuple) -> dict:
    out = {"actor": str(t.actor), "action": t.action.value, "object": str(t.object)}
    if t.relation is not None:
        out["relation"] = {"rho": t.relation.rho, "target": str(t.relation.target)}
    out["robot_interaction"] = t.robot_interaction
    out["time"] = t.time
    return out


def _split_events(source: Source) -> tuple[Optional[dict], list[EventTuple]]:
    meta = None
    tuples = []
    for line_no, line in enumerate(_lines(source), start=1):
        rec = _load_object(line, line_no)
        if "meta" in rec:
            if line_no != 1:
                raise MalformedLine("meta header allowed only on the first line", line_no)
            meta = rec["meta"]
            if not isinstance(meta, dict):
                raise MalformedLine("meta must be an object", line_no)
            for key in ("scenario", "constellation"):
                _string(_require(meta, key, line_no), f"meta.{key}", line_no)
            if meta["scenario"] not in SCENARIOS:
                raise UnknownScenario(f"unknown scenario {meta['scenario']!r}", line_no)
            if meta["constellation"] not in CONSTELLATIONS:
                raise UnknownScenario(f"unknown constellation {meta['constellation']!r}", line_no)
            continue
        tuples.append(event_from_dict(rec, line_no))
    return meta, tuples


def parse_events(source: Source) -> list[EventTuple]:
    """Parse an event file (predictions or oracle script); any meta header is ignored."""
    return _split_events(source)[1]


def parse_ground_truth(source: Source) -> GroundTruthFile:
    meta, tuples = _split_events(source)
    if meta is None:
        raise MalformedLine("ground truth requires a meta header on line 1", 1)
    return GroundTruthFile(tuples, meta["scenario"], meta["constellation"])


def _dumps_line(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False) + "\n"


def dumps_events(tuples: Iterable[EventTuple]) -> str:
    return "".join(_dumps_line(event_to_dict(t)) for t in sort_events(tuples))


def dumps_ground_truth(gt: GroundTruthFile) -> str:
    header = _dumps_line({"meta": {"scenario": gt.scenario, "constellation": gt.constellation}})
    return header + dumps_events(gt.tuples)


def write_predictions(tuples: Iterable[EventTuple], sink: IO) -> int:
    """Write tuples in tuple order, one JSON object per line; returns bytes written."""
    text = dumps_events(tuples)
    data = text.encode("utf-8")
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(data)
    else:
        sink.write(text)
    return len(data)


# -- helpers -------------------------------------------------------------------

def _read_all(source) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, str):
        return source
    return source.read()


def read_frames(path) -> list[FrameRecord]:
    return parse_frame_stream(Path(path))


def read_registry(path) -> ObjectRegistry:
    return parse_registry(Path(path))


def read_events(path) -> list[EventTuple]:
    return parse_events(Path(path))


def read_ground_truth(path) -> GroundTruthFile:
    return parse_ground_truth(Path(path))


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


__all__ = [
    "CONSTELLATIONS", "SCENARIOS", "FormatError", "FrameRecord", "GroundTruthFile",
    "InvalidEvent", "MalformedLine", "NonMonotoneTime", "ObjectEntry", "ObjectRegistry",
    "UnknownScenario", "UnknownVerb", "dumps_events", "dumps_frames", "dumps_ground_truth",
    "dumps_registry", "event_from_dict", "event_to_dict", "frame_from_dict", "frame_to_dict",
    "iter_frames", "parse_events", "parse_frame_stream", "parse_ground_truth",
    "parse_registry", "read_events", "read_frames", "read_ground_truth", "read_registry",
    "write_predictions", "write_text",
]
