"""Instance and episode store.

Holds every registered actor and object with a stable id, plus the
episode: the tuple-ordered sequence of event tuples observed so far.
Snapshots are one JSON document::

    {"version": 1,
     "actors":  [{"id": "person_1", "crop": "...", "first_seen": 0.0}, ...],
     "objects": [{"id": "object_1", "crop": "...", "first_seen": 0.0,
                  "label_hint": "apple"}, ...],
     "events":  [<event record>, ...],
     "counters": {"person": 2, "robot": 1, "object": 4}}

An instance may carry an opaque ``blob`` string; it is stored and
round-tripped but never interpreted.
"""

from __future__ import annotations

import bisect
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Union

from .events import ActorId, EventTuple, InstanceId, ObjectId, order_key, parse_instance
from .streams import FormatError, ObjectRegistry, event_from_dict, event_to_dict

SNAPSHOT_VERSION = 1


class StoreError(Exception):
    pass


class UnknownInstance(StoreError, LookupError):
    pass


class DuplicateEvent(StoreError, ValueError):
    pass


class DuplicateInstance(StoreError, ValueError):
    pass


class InvalidWindow(StoreError, ValueError):
    pass


class SnapshotError(StoreError, ValueError):
    pass


@dataclass(frozen=True)
class InstanceRecord:
    id: InstanceId
    crop: str
    first_seen: float
    label_hint: Optional[str] = None
    blob: Optional[str] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.first_seen) and self.first_seen >= 0):
            raise ValueError(f"first_seen must be finite and >= 0, got {self.first_seen}")


@dataclass
class Episode:
    events: list[EventTuple] = field(default_factory=list)
    actors: list[InstanceRecord] = field(default_factory=list)
    objects: list[InstanceRecord] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=lambda: {"person": 0, "robot": 0, "object": 0})


def _id_key(i: InstanceId):
    if isinstance(i, ActorId):
        return (0, i.kind, i.index)
    return (1, "object", i.index)


class Memory:
    """Thread-safe store: writes are serialized, reads return copies."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._actors: dict[ActorId, InstanceRecord] = {}
        self._objects: dict[ObjectId, InstanceRecord] = {}
        self._events: list[EventTuple] = []
        self._keys: list[tuple] = []
        self._event_set: set[EventTuple] = set()
        self._counters = {"person": 0, "robot": 0, "object": 0}

    # registration

    def register_actor(self, crop: str, first_seen: float, kind: str = "person") -> ActorId:
        with self._lock:
            aid = ActorId(kind, self._counters[kind] + 1)
            self._actors[aid] = InstanceRecord(aid, crop, first_seen)
            self._counters[kind] = aid.index
            return aid

    def register_object(self, crop: str, first_seen: float, label_hint: Optional[str] = None) -> ObjectId:
        with self._lock:
            oid = ObjectId(self._counters["object"] + 1)
            self._objects[oid] = InstanceRecord(oid, crop, first_seen, label_hint)
            self._counters["object"] = oid.index
            return oid

    def adopt(self, record: InstanceRecord) -> None:
        """Register an instance under an id assigned upstream (tracker or registry).

        Counters advance past the adopted index so later fresh ids never
        collide with it.
        """
        with self._lock:
            table = self._actors if isinstance(record.id, ActorId) else self._objects
            if record.id in table:
                raise DuplicateInstance(f"{record.id} already registered")
            table[record.id] = record
            kind = record.id.kind if isinstance(record.id, ActorId) else "object"
            self._counters[kind] = max(self._counters[kind], record.id.index)

    def load_registry(self, registry: ObjectRegistry) -> None:
        for e in registry.entries:
            self.adopt(InstanceRecord(e.id, e.crop, e.first_seen, e.label_hint))

    def is_registered(self, i: InstanceId) -> bool:
        with self._lock:
            return i in self._actors or i in self._objects

    def instance(self, i: InstanceId) -> InstanceRecord:
        with self._lock:
            rec = self._actors.get(i) if isinstance(i, ActorId) else self._objects.get(i)
        if rec is None:
            raise UnknownInstance(f"{i} is not registered")
        return rec

    def actors(self) -> list[InstanceRecord]:
        with self._lock:
            return [self._actors[k] for k in sorted(self._actors, key=_id_key)]

    def objects(self) -> list[InstanceRecord]:
        with self._lock:
            return [self._objects[k] for k in sorted(self._objects, key=_id_key)]

    @property
    def counters(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    # events

    def append_event(self, t: EventTuple) -> None:
        with self._lock:
            refs: list[InstanceId] = [t.actor, t.object]
            if t.relation is not None:
                refs.append(t.relation.target)
            for ref in refs:
                if ref not in self._actors and ref not in self._objects:
                    raise UnknownInstance(f"{ref} is not registered")
            if t in self._event_set:
                raise DuplicateEvent(f"duplicate event {t}")
            key = order_key(t)
            pos = bisect.bisect_right(self._keys, key)
            self._keys.insert(pos, key)
            self._events.insert(pos, t)
            self._event_set.add(t)

    def events(self) -> list[EventTuple]:
        with self._lock:
            return list(self._events)

    def query_events(self, t0: float, t1: float, actor: Optional[ActorId] = None) -> list[EventTuple]:
        """Stored tuples with ``t0 <= time <= t1`` in tuple order, optionally for one actor."""
        if math.isnan(t0) or math.isnan(t1) or t0 > t1:
            raise InvalidWindow(f"invalid window [{t0}, {t1}]")
        with self._lock:
            lo = bisect.bisect_left(self._keys, (t0,))
            out = []
            for t in self._events[lo:]:
                if t.time > t1:
                    break
                if actor is None or t.actor == actor:
                    out.append(t)
            return out

    def episode(self) -> Episode:
        with self._lock:
            return Episode(self.events(), self.actors(), self.objects(), self.counters)

    # persistence

    def to_document(self) -> dict:
        with self._lock:
            return {
                "version": SNAPSHOT_VERSION,
                "actors": [_record_to_dict(r) for r in self.actors()],
                "objects": [_record_to_dict(r) for r in self.objects()],
                "events": [event_to_dict(t) for t in self._events],
                "counters": dict(self._counters),
            }

    def snapshot(self, sink: IO[str]) -> None:
        sink.write(json.dumps(self.to_document(), indent=1) + "\n")

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.snapshot(fh)

    @classmethod
    def from_document(cls, doc) -> Memory:
        try:
            return _from_document(cls(), doc)
        except SnapshotError:
            raise
        except (FormatError, ValueError, KeyError, TypeError, LookupError) as exc:
            raise SnapshotError(f"corrupt snapshot: {exc}") from None

    @classmethod
    def load(cls, source: Union[IO[str], str, Path]) -> Memory:
        if isinstance(source, Path):
            text = source.read_text(encoding="utf-8")
        elif isinstance(source, str):
            text = source
        else:
            text = source.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"snapshot is not valid JSON: {exc.msg}") from None
        return cls.from_document(doc)


def _record_to_dict(r: InstanceRecord) -> dict:
    out = {"id": str(r.id), "crop": r.crop, "first_seen": r.first_seen}
    if r.label_hint is not None:
        out["label_hint"] = r.label_hint
    if r.blob is not None:
        out["blob"] = r.blob
    return out


def _record_from_dict(d: dict, kind: type) -> InstanceRecord:
    if not isinstance(d, dict):
        raise SnapshotError("instance record must be an object")
    iid = parse_instance(d["id"])
    if not isinstance(iid, kind):
        raise SnapshotError(f"{d['id']} listed under the wrong kind")
    for key in ("crop",):
        if not isinstance(d[key], str):
            raise SnapshotError(f"{d['id']}: {key} must be a string")
    first_seen = d["first_seen"]
    if isinstance(first_seen, bool) or not isinstance(first_seen, (int, float)):
        raise SnapshotError(f"{d['id']}: first_seen must be a number")
    for key in ("label_hint", "blob"):
        if d.get(key) is not None and not isinstance(d[key], str):
            raise SnapshotError(f"{d['id']}: {key} must be a string")
    return InstanceRecord(iid, d["crop"], float(first_seen), d.get("label_hint"), d.get("blob"))


def _from_document(mem: Memory, doc) -> Memory:
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a JSON object")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {doc.get('version')!r}")
    for key in ("actors", "objects", "events", "counters"):
        if key not in doc:
            raise SnapshotError(f"snapshot missing {key!r}")
    for d in doc["actors"]:
        mem.adopt(_record_from_dict(d, ActorId))
    for d in doc["objects"]:
        mem.adopt(_record_from_dict(d, ObjectId))
    counters = doc["counters"]
    if not isinstance(counters, dict) or set(counters) != {"person", "robot", "object"}:
        raise SnapshotError("counters must give person, robot and object")
    for kind, value in counters.items():
        if isinstance(value, bool) or not isinstance(value, int) or value < mem.counters[kind]:
            raise SnapshotError(f"counter {kind} = {value!r} is below a registered index")
    mem._counters = dict(counters)
    for i, d in enumerate(doc["events"]):
        if not isinstance(d, dict):
            raise SnapshotError(f"events[{i}] must be an object")
        mem.append_event(event_from_dict(d))
    return mem
