"""Scenario simulator.

A :class:`ScenarioScript` lists timed ground-truth events for one
recording. :func:`generate` turns it into

* the ground-truth event file (the unperturbed events),
* a detector frame stream in which each actor is ``idle`` except during
  ``[start, start + duration)`` of its events,
* the object registry,
* the oracle script the scripted backend answers from (events at the
  start times actually realized in the stream).

Noise is seeded: Gaussian jitter on event starts in the stream, i.i.d.
per-frame label flips to a uniformly drawn other verb, and i.i.d. frame
drops. Ground truth never sees noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .events import (
    EVAL_VERBS,
    VOCABULARY,
    Action,
    ActorId,
    EventError,
    EventTuple,
    ObjectId,
    make_tuple,
    sort_events,
)
from .streams import (
    CONSTELLATIONS,
    SCENARIOS,
    FormatError,
    FrameRecord,
    GroundTruthFile,
    ObjectEntry,
    ObjectRegistry,
    dumps_events,
    dumps_frames,
    dumps_ground_truth,
    dumps_registry,
    event_from_dict,
    event_to_dict,
)

DEFAULT_DURATION = 1.5
DEFAULT_PERIOD = 0.1
TAIL_SECONDS = 3.0

_ROSTER = {
    "1P": (ActorId("person", 1),),
    "2P": (ActorId("person", 1), ActorId("person", 2)),
    "1P+R": (ActorId("person", 1), ActorId("robot", 1)),
    "2P+R": (ActorId("person", 1), ActorId("person", 2), ActorId("robot", 1)),
}


class InvalidScript(ValueError):
    pass


@dataclass(frozen=True)
class Noise:
    label_flip_prob: float = 0.0
    timing_jitter_std_s: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self) -> None:
        for name in ("label_flip_prob", "drop_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidScript(f"{name} must lie in [0, 1], got {p}")
        if not (math.isfinite(self.timing_jitter_std_s) and self.timing_jitter_std_s >= 0):
            raise InvalidScript(f"timing_jitter_std_s must be >= 0, got {self.timing_jitter_std_s}")


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    scenario: str
    constellation: str
    events: tuple[EventTuple, ...]
    objects: tuple[tuple[ObjectId, str], ...] = ()
    frame_period: float = DEFAULT_PERIOD
    event_duration: float = DEFAULT_DURATION
    length_s: Optional[float] = None
    noise: Noise = field(default_factory=Noise)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(sort_events(self.events)))
        object.__setattr__(self, "objects", tuple(self.objects))
        validate(self)

    @property
    def actors(self) -> tuple[ActorId, ...]:
        return _ROSTER[self.constellation]

    @property
    def duration_s(self) -> float:
        if self.length_s is not None:
            return self.length_s
        end = max((e.time for e in self.events), default=0.0) + self.event_duration
        return end + TAIL_SECONDS

    def with_noise(self, noise: Noise, seed: Optional[int] = None) -> ScenarioScript:
        return replace(self, noise=noise, seed=self.seed if seed is None else seed)


def validate(script: ScenarioScript) -> None:
    if script.scenario not in SCENARIOS:
        raise InvalidScript(f"unknown scenario {script.scenario!r}")
    if script.constellation not in CONSTELLATIONS:
        raise InvalidScript(f"unknown constellation {script.constellation!r}")
    if not (math.isfinite(script.frame_period) and script.frame_period > 0):
        raise InvalidScript("frame_period must be > 0")
    if not (math.isfinite(script.event_duration) and script.event_duration > 0):
        raise InvalidScript("event_duration must be > 0")
    if script.length_s is not None and not (math.isfinite(script.length_s) and script.length_s > 0):
        raise InvalidScript("length_s must be > 0")
    roster = set(_ROSTER[script.constellation])
    has_robot = any(a.is_robot for a in roster)
    last_start: dict[ActorId, float] = {}
    for e in script.events:
        if e.actor not in roster:
            raise InvalidScript(f"{e.actor} is not part of constellation {script.constellation}")
        if e.relation is not None and isinstance(e.relation.target, ActorId) and e.relation.target not in roster:
            raise InvalidScript(f"{e.relation.target} is not part of constellation {script.constellation}")
        if e.robot_interaction and not has_robot:
            raise InvalidScript(f"robot interaction in robot-free constellation {script.constellation}")
        prev = last_start.get(e.actor)
        if prev is not None and e.time < prev + script.event_duration:
            raise InvalidScript(f"events of {e.actor} at t={prev} and t={e.time} overlap")
        last_start[e.actor] = e.time
    if script.length_s is not None and script.events and script.events[-1].time >= script.length_s:
        raise InvalidScript("an event starts after the end of the recording")
    declared = [oid for oid, _ in script.objects]
    if len(set(declared)) != len(declared):
        raise InvalidScript("duplicate object declaration")


# -- generation ------------------------------------------------------------------

@dataclass
class Generated:
    ground_truth: GroundTruthFile
    frames: list[FrameRecord]
    registry: ObjectRegistry
    oracle: list[EventTuple]
    name: str = ""


def _referenced_objects(events) -> set[ObjectId]:
    out = set()
    for e in events:
        out.add(e.object)
        if e.relation is not None and isinstance(e.relation.target, ObjectId):
            out.add(e.relation.target)
    return out


def frame_time(k: int, period: float) -> float:
    return round(k * period, 9)


def generate(script: ScenarioScript) -> Generated:
    rng = np.random.default_rng(script.seed)
    noise = script.noise
    period = script.frame_period
    n_frames = int(math.floor(script.duration_s / period + 1e-9))

    # realized starts in the stream
    jitter = rng.normal(0.0, noise.timing_jitter_std_s, size=len(script.events)) \
        if noise.timing_jitter_std_s > 0 else np.zeros(len(script.events))
    realized = [e.at(round(max(0.0, e.time + float(j)), 9)) for e, j in zip(script.events, jitter)]

    # snap each realized start onto the frame grid: first frame at or after it
    spans: dict[ActorId, list[tuple[int, int, EventTuple]]] = {a: [] for a in script.actors}
    oracle = []
    for e in realized:
        first = math.ceil(e.time / period - 1e-9)
        last = math.ceil((e.time + script.event_duration) / period - 1e-9)
        spans[e.actor].append((first, last, e))
        oracle.append(e.at(frame_time(first, period)))

    labels = {a: [Action.IDLE] * n_frames for a in script.actors}
    for actor, items in spans.items():
        for first, last, e in sorted(items, key=lambda s: s[0]):
            for k in range(max(0, first), min(last, n_frames)):
                labels[actor][k] = e.action

    flips = rng.random((n_frames, len(script.actors)))
    picks = rng.integers(0, len(VOCABULARY) - 1, size=(n_frames, len(script.actors)))
    drops = rng.random(n_frames)

    frames = []
    for k in range(n_frames):
        if drops[k] < noise.drop_prob:
            continue
        actions = {}
        for j, actor in enumerate(script.actors):
            lab = labels[actor][k]
            if flips[k, j] < noise.label_flip_prob:
                others = [v for v in VOCABULARY if v is not lab]
                lab = others[picks[k, j]]
            actions[actor] = lab
        crops = {a: f"{a}_f{k}.png" for a in script.actors}
        frames.append(FrameRecord(k, frame_time(k, period), actions, crops, f"scene_f{k}.png"))

    hints = dict(script.objects)
    ids = sorted(_referenced_objects(script.events) | set(hints), key=lambda o: o.index)
    registry = ObjectRegistry([ObjectEntry(oid, f"{oid}.png", 0.0, hints.get(oid)) for oid in ids])

    gt = GroundTruthFile(list(script.events), script.scenario, script.constellation)
    return Generated(gt, frames, registry, sort_events(oracle), script.name)


# -- script files ----------------------------------------------------------------

def script_to_dict(script: ScenarioScript) -> dict:
    return {
        "name": script.name,
        "scenario": script.scenario,
        "constellation": script.constellation,
        "frame_period": script.frame_period,
        "event_duration": script.event_duration,
        "length_s": script.length_s,
        "noise": {
            "label_flip_prob": script.noise.label_flip_prob,
            "timing_jitter_std_s": script.noise.timing_jitter_std_s,
            "drop_prob": script.noise.drop_prob,
        },
        "seed": script.seed,
        "objects": [{"id": str(oid), "label_hint": hint} for oid, hint in script.objects],
        "events": [event_to_dict(e) for e in script.events],
    }


def script_from_dict(doc) -> ScenarioScript:
    try:
        if not isinstance(doc, dict):
            raise InvalidScript("script must be a JSON object")
        noise = doc.get("noise") or {}
        if not isinstance(noise, dict):
            raise InvalidScript("noise must be an object")
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise InvalidScript("seed must be an integer")
        objects = []
        for o in doc.get("objects", []):
            hint = o.get("label_hint")
            if hint is not None and not isinstance(hint, str):
                raise InvalidScript("label_hint must be a string")
            objects.append((ObjectId.parse(o["id"]), hint))
        return ScenarioScript(
            name=str(doc.get("name", "")),
            scenario=doc["scenario"],
            constellation=doc["constellation"],
            events=tuple(event_from_dict(e) for e in doc["events"]),
            objects=tuple(objects),
            frame_period=_num(doc.get("frame_period", DEFAULT_PERIOD)),
            event_duration=_num(doc.get("event_duration", DEFAULT_DURATION)),
            length_s=None if doc.get("length_s") is None else _num(doc["length_s"]),
            noise=Noise(_num(noise.get("label_flip_prob", 0.0)),
                        _num(noise.get("timing_jitter_std_s", 0.0)),
                        _num(noise.get("drop_prob", 0.0))),
            seed=seed,
        )
    except InvalidScript:
        raise
    except (KeyError, TypeError, AttributeError, FormatError, EventError) as exc:
        raise InvalidScript(f"bad script: {type(exc).__name__}: {exc}") from None


def _num(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidScript(f"expected a number, got {v!r}")
    return float(v)


def dumps_script(script: ScenarioScript) -> str:
    return json.dumps(script_to_dict(script), indent=2) + "\n"


def load_script(source: Union[str, Path]) -> ScenarioScript:
    text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidScript(f"script is not valid JSON: {exc.msg}") from None
    return script_from_dict(doc)


# -- builtin suite -----------------------------------------------------------------

P1, P2, R1 = ActorId("person", 1), ActorId("person", 2), ActorId("robot", 1)


def _o(k: int) -> ObjectId:
    return ObjectId(k)


def _ev(actor, action, obj, rel=None, flag=False, t=0.0) -> EventTuple:
    if rel is not None:
        rho, target = rel
        rel = (rho, target if isinstance(target, (ActorId, ObjectId)) else _o(target))
    return make_tuple(actor, action, _o(obj), rel, flag, t)


# sorting: 1 banana, 2 apple, 3 apple, 4 orange, 5 bowl, 6 plate
_FRUIT = ((_o(1), "banana"), (_o(2), "apple"), (_o(3), "apple"), (_o(4), "orange"),
          (_o(5), "bowl"), (_o(6), "plate"))
# pouring: 1 bottle, 2..4 cups
_POUR = ((_o(1), "bottle"), (_o(2), "cup"), (_o(3), "cup"), (_o(4), "cup"))
# handover: 1 cup, 2 sponge, 3 box
_HAND = ((_o(1), "cup"), (_o(2), "sponge"), (_o(3), "box"))

G, H, PD, HO, PO = Action.GRASP, Action.HANDOVER, Action.PLACE_DOWN, Action.HOLD, Action.POUR


def _builtin_events() -> dict[str, tuple[str, str, tuple, list[EventTuple]]]:
    s = {}
    s["sorting_1P"] = ("sorting", "1P", _FRUIT, [
        _ev(P1, G, 2, t=1.0), _ev(P1, PD, 2, ("in", 5), t=4.0),
        _ev(P1, G, 1, t=8.0), _ev(P1, PD, 1, ("on", 6), t=11.0),
        _ev(P1, G, 4, t=15.0), _ev(P1, PD, 4, ("in", 5), t=18.0),
    ])
    s["sorting_1P_2"] = ("sorting", "1P", _FRUIT, [
        _ev(P1, G, 3, t=2.0), _ev(P1, HO, 3, t=4.5), _ev(P1, PD, 3, ("on", 6), t=7.0),
        _ev(P1, G, 4, t=11.0), _ev(P1, PD, 4, ("in", 5), t=14.0),
    ])
    s["sorting_2P"] = ("sorting", "2P", _FRUIT, [
        _ev(P1, G, 2, t=1.0), _ev(P2, G, 1, t=2.0),
        _ev(P1, H, 2, ("to", P2), t=5.0), _ev(P2, PD, 1, ("on", 6), t=6.0),
        _ev(P2, PD, 2, ("in", 5), t=10.0), _ev(P1, G, 4, t=12.0), _ev(P1, PD, 4, ("in", 5), t=16.0),
    ])
    s["sorting_2P_2"] = ("sorting", "2P", _FRUIT, [
        _ev(P2, G, 3, t=1.0), _ev(P2, PD, 3, ("on", 6), t=4.0),
        _ev(P1, G, 4, t=5.0), _ev(P1, H, 4, ("to", P2), t=8.0),
        _ev(P2, PD, 4, ("in", 5), t=12.0), _ev(P1, G, 1, t=14.0),
    ])
    s["sorting_1P_R"] = ("sorting", "1P+R", _FRUIT, [
        _ev(P1, G, 2, t=1.0), _ev(P1, H, 2, ("to", R1), True, t=4.0),
        _ev(R1, PD, 2, ("in", 5), t=8.0), _ev(P1, G, 1, t=9.0), _ev(P1, PD, 1, ("on", 6), t=12.0),
    ])
    s["sorting_1P_R_2"] = ("sorting", "1P+R", _FRUIT, [
        _ev(R1, G, 4, t=1.0), _ev(R1, H, 4, ("to", P1), True, t=4.0),
        _ev(P1, PD, 4, ("in", 5), True, t=8.0), _ev(P1, G, 3, t=12.0),
        _ev(P1, PD, 3, ("on", 6), t=15.0), _ev(R1, G, 1, t=16.0), _ev(R1, PD, 1, ("in", 5), t=19.0),
    ])
    s["sorting_2P_R"] = ("sorting", "2P+R", _FRUIT, [
        _ev(P1, G, 2, t=1.0), _ev(P1, H, 2, ("to", R1), True, t=4.0),
        _ev(P2, G, 4, t=5.0), _ev(R1, PD, 2, ("in", 5), t=8.0),
        _ev(P2, PD, 4, ("in", 5), t=9.0), _ev(P1, G, 1, t=12.0),
        _ev(P1, H, 1, ("to", P2), t=15.0), _ev(P2, PD, 1, ("on", 6), t=19.0),
    ])
    s["sorting_2P_R_2"] = ("sorting", "2P+R", _FRUIT, [
        _ev(R1, G, 3, t=1.0), _ev(P2, G, 1, t=2.0),
        _ev(R1, H, 3, ("to", P1), True, t=5.0), _ev(P2, PD, 1, ("on", 6), t=6.0),
        _ev(P1, PD, 3, ("in", 5), True, t=9.0), _ev(P2, G, 4, t=11.0),
    ])
    s["pouring_2P"] = ("pouring", "2P", _POUR, [
        _ev(P1, G, 1, t=1.0), _ev(P2, HO, 2, t=2.0), _ev(P1, PO, 1, ("in", 2), t=4.0),
        _ev(P1, PD, 1, t=8.0), _ev(P2, PD, 2, t=9.0),
    ])
    s["pouring_2P_2"] = ("pouring", "2P", _POUR, [
        _ev(P2, G, 1, t=1.0), _ev(P2, PO, 1, ("in", 3), t=4.0), _ev(P1, HO, 4, t=5.0),
        _ev(P2, PO, 1, ("in", 4), t=8.0), _ev(P2, PD, 1, t=12.0), _ev(P1, PD, 4, t=13.0),
    ])
    s["pouring_1P_R"] = ("pouring", "1P+R", _POUR, [
        _ev(R1, HO, 2, t=1.0), _ev(P1, G, 1, t=2.0), _ev(P1, PO, 1, ("in", 2), True, t=5.0),
        _ev(P1, PD, 1, t=9.0), _ev(R1, PD, 2, t=10.0),
    ])
    s["pouring_1P_R_2"] = ("pouring", "1P+R", _POUR, [
        _ev(R1, G, 1, t=1.0), _ev(P1, HO, 3, t=2.0), _ev(R1, PO, 1, ("in", 3), True, t=4.0),
        _ev(R1, PD, 1, t=8.0), _ev(P1, PD, 3, t=9.0), _ev(P1, G, 2, t=12.0),
    ])
    s["handover_2P"] = ("handover", "2P", _HAND, [
        _ev(P1, G, 1, t=1.0), _ev(P1, H, 1, ("to", P2), t=4.0), _ev(P2, PD, 1, t=8.0),
        _ev(P2, G, 2, t=11.0), _ev(P2, H, 2, ("to", P1), t=14.0), _ev(P1, PD, 2, t=18.0),
    ])
    s["handover_2P_2"] = ("handover", "2P", _HAND, [
        _ev(P2, G, 3, t=1.0), _ev(P2, H, 3, ("to", P1), t=4.0), _ev(P1, HO, 3, t=7.0),
        _ev(P1, H, 3, ("to", P2), t=10.0), _ev(P2, PD, 3, t=14.0),
    ])
    s["handover_1P_R"] = ("handover", "1P+R", _HAND, [
        _ev(P1, G, 1, t=1.0), _ev(P1, H, 1, ("to", R1), True, t=4.0), _ev(R1, PD, 1, t=8.0),
        _ev(R1, G, 2, t=11.0), _ev(R1, H, 2, ("to", P1), True, t=14.0), _ev(P1, PD, 2, t=18.0),
    ])
    s["handover_1P_R_2"] = ("handover", "1P+R", _HAND, [
        _ev(R1, G, 3, t=1.0), _ev(R1, H, 3, ("to", P1), True, t=4.0), _ev(P1, HO, 3, None, True, t=7.0),
        _ev(P1, H, 3, ("to", R1), True, t=10.0), _ev(R1, PD, 3, t=14.0),
    ])
    return s


def _worked_example() -> ScenarioScript:
    # person_1 hands an apple to the robot, the robot puts it into the bowl,
    # person_2 puts an orange into the bowl
    return ScenarioScript(
        name="sorting_example_s3",
        scenario="sorting",
        constellation="2P+R",
        events=(
            _ev(P1, H, 1, ("to", R1), True, t=4.0),
            _ev(R1, PD, 1, ("in", 2), t=8.0),
            _ev(P2, PD, 3, ("in", 2), t=12.0),
        ),
        objects=((_o(1), "apple"), (_o(2), "bowl"), (_o(3), "orange")),
    )


def builtin_suite() -> list[ScenarioScript]:
    """The sixteen evaluation recordings: sorting in all four constellations,
    pouring and handover in 2P and 1P+R, two takes each."""
    return [ScenarioScript(name=name, scenario=sc, constellation=cons, events=tuple(events), objects=objs)
            for name, (sc, cons, objs, events) in _builtin_events().items()]


def builtin_names() -> list[str]:
    return [s.name for s in builtin_suite()] + ["sorting_example_s3"]


def builtin(name: str) -> ScenarioScript:
    if name == "sorting_example_s3":
        return _worked_example()
    for s in builtin_suite():
        if s.name == name:
            return s
    raise KeyError(name)


def dense_script(n_events: int = 10, spacing: float = 6.0, constellation: str = "2P",
                 length_s: Optional[float] = None, name: str = "dense") -> ScenarioScript:
    """Synthetic sorting-style script with ``n_events`` distinct events
    alternating between the constellation's actors."""
    roster = _ROSTER[constellation]
    verbs = (G, PD, HO, H, PO)
    events = []
    for k in range(n_events):
        actor = roster[k % len(roster)]
        verb = verbs[k % len(verbs)]
        obj = _o(1 + k % 4)
        rel = None
        if verb is PD:
            rel = ("in", _o(5))
        elif verb is PO:
            rel = ("in", _o(6))
        elif verb is H:
            others = [a for a in roster if a != actor]
            rel = ("to", others[0]) if others else None
        flag = bool(rel and isinstance(rel[1], ActorId) and (rel[1].is_robot or actor.is_robot))
        events.append(_ev(actor, verb, obj.index, rel, flag, t=1.0 + k * spacing))
    return ScenarioScript(name=name, scenario="sorting", constellation=constellation,
                          events=tuple(events), objects=_FRUIT, length_s=length_s)


def write_generated(gen: Generated, out_dir: Union[str, Path], stem: str) -> dict[str, Path]:
    """Write the four generated artifacts; returns their paths by kind."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "frames": out / f"{stem}.frames.jsonl",
        "objects": out / f"{stem}.objects.json",
        "ground_truth": out / f"{stem}.events.jsonl",
        "oracle": out / f"{stem}.oracle.jsonl",
    }
    paths["frames"].write_text(dumps_frames(gen.frames), encoding="utf-8")
    paths["objects"].write_text(dumps_registry(gen.registry), encoding="utf-8")
    paths["ground_truth"].write_text(dumps_ground_truth(gen.ground_truth), encoding="utf-8")
    paths["oracle"].write_text(dumps_events(gen.oracle), encoding="utf-8")
    return paths


__all__ = [
    "EVAL_VERBS", "Generated", "InvalidScript", "Noise", "ScenarioScript", "builtin", "builtin_names",
    "builtin_suite", "dense_script", "dumps_script", "generate", "load_script", "script_from_dict",
    "script_to_dict", "validate", "write_generated",
]
