"""Reasoning backends.

All backends take a :class:`ReasonerRequest` and return the raw text of
the model's answer; parsing it into a tuple is the reasoner's job.

* :class:`ScriptedClient` answers from an oracle event list.
* :class:`FaultClient` wraps another client and corrupts fields of its
  answers with configured per-field probabilities.
* :class:`RemoteClient` POSTs the request to an HTTP endpoint.

Remote wire format (one POST per query)::

    {"instruction": "...",
     "images": [{"role": "object"|"person"|"robot_hand"|"frame",
                 "id": "object_1"|"person_2"|"frame_3"|...,
                 "data": "<base64 bytes>"}],
     "detected_action": "grasp" | null,
     "actor": "person_1" | null}

The response body is either the answer text itself or a JSON object
whose ``"raw"`` field holds it.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .events import EVENT_VERBS, Action, ActorId, EventTuple, ObjectId

log = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = (
    "You observe a tabletop scene shared by people and a robot. "
    "The first images show reference crops of every known object and person, "
    "each captioned with its id. The last images are the most recent frames "
    "before the detected action, oldest first. Decide which action the acting "
    "person performed, which object they used, whether that object ends up on "
    "or in another object or is handed to someone, and whether the robot "
    "interacts with the acting person. Answer with one JSON object with keys "
    "object, action, optionally one of on/in/to, and robot_interaction."
)


class ClientError(Exception):
    """Base for failures that produce no answer."""


class NoScriptedAnswer(ClientError):
    pass


class ReasonerTimeout(ClientError, TimeoutError):
    pass


class RemoteError(ClientError):
    pass


@dataclass(frozen=True)
class ReasonerRequest:
    instruction: str
    object_refs: tuple[tuple[ObjectId, str], ...]
    person_refs: tuple[tuple[ActorId, str], ...]
    robot_hand_ref: Optional[str]
    recent_frames: tuple[str, ...]
    detected_action: Optional[Action]
    acting_actor: ActorId
    time: float

    def __post_init__(self) -> None:
        if not 1 <= len(self.recent_frames) <= 4:
            raise ValueError(f"recent_frames must hold 1..4 crops, got {len(self.recent_frames)}")
        if self.detected_action is Action.IDLE:
            raise ValueError("detected_action must not be idle")

    def identity(self) -> str:
        action = self.detected_action.value if self.detected_action else "-"
        return f"{self.acting_actor}|{action}|{self.time!r}"


@dataclass(frozen=True)
class ReasonerResponse:
    raw: str


class ReasonerClient(Protocol):
    def query(self, req: ReasonerRequest) -> ReasonerResponse: ...


def render_answer(t: EventTuple) -> str:
    """The structured answer a perfect reasoner would give for ``t``."""
    out: dict = {"object": str(t.object), "action": t.action.value}
    if t.relation is not None:
        out[t.relation.rho] = str(t.relation.target)
    out["robot_interaction"] = t.robot_interaction
    return json.dumps(out)


class ScriptedClient:
    """Answers with the oracle event of the same actor nearest in time.

    Ties go to the earlier event. Events farther than ``window`` seconds
    from the request time raise :class:`NoScriptedAnswer`.
    """

    def __init__(self, script: Sequence[EventTuple], delta: float = 5.0) -> None:
        self.window = 2.0 * delta
        self._by_actor: dict[ActorId, list[EventTuple]] = {}
        for t in sorted(script, key=lambda e: e.time):
            self._by_actor.setdefault(t.actor, []).append(t)

    def lookup(self, actor: ActorId, at: float) -> EventTuple:
        best = None
        for t in self._by_actor.get(actor, ()):
            gap = abs(t.time - at)
            if gap <= self.window and (best is None or gap < abs(best.time - at)):
                best = t
        if best is None:
            raise NoScriptedAnswer(f"no scripted event for {actor} within {self.window}s of t={at}")
        return best

    def query(self, req: ReasonerRequest) -> ReasonerResponse:
        return ReasonerResponse(render_answer(self.lookup(req.acting_actor, req.time)))


@dataclass(frozen=True)
class FaultConfig:
    p_object: float = 0.0
    p_action: float = 0.0
    p_relation: float = 0.0
    p_flag: float = 0.0
    p_malformed: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_object", "p_action", "p_relation", "p_flag", "p_malformed"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    @property
    def is_identity(self) -> bool:
        return not any((self.p_object, self.p_action, self.p_relation, self.p_flag, self.p_malformed))


_RELATION_KEYS = ("on", "in", "to")


class FaultClient:
    """Corrupts answers of an inner client, field by field.

    Each request gets its own random stream derived from the seed, the
    request identity and how many times that identity has been seen, so
    results do not depend on the arrival order of distinct requests.
    Five uniforms are drawn per request in a fixed order (malformed,
    object, action, relation, flag) whether or not a field is corrupted.
    """

    def __init__(self, inner: ReasonerClient, config: FaultConfig) -> None:
        self.inner = inner
        self.config = config
        self._seen: dict[str, int] = {}
        self._lock = threading.Lock()

    def _rng(self, req: ReasonerRequest) -> random.Random:
        key = req.identity()
        with self._lock:
            n = self._seen.get(key, 0)
            self._seen[key] = n + 1
        digest = hashlib.sha256(f"{self.config.seed}|{key}|{n}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def query(self, req: ReasonerRequest) -> ReasonerResponse:
        resp = self.inner.query(req)
        cfg = self.config
        if cfg.is_identity:
            return resp
        rng = self._rng(req)
        u_malformed, u_object, u_action, u_relation, u_flag = (rng.random() for _ in range(5))
        if u_malformed < cfg.p_malformed:
            cut = rng.randrange(0, max(1, len(resp.raw) - 1))
            return ReasonerResponse(resp.raw[:cut] + "<<garbled")
        try:
            answer = json.loads(resp.raw)
        except json.JSONDecodeError:
            return resp
        if not isinstance(answer, dict):
            return resp
        changed = False
        if u_object < cfg.p_object:
            changed |= _corrupt_object(answer, req, rng)
        if u_action < cfg.p_action:
            changed |= _corrupt_action(answer, rng)
        if u_relation < cfg.p_relation:
            changed |= _corrupt_relation(answer, req, rng)
        if u_flag < cfg.p_flag and isinstance(answer.get("robot_interaction"), bool):
            answer["robot_interaction"] = not answer["robot_interaction"]
            changed = True
        return ReasonerResponse(json.dumps(answer)) if changed else resp


def _corrupt_object(answer: dict, req: ReasonerRequest, rng: random.Random) -> bool:
    current = answer.get("object")
    choices = [str(oid) for oid, _ in req.object_refs if str(oid) != current]
    if not choices:
        return False
    answer["object"] = rng.choice(choices)
    return True


def _corrupt_action(answer: dict, rng: random.Random) -> bool:
    current = answer.get("action")
    try:
        current = Action.parse(current).value
    except Exception:
        pass
    choices = [a.value for a in EVENT_VERBS if a.value != current]
    answer["action"] = rng.choice(choices)
    return True


def _corrupt_relation(answer: dict, req: ReasonerRequest, rng: random.Random) -> bool:
    current = [(k, answer[k]) for k in _RELATION_KEYS if answer.get(k) is not None]
    obj = answer.get("object")
    options: list[Optional[tuple[str, str]]] = [None]
    for oid, _ in req.object_refs:
        if str(oid) != obj:
            options += [("on", str(oid)), ("in", str(oid))]
    for aid, _ in req.person_refs:
        if aid != req.acting_actor:
            options.append(("to", str(aid)))
    now = current[0] if len(current) == 1 else None
    options = [o for o in options if o != now]
    if not options:
        return False
    pick = rng.choice(options)
    flag = answer.pop("robot_interaction", None)
    for k in _RELATION_KEYS:
        answer.pop(k, None)
    if pick is not None:
        answer[pick[0]] = pick[1]
    if flag is not None:
        answer["robot_interaction"] = flag
    return True


def _read_crop(ref: str, root: Optional[Path]) -> bytes:
    path = Path(ref) if root is None else Path(root) / ref
    try:
        return path.read_bytes()
    except OSError as exc:
        raise RemoteError(f"cannot read crop {ref!r}: {exc}") from None


@dataclass
class RemoteClient:
    """HTTP backend with bounded retries.

    A call makes at most ``retries + 1`` attempts, each limited to
    ``timeout`` seconds, sleeping ``backoff[k]`` before retry ``k``.
    """

    endpoint: str
    token: Optional[str] = None
    timeout: float = 30.0
    retries: int = 2
    backoff: tuple[float, ...] = (0.5, 1.0)
    crop_root: Optional[Path] = None
    crop_loader: Optional[Callable[[str], bytes]] = None
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("remote backend needs an endpoint URL")

    def _load(self, ref: str) -> str:
        data = self.crop_loader(ref) if self.crop_loader else _read_crop(ref, self.crop_root)
        return base64.b64encode(data).decode("ascii")

    def build_body(self, req: ReasonerRequest) -> dict:
        images = [{"role": "object", "id": str(oid), "data": self._load(crop)} for oid, crop in req.object_refs]
        images += [{"role": "person", "id": str(aid), "data": self._load(crop)} for aid, crop in req.person_refs]
        if req.robot_hand_ref is not None:
            images.append({"role": "robot_hand", "id": "robot_hand", "data": self._load(req.robot_hand_ref)})
        images += [{"role": "frame", "id": f"frame_{k}", "data": self._load(crop)}
                   for k, crop in enumerate(req.recent_frames)]
        return {
            "instruction": req.instruction,
            "images": images,
            "detected_action": req.detected_action.value if req.detected_action else None,
            "actor": str(req.acting_actor),
        }

    def query(self, req: ReasonerRequest) -> ReasonerResponse:
        body = self.build_body(req)
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last: Exception = RemoteError("no attempt made")
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff[min(attempt - 1, len(self.backoff) - 1)])
            try:
                r = httpx.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            except httpx.TimeoutException as exc:
                last = ReasonerTimeout(f"attempt {attempt + 1}: timed out after {self.timeout}s ({exc})")
                continue
            except httpx.HTTPError as exc:
                last = RemoteError(f"attempt {attempt + 1}: {exc}")
                continue
            if r.status_code != 200:
                last = RemoteError(f"attempt {attempt + 1}: HTTP {r.status_code}")
                continue
            return ReasonerResponse(_unwrap(r.text))
        log.warning("remote reasoner failed after %d attempts: %s", self.retries + 1, last)
        raise last


def _unwrap(text: str) -> str:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return text
    if isinstance(doc, dict) and isinstance(doc.get("raw"), str):
        return doc["raw"]
    return text
