"""Event grounding for shared human-robot workspaces.

Action-triggered reasoning turns a per-frame action stream into
structured event tuples kept in an instance memory, and the grounding
score compares them against ground truth under a temporal tolerance.
"""

from .events import Action, ActorId, EventTuple, ObjectId, SpatialRelation, make_tuple
from .memory import Memory
from .metrics import MatchConfig, Recording, match_events, score_suite
from .pipeline import run_pipeline
from .simulator import ScenarioScript, builtin, builtin_suite, generate
from .trigger import ActionTrigger, TriggerEvent

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionTrigger", "ActorId", "EventTuple", "MatchConfig", "Memory", "ObjectId", "Recording",
    "ScenarioScript", "SpatialRelation", "TriggerEvent", "builtin", "builtin_suite", "generate",
    "make_tuple", "match_events", "run_pipeline", "score_suite",
]
