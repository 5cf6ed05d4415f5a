"""Grounding score: temporally tolerant, field-exact event matching.

A prediction matches a ground-truth event when the compared fields agree
and their start times differ by at most ``delta`` seconds. The actor is
never compared. Ground truths are visited in ascending time; each takes
the closest unassigned matching prediction (ties: earlier prediction
time, then input order). Precision, recall and their harmonic mean
follow, with empty-set conventions

    P = 1 when there are no predictions
    R = 1 when there are no ground truths
    GS = 0 when P + R = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .events import EventTuple, order_key
from .streams import CONSTELLATIONS, SCENARIOS, GroundTruthFile

ROLES = ("action", "object", "relation", "flag")
ROLE_SYMBOLS = {"action": "x", "object": "o", "relation": "r", "flag": "i"}
_ROLE_ALIASES = {"x": "action", "o": "object", "r": "relation", "i": "flag", "overall": "overall"}

ORACLE_LIMIT = 8


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class MatchConfig:
    delta: float = 5.0

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


def _role(role: str) -> str:
    role = _ROLE_ALIASES.get(role, role)
    if role != "overall" and role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    return role


def field_match(gt: EventTuple, pred: EventTuple, role: str = "overall") -> bool:
    role = _role(role)
    if role == "action":
        return gt.action is pred.action
    if role == "object":
        return gt.object == pred.object
    if role == "relation":
        return gt.relation == pred.relation
    if role == "flag":
        return gt.robot_interaction == pred.robot_interaction
    return (gt.action is pred.action and gt.object == pred.object
            and gt.relation == pred.relation and gt.robot_interaction == pred.robot_interaction)


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: Counts) -> Counts:
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def gs(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)


ZERO = Counts(0, 0, 0)


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple[tuple[int, int, float], ...]
    counts: Counts

    @property
    def tp(self) -> int:
        return self.counts.tp

    @property
    def fp(self) -> int:
        return self.counts.fp

    @property
    def fn(self) -> int:
        return self.counts.fn

    @property
    def precision(self) -> float:
        return self.counts.precision

    @property
    def recall(self) -> float:
        return self.counts.recall

    @property
    def gs(self) -> float:
        return self.counts.gs


def _delta(cfg) -> float:
    if isinstance(cfg, MatchConfig):
        return cfg.delta
    return MatchConfig(float(cfg)).delta


def match_events(gts: Sequence[EventTuple], preds: Sequence[EventTuple], cfg=MatchConfig(),
                 role: str = "overall") -> MatchReport:
    """Greedy closest-in-time assignment of predictions to ground truths.

    ``role`` restricts the field comparison to one tuple field; ``None``
    compares no fields at all (pure temporal assignment).
    """
    delta = _delta(cfg)
    if role is not None:
        role = _role(role)
    gt_order = sorted(range(len(gts)), key=lambda i: (gts[i].time, order_key(gts[i]), i))
    taken = [False] * len(preds)
    pairs = []
    for gi in gt_order:
        g = gts[gi]
        best = None
        best_key = None
        for pi, p in enumerate(preds):
            if taken[pi]:
                continue
            gap = abs(p.time - g.time)
            if gap > delta:
                continue
            if role is not None and not field_match(g, p, role):
                continue
            key = (gap, p.time, pi)
            if best_key is None or key < best_key:
                best, best_key = pi, key
        if best is not None:
            taken[best] = True
            pairs.append((gi, best, best_key[0]))
    tp = len(pairs)
    return MatchReport(tuple(pairs), Counts(tp, len(preds) - tp, len(gts) - tp))


def _compatible(gts, preds, delta, role) -> list[list[int]]:
    return [[pi for pi, p in enumerate(preds)
             if abs(p.time - g.time) <= delta and field_match(g, p, role)]
            for g in gts]


def oracle_match(gts: Sequence[EventTuple], preds: Sequence[EventTuple], cfg=MatchConfig(),
                 role: str = "overall") -> int:
    """Largest number of one-to-one matches over every injective partial mapping.

    Exhaustive search over (next ground truth, set of used predictions),
    memoized on that pair; limited to 8 events per side.
    """
    if len(gts) > ORACLE_LIMIT or len(preds) > ORACLE_LIMIT:
        raise TooLarge(f"oracle handles at most {ORACLE_LIMIT} events per side")
    delta = _delta(cfg)
    compat = _compatible(gts, preds, delta, _role(role))
    memo: dict[tuple[int, int], int] = {}

    def best(i: int, used: int) -> int:
        if i == len(compat):
            return 0
        key = (i, used)
        if key in memo:
            return memo[key]
        value = best(i + 1, used)
        for pi in compat[i]:
            bit = 1 << pi
            if not used & bit:
                value = max(value, 1 + best(i + 1, used | bit))
        memo[key] = value
        return value

    return best(0, 0)


def brute_force_match(gts: Sequence[EventTuple], preds: Sequence[EventTuple], cfg=MatchConfig(),
                      role: str = "overall") -> int:
    """Unmemoized enumeration of every injective partial mapping; tiny inputs only."""
    delta = _delta(cfg)
    compat = _compatible(gts, preds, delta, _role(role))

    def walk(i: int, used: frozenset) -> int:
        if i == len(compat):
            return 0
        out = walk(i + 1, used)
        for pi in compat[i]:
            if pi not in used:
                out = max(out, 1 + walk(i + 1, used | {pi}))
        return out

    return walk(0, frozenset())


# -- per-role scoring ----------------------------------------------------------

def role_counts(gts, preds, cfg=MatchConfig(), mode: str = "rematch") -> dict[str, Counts]:
    """Counts for the overall tuple and each role.

    ``rematch`` runs an independent greedy pass per role. ``within``
    assigns predictions by time alone and then counts a role as correct
    for each assigned pair whose field agrees.
    """
    out = {"overall": match_events(gts, preds, cfg).counts}
    if mode == "rematch":
        for role in ROLES:
            out[role] = match_events(gts, preds, cfg, role).counts
    elif mode == "within":
        pairs = match_events(gts, preds, cfg, role=None).pairs
        for role in ROLES:
            tp = sum(1 for gi, pi, _ in pairs if field_match(gts[gi], preds[pi], role))
            out[role] = Counts(tp, len(preds) - tp, len(gts) - tp)
    else:
        raise ValueError(f"unknown per-role mode {mode!r}")
    return out


@dataclass
class Recording:
    """One scored recording: ground truth plus predictions."""

    ground_truth: GroundTruthFile
    predictions: list[EventTuple]
    name: str = ""


@dataclass
class CellScore:
    scenario: str
    constellation: str
    recordings: int
    counts: dict[str, Counts]

    def gs(self, role: str = "overall") -> float:
        return self.counts[_role(role)].gs


@dataclass
class ScoreReport:
    delta: float
    mode: str
    cells: dict[tuple[str, str], CellScore]
    per_recording: list[tuple[str, str, str, dict[str, Counts]]] = field(default_factory=list)

    def pooled(self, scenario: Optional[str] = None) -> dict[str, Counts]:
        total = {k: ZERO for k in ("overall",) + ROLES}
        for (sc, _), cell in self.cells.items():
            if scenario is None or sc == scenario:
                total = {k: total[k] + cell.counts[k] for k in total}
        return total

    @property
    def overall_gs(self) -> float:
        """Micro average: TP/FP/FN pooled over every recording."""
        return self.pooled()["overall"].gs

    @property
    def macro_gs(self) -> float:
        if not self.per_recording:
            return 1.0
        return sum(c["overall"].gs for *_, c in self.per_recording) / len(self.per_recording)

    def scenarios(self) -> list[str]:
        seen = []
        for sc, _ in self.cells:
            if sc not in seen:
                seen.append(sc)
        return seen

    def to_dict(self) -> dict:
        def counts_dict(c: dict[str, Counts]) -> dict:
            return {k: {"tp": v.tp, "fp": v.fp, "fn": v.fn, "precision": v.precision,
                        "recall": v.recall, "gs": v.gs} for k, v in c.items()}

        return {
            "delta": self.delta,
            "per_role_mode": self.mode,
            "overall_gs": self.overall_gs,
            "macro_gs": self.macro_gs,
            "cells": [{"scenario": c.scenario, "constellation": c.constellation,
                       "recordings": c.recordings, "scores": counts_dict(c.counts)}
                      for c in self.cells.values()],
            "scenarios": {sc: counts_dict(self.pooled(sc)) for sc in self.scenarios()},
            "all": counts_dict(self.pooled()),
            "recordings": [{"name": n, "scenario": s, "constellation": k, "scores": counts_dict(c)}
                           for n, s, k, c in self.per_recording],
        }


def score_suite(recordings: Iterable[Recording], cfg=MatchConfig(), mode: str = "rematch") -> ScoreReport:
    """Score recordings, pooling counts per (scenario, constellation) cell."""
    cells: dict[tuple[str, str], CellScore] = {}
    per_rec = []
    for rec in recordings:
        gt = rec.ground_truth
        counts = role_counts(gt.tuples, rec.predictions, cfg, mode)
        per_rec.append((rec.name, gt.scenario, gt.constellation, counts))
        key = (gt.scenario, gt.constellation)
        if key in cells:
            cell = cells[key]
            cell.counts = {k: cell.counts[k] + counts[k] for k in counts}
            cell.recordings += 1
        else:
            cells[key] = CellScore(gt.scenario, gt.constellation, 1, counts)
    ordered = dict(sorted(cells.items(), key=lambda kv: (SCENARIOS.index(kv[0][0]),
                                                         CONSTELLATIONS.index(kv[0][1]))))
    return ScoreReport(_delta(cfg), mode, ordered, per_rec)


def ablate_delta(recordings: Sequence[Recording], deltas: Sequence[float]) -> dict[float, float]:
    """Pooled overall GS at each temporal tolerance."""
    out = {}
    for d in deltas:
        if not d > 0:
            raise ValueError(f"delta must be > 0, got {d}")
        total = ZERO
        for rec in recordings:
            total = total + match_events(rec.ground_truth.tuples, rec.predictions, MatchConfig(d)).counts
        out[float(d)] = total.gs
    return out
