"""Text, TSV and JSON renderings of score reports.

Layouts follow the usual result tables: one grounding-score row over the
(scenario, constellation) cells, a per-role block (x, o, r, i) per
scenario, and a tolerance-ablation row.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .metrics import ROLE_SYMBOLS, ROLES, ScoreReport

# column layout of the cell table
TABLE_CELLS: tuple[tuple[str, str], ...] = (
    ("sorting", "1P"), ("sorting", "2P"), ("sorting", "1P+R"), ("sorting", "2P+R"),
    ("pouring", "2P"), ("pouring", "1P+R"),
    ("handover", "2P"), ("handover", "1P+R"),
)
SCENARIO_TITLES = {"sorting": "Sorting Fruits", "pouring": "Pouring", "handover": "Handover"}


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.2f}"


def _align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def cell_columns(report: ScoreReport) -> list[tuple[str, str]]:
    extra = [k for k in report.cells if k not in TABLE_CELLS]
    return list(TABLE_CELLS) + extra


def cell_rows(report: ScoreReport, verbose: bool = False) -> list[list[str]]:
    cols = cell_columns(report)
    head1 = ["", *[SCENARIO_TITLES.get(sc, sc) for sc, _ in cols], "Overall"]
    head2 = ["", *[c for _, c in cols], "GS"]
    row = ["GS", *[_fmt(report.cells[k].gs() if k in report.cells else None) for k in cols],
           _fmt(report.overall_gs)]
    rows = [head1, head2, row]
    if verbose:
        rows.append(["GS (mean of recordings)", *[""] * len(cols), _fmt(report.macro_gs)])
    return rows


def role_rows(report: ScoreReport) -> list[list[str]]:
    groups = [sc for sc in SCENARIO_TITLES if sc in report.scenarios()] + \
             [sc for sc in report.scenarios() if sc not in SCENARIO_TITLES]
    head1, head2, row = [""], [""], ["GS"]
    for title, counts in [(SCENARIO_TITLES.get(sc, sc), report.pooled(sc)) for sc in groups] + \
            [("All", report.pooled())]:
        for role in ROLES:
            head1.append(title if role == ROLES[0] else "")
            head2.append(ROLE_SYMBOLS[role])
            row.append(_fmt(counts[role].gs))
    return [head1, head2, row]


def render_report(report: ScoreReport, per_role: bool = False, verbose: bool = False) -> str:
    out = [f"Grounding score (delta = {report.delta:g}s)\n", _align(cell_rows(report, verbose))]
    if per_role:
        out += [f"\nGrounding score per role (delta = {report.delta:g}s, {report.mode})\n",
                _align(role_rows(report))]
    if verbose:
        rows = [["recording", "scenario", "constellation", "TP", "FP", "FN", "GS"]]
        for name, sc, cons, c in report.per_recording:
            o = c["overall"]
            rows.append([name or "-", sc, cons, str(o.tp), str(o.fp), str(o.fn), _fmt(o.gs)])
        out += ["\n", _align(rows)]
    return "".join(out)


def report_tsv(report: ScoreReport) -> str:
    lines = ["scenario\tconstellation\trecordings\trole\ttp\tfp\tfn\tprecision\trecall\tgs"]

    def emit(sc, cons, n, counts):
        for role in ("overall",) + ROLES:
            c = counts[role]
            lines.append(f"{sc}\t{cons}\t{n}\t{role}\t{c.tp}\t{c.fp}\t{c.fn}\t"
                         f"{c.precision:.6f}\t{c.recall:.6f}\t{c.gs:.6f}")

    for cell in report.cells.values():
        emit(cell.scenario, cell.constellation, cell.recordings, cell.counts)
    for sc in report.scenarios():
        n = sum(c.recordings for c in report.cells.values() if c.scenario == sc)
        emit(sc, "all", n, report.pooled(sc))
    emit("all", "all", len(report.per_recording), report.pooled())
    return "\n".join(lines) + "\n"


def ablation_rows(table: Mapping[float, float], label: str = "GS") -> list[list[str]]:
    deltas = sorted(table)
    return [["", *[f"{d:g}s" for d in deltas]], [label, *[_fmt(table[d]) for d in deltas]]]


def render_ablation(table: Mapping[float, float]) -> str:
    return "Grounding score by temporal tolerance\n" + _align(ablation_rows(table))


def ablation_tsv(table: Mapping[float, float]) -> str:
    return "delta\tgs\n" + "".join(f"{d:g}\t{table[d]:.6f}\n" for d in sorted(table))


def ablation_json(table: Mapping[float, float]) -> dict:
    return {"deltas": sorted(table), "gs": [table[d] for d in sorted(table)]}


def write_outputs(prefix: Path, text: str, tsv: str, doc: dict) -> list[Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = [prefix.with_suffix(".txt"), prefix.with_suffix(".tsv"), prefix.with_suffix(".json")]
    paths[0].write_text(text, encoding="utf-8")
    paths[1].write_text(tsv, encoding="utf-8")
    paths[2].write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return paths
