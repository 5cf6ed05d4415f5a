"""Figures for score reports, written next to the tabular outputs."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import ROLE_SYMBOLS, ROLES, ScoreReport  # noqa: E402
from .report import SCENARIO_TITLES, cell_columns  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figsize(width: float = 6.0, ratio: float = (math.sqrt(5.0) - 1.0) / 2.0) -> tuple[float, float]:
    return width, width * ratio


def plot_cells(report: ScoreReport, path: Path) -> Path:
    cols = [k for k in cell_columns(report) if k in report.cells]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(6.5))
        xs = list(range(len(cols)))
        ax.bar(xs, [report.cells[k].gs() for k in cols], color="0.35", width=0.6)
        ax.axhline(report.overall_gs, color="C3", lw=1, ls="--", label=f"overall {report.overall_gs:.2f}")
        ax.set_xticks(xs)
        ax.set_xticklabels([c for _, c in cols])
        # scenario names centred under their group of constellations
        groups: dict[str, list[int]] = {}
        for x, (sc, _) in zip(xs, cols):
            groups.setdefault(sc, []).append(x)
        for sc, members in groups.items():
            ax.text(sum(members) / len(members), -0.13, SCENARIO_TITLES.get(sc, sc), ha="center", va="top",
                    transform=ax.get_xaxis_transform())
        ax.set_ylim(0, 1.15)
        ax.set_yticks([0, 0.2, 0.4, 0.6, 0.8, 1.0])
        ax.set_ylabel("grounding score")
        ax.set_title(f"Grounding score per recording group ($\\delta$ = {report.delta:g}s)")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_roles(report: ScoreReport, path: Path) -> Path:
    groups = [sc for sc in report.scenarios()] + ["all"]
    width = 0.8 / len(ROLES)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(6.5))
        for j, role in enumerate(ROLES):
            vals = [report.pooled(None if g == "all" else g)[role].gs for g in groups]
            ax.bar([i + (j - 1.5) * width for i in range(len(groups))], vals, width=width,
                   label=ROLE_SYMBOLS[role])
        ax.set_xticks(range(len(groups)))
        ax.set_xticklabels([SCENARIO_TITLES.get(g, "All") for g in groups])
        ax.set_ylim(0, 1.15)
        ax.set_yticks([0, 0.2, 0.4, 0.6, 0.8, 1.0])
        ax.set_ylabel("grounding score")
        ax.set_title(f"Per-role grounding score ($\\delta$ = {report.delta:g}s)")
        ax.legend(ncol=len(ROLES), loc="upper center", frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_ablation(table: Mapping[float, float], path: Path) -> Path:
    deltas = sorted(table)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(4.0))
        ax.plot(deltas, [table[d] for d in deltas], marker="o", color="k")
        ax.set_xlabel("temporal tolerance $\\delta$ (s)")
        ax.set_ylabel("grounding score")
        ax.set_ylim(0, 1.05)
        ax.set_xticks(deltas)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
