"""Render experiment reports as a figure saved next to the delimited output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .evaluation import ReportRow


def render_report_figure(rows: Sequence[ReportRow], path) -> Path:
    """Success rate vs missing level, one error-bar line per variant.

    A second panel scatters the per-repeat rates so outlier repeats are
    visible.  Returns the written path.
    """
    # imported here so headless use of the library never touches matplotlib
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    scored = [row for row in rows if not row.error]
    variants = sorted({row.variant for row in scored})
    levels = []
    for row in scored:
        if row.missing_level not in levels:
            levels.append(row.missing_level)

    fig, (ax_mean, ax_repeat) = plt.subplots(1, 2, figsize=(11, 4.5))
    positions = {level: i for i, level in enumerate(levels)}
    for variant in variants:
        picked = [row for row in scored if row.variant == variant]
        xs = [positions[row.missing_level] for row in picked]
        ax_mean.errorbar(
            xs,
            [row.mean for row in picked],
            yerr=[row.std_dev for row in picked],
            marker="o",
            capsize=3,
            label=variant,
        )
        for row in picked:
            x = positions[row.missing_level]
            ax_repeat.scatter(
                [x] * len(row.per_repeat_rates),
                row.per_repeat_rates,
                s=14,
                alpha=0.6,
                label=variant if row is picked[0] else None,
            )
    for ax, title in ((ax_mean, "mean success rate"), (ax_repeat, "per-repeat rates")):
        ax.set_xticks(range(len(levels)))
        ax.set_xticklabels(levels)
        ax.set_xlabel("missing level")
        ax.set_ylabel("success rate")
        ax.set_ylim(0.0, 1.05)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if variants:
            ax.legend()
    dataset = scored[0].dataset if scored else (rows[0].dataset if rows else "")
    if dataset:
        fig.suptitle(f"label repair on {dataset}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
