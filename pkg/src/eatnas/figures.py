"""Curve figures rendered next to the exported CSV: mean population accuracy
and population quality per step, one line per stage."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .report import RunReport  # noqa: E402


def render_curves(report: RunReport, out_dir) -> list[str]:
    """Write the two per-step panels as PNG files; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    panels = [
        ("mean_accuracy", "mean population accuracy", "curves_mean_accuracy.png"),
        ("quality", "population quality", "curves_quality.png"),
    ]
    for key, label, filename in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for stage in report.stages:
            steps = [row["step"] for row in stage.stats_history]
            values = [row[key] for row in stage.stats_history]
            ax.plot(steps, values, label=stage.name)
        ax.set_xlabel("evolution step")
        ax.set_ylabel(label)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = os.path.join(out_dir, filename)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
