"""Run reports: structured results of a search, persisted as JSON and CSV.

A report carries the resolved configuration, one entry per search stage
(per-step statistics, quality history, the chosen architecture and rerank
details, cache statistics) and optional wall-clock accounting. In
deterministic mode the timing section is omitted so identical seeds produce
byte-identical report files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

REPORT_SCHEMA = "eatnas-report"
REPORT_VERSION = 1

CURVE_COLUMNS = ("stage", "step", "mean_score", "std", "quality", "best_score", "mean_accuracy")


@dataclass
class StageReport:
    """Results of one evolutionary stage."""

    name: str
    steps: int
    stats_history: list[dict]
    quality_history: list[tuple[int, float]]
    chosen_arch: Optional[dict]  # canonical arch object
    rerank: list[dict] = field(default_factory=list)
    cache_hits: int = 0
    cache_misses: int = 0
    evals: int = 0
    wall_seconds: Optional[float] = None

    def to_obj(self, include_timing: bool = True) -> dict:
        obj = {
            "name": self.name,
            "steps": self.steps,
            "stats_history": self.stats_history,
            "quality_history": [[s, q] for s, q in self.quality_history],
            "chosen_arch": self.chosen_arch,
            "rerank": self.rerank,
            "cache": {"hits": self.cache_hits, "misses": self.cache_misses},
            "evals": self.evals,
        }
        if include_timing and self.wall_seconds is not None:
            obj["wall_seconds"] = self.wall_seconds
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "StageReport":
        return cls(
            name=obj["name"],
            steps=obj["steps"],
            stats_history=list(obj["stats_history"]),
            quality_history=[(s, q) for s, q in obj["quality_history"]],
            chosen_arch=obj.get("chosen_arch"),
            rerank=list(obj.get("rerank", [])),
            cache_hits=obj["cache"]["hits"],
            cache_misses=obj["cache"]["misses"],
            evals=obj["evals"],
            wall_seconds=obj.get("wall_seconds"),
        )


@dataclass
class RunReport:
    """Full run result; ``deterministic`` controls whether timing is serialized."""

    mode: str
    master_seed: int
    config: dict
    stages: list[StageReport]
    deterministic: bool = True
    total_seconds: Optional[float] = None

    def to_obj(self) -> dict:
        include_timing = not self.deterministic
        obj = {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "deterministic": self.deterministic,
            "config": self.config,
            "stages": [s.to_obj(include_timing=include_timing) for s in self.stages],
        }
        if include_timing:
            obj["timing"] = {"total_seconds": self.total_seconds}
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2) + "\n"

    @classmethod
    def from_obj(cls, obj: dict) -> "RunReport":
        if obj.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a run report: schema {obj.get('schema')!r}")
        if obj.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {obj.get('version')!r}")
        timing = obj.get("timing") or {}
        return cls(
            mode=obj["mode"],
            master_seed=obj["master_seed"],
            config=obj["config"],
            stages=[StageReport.from_obj(s) for s in obj["stages"]],
            deterministic=obj.get("deterministic", True),
            total_seconds=timing.get("total_seconds"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def load_report(path) -> RunReport:
    with open(path, encoding="utf-8") as fh:
        return RunReport.from_obj(json.load(fh))


def write_curves_csv(report: RunReport, path) -> int:
    """Export per-step curve data; returns the number of data rows written.

    One row per recorded step per stage (the initial population contributes
    step 0), so the row count is the sum over stages of steps + 1.
    """
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for stage in report.stages:
            for row in stage.stats_history:
                writer.writerow(
                    [
                        stage.name,
                        row["step"],
                        row["mean_score"],
                        row["std_score"],
                        row["quality"],
                        row["best_score"],
                        row["mean_accuracy"],
                    ]
                )
                rows += 1
    return rows
