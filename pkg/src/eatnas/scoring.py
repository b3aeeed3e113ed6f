"""Pareto trade-off score per model and the population-quality criterion.

The model score is ``acc * (size / target)^omega``: at the target size the
score equals the accuracy; with negative omega oversized models are penalized
and undersized ones mildly rewarded. Population quality applies the same
shape to the score distribution, ``mean * (std / target_std)^omega``, with
omega switching between two weights depending on whether the spread is below
or above its target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

logger = logging.getLogger(__name__)

# Floor applied to the score standard deviation so a zero-variance population
# does not blow up the negative power; such populations are logged as degenerate.
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ScoreParams:
    """Target size (same units as the size metric) and trade-off weight."""

    target_size: float
    omega: float = -0.07

    def __post_init__(self) -> None:
        if self.target_size <= 0:
            raise ValueError(f"target_size must be > 0, got {self.target_size}")


@dataclass(frozen=True)
class QualityParams:
    """Target score spread and the two trade-off weights of the quality criterion."""

    target_std: float = 0.1
    alpha: float = -0.07
    beta: float = -0.07

    def __post_init__(self) -> None:
        if self.target_std <= 0:
            raise ValueError(f"target_std must be > 0, got {self.target_std}")


def model_score(acc: float, size: float, params: ScoreParams) -> float:
    """Score one model: ``acc * (size / target)^omega``."""
    if not 0.0 <= acc <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {acc}")
    if size <= 0:
        raise ValueError(f"size must be > 0, got {size}")
    return acc * (size / params.target_size) ** params.omega


def population_stats(scores: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population (divide-by-N) standard deviation."""
    if len(scores) < 2:
        raise ValueError(f"need at least 2 scores, got {len(scores)}")
    mean = sum(scores) / len(scores)
    variance = sum((s - mean) ** 2 for s in scores) / len(scores)
    return mean, math.sqrt(variance)


def population_quality(scores: Sequence[float], params: QualityParams) -> float:
    """Quality of a score population: ``mean * (std / target_std)^omega``.

    omega is ``alpha`` when the spread is strictly below its target and
    ``beta`` otherwise. The spread is floored at ``STD_FLOOR`` to keep the
    negative power finite for degenerate (all-equal) populations.
    """
    mean, std = population_stats(scores)
    omega = params.alpha if std < params.target_std else params.beta
    if std < STD_FLOOR:
        logger.warning(
            "degenerate population: score std %.3e floored at %.0e", std, STD_FLOOR
        )
        std = STD_FLOOR
    return mean * (std / params.target_std) ** omega
