"""Characteristics Scores and Scales (CSS) impact classes.

The first threshold is the mean of all scores; each further threshold is the
mean of the scores at or above the previous one. With three thresholds a
population splits into four classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LABELS = ("poorly cited", "fairly cited", "remarkably cited", "outstandingly cited")
TRUNCATION_MODES = ("inclusive", "strict")


@dataclass(frozen=True)
class CssThresholds:
    means: tuple[float, ...]
    truncation: str = "inclusive"

    @property
    def iterations(self) -> int:
        return len(self.means)

    @property
    def n_classes(self) -> int:
        return len(self.means) + 1


@dataclass(frozen=True)
class CssClass:
    level: int

    @property
    def label(self) -> str:
        return class_label(self.level)


def class_label(level: int) -> str:
    """Label for a class level. Only the default four levels carry names."""
    if 1 <= level <= len(LABELS):
        return LABELS[level - 1]
    return f"class {level}"


def _mean(values: np.ndarray) -> float:
    # clamp: the rounded mean of a constant part must not leave [min, max]
    return min(max(math.fsum(values) / values.size, float(values.min())), float(values.max()))


def compute_thresholds(scores: Sequence[float], iterations: int = 3, truncation: str = "inclusive") -> CssThresholds:
    """Run the mean-truncation procedure ``iterations`` times.

    ``truncation="inclusive"`` keeps scores equal to the running mean in the
    upper part; ``"strict"`` drops them. When an upper part is empty the
    remaining thresholds repeat the last mean.
    """
    if truncation not in TRUNCATION_MODES:
        raise ValueError(f"unknown truncation mode {truncation!r}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    part = np.asarray(scores, dtype=float)
    if part.size == 0:
        raise ValueError("cannot compute CSS thresholds of an empty score list")
    if not np.all(np.isfinite(part)) or np.any(part < 0):
        raise ValueError("scores must be finite and non-negative")
    means = []
    m = _mean(part)
    for _ in range(iterations):
        means.append(m)
        part = part[part >= m] if truncation == "inclusive" else part[part > m]
        if part.size:
            m = _mean(part)
    return CssThresholds(tuple(means), truncation)


def assign_levels(scores: Sequence[float], thresholds: CssThresholds) -> np.ndarray:
    """Class levels (1-based ints); a score equal to a threshold goes up."""
    return np.searchsorted(np.asarray(thresholds.means), np.asarray(scores, dtype=float), side="right") + 1


def assign_classes(scores: Sequence[float], thresholds: CssThresholds) -> list[CssClass]:
    return [CssClass(int(v)) for v in assign_levels(scores, thresholds)]


def css_levels(scores: Sequence[float], iterations: int = 3, truncation: str = "inclusive"):
    """Thresholds and levels for one population."""
    th = compute_thresholds(scores, iterations, truncation)
    return th, assign_levels(scores, th)
