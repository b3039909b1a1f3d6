"""Image-quality and uncertainty metrics for reconstructed phase maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .optics import PhaseMap, _check_same_grid


@dataclass(frozen=True)
class Roi:
    """Rectangular region, pixel units; ``x0`` is the column, ``y0`` the row."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("ROI area must be >= 1")
        if self.x0 < 0 or self.y0 < 0:
            raise ConfigError("ROI origin must be non-negative")

    @property
    def slices(self):
        return (slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width))

    def check_within(self, shape):
        if self.y0 + self.height > shape[0] or self.x0 + self.width > shape[1]:
            raise ConfigError(f"{self} exceeds image of shape {shape}")

    def overlaps(self, other: "Roi") -> bool:
        return not (self.x0 + self.width <= other.x0 or other.x0 + other.width <= self.x0
                    or self.y0 + self.height <= other.y0 or other.y0 + other.height <= self.y0)


@dataclass(frozen=True)
class EnsembleStats:
    mean: float
    std_dev: float
    n_samples: int
    std_error: float


def _interior(values, border):
    if border <= 0:
        return values
    if 2 * border >= min(values.shape):
        raise ConfigError("border leaves no pixels")
    return values[border:-border, border:-border]


def pearson(phase: PhaseMap, reference: PhaseMap, border: int = 0) -> float:
    """Pearson correlation between two phase images.

    ``border`` pixels are dropped on every side before comparison.
    """
    _check_same_grid(phase.grid, reference.grid)
    a = _interior(phase.values, border).ravel()
    b = _interior(reference.values, border).ravel()
    a = a - a.mean()
    b = b - b.mean()
    va = np.dot(a, a)
    vb = np.dot(b, b)
    if va == 0 or vb == 0:
        raise NumericError("Pearson coefficient undefined for a constant image")
    return float(np.clip(np.dot(a, b) / math.sqrt(va * vb), -1.0, 1.0))


def phase_step_estimate(phase: PhaseMap, roi_in: Roi, roi_out: Roi) -> float:
    """Mean phase inside ``roi_in`` minus mean phase inside ``roi_out``."""
    roi_in.check_within(phase.values.shape)
    roi_out.check_within(phase.values.shape)
    if roi_in.overlaps(roi_out):
        raise ConfigError("phase-step ROIs overlap")
    return float(phase.values[roi_in.slices].mean() - phase.values[roi_out.slices].mean())


def ensemble_stats(values) -> EnsembleStats:
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise ConfigError("need at least 2 samples")
    sd = float(v.std(ddof=1))
    return EnsembleStats(float(v.mean()), sd, int(v.size), sd / math.sqrt(v.size))
