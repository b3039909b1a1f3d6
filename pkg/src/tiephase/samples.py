"""Binary test phase objects and their default analysis regions.

Shapes are laid out on an 80 x 80 design frame and rescaled by nearest
neighbour to other grid sizes. ``SAMPLE_VERSION`` changes whenever a layout
changes, so stored results can be matched to the geometry that produced them.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .metrics import Roi
from .optics import Grid, PhaseMap

SAMPLE_VERSION = "1"
DESIGN = 80

# (row0, row1, col0, col1), half-open, on the design frame
PI_GLYPH_RECTS = (
    (15, 27, 15, 65),  # top bar
    (27, 65, 21, 33),  # left leg
    (27, 65, 47, 59),  # right leg
)
PI_ROI_IN = (38, 56, 25, 29)   # inside the left leg
PI_ROI_OUT = (38, 56, 38, 42)  # gap between the legs

SQUARE_SIZE = 8
SQUARE_PERIOD = 14
SQUARE_COUNT = 4


def _design_mask(kind):
    mask = np.zeros((DESIGN, DESIGN), dtype=bool)
    if kind == "pi_glyph":
        for r0, r1, c0, c1 in PI_GLYPH_RECTS:
            mask[r0:r1, c0:c1] = True
    elif kind == "squares":
        span = (SQUARE_COUNT - 1) * SQUARE_PERIOD + SQUARE_SIZE
        start = (DESIGN - span) // 2
        for i in range(SQUARE_COUNT):
            for j in range(SQUARE_COUNT):
                r = start + i * SQUARE_PERIOD
                c = start + j * SQUARE_PERIOD
                mask[r:r + SQUARE_SIZE, c:c + SQUARE_SIZE] = True
    else:
        raise ConfigError(f"unknown sample kind {kind!r}")
    return mask


def _rescale(mask, shape):
    rows = (np.arange(shape[0]) * DESIGN) // shape[0]
    cols = (np.arange(shape[1]) * DESIGN) // shape[1]
    return mask[np.ix_(rows, cols)]


def make_sample(kind: str, step_rad: float, grid: Grid, path=None) -> PhaseMap:
    """Binary phase map taking the values ``{0, step_rad}``.

    ``kind`` is ``"pi_glyph"``, ``"squares"`` or ``"custom"`` (read from
    ``path``, PGM or CSV, and returned unchanged).
    """
    if kind in ("custom", "custom-file", "custom_file"):
        from .io import read_phase

        if path is None:
            raise ConfigError("custom sample requires a file path")
        phase = read_phase(path, grid)
        return phase
    if not 0 < step_rad < np.pi:
        raise ConfigError(f"step_rad must lie in (0, pi), got {step_rad}")
    mask = _rescale(_design_mask(kind), grid.shape)
    return PhaseMap(grid, np.where(mask, float(step_rad), 0.0))


def _roi_from_design(rect, shape):
    r0, r1, c0, c1 = rect
    sy = shape[0] / DESIGN
    sx = shape[1] / DESIGN
    y0, y1 = int(round(r0 * sy)), int(round(r1 * sy))
    x0, x1 = int(round(c0 * sx)), int(round(c1 * sx))
    return Roi(x0, y0, max(x1 - x0, 1), max(y1 - y0, 1))


def default_rois(kind: str, shape):
    """``(roi_in, roi_out)`` for the phase-step estimate, or None if undefined."""
    if kind == "pi_glyph":
        return _roi_from_design(PI_ROI_IN, shape), _roi_from_design(PI_ROI_OUT, shape)
    return None
