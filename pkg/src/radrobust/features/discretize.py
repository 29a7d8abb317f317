"""Fixed bin-width gray-level discretization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

_LADDER = (1.0, 2.0, 2.5, 5.0)


def bin_count(value_range: float, width: float) -> int:
    return int(math.floor(value_range / width)) + 1


def auto_bin_width(value_range: float, bounds: tuple[int, int] = (30, 130)) -> float:
    """Largest width from ``{1, 2, 2.5, 5} x 10**n`` whose bin count lies in ``bounds``."""
    lo, hi = bounds
    if value_range <= 0:
        return 1.0
    top = math.floor(math.log10(value_range)) + 1
    for n in range(top, top - 8, -1):
        for m in reversed(_LADDER):
            w = m * 10.0**n
            if lo <= bin_count(value_range, w) <= hi:
                return w
    raise ValidationError(f"no ladder width gives {lo}-{hi} bins for range {value_range}")


@dataclass(frozen=True, eq=False)
class Discretized:
    levels: np.ndarray  # int32, 0 outside the ROI, 1..n_bins inside
    n_bins: int
    bin_width: float
    constant: bool = False


def discretize(
    values: np.ndarray,
    mask: np.ndarray,
    bin_width: float | str = "auto",
    bounds: tuple[int, int] = (30, 130),
) -> Discretized:
    """Gray levels ``floor((x - min_roi) / W) + 1`` inside ``mask``.

    A constant ROI yields a single flagged bin.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("ROI is empty")
    roi = values[mask]
    lo = roi.min()
    value_range = float(roi.max() - lo)
    levels = np.zeros(mask.shape, dtype=np.int32)
    if value_range == 0:
        levels[mask] = 1
        w = 1.0 if bin_width == "auto" else float(bin_width)
        return Discretized(levels, 1, w, constant=True)
    w = auto_bin_width(value_range, bounds) if bin_width == "auto" else float(bin_width)
    g = np.floor((roi - lo) / w).astype(np.int64) + 1
    levels[mask] = g
    return Discretized(levels, int(g.max()), w)
