"""Agreement statistics, stability classes and image-quality ratios.

Every statistic returns a :class:`Metric` carrying the value and any
degenerate-input flag, so callers never see NaN.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import TooFewSamples, ValidationError, ZeroNoise
from .imageio import ImageVolume


@dataclass(frozen=True)
class Metric:
    value: float
    flag: str | None = None

    def __float__(self) -> float:
        return self.value


class StabilityClass(str, enum.Enum):
    EXCELLENT = "Excellent"
    GOOD = "Good"
    MODERATE = "Moderate"
    POOR = "Poor"

    def __str__(self) -> str:
        return self.value


STABILITY_ORDER = (StabilityClass.EXCELLENT, StabilityClass.GOOD, StabilityClass.MODERATE, StabilityClass.POOR)


def classify(value: float) -> StabilityClass:
    """Stability class with upper-exclusive thresholds 0.9, 0.75 and 0.5."""
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError("cannot classify a non-finite value")
    if value > 0.9:
        return StabilityClass.EXCELLENT
    if value > 0.75:
        return StabilityClass.GOOD
    if value > 0.5:
        return StabilityClass.MODERATE
    return StabilityClass.POOR


def _ratings(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValidationError("ratings matrix must be n x k with n >= 2 and k >= 2")
    if not np.all(np.isfinite(m)):
        raise ValidationError("ratings must be finite")
    return m


def icc21(m) -> Metric:
    """ICC(2,1): two-way random effects, absolute agreement, single rating.

    ``m`` is an ``n x k`` matrix (rows are subjects/ROIs, columns repeated
    measurements). An all-equal matrix returns 1 with flag ``"degenerate"``.
    """
    m = _ratings(m)
    n, k = m.shape
    rows = m.mean(axis=1)
    cols = m.mean(axis=0)
    # grand mean from the column means so identical columns give exactly zero
    # column and residual sums of squares
    grand = cols.mean()
    ss_r = k * np.sum((rows - grand) ** 2)
    ss_c = n * np.sum((cols - grand) ** 2)
    ss_t = np.sum((m - grand) ** 2)
    ss_e = np.sum((m - rows[:, None] - cols[None, :] + grand) ** 2)
    ms_r = ss_r / (n - 1)
    ms_c = ss_c / (k - 1)
    ms_e = ss_e / ((n - 1) * (k - 1))
    denom = ms_r + (k - 1) * ms_e + k / n * (ms_c - ms_e)
    if denom <= 0 or ss_t == 0:
        return Metric(1.0 if ss_t == 0 else 0.0, "degenerate")
    return Metric(float((ms_r - ms_e) / denom))


def _paired(x, y, min_len: int = 3) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError("paired series must have equal length")
    if x.size < min_len:
        raise TooFewSamples(f"need at least {min_len} pairs, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("paired series must be finite")
    return x, y


def _ccc_moments(x, y):
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    cov = np.mean((x - mx) * (y - my))
    return mx, my, vx, vy, cov


def ccc(x, y) -> Metric:
    """Lin's concordance correlation coefficient with population moments."""
    x, y = _paired(x, y)
    mx, my, vx, vy, cov = _ccc_moments(x, y)
    if vx == 0 and vy == 0:
        return Metric(1.0 if mx == my else 0.0, "both_constant")
    return Metric(float(2 * cov / (vx + vy + (mx - my) ** 2)))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    flag: str | None = None


def ccc_ci(x, y, level: float = 0.95) -> Interval:
    """Confidence interval for the CCC via the Fisher z-transform.

    The standard error of ``z = atanh(CCC)`` follows Lin's asymptotic
    variance, written in a form that stays finite when the Pearson
    correlation is 0 or the series are constant.
    """
    x, y = _paired(x, y, min_len=4)
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    n = x.size
    rc = ccc(x, y).value
    if abs(rc) >= 1.0:
        return Interval(rc, rc, "degenerate")
    mx, my, vx, vy, cov = _ccc_moments(x, y)
    sx, sy = math.sqrt(vx), math.sqrt(vy)
    if sx == 0 or sy == 0:
        return Interval(rc, rc, "degenerate")
    r = cov / (sx * sy)
    a = 2 * sx * sy / (vx + vy + (mx - my) ** 2)  # CCC / r
    u2 = (mx - my) ** 2 / (sx * sy)
    one = 1 - rc * rc
    var = (
        (1 - r * r) * a * a / one
        + 2 * a * rc * rc * (1 - rc) * u2 / one**2
        - a * a * rc * rc * u2 * u2 / (2 * one**2)
    ) / (n - 2)
    se = math.sqrt(max(var, 0.0))
    z = math.atanh(rc)
    q = norm.ppf(0.5 + level / 2)
    return Interval(math.tanh(z - q * se), math.tanh(z + q * se))


def spearman(x, y) -> Metric:
    """Pearson correlation of mid-ranks; a constant series gives 0, flagged."""
    x, y = _paired(x, y)
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(np.sum(rx * rx) * np.sum(ry * ry)))
    if den == 0:
        return Metric(0.0, "constant_series")
    return Metric(float(np.clip(np.sum(rx * ry) / den, -1.0, 1.0)))


def cnr(mean_a: float, mean_b: float, sigma_air: float) -> float:
    """Contrast-to-noise ratio ``(mean_a - mean_b) / sigma_air``."""
    if not sigma_air > 0:
        raise ZeroNoise("background noise must be positive")
    return (mean_a - mean_b) / sigma_air


def snr(mean_a: float, sigma_air: float) -> float:
    """Signal-to-noise ratio ``mean_a / sigma_air``."""
    if not sigma_air > 0:
        raise ZeroNoise("background noise must be positive")
    return mean_a / sigma_air


def image_quality(volume: ImageVolume, regions: dict[str, np.ndarray]) -> dict[str, float]:
    """CNR and SNR from ``insert``, ``compartment`` and ``air`` region masks."""
    a = float(volume.data[regions["insert"]].mean())
    b = float(volume.data[regions["compartment"]].mean())
    s = float(volume.data[regions["air"]].std())
    return {"CNR": cnr(a, b, s), "SNR": snr(a, s)}


def shuffle_intensities(volume: ImageVolume, seed: int) -> ImageVolume:
    """Seeded uniform permutation of all voxel intensities; geometry unchanged."""
    rng = np.random.default_rng(seed)
    return volume.with_data(rng.permutation(volume.voxels).reshape(volume.data.shape))
