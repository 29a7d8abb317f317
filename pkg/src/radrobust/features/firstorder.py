"""First-order (histogram) features of ROI intensities."""

from __future__ import annotations

import numpy as np


def firstorder_features(values: np.ndarray, levels: np.ndarray, voxel_volume: float) -> tuple[dict[str, float], list[str]]:
    """Intensity statistics of one ROI.

    ``values`` are the raw (filtered) intensities and ``levels`` their
    discretized gray levels, used only for Entropy and Uniformity. Energy is
    the plain sum of squares: any intensity offset is already part of the
    normalized image.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    flags = []
    p10, p25, p50, p75, p90 = np.percentile(x, [10, 25, 50, 75, 90])
    mean = float(x.mean())
    dev = x - mean
    var = float(np.mean(dev**2))
    energy = float(np.sum(x * x))
    robust = x[(x >= p10) & (x <= p90)]
    hist = np.bincount(levels).astype(float)[1:]
    prob = hist[hist > 0] / n

    if var > 0:
        skew = float(np.mean(dev**3) / var**1.5)
        kurt = float(np.mean(dev**4) / var**2)
    else:
        skew, kurt = 0.0, 0.0
        flags += ["Skewness", "Kurtosis"]
    out = {
        "10Percentile": float(p10),
        "90Percentile": float(p90),
        "Energy": energy,
        "Entropy": float(-np.sum(prob * np.log2(prob))),
        "InterquartileRange": float(p75 - p25),
        "Kurtosis": kurt,
        "Maximum": float(x.max()),
        "MeanAbsoluteDeviation": float(np.mean(np.abs(dev))),
        "Mean": mean,
        "Median": float(p50),
        "Minimum": float(x.min()),
        "Range": float(x.max() - x.min()),
        "RobustMeanAbsoluteDeviation": float(np.mean(np.abs(robust - robust.mean()))),
        "RootMeanSquared": float(np.sqrt(energy / n)),
        "Skewness": skew,
        "TotalEnergy": energy * voxel_volume,
        "Uniformity": float(np.sum(prob**2)),
        "Variance": var,
    }
    return out, flags
