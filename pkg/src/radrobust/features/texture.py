"""Texture feature formulas evaluated on the matrices from :mod:`.matrices`.

Each function returns ``(values, flags)`` where ``flags`` names the features
that took a degenerate-input fallback instead of an undefined value.
Entropies use base-2 logarithms over nonzero probabilities.
"""

from __future__ import annotations

import numpy as np

from .config import FEATURE_NAMES


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def glcm_features(counts: np.ndarray) -> tuple[dict[str, float], list[str]]:
    ng = counts.shape[0]
    total = counts.sum()
    names_fallback = {"Correlation": 1.0, "MCC": 1.0}
    if total == 0:
        out = {n: 0.0 for n in FEATURE_NAMES["glcm"]}
        out.update(names_fallback)
        return out, ["empty_glcm"]
    flags = []
    p = counts / total
    i = np.arange(1, ng + 1, dtype=float)[:, None]
    j = np.arange(1, ng + 1, dtype=float)[None, :]
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    iv = i[:, 0]
    ux = float(np.sum(px * iv))
    uy = float(np.sum(py * iv))
    sx = float(np.sqrt(np.sum(px * (iv - ux) ** 2)))
    sy = float(np.sqrt(np.sum(py * (iv - uy) ** 2)))

    k_sum = (i + j).astype(int).ravel()  # 2..2ng
    p_sum = np.bincount(k_sum, weights=p.ravel(), minlength=2 * ng + 1)[2:]
    ksum_vals = np.arange(2, 2 * ng + 1, dtype=float)
    k_diff = np.abs(i - j).astype(int).ravel()  # 0..ng-1
    p_diff = np.bincount(k_diff, weights=p.ravel(), minlength=ng)
    kdiff_vals = np.arange(ng, dtype=float)

    hx = _entropy(px)
    hy = _entropy(py)
    hxy = _entropy(p)
    pxpy = px[:, None] * py[None, :]
    pos = p > 0
    hxy1 = float(-np.sum(p[pos] * np.log2(pxpy[pos])))
    pos2 = pxpy > 0
    hxy2 = float(-np.sum(pxpy[pos2] * np.log2(pxpy[pos2])))

    out: dict[str, float] = {}
    out["Autocorrelation"] = float(np.sum(p * i * j))
    out["JointAverage"] = ux
    cluster = i + j - ux - uy
    out["ClusterProminence"] = float(np.sum(cluster**4 * p))
    out["ClusterShade"] = float(np.sum(cluster**3 * p))
    out["ClusterTendency"] = float(np.sum(cluster**2 * p))
    out["Contrast"] = float(np.sum((i - j) ** 2 * p))
    if sx * sy > 0:
        out["Correlation"] = float((np.sum(p * i * j) - ux * uy) / (sx * sy))
    else:
        out["Correlation"] = 1.0
        flags.append("Correlation")
    da = float(np.sum(kdiff_vals * p_diff))
    out["DifferenceAverage"] = da
    out["DifferenceEntropy"] = _entropy(p_diff)
    out["DifferenceVariance"] = float(np.sum((kdiff_vals - da) ** 2 * p_diff))
    out["Id"] = float(np.sum(p / (1 + np.abs(i - j))))
    out["Idm"] = float(np.sum(p / (1 + (i - j) ** 2)))
    out["Idmn"] = float(np.sum(p / (1 + (i - j) ** 2 / ng**2)))
    out["Idn"] = float(np.sum(p / (1 + np.abs(i - j) / ng)))
    hmax = max(hx, hy)
    if hmax > 0:
        out["Imc1"] = (hxy - hxy1) / hmax
    else:
        out["Imc1"] = 0.0
        flags.append("Imc1")
    out["Imc2"] = float(np.sqrt(1 - np.exp(-2 * (hxy2 - hxy)))) if hxy2 > hxy else 0.0
    out["InverseVariance"] = float(np.sum(p_diff[1:] / kdiff_vals[1:] ** 2))
    out["JointEnergy"] = float(np.sum(p**2))
    out["JointEntropy"] = hxy
    out["MCC"], mcc_flag = _mcc(p, px, py)
    if mcc_flag:
        flags.append("MCC")
    out["MaximumProbability"] = float(p.max())
    out["SumAverage"] = float(np.sum(ksum_vals * p_sum))
    out["SumEntropy"] = _entropy(p_sum)
    out["SumSquares"] = float(np.sum((i - ux) ** 2 * p))
    return out, flags


def _mcc(p, px, py) -> tuple[float, bool]:
    rows = px > 0
    cols = py > 0
    if rows.sum() < 2:
        return 1.0, True
    # Q = Dx^-1 P Dy^-1 P^T is similar to A A^T with A = Dx^-1/2 P Dy^-1/2
    a = p[np.ix_(rows, cols)] / np.sqrt(px[rows])[:, None] / np.sqrt(py[cols])[None, :]
    ev = np.sort(np.linalg.eigvalsh(a @ a.T))
    return float(np.sqrt(max(ev[-2], 0.0))), False


def _size_emphasis(counts: np.ndarray, n_units: float) -> dict[str, float]:
    """Shared formulas for run-length, size-zone and dependence matrices.

    ``counts[i-1, j-1]`` holds how many runs/zones/voxels have gray level i
    and size j.
    """
    n = counts.sum()
    ng, nj = counts.shape
    i = np.arange(1, ng + 1, dtype=float)[:, None]
    j = np.arange(1, nj + 1, dtype=float)[None, :]
    p = counts / n
    pi = counts.sum(axis=1)
    pj = counts.sum(axis=0)
    mu_i = float(np.sum(p * i))
    mu_j = float(np.sum(p * j))
    return {
        "small": float(np.sum(counts / j**2) / n),
        "large": float(np.sum(counts * j**2) / n),
        "gln": float(np.sum(pi**2) / n),
        "glnn": float(np.sum(pi**2) / n**2),
        "sn": float(np.sum(pj**2) / n),
        "snn": float(np.sum(pj**2) / n**2),
        "pct": float(n / n_units),
        "glv": float(np.sum(p * (i - mu_i) ** 2)),
        "sv": float(np.sum(p * (j - mu_j) ** 2)),
        "entropy": _entropy(p),
        "lgl": float(np.sum(counts / i**2) / n),
        "hgl": float(np.sum(counts * i**2) / n),
        "slgl": float(np.sum(counts / (i**2 * j**2)) / n),
        "shgl": float(np.sum(counts * i**2 / j**2) / n),
        "llgl": float(np.sum(counts * j**2 / i**2) / n),
        "lhgl": float(np.sum(counts * i**2 * j**2) / n),
    }


def glrlm_features(counts: np.ndarray, n_voxels: int, n_directions: int) -> tuple[dict[str, float], list[str]]:
    e = _size_emphasis(counts, n_voxels * n_directions)
    return {
        "GrayLevelNonUniformity": e["gln"],
        "GrayLevelNonUniformityNormalized": e["glnn"],
        "GrayLevelVariance": e["glv"],
        "HighGrayLevelRunEmphasis": e["hgl"],
        "LongRunEmphasis": e["large"],
        "LongRunHighGrayLevelEmphasis": e["lhgl"],
        "LongRunLowGrayLevelEmphasis": e["llgl"],
        "LowGrayLevelRunEmphasis": e["lgl"],
        "RunEntropy": e["entropy"],
        "RunLengthNonUniformity": e["sn"],
        "RunLengthNonUniformityNormalized": e["snn"],
        "RunPercentage": e["pct"],
        "RunVariance": e["sv"],
        "ShortRunEmphasis": e["small"],
        "ShortRunHighGrayLevelEmphasis": e["shgl"],
        "ShortRunLowGrayLevelEmphasis": e["slgl"],
    }, []


def glszm_features(counts: np.ndarray, n_voxels: int) -> tuple[dict[str, float], list[str]]:
    e = _size_emphasis(counts, n_voxels)
    return {
        "GrayLevelNonUniformity": e["gln"],
        "GrayLevelNonUniformityNormalized": e["glnn"],
        "GrayLevelVariance": e["glv"],
        "HighGrayLevelZoneEmphasis": e["hgl"],
        "LargeAreaEmphasis": e["large"],
        "LargeAreaHighGrayLevelEmphasis": e["lhgl"],
        "LargeAreaLowGrayLevelEmphasis": e["llgl"],
        "LowGrayLevelZoneEmphasis": e["lgl"],
        "SizeZoneNonUniformity": e["sn"],
        "SizeZoneNonUniformityNormalized": e["snn"],
        "SmallAreaEmphasis": e["small"],
        "SmallAreaHighGrayLevelEmphasis": e["shgl"],
        "SmallAreaLowGrayLevelEmphasis": e["slgl"],
        "ZoneEntropy": e["entropy"],
        "ZonePercentage": e["pct"],
        "ZoneVariance": e["sv"],
    }, []


def gldm_features(counts: np.ndarray) -> tuple[dict[str, float], list[str]]:
    e = _size_emphasis(counts, counts.sum())
    return {
        "DependenceEntropy": e["entropy"],
        "DependenceNonUniformity": e["sn"],
        "DependenceNonUniformityNormalized": e["snn"],
        "DependenceVariance": e["sv"],
        "GrayLevelNonUniformity": e["gln"],
        "GrayLevelVariance": e["glv"],
        "HighGrayLevelEmphasis": e["hgl"],
        "LargeDependenceEmphasis": e["large"],
        "LargeDependenceHighGrayLevelEmphasis": e["lhgl"],
        "LargeDependenceLowGrayLevelEmphasis": e["llgl"],
        "LowGrayLevelEmphasis": e["lgl"],
        "SmallDependenceEmphasis": e["small"],
        "SmallDependenceHighGrayLevelEmphasis": e["shgl"],
        "SmallDependenceLowGrayLevelEmphasis": e["slgl"],
    }, []


COARSENESS_CEILING = 1e6


def ngtdm_features(n: np.ndarray, s: np.ndarray) -> tuple[dict[str, float], list[str]]:
    flags = []
    nvp = n.sum()
    if nvp == 0:
        return {
            "Busyness": 0.0,
            "Coarseness": COARSENESS_CEILING,
            "Complexity": 0.0,
            "Contrast": 0.0,
            "Strength": 0.0,
        }, ["empty_ngtdm"]
    p = n / nvp
    present = p > 0
    lv = np.arange(1, len(n) + 1, dtype=float)[present]
    pp = p[present]
    ss = s[present]
    ngp = len(pp)
    ps = float(np.sum(pp * ss))
    s_total = float(ss.sum())
    di = lv[:, None] - lv[None, :]

    out = {}
    if ps > 0:
        out["Coarseness"] = 1.0 / ps
    else:
        out["Coarseness"] = COARSENESS_CEILING
        flags.append("Coarseness")
    if ngp > 1:
        out["Contrast"] = float(np.sum(pp[:, None] * pp[None, :] * di**2) / (ngp * (ngp - 1)) * s_total / nvp)
    else:
        out["Contrast"] = 0.0
        flags.append("Contrast")
    ip = lv * pp
    denom = float(np.sum(np.abs(ip[:, None] - ip[None, :])))
    if denom > 0:
        out["Busyness"] = ps / denom
    else:
        out["Busyness"] = 0.0
        flags.append("Busyness")
    out["Complexity"] = float(
        np.sum(np.abs(di) * (pp[:, None] * ss[:, None] + pp[None, :] * ss[None, :]) / (pp[:, None] + pp[None, :])) / nvp
    )
    if s_total > 0:
        out["Strength"] = float(np.sum((pp[:, None] + pp[None, :]) * di**2) / s_total)
    else:
        out["Strength"] = 0.0
        flags.append("Strength")
    return {k: out[k] for k in ("Busyness", "Coarseness", "Complexity", "Contrast", "Strength")}, flags
