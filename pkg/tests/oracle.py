"""Brute-force reference implementation of the texture matrices and features.

Written independently of ``radrobust.features``: every matrix is built by
walking voxels one at a time, zones by breadth-first search, and every
feature by explicit sums over matrix cells. Only meant for tiny ROIs.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np


def _offsets(two_d):
    out = []
    for dz, dy, dx in itertools.product((-1, 0, 1), repeat=3):
        if (dz, dy, dx) == (0, 0, 0) or (two_d and dz != 0):
            continue
        out.append((dz, dy, dx))
    return out


def _half(two_d):
    # one representative per +/- pair: lexicographically positive
    return [d for d in _offsets(two_d) if d > (0, 0, 0)]


def _roi(levels):
    nz, ny, nx = levels.shape
    return {
        (z, y, x): int(levels[z, y, x])
        for z in range(nz)
        for y in range(ny)
        for x in range(nx)
        if levels[z, y, x] > 0
    }


def _add(p, d):
    return (p[0] + d[0], p[1] + d[1], p[2] + d[2])


def glcm(levels, ng, two_d):
    roi = _roi(levels)
    m = [[0.0] * ng for _ in range(ng)]
    for p, g in roi.items():
        for d in _offsets(two_d):
            q = _add(p, d)
            if q in roi:
                m[g - 1][roi[q] - 1] += 1
    return m


def glrlm(levels, ng, two_d):
    roi = _roi(levels)
    runs = {}
    for d in _half(two_d):
        back = (-d[0], -d[1], -d[2])
        for p, g in roi.items():
            if roi.get(_add(p, back)) == g:
                continue
            length, q = 1, _add(p, d)
            while roi.get(q) == g:
                length += 1
                q = _add(q, d)
            runs[(g, length)] = runs.get((g, length), 0) + 1
    return runs, len(_half(two_d))


def glszm(levels, ng, two_d):
    roi = _roi(levels)
    seen = set()
    zones = {}
    for start, g in roi.items():
        if start in seen:
            continue
        seen.add(start)
        size, queue = 0, deque([start])
        while queue:
            p = queue.popleft()
            size += 1
            for d in _offsets(two_d):
                q = _add(p, d)
                if q not in seen and roi.get(q) == g:
                    seen.add(q)
                    queue.append(q)
        zones[(g, size)] = zones.get((g, size), 0) + 1
    return zones


def gldm(levels, ng, two_d, alpha=0):
    roi = _roi(levels)
    dep = {}
    for p, g in roi.items():
        k = 1
        for d in _offsets(two_d):
            q = _add(p, d)
            if q in roi and abs(roi[q] - g) <= alpha:
                k += 1
        dep[(g, k)] = dep.get((g, k), 0) + 1
    return dep


def ngtdm(levels, ng, two_d):
    roi = _roi(levels)
    n = [0.0] * ng
    s = [0.0] * ng
    for p, g in roi.items():
        vals = [roi[q] for q in (_add(p, d) for d in _offsets(two_d)) if q in roi]
        if not vals:
            continue
        n[g - 1] += 1
        s[g - 1] += abs(g - sum(vals) / len(vals))
    return n, s


def _h(probs):
    return -sum(p * math.log2(p) for p in probs if p > 0)


def glcm_features(m):
    ng = len(m)
    total = sum(map(sum, m))
    p = [[m[i][j] / total for j in range(ng)] for i in range(ng)]
    lv = range(1, ng + 1)
    px = [sum(p[i - 1]) for i in lv]
    py = [sum(p[i - 1][j - 1] for i in lv) for j in lv]
    ux = sum(i * px[i - 1] for i in lv)
    uy = sum(j * py[j - 1] for j in lv)
    sx = math.sqrt(sum((i - ux) ** 2 * px[i - 1] for i in lv))
    sy = math.sqrt(sum((j - uy) ** 2 * py[j - 1] for j in lv))
    cells = [(i, j, p[i - 1][j - 1]) for i in lv for j in lv]
    psum = {}
    pdiff = {}
    for i, j, v in cells:
        psum[i + j] = psum.get(i + j, 0.0) + v
        pdiff[abs(i - j)] = pdiff.get(abs(i - j), 0.0) + v
    da = sum(k * v for k, v in pdiff.items())
    hxy = _h(v for _, _, v in cells)
    hx, hy = _h(px), _h(py)
    hxy1 = -sum(v * math.log2(px[i - 1] * py[j - 1]) for i, j, v in cells if v > 0)
    hxy2 = _h(px[i - 1] * py[j - 1] for i, j, _ in cells)
    f = {
        "Autocorrelation": sum(i * j * v for i, j, v in cells),
        "JointAverage": ux,
        "ClusterProminence": sum((i + j - ux - uy) ** 4 * v for i, j, v in cells),
        "ClusterShade": sum((i + j - ux - uy) ** 3 * v for i, j, v in cells),
        "ClusterTendency": sum((i + j - ux - uy) ** 2 * v for i, j, v in cells),
        "Contrast": sum((i - j) ** 2 * v for i, j, v in cells),
        "Correlation": (sum(i * j * v for i, j, v in cells) - ux * uy) / (sx * sy) if sx * sy > 0 else 1.0,
        "DifferenceAverage": da,
        "DifferenceEntropy": _h(pdiff.values()),
        "DifferenceVariance": sum((k - da) ** 2 * v for k, v in pdiff.items()),
        "Id": sum(v / (1 + abs(i - j)) for i, j, v in cells),
        "Idm": sum(v / (1 + (i - j) ** 2) for i, j, v in cells),
        "Idmn": sum(v / (1 + (i - j) ** 2 / ng**2) for i, j, v in cells),
        "Idn": sum(v / (1 + abs(i - j) / ng) for i, j, v in cells),
        "Imc1": (hxy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0,
        "Imc2": math.sqrt(max(0.0, 1 - math.exp(-2 * (hxy2 - hxy)))),
        "InverseVariance": sum(v / (i - j) ** 2 for i, j, v in cells if i != j),
        "JointEnergy": sum(v * v for _, _, v in cells),
        "JointEntropy": hxy,
        "MaximumProbability": max(v for _, _, v in cells),
        "SumAverage": sum(k * v for k, v in psum.items()),
        "SumEntropy": _h(psum.values()),
        "SumSquares": sum((i - ux) ** 2 * v for i, j, v in cells),
    }
    # MCC from the non-symmetric Q matrix over occupied levels
    occ = [i for i in range(ng) if px[i] > 0]
    if len(occ) < 2:
        f["MCC"] = 1.0
    else:
        q = np.array(
            [[sum(p[i][k] * p[j][k] / (px[i] * py[k]) for k in occ) for j in occ] for i in occ]
        )
        ev = sorted(np.real(np.linalg.eigvals(q)))
        f["MCC"] = math.sqrt(max(ev[-2], 0.0))
    return f


def _size_features(counts: dict, n_units: float):
    """Shared emphasis formulas over ``{(gray level, size): count}``."""
    n = sum(counts.values())
    items = [(i, j, c) for (i, j), c in counts.items() if c]
    gl = {}
    sz = {}
    for i, j, c in items:
        gl[i] = gl.get(i, 0) + c
        sz[j] = sz.get(j, 0) + c
    mu_i = sum(i * c for i, j, c in items) / n
    mu_j = sum(j * c for i, j, c in items) / n
    return {
        "small": sum(c / j**2 for i, j, c in items) / n,
        "large": sum(c * j**2 for i, j, c in items) / n,
        "gln": sum(v * v for v in gl.values()) / n,
        "glnn": sum(v * v for v in gl.values()) / n**2,
        "sn": sum(v * v for v in sz.values()) / n,
        "snn": sum(v * v for v in sz.values()) / n**2,
        "pct": n / n_units,
        "glv": sum(c / n * (i - mu_i) ** 2 for i, j, c in items),
        "sv": sum(c / n * (j - mu_j) ** 2 for i, j, c in items),
        "entropy": _h(c / n for _, _, c in items),
        "lgl": sum(c / i**2 for i, j, c in items) / n,
        "hgl": sum(c * i**2 for i, j, c in items) / n,
        "slgl": sum(c / (i**2 * j**2) for i, j, c in items) / n,
        "shgl": sum(c * i**2 / j**2 for i, j, c in items) / n,
        "llgl": sum(c * j**2 / i**2 for i, j, c in items) / n,
        "lhgl": sum(c * i**2 * j**2 for i, j, c in items) / n,
    }


_GLRLM = {
    "GrayLevelNonUniformity": "gln", "GrayLevelNonUniformityNormalized": "glnn", "GrayLevelVariance": "glv",
    "HighGrayLevelRunEmphasis": "hgl", "LongRunEmphasis": "large", "LongRunHighGrayLevelEmphasis": "lhgl",
    "LongRunLowGrayLevelEmphasis": "llgl", "LowGrayLevelRunEmphasis": "lgl", "RunEntropy": "entropy",
    "RunLengthNonUniformity": "sn", "RunLengthNonUniformityNormalized": "snn", "RunPercentage": "pct",
    "RunVariance": "sv", "ShortRunEmphasis": "small", "ShortRunHighGrayLevelEmphasis": "shgl",
    "ShortRunLowGrayLevelEmphasis": "slgl",
}
_GLSZM = {
    "GrayLevelNonUniformity": "gln", "GrayLevelNonUniformityNormalized": "glnn", "GrayLevelVariance": "glv",
    "HighGrayLevelZoneEmphasis": "hgl", "LargeAreaEmphasis": "large", "LargeAreaHighGrayLevelEmphasis": "lhgl",
    "LargeAreaLowGrayLevelEmphasis": "llgl", "LowGrayLevelZoneEmphasis": "lgl", "SizeZoneNonUniformity": "sn",
    "SizeZoneNonUniformityNormalized": "snn", "SmallAreaEmphasis": "small", "SmallAreaHighGrayLevelEmphasis": "shgl",
    "SmallAreaLowGrayLevelEmphasis": "slgl", "ZoneEntropy": "entropy", "ZonePercentage": "pct", "ZoneVariance": "sv",
}
_GLDM = {
    "DependenceEntropy": "entropy", "DependenceNonUniformity": "sn", "DependenceNonUniformityNormalized": "snn",
    "DependenceVariance": "sv", "GrayLevelNonUniformity": "gln", "GrayLevelVariance": "glv",
    "HighGrayLevelEmphasis": "hgl", "LargeDependenceEmphasis": "large", "LargeDependenceHighGrayLevelEmphasis": "lhgl",
    "LargeDependenceLowGrayLevelEmphasis": "llgl", "LowGrayLevelEmphasis": "lgl", "SmallDependenceEmphasis": "small",
    "SmallDependenceHighGrayLevelEmphasis": "shgl", "SmallDependenceLowGrayLevelEmphasis": "slgl",
}


def ngtdm_features(n, s):
    nvp = sum(n)
    lv = [(i + 1, n[i] / nvp, s[i]) for i in range(len(n)) if n[i] > 0]
    ngp = len(lv)
    ps = sum(p * si for _, p, si in lv)
    stot = sum(si for _, _, si in lv)
    pairs = [(a, b) for a in lv for b in lv]
    busy_den = sum(abs(a[0] * a[1] - b[0] * b[1]) for a, b in pairs)
    return {
        "Coarseness": 1 / ps if ps > 0 else 1e6,
        "Contrast": (sum(a[1] * b[1] * (a[0] - b[0]) ** 2 for a, b in pairs) / (ngp * (ngp - 1)) * stot / nvp)
        if ngp > 1 else 0.0,
        "Busyness": ps / busy_den if busy_den > 0 else 0.0,
        "Complexity": sum(abs(a[0] - b[0]) * (a[1] * a[2] + b[1] * b[2]) / (a[1] + b[1]) for a, b in pairs) / nvp,
        "Strength": sum((a[1] + b[1]) * (a[0] - b[0]) ** 2 for a, b in pairs) / stot if stot > 0 else 0.0,
    }


def texture_features(levels, ng, two_d, alpha=0):
    """``{class: {feature: value}}`` for one discretized ROI."""
    np_vox = int(np.count_nonzero(levels))
    runs, n_dirs = glrlm(levels, ng, two_d)
    rl = _size_features(runs, np_vox * n_dirs)
    zs = _size_features(glszm(levels, ng, two_d), np_vox)
    dp = _size_features(gldm(levels, ng, two_d, alpha), np_vox)
    return {
        "glcm": glcm_features(glcm(levels, ng, two_d)),
        "glrlm": {k: rl[v] for k, v in _GLRLM.items()},
        "glszm": {k: zs[v] for k, v in _GLSZM.items()},
        "gldm": {k: dp[v] for k, v in _GLDM.items()},
        "ngtdm": ngtdm_features(*ngtdm(levels, ng, two_d)),
    }
