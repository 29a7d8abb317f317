"""Gray-level texture matrices (GLCM, GLRLM, GLSZM, GLDM, NGTDM).

All functions take a discretized ``levels`` array of shape ``(nz, ny, nx)``
with 0 outside the ROI and gray levels ``1..n_bins`` inside. In ``force2D``
mode only in-plane directions and neighbourhoods are used, so each slice is
processed independently and the matrices are summed over slices. Direction
matrices are summed too (no per-direction averaging).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


def directions(two_d: bool) -> list[tuple[int, int, int]]:
    """Unique ``(dz, dy, dx)`` offsets: 4 in-plane or 13 in 3D."""
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        if d == (0, 0, 0):
            continue
        if two_d and d[0] != 0:
            continue
        first = next(v for v in d if v != 0)
        if first > 0:
            out.append(d)
    return out


def neighbour_offsets(two_d: bool) -> list[tuple[int, int, int]]:
    return [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0) and not (two_d and d[0] != 0)]


def _shifted_pair(a: np.ndarray, d) -> tuple[np.ndarray, np.ndarray]:
    """Views ``(a[p], a[p + d])`` over every ``p`` with both inside the array."""
    src, dst = [], []
    for o, n in zip(d, a.shape):
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    return a[tuple(src)], a[tuple(dst)]


def _neighbour(padded: np.ndarray, d, shape) -> np.ndarray:
    """Value at ``p + d`` for every ``p`` of an array padded by one voxel of zeros."""
    return padded[tuple(slice(1 + o, 1 + o + n) for o, n in zip(d, shape))]


def glcm(levels: np.ndarray, n_bins: int, two_d: bool) -> np.ndarray:
    """Symmetric co-occurrence counts at distance 1 summed over directions."""
    p = np.zeros(n_bins * n_bins, dtype=np.float64)
    for d in directions(two_d):
        a, b = _shifted_pair(levels, d)
        ok = (a > 0) & (b > 0)
        if ok.any():
            p += np.bincount((a[ok] - 1) * n_bins + (b[ok] - 1), minlength=n_bins * n_bins)
    p = p.reshape(n_bins, n_bins)
    return p + p.T


@functools.lru_cache(maxsize=256)
def _line_order(shape: tuple[int, int, int], d: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices that walk every line of direction ``d`` plus a line-start flag."""
    shape_a = np.array(shape)
    d_a = np.array(d)
    idx = np.indices(shape).reshape(3, -1).T
    prev = idx - d_a
    starts = idx[np.any((prev < 0) | (prev >= shape_a), axis=1)]
    steps = np.full(len(starts), np.iinfo(np.int64).max)
    for ax in range(3):
        if d[ax] > 0:
            steps = np.minimum(steps, shape[ax] - starts[:, ax])
        elif d[ax] < 0:
            steps = np.minimum(steps, starts[:, ax] + 1)
    line_start = np.zeros(int(steps.sum()), dtype=bool)
    offsets = np.concatenate([[0], np.cumsum(steps)[:-1]])
    line_start[offsets] = True
    pos = np.arange(len(line_start)) - np.repeat(offsets, steps)
    coords = np.repeat(starts, steps, axis=0) + pos[:, None] * d_a
    flat = np.ravel_multi_index(coords.T, shape)
    flat.setflags(write=False)
    line_start.setflags(write=False)
    return flat, line_start


def run_lengths(levels: np.ndarray, d) -> tuple[np.ndarray, np.ndarray]:
    """Gray level and length of every maximal run along direction ``d``."""
    flat, line_start = _line_order(levels.shape, tuple(d))
    seq = levels.reshape(-1)[flat]
    new_run = line_start.copy()
    new_run[1:] |= seq[1:] != seq[:-1]
    run_id = np.cumsum(new_run) - 1
    lengths = np.bincount(run_id)
    values = seq[new_run]
    keep = values > 0
    return values[keep], lengths[keep]


def glrlm(levels: np.ndarray, n_bins: int, two_d: bool) -> np.ndarray:
    """Run-length counts ``[gray level - 1, run length - 1]`` summed over directions."""
    max_len = max(levels.shape)
    p = np.zeros(n_bins * max_len)
    for d in directions(two_d):
        g, ln = run_lengths(levels, d)
        p += np.bincount((g - 1) * max_len + (ln - 1), minlength=n_bins * max_len)
    p = p.reshape(n_bins, max_len)
    last = np.flatnonzero(p.sum(axis=0))
    return p[:, : last[-1] + 1] if last.size else p[:, :1]


def connectivity(two_d: bool) -> np.ndarray:
    s = np.ones((3, 3, 3), dtype=bool)
    if two_d:
        s[0] = s[2] = False
    return s


def zone_sizes(levels: np.ndarray, two_d: bool) -> tuple[np.ndarray, np.ndarray]:
    """Gray level and voxel count of every connected same-level zone."""
    structure = connectivity(two_d)
    gl, sizes = [], []
    for g in np.unique(levels[levels > 0]):
        lab, n = ndimage.label(levels == g, structure=structure)
        counts = np.bincount(lab.reshape(-1))[1:]
        gl.append(np.full(n, g))
        sizes.append(counts)
    if not gl:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(gl), np.concatenate(sizes)


def glszm(levels: np.ndarray, n_bins: int, two_d: bool) -> np.ndarray:
    """Zone counts ``[gray level - 1, zone size - 1]`` (8- or 26-connected)."""
    g, s = zone_sizes(levels, two_d)
    max_size = int(s.max()) if s.size else 1
    p = np.bincount((g - 1) * max_size + (s - 1), minlength=n_bins * max_size)
    return p.reshape(n_bins, max_size).astype(float)


def dependence_counts(levels: np.ndarray, two_d: bool, alpha: int = 0) -> np.ndarray:
    """Per-voxel count of neighbours within ``alpha`` gray levels, including the centre."""
    padded = np.pad(levels, 1)
    dep = np.ones(levels.shape, dtype=np.int64)
    for d in neighbour_offsets(two_d):
        nb = _neighbour(padded, d, levels.shape)
        dep += (nb > 0) & (np.abs(nb - levels) <= alpha)
    return dep


def gldm(levels: np.ndarray, n_bins: int, two_d: bool, alpha: int = 0) -> np.ndarray:
    """Dependence counts ``[gray level - 1, dependence size - 1]``."""
    n_dep = len(neighbour_offsets(two_d)) + 1
    inside = levels > 0
    dep = dependence_counts(levels, two_d, alpha)[inside]
    p = np.bincount((levels[inside] - 1) * n_dep + (dep - 1), minlength=n_bins * n_dep)
    p = p.reshape(n_bins, n_dep).astype(float)
    last = np.flatnonzero(p.sum(axis=0))
    return p[:, : last[-1] + 1]


def ngtdm(levels: np.ndarray, n_bins: int, two_d: bool) -> tuple[np.ndarray, np.ndarray]:
    """Neighbouring gray-tone difference: per-level voxel counts ``n`` and sums ``s``.

    Only voxels with at least one ROI neighbour contribute.
    """
    padded = np.pad(levels, 1)
    total = np.zeros(levels.shape, dtype=np.float64)
    count = np.zeros(levels.shape, dtype=np.int64)
    for d in neighbour_offsets(two_d):
        nb = _neighbour(padded, d, levels.shape)
        valid = nb > 0
        total += np.where(valid, nb, 0)
        count += valid
    use = (levels > 0) & (count > 0)
    g = levels[use]
    diff = np.abs(g - total[use] / count[use])
    n = np.bincount(g - 1, minlength=n_bins).astype(float)
    s = np.bincount(g - 1, weights=diff, minlength=n_bins)
    return n, s


@dataclass(frozen=True, eq=False)
class TextureMatrices:
    glcm: np.ndarray
    glrlm: np.ndarray
    glszm: np.ndarray
    gldm: np.ndarray
    ngtdm_n: np.ndarray
    ngtdm_s: np.ndarray
    n_voxels: int
    n_directions: int


def texture_matrices(levels: np.ndarray, n_bins: int, mode: str = "force2D", alpha: int = 0) -> TextureMatrices:
    two_d = mode == "force2D"
    n, s = ngtdm(levels, n_bins, two_d)
    return TextureMatrices(
        glcm=glcm(levels, n_bins, two_d),
        glrlm=glrlm(levels, n_bins, two_d),
        glszm=glszm(levels, n_bins, two_d),
        gldm=gldm(levels, n_bins, two_d, alpha),
        ngtdm_n=n,
        ngtdm_s=s,
        n_voxels=int(np.count_nonzero(levels)),
        n_directions=len(directions(two_d)),
    )
