"""Intensity normalization and image filters.

Filters operate on plain ``(nz, ny, nx)`` arrays so they can run on a crop of
the image; :func:`apply_filter` wraps them for whole :class:`ImageVolume`
objects.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ZeroVariance
from ..imageio import ImageVolume

log = logging.getLogger(__name__)

# filters whose gain depends on the global max |x| of the image
INTENSITY_FILTERS = ("Square", "SquareRoot", "Logarithm", "Exponential")


def normalize(volume: ImageVolume, scale: float = 100.0, shift: float = 300.0) -> ImageVolume:
    """Standardize the whole image to mean ``shift`` and population std ``scale``.

    Raises
    ------
    ZeroVariance
        If the image is constant.
    """
    x = volume.data
    mu = x.mean()
    sigma = x.std()
    if not sigma > 0:
        raise ZeroVariance("cannot normalize a constant image")
    return volume.with_data(shift + scale * (x - mu) / sigma)


def log_margin(spacing_zyx, sigma_mm: float) -> tuple[int, int, int]:
    """Voxels of context needed so a cropped LoG matches the full-image LoG."""
    return tuple(int(sigma_mm / s * 4.0 + 0.5) + 1 for s in spacing_zyx)


def laplacian_of_gaussian(x: np.ndarray, spacing_zyx, sigma_mm: float) -> np.ndarray:
    """Gaussian blur (sigma in mm, truncated at 4 sigma) then the discrete Laplacian in mm^-2."""
    sig = [sigma_mm / s for s in spacing_zyx]
    g = ndimage.gaussian_filter(np.asarray(x, dtype=float), sigma=sig, truncate=4.0, mode="nearest")
    out = np.zeros_like(g)
    for axis, h in enumerate(spacing_zyx):
        if g.shape[axis] == 1:
            continue
        padded = np.pad(g, [(1, 1) if a == axis else (0, 0) for a in range(3)], mode="edge")
        lo = np.take(padded, range(0, g.shape[axis]), axis=axis)
        hi = np.take(padded, range(2, g.shape[axis] + 2), axis=axis)
        out += (lo - 2.0 * g + hi) / (h * h)
    return out


def _haar_split(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    nxt = np.take(x, list(range(1, x.shape[axis])) + [x.shape[axis] - 1], axis=axis)
    return (x + nxt) / math.sqrt(2.0), (x - nxt) / math.sqrt(2.0)


def haar_swt(x: np.ndarray, n_axes: int) -> dict[str, np.ndarray]:
    """One-level undecimated Haar transform.

    ``n_axes=2`` splits along x and y (4 subbands), ``n_axes=3`` also along z
    (8 subbands). Subband letters are ordered x, y, z.
    """
    axes = [2, 1, 0][:n_axes]  # array axes for x, y, z
    bands = {"": np.asarray(x, dtype=float)}
    for axis in axes:
        nxt = {}
        for name, arr in bands.items():
            lo, hi = _haar_split(arr, axis)
            nxt[name + "L"] = lo
            nxt[name + "H"] = hi
        bands = nxt
    order = ["".join(p) for p in itertools.product("LH", repeat=n_axes)]
    return {k: bands[k] for k in order}


@dataclass(frozen=True)
class IntensityGain:
    """Scale constant of a range-preserving intensity filter."""

    max_abs: float

    def square(self, x):
        c = 1.0 / math.sqrt(self.max_abs)
        return (c * x) ** 2

    def squareroot(self, x):
        c = self.max_abs
        return np.sign(x) * np.sqrt(c * np.abs(x))

    def logarithm(self, x):
        c = self.max_abs / math.log(self.max_abs + 1.0)
        return np.sign(x) * c * np.log(np.abs(x) + 1.0)

    def exponential(self, x):
        c = math.log(self.max_abs) / self.max_abs
        return np.exp(c * x)


def intensity_filter(x: np.ndarray, name: str, max_abs: float) -> tuple[np.ndarray, bool]:
    """Apply Square/SquareRoot/Logarithm/Exponential with the gain set by ``max_abs``.

    Returns the filtered array and a flag that is True when ``max_abs`` is 0,
    in which case the zero image is returned.
    """
    if max_abs == 0:
        log.warning("%s filter undefined for an all-zero image; returning zeros", name)
        return np.zeros_like(x, dtype=float), True
    gain = IntensityGain(float(max_abs))
    return getattr(gain, name.lower())(np.asarray(x, dtype=float)), False


@dataclass(frozen=True)
class FilterResult:
    image_type: str
    volume: ImageVolume
    all_zero: bool = False


def apply_filter(volume: ImageVolume, name: str, *, sigma_mm: float = 6.0, mode: str = "force2D") -> list[FilterResult]:
    """Filter a (normalized) volume.

    ``name`` is one of LoG, Wavelet, Square, SquareRoot, Logarithm,
    Exponential. Wavelet returns 4 subbands in ``force2D`` mode and 8 in
    ``full3D``; every other filter returns one image.
    """
    x = volume.data
    spacing_zyx = volume.spacing[::-1]
    if name == "LoG":
        out = laplacian_of_gaussian(x, spacing_zyx, sigma_mm)
        return [FilterResult(f"log.sigma.{sigma_mm:g}.mm.3D", volume.with_data(out))]
    if name == "Wavelet":
        bands = haar_swt(x, 2 if mode == "force2D" else 3)
        return [FilterResult(f"wavelet.{k}", volume.with_data(v)) for k, v in bands.items()]
    if name in INTENSITY_FILTERS:
        out, flag = intensity_filter(x, name, float(np.max(np.abs(x))))
        return [FilterResult(name.lower(), volume.with_data(out), flag)]
    raise ValueError(f"unknown filter {name!r}")
