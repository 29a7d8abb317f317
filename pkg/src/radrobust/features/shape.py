"""3D shape descriptors computed from the ROI mask alone.

Surface quantities use a marching-cubes mesh of the binary mask; axis
lengths use the principal components of the voxel-centre coordinates.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist
from skimage.measure import marching_cubes, mesh_surface_area


def _max_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > 64:
        try:
            points = points[ConvexHull(points).vertices]
        except (QhullError, ValueError):
            pass
    return float(pdist(points).max())


def _planar_max(verts: np.ndarray, axis: int) -> float:
    """Largest vertex distance among vertices sharing a coordinate along ``axis``."""
    keep = [a for a in range(3) if a != axis]
    best = 0.0
    coord = verts[:, axis]
    order = np.argsort(coord, kind="stable")
    values, starts = np.unique(coord[order], return_index=True)
    bounds = list(starts) + [len(order)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a >= 2:
            best = max(best, _max_distance(verts[order[a:b]][:, keep]))
    return best


def shape_features(mask: np.ndarray, spacing_zyx) -> tuple[dict[str, float], list[str]]:
    """Shape features of a boolean ``(nz, ny, nx)`` mask with voxel spacing in mm."""
    mask = np.asarray(mask, dtype=bool)
    flags = []
    spacing = np.asarray(spacing_zyx, dtype=float)
    n_vox = int(mask.sum())
    voxel_volume = float(np.prod(spacing))

    padded = np.pad(mask, 1).astype(np.float32)
    verts, faces, _, _ = marching_cubes(padded, level=0.5, spacing=tuple(spacing))
    tri = verts[faces]
    mesh_volume = abs(float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0))
    area = float(mesh_surface_area(verts, faces))

    coords = np.argwhere(mask) * spacing
    centred = coords - coords.mean(axis=0)
    eig = np.sort(np.clip(np.linalg.eigvalsh(centred.T @ centred / n_vox), 0.0, None))
    least, minor, major = eig
    if major > 0:
        elongation = math.sqrt(minor / major)
        flatness = math.sqrt(least / major)
    else:
        elongation = flatness = 1.0
        flags += ["Elongation", "Flatness"]

    # vertex axes are (z, y, x): slice = constant z, column = constant x, row = constant y
    out = {
        "Elongation": elongation,
        "Flatness": flatness,
        "LeastAxisLength": 4.0 * math.sqrt(least),
        "MajorAxisLength": 4.0 * math.sqrt(major),
        "Maximum2DDiameterColumn": _planar_max(verts, 2),
        "Maximum2DDiameterRow": _planar_max(verts, 1),
        "Maximum2DDiameterSlice": _planar_max(verts, 0),
        "Maximum3DDiameter": _max_distance(verts),
        "MeshVolume": mesh_volume,
        "MinorAxisLength": 4.0 * math.sqrt(minor),
        "Sphericity": (36.0 * math.pi * mesh_volume**2) ** (1.0 / 3.0) / area,
        "SurfaceArea": area,
        "SurfaceVolumeRatio": area / mesh_volume,
        "VoxelVolume": n_vox * voxel_volume,
    }
    return out, flags
