"""Volumetric grid model and a dependency-free NIfTI-1 reader/writer.

Arrays are held in numpy C order with shape ``(nz, ny, nx)`` so that the flat
view is x-fastest, the same order NIfTI stores voxels on disk.

Only uncompressed single-file ``.nii`` images are supported. The writer always
emits little-endian float64 (or an integer type for masks) and appends a
private header extension carrying the float64 geometry, so that spacing,
origin and direction survive a round trip bit-exactly even though the
standard header fields are float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import CorruptHeader, IoError, RoiLost, UnsupportedFormat, ValidationError

PathLike = Union[str, Path]

HEADER_SIZE = 348
_GEOMETRY_TAG = b"RADRGEO1"
# extension payload: tag + 15 float64 (spacing, origin, direction row-major)
# esize/ecode ints + tag + doubles, zero-padded to a multiple of 16
_GEOMETRY_ESIZE = 144
# header, 4-byte extension flag, one geometry extension
_VOX_OFFSET = HEADER_SIZE + 4 + _GEOMETRY_ESIZE

# NIfTI datatype code -> numpy dtype (without byte order)
_DATATYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_DATATYPE_CODES = {v: k for k, v in _DATATYPES.items()}


@dataclass(frozen=True)
class Grid:
    """Geometry of a voxel grid.

    ``dims`` and ``spacing`` are given in (x, y, z) order. ``direction`` is a
    3x3 matrix whose columns are the physical directions of the x, y and z
    index axes.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        direction = tuple(tuple(float(v) for v in row) for row in np.asarray(self.direction, dtype=float))
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValidationError(f"grid dims must be three positive integers, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValidationError(f"grid spacing must be three positive values, got {self.spacing}")
        if len(origin) != 3 or not all(np.isfinite(origin)):
            raise ValidationError(f"grid origin must be three finite values, got {self.origin}")
        d = np.array(direction)
        if d.shape != (3, 3) or not np.all(np.isfinite(d)):
            raise ValidationError("direction must be a finite 3x3 matrix")
        if np.max(np.abs(d.T @ d - np.eye(3))) > 1e-6:
            raise ValidationError("direction matrix is not orthonormal within 1e-6")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape ``(nz, ny, nx)``."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def direction_matrix(self) -> np.ndarray:
        return np.array(self.direction, dtype=float)

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def affine(self) -> np.ndarray:
        """4x4 index (i, j, k) -> physical (x, y, z) matrix."""
        a = np.eye(4)
        a[:3, :3] = self.direction_matrix * np.array(self.spacing)[None, :]
        a[:3, 3] = self.origin
        return a

    def index_to_physical(self, ijk: np.ndarray) -> np.ndarray:
        """Map ``(..., 3)`` continuous indices in (i, j, k) order to mm."""
        ijk = np.asarray(ijk, dtype=float)
        scaled = ijk * np.array(self.spacing)
        return scaled @ self.direction_matrix.T + np.array(self.origin)

    def physical_to_index(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float)
        local = (xyz - np.array(self.origin)) @ self.direction_matrix
        return local / np.array(self.spacing)

    def axis_coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index-space coordinates along x, y, z scaled by spacing (no rotation)."""
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        return np.arange(nx) * sx, np.arange(ny) * sy, np.arange(nz) * sz

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "direction": [list(r) for r in self.direction],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(
            dims=tuple(d["dims"]),
            spacing=tuple(d["spacing"]),
            origin=tuple(d.get("origin", (0.0, 0.0, 0.0))),
            direction=tuple(tuple(r) for r in d.get("direction", np.eye(3).tolist())),
        )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ImageVolume:
    """Scalar image on a :class:`Grid`; ``data`` has shape ``grid.shape``."""

    grid: Grid
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.size != self.grid.size:
            raise ValidationError(
                f"voxel count {data.size} does not match grid size {self.grid.size}"
            )
        data = data.reshape(self.grid.shape)
        if not np.all(np.isfinite(data)):
            raise ValidationError("image intensities must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def dims(self):
        return self.grid.dims

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def origin(self):
        return self.grid.origin

    @property
    def direction(self) -> np.ndarray:
        return self.grid.direction_matrix

    @property
    def voxels(self) -> np.ndarray:
        """Flat x-fastest view of the intensities."""
        return self.data.reshape(-1)

    def with_data(self, data: np.ndarray) -> "ImageVolume":
        return ImageVolume(self.grid, data)


@dataclass(frozen=True, eq=False)
class RoiMask:
    """Integer label volume: 0 is background, ``1..m`` are ROI ids."""

    grid: Grid
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.size != self.grid.size:
            raise ValidationError(
                f"label count {raw.size} does not match grid size {self.grid.size}"
            )
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValidationError("mask labels must be integral")
        labels = raw.astype(np.int32).reshape(self.grid.shape)
        if labels.min(initial=0) < 0:
            raise ValidationError("mask labels must be non-negative")
        present = np.unique(labels[labels > 0])
        if present.size and not np.array_equal(present, np.arange(1, present.size + 1)):
            raise ValidationError(f"ROI ids must be contiguous 1..m, got {present.tolist()}")
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def roi_ids(self) -> list[int]:
        return list(range(1, int(self.labels.max(initial=0)) + 1))

    def roi(self, roi_id: int) -> np.ndarray:
        """Boolean array of the voxels belonging to ``roi_id``."""
        return self.labels == roi_id


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rigid motion ``p -> R @ p + t`` in physical (mm) coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValidationError("rotation must be orthonormal with determinant 1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_euler(
        cls,
        angles_deg: Sequence[float] = (0.0, 0.0, 0.0),
        translation: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> "RigidTransform":
        """Build from rotations about x, y, z (applied in that order), in degrees."""
        ax, ay, az = np.deg2rad(np.asarray(angles_deg, dtype=float))
        rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
        ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
        rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
        return cls(rz @ ry @ rx, tuple(translation))

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not any(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + np.array(self.translation)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.array(self.translation)) @ self.rotation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, tuple(-(rt @ np.array(self.translation))))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self`` after ``other``."""
        r = self.rotation @ other.rotation
        t = self.rotation @ np.array(other.translation) + np.array(self.translation)
        return RigidTransform(r, tuple(t))

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        if "angles_deg" in d:
            return cls.from_euler(d["angles_deg"], d.get("translation", (0.0, 0.0, 0.0)))
        return cls(np.array(d.get("rotation", np.eye(3))), tuple(d.get("translation", (0, 0, 0))))


# ---------------------------------------------------------------------------
# NIfTI-1 header helpers


def _quaternion_from_rotation(r: np.ndarray) -> tuple[float, float, float, float]:
    """Return ``(b, c, d, qfac)`` for a proper or improper orthonormal matrix."""
    r = r.copy()
    qfac = 1.0
    if np.linalg.det(r) < 0:
        r[:, 2] = -r[:, 2]
        qfac = -1.0
    a = 1.0 + r[0, 0] + r[1, 1] + r[2, 2]
    if a > 0.5:
        a = 0.5 * np.sqrt(a)
        b = 0.25 * (r[2, 1] - r[1, 2]) / a
        c = 0.25 * (r[0, 2] - r[2, 0]) / a
        d = 0.25 * (r[1, 0] - r[0, 1]) / a
    else:
        xd = 1.0 + r[0, 0] - (r[1, 1] + r[2, 2])
        yd = 1.0 + r[1, 1] - (r[0, 0] + r[2, 2])
        zd = 1.0 + r[2, 2] - (r[0, 0] + r[1, 1])
        if xd > 1.0:
            b = 0.5 * np.sqrt(xd)
            c = 0.25 * (r[0, 1] + r[1, 0]) / b
            d = 0.25 * (r[0, 2] + r[2, 0]) / b
            a = 0.25 * (r[2, 1] - r[1, 2]) / b
        elif yd > 1.0:
            c = 0.5 * np.sqrt(yd)
            b = 0.25 * (r[0, 1] + r[1, 0]) / c
            d = 0.25 * (r[1, 2] + r[2, 1]) / c
            a = 0.25 * (r[0, 2] - r[2, 0]) / c
        else:
            d = 0.5 * np.sqrt(zd)
            b = 0.25 * (r[0, 2] + r[2, 0]) / d
            c = 0.25 * (r[1, 2] + r[2, 1]) / d
            a = 0.25 * (r[1, 0] - r[0, 1]) / d
        if a < 0:
            b, c, d = -b, -c, -d
    return float(b), float(c), float(d), qfac


def _rotation_from_quaternion(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a2 = 1.0 - (b * b + c * c + d * d)
    if a2 < 1e-7:
        a = 0.0
        norm = 1.0 / np.sqrt(b * b + c * c + d * d)
        b, c, d = b * norm, c * norm, d * norm
    else:
        a = np.sqrt(a2)
    r = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ]
    )
    if qfac < 0:
        r[:, 2] = -r[:, 2]
    return r


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def _build_header(grid: Grid, datatype: int, bitpix: int) -> bytearray:
    hdr = bytearray(HEADER_SIZE)
    nx, ny, nz = grid.dims
    sx, sy, sz = grid.spacing
    direction = grid.direction_matrix
    b, c, d, qfac = _quaternion_from_rotation(direction)
    affine = grid.affine()
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[38] = ord("r")
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hhh", hdr, 70, datatype, bitpix, 0)
    struct.pack_into("<8f", hdr, 76, qfac, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", hdr, 108, float(_VOX_OFFSET), 1.0, 0.0)
    hdr[123] = 2  # xyzt_units: mm
    desc = b"radrobust"
    hdr[148 : 148 + len(desc)] = desc
    struct.pack_into("<hh", hdr, 252, 1, 1)
    struct.pack_into("<3f", hdr, 256, b, c, d)
    struct.pack_into("<3f", hdr, 268, *grid.origin)
    struct.pack_into("<12f", hdr, 280, *affine[0], *affine[1], *affine[2])
    hdr[344:348] = b"n+1\x00"
    return hdr


def _geometry_extension(grid: Grid) -> bytes:
    payload = _GEOMETRY_TAG + struct.pack(
        "<15d", *grid.spacing, *grid.origin, *grid.direction_matrix.reshape(-1)
    )
    payload = payload.ljust(_GEOMETRY_ESIZE - 8, b"\x00")
    return struct.pack("<4B", 1, 0, 0, 0) + struct.pack("<ii", _GEOMETRY_ESIZE, 0) + payload


def _write(grid: Grid, array: np.ndarray, dtype: np.dtype, path: PathLike) -> None:
    code = _DATATYPE_CODES[np.dtype(dtype)]
    hdr = _build_header(grid, code, np.dtype(dtype).itemsize * 8)
    body = np.ascontiguousarray(array, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(hdr))
            fh.write(_geometry_extension(grid))
            fh.write(body)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_nifti(volume: ImageVolume, path: PathLike) -> None:
    """Write ``volume`` as an uncompressed little-endian float64 NIfTI-1 file."""
    _write(volume.grid, volume.data, np.float64, path)


def write_mask(mask: RoiMask, path: PathLike) -> None:
    """Write a label volume using the smallest supported integer datatype."""
    dtype = np.uint8 if mask.labels.max(initial=0) <= 255 else np.int16
    _write(mask.grid, mask.labels, dtype, path)


def _read_bytes(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _parse(raw: bytes) -> tuple[Grid, np.ndarray, float, float]:
    if raw[:2] == b"\x1f\x8b":
        raise UnsupportedFormat("gzip-compressed NIfTI is not supported; decompress to .nii first")
    if len(raw) < HEADER_SIZE:
        raise UnsupportedFormat("file is shorter than a NIfTI-1 header")
    if struct.unpack_from("<i", raw, 0)[0] == HEADER_SIZE:
        e = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
        e = ">"
    else:
        raise UnsupportedFormat("sizeof_hdr is not 348 in either byte order")
    if raw[344:348] != b"n+1\x00":
        raise UnsupportedFormat(f"bad magic {raw[344:348]!r}; only single-file n+1 is supported")

    dim = struct.unpack_from(e + "8h", raw, 40)
    if dim[0] not in (3, 4):
        raise CorruptHeader(f"dim[0] must be 3 or 4, got {dim[0]}")
    nx, ny, nz = dim[1:4]
    if min(nx, ny, nz) < 1:
        raise CorruptHeader(f"non-positive dimensions {dim[1:4]}")
    if dim[0] == 4 and dim[4] > 1:
        raise UnsupportedFormat("multi-volume (4D) images are not supported")
    datatype = struct.unpack_from(e + "h", raw, 70)[0]
    if datatype not in _DATATYPES:
        raise UnsupportedFormat(f"unsupported datatype code {datatype}")
    pixdim = struct.unpack_from(e + "8f", raw, 76)
    vox_offset, slope, inter = struct.unpack_from(e + "3f", raw, 108)
    qform_code, sform_code = struct.unpack_from(e + "hh", raw, 252)

    spacing = tuple(abs(float(p)) for p in pixdim[1:4])
    if not all(s > 0 for s in spacing):
        raise CorruptHeader(f"non-positive voxel spacing {spacing}")
    if sform_code > 0:
        srow = np.array(struct.unpack_from(e + "12f", raw, 280), dtype=float).reshape(3, 4)
        origin = tuple(srow[:, 3])
        direction = _orthonormalize(srow[:, :3] / np.array(spacing)[None, :])
    elif qform_code > 0:
        b, c, d = struct.unpack_from(e + "3f", raw, 256)
        origin = tuple(float(v) for v in struct.unpack_from(e + "3f", raw, 268))
        direction = _rotation_from_quaternion(b, c, d, -1.0 if pixdim[0] < 0 else 1.0)
    else:
        origin = (0.0, 0.0, 0.0)
        direction = np.eye(3)

    offset = int(vox_offset)
    if offset < HEADER_SIZE:
        raise CorruptHeader(f"vox_offset {vox_offset} lies inside the header")
    # private float64 geometry takes precedence over the float32 fields
    pos = HEADER_SIZE + 4
    if len(raw) >= pos and raw[HEADER_SIZE] != 0:
        while pos + 8 <= offset:
            esize, ecode = struct.unpack_from(e + "ii", raw, pos)
            if esize < 8 or pos + esize > offset:
                break
            if esize == _GEOMETRY_ESIZE and raw[pos + 8 : pos + 16] == _GEOMETRY_TAG:
                vals = struct.unpack_from(e + "15d", raw, pos + 16)
                spacing = tuple(vals[0:3])
                origin = tuple(vals[3:6])
                direction = np.array(vals[6:15]).reshape(3, 3)
                break
            pos += esize

    dtype = _DATATYPES[datatype].newbyteorder(e)
    count = nx * ny * nz
    if len(raw) < offset + count * dtype.itemsize:
        raise CorruptHeader("file is truncated: fewer voxels than the header declares")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    grid = Grid((nx, ny, nz), spacing, origin, direction)
    return grid, data.reshape(grid.shape), float(slope), float(inter)


def read_nifti(path: PathLike) -> ImageVolume:
    """Read an uncompressed NIfTI-1 file into an :class:`ImageVolume`.

    Raw values are mapped through ``scl_slope``/``scl_inter`` when the slope is
    nonzero.
    """
    grid, data, slope, inter = _parse(_read_bytes(path))
    values = data.astype(np.float64)
    if slope != 0.0 and np.isfinite(slope) and not (slope == 1.0 and inter == 0.0):
        values = values * slope + inter
    return ImageVolume(grid, values)


def read_mask(path: PathLike) -> RoiMask:
    grid, data, slope, inter = _parse(_read_bytes(path))
    values = data.astype(np.float64)
    if slope != 0.0 and np.isfinite(slope) and not (slope == 1.0 and inter == 0.0):
        values = values * slope + inter
    return RoiMask(grid, values)


def transform_mask(mask: RoiMask, t: RigidTransform, target_grid: Grid) -> RoiMask:
    """Carry ROI labels through the rigid motion ``t`` onto ``target_grid``.

    Every target voxel center is pulled back through ``t`` into the source
    physical space and takes the label of the nearest source voxel (0 when it
    falls outside the source grid).

    Raises
    ------
    RoiLost
        If an ROI id present in ``mask`` has no voxels after the transform.
    """
    nz, ny, nx = target_grid.shape
    source_shape = np.array(mask.grid.shape)
    out = np.zeros(target_grid.shape, dtype=np.int32)
    k_idx, j_idx, i_idx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    # process slab by slab to bound memory on large grids
    for k in range(nz):
        ijk = np.stack([i_idx[k], j_idx[k], k_idx[k]], axis=-1).reshape(-1, 3)
        world = target_grid.index_to_physical(ijk)
        src = mask.grid.physical_to_index(t.apply_inverse(world))
        src = np.floor(src + 0.5).astype(np.int64)
        zyx = src[:, ::-1]
        inside = np.all((zyx >= 0) & (zyx < source_shape), axis=1)
        labels = np.zeros(len(zyx), dtype=np.int32)
        sel = zyx[inside]
        labels[inside] = mask.labels[sel[:, 0], sel[:, 1], sel[:, 2]]
        out[k] = labels.reshape(ny, nx)
    expected = mask.roi_ids
    counts = np.bincount(out.reshape(-1), minlength=len(expected) + 1)
    lost = [r for r in expected if counts[r] == 0]
    if lost:
        raise RoiLost(f"ROI ids {lost} fall outside the target grid")
    return RoiMask(target_grid, out)
