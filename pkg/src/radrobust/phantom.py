"""Digital pelvic phantom and a spin-echo T2-weighted image simulator.

The phantom is an ellipsoidal fluid compartment holding four cylindrical
agar inserts, each packed with non-overlapping polystyrene spheres by seeded
random sequential addition. Geometry lives in a phantom frame (mm); a
:class:`~radrobust.imageio.RigidTransform` pose places it in scanner space.

Default relaxation constants are simulator choices, not measured values.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, ValidationError
from .imageio import Grid, ImageVolume, RigidTransform, RoiMask, transform_mask

AIR, FLUID, AGAR, SPHERE = 0, 1, 2, 3
LABEL_NAMES = {AIR: "air", FLUID: "fluid", AGAR: "agar", SPHERE: "sphere"}

ROI_DIAMETERS_MM = (12.0, 24.0, 36.0, 48.0)
ROI_SLICES = 3
# slab pitch in slices between stacked ROI sizes inside one insert
_SLAB_PITCH = 4


@dataclass(frozen=True)
class Material:
    t1: float
    t2: float
    pd: float

    def __post_init__(self):
        if not (self.t1 > self.t2 > 0):
            raise ValidationError(f"material needs T1 > T2 > 0, got T1={self.t1}, T2={self.t2}")
        if self.pd < 0:
            raise ValidationError("proton density must be non-negative")


DEFAULT_MATERIALS = {
    "fluid": Material(t1=900.0, t2=80.0, pd=1.0),
    "agar": Material(t1=2500.0, t2=250.0, pd=1.0),
    "sphere": Material(t1=1000.0, t2=50.0, pd=0.05),
}


@dataclass(frozen=True)
class InsertSpec:
    """Agar cylinder (axis along phantom z) packed with spheres.

    ``sphere_diameters`` is a discrete distribution: ``((diameter_mm, weight), ...)``
    where weights are relative candidate-draw frequencies.
    """

    center: tuple[float, float, float]
    radius: float
    height: float
    sphere_diameters: tuple[tuple[float, float], ...]
    packing_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        dist = tuple((float(d), float(w)) for d, w in self.sphere_diameters)
        object.__setattr__(self, "sphere_diameters", dist)
        if self.radius <= 0 or self.height <= 0:
            raise ValidationError("insert radius and height must be positive")
        if not dist or any(not (1.0 <= d <= 8.0) or w <= 0 for d, w in dist):
            raise ValidationError("sphere diameters must lie in [1, 8] mm with positive weights")
        if max(d for d, _ in dist) >= min(2 * self.radius, self.height):
            raise ValidationError("spheres do not fit inside the insert")


def _default_inserts() -> tuple[InsertSpec, ...]:
    return (
        InsertSpec((-55.0, -45.0, 0.0), 27.0, 100.0, ((1.0, 1.0),), packing_seed=11),
        InsertSpec((55.0, -45.0, 0.0), 27.0, 100.0, ((3.0, 1.0),), packing_seed=12),
        InsertSpec((-55.0, 45.0, 0.0), 27.0, 100.0, ((4.0, 1.0),), packing_seed=13),
        InsertSpec((55.0, 45.0, 0.0), 27.0, 100.0, ((1.0, 0.5), (4.0, 0.3), (8.0, 0.2)), packing_seed=14),
    )


@dataclass(frozen=True)
class PhantomSpec:
    compartment: tuple[float, float, float] = (150.0, 115.0, 90.0)
    inserts: tuple[InsertSpec, ...] = field(default_factory=_default_inserts)
    materials: dict = field(default_factory=lambda: dict(DEFAULT_MATERIALS), hash=False, compare=False)
    fill_fraction: float = 0.40
    max_rejections: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "compartment", tuple(float(a) for a in self.compartment))
        object.__setattr__(self, "inserts", tuple(self.inserts))
        if any(a <= 0 for a in self.compartment):
            raise ValidationError("compartment semi-axes must be positive")
        if len(self.inserts) != 4:
            raise ValidationError(f"exactly 4 inserts are required, got {len(self.inserts)}")
        missing = {"fluid", "agar", "sphere"} - set(self.materials)
        if missing:
            raise ValidationError(f"materials missing: {sorted(missing)}")
        a = np.array(self.compartment)
        theta = np.linspace(0, 2 * np.pi, 73)
        for ins in self.inserts:
            cx, cy, cz = ins.center
            for z in (cz - ins.height / 2, cz + ins.height / 2):
                rim = np.stack(
                    [cx + ins.radius * np.cos(theta), cy + ins.radius * np.sin(theta), np.full_like(theta, z)],
                    axis=1,
                )
                if np.any(np.sum((rim / a) ** 2, axis=1) > 1.0):
                    raise ValidationError(f"insert at {ins.center} is not inside the compartment")

    def material_table(self) -> dict[int, Material]:
        return {FLUID: self.materials["fluid"], AGAR: self.materials["agar"], SPHERE: self.materials["sphere"]}

    def to_dict(self) -> dict:
        return {
            "compartment": list(self.compartment),
            "inserts": [
                {
                    "center": list(i.center),
                    "radius": i.radius,
                    "height": i.height,
                    "sphere_diameters": [list(p) for p in i.sphere_diameters],
                    "packing_seed": i.packing_seed,
                }
                for i in self.inserts
            ],
            "materials": {k: {"t1": m.t1, "t2": m.t2, "pd": m.pd} for k, m in sorted(self.materials.items())},
            "fill_fraction": self.fill_fraction,
            "max_rejections": self.max_rejections,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        unknown = set(d) - {"compartment", "inserts", "materials", "fill_fraction", "max_rejections"}
        if unknown:
            raise ValidationError(f"unknown phantom fields: {sorted(unknown)}")
        kwargs = {}
        if "compartment" in d:
            kwargs["compartment"] = tuple(d["compartment"])
        if "inserts" in d:
            kwargs["inserts"] = tuple(
                InsertSpec(
                    tuple(i["center"]),
                    i["radius"],
                    i["height"],
                    tuple(tuple(p) for p in i["sphere_diameters"]),
                    i.get("packing_seed", 0),
                )
                for i in d["inserts"]
            )
        if "materials" in d:
            mats = dict(DEFAULT_MATERIALS)
            mats.update({k: Material(**v) for k, v in d["materials"].items()})
            kwargs["materials"] = mats
        for key in ("fill_fraction", "max_rejections"):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class SequenceParams:
    """Acquisition parameters; ``mode`` is ``"2D"`` (multi-slice) or ``"3D"``."""

    te: float
    tr: float
    slice_thickness: float = 5.0
    slice_spacing: float = 6.0
    pixel_spacing: tuple[float, float] = (0.6, 0.6)
    fov: tuple[float, float] = (320.0, 320.0)
    mode: str = "2D"
    slice_count: int | None = None

    def __post_init__(self):
        if self.mode not in ("2D", "3D"):
            raise ValidationError(f"mode must be '2D' or '3D', got {self.mode!r}")
        if not (0 < self.te < self.tr):
            raise ValidationError(f"need 0 < TE < TR, got TE={self.te}, TR={self.tr}")
        if self.mode == "3D":
            object.__setattr__(self, "pixel_spacing", (1.0, 1.0))
            object.__setattr__(self, "slice_thickness", 1.0)
            object.__setattr__(self, "slice_spacing", 1.0)
        object.__setattr__(self, "pixel_spacing", tuple(float(p) for p in self.pixel_spacing))
        object.__setattr__(self, "fov", tuple(float(f) for f in self.fov))
        if min(self.pixel_spacing) <= 0 or self.slice_thickness <= 0 or self.slice_spacing <= 0:
            raise ValidationError("spacings must be positive")
        if self.slice_count is not None and self.slice_count < 1:
            raise ValidationError("slice_count must be positive")

    def to_dict(self) -> dict:
        return {
            "te": self.te,
            "tr": self.tr,
            "slice_thickness": self.slice_thickness,
            "slice_spacing": self.slice_spacing,
            "pixel_spacing": list(self.pixel_spacing),
            "fov": list(self.fov),
            "mode": self.mode,
            "slice_count": self.slice_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceParams":
        d = dict(d)
        for key in ("pixel_spacing", "fov"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ScannerProfile:
    name: str
    gain: float = 1000.0
    noise_sigma: float = 5.0
    bias_field_amplitude: float = 0.0

    def __post_init__(self):
        if self.gain <= 0:
            raise ValidationError("gain must be positive")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if not (0.0 <= self.bias_field_amplitude <= 0.5):
            raise ValidationError("bias_field_amplitude must lie in [0, 0.5]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gain": self.gain,
            "noise_sigma": self.noise_sigma,
            "bias_field_amplitude": self.bias_field_amplitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScannerProfile":
        return cls(**d)


def sequence_grid(seq: SequenceParams, spec: PhantomSpec | None = None) -> Grid:
    """Scanner grid centred on the isocentre for a sequence.

    Without an explicit ``slice_count`` the slices cover the full insert height.
    """
    spec = spec or PhantomSpec()
    px, py = seq.pixel_spacing
    nx = max(1, int(round(seq.fov[0] / px)))
    ny = max(1, int(round(seq.fov[1] / py)))
    sz = seq.slice_spacing
    if seq.slice_count is not None:
        nz = seq.slice_count
    else:
        zmin = min(i.center[2] - i.height / 2 for i in spec.inserts)
        zmax = max(i.center[2] + i.height / 2 for i in spec.inserts)
        nz = int(math.ceil((zmax - zmin) / sz)) + 1
    spacing = (px, py, sz)
    origin = tuple(-(n - 1) / 2 * s for n, s in zip((nx, ny, nz), spacing))
    return Grid((nx, ny, nz), spacing, origin)


# ---------------------------------------------------------------------------
# sphere packing


@dataclass(frozen=True, eq=False)
class SpherePacking:
    centers: np.ndarray  # (n, 3) in phantom frame
    diameters: np.ndarray  # (n,)
    fill_fraction: float
    rejections: int


@functools.lru_cache(maxsize=32)
def pack_spheres(insert: InsertSpec, fill_fraction: float = 0.40, max_rejections: int = 100_000) -> SpherePacking:
    """Random sequential addition of non-overlapping spheres inside ``insert``.

    Candidates are drawn from a generator seeded with ``insert.packing_seed``
    and processed strictly in draw order, so the result depends only on the
    inputs. Stops once the spheres fill ``fill_fraction`` of the insert or
    after ``max_rejections`` rejected candidates.
    """
    rng = np.random.default_rng(insert.packing_seed)
    diam_choices = np.array([d for d, _ in insert.sphere_diameters])
    weights = np.array([w for _, w in insert.sphere_diameters])
    weights = weights / weights.sum()
    dmax = float(diam_choices.max())
    cx, cy, cz = insert.center
    insert_volume = math.pi * insert.radius**2 * insert.height
    target = fill_fraction * insert_volume

    centers: list[np.ndarray] = []
    diams: list[np.ndarray] = []
    # one tree per diameter so the overlap test is a single nearest query
    trees: dict[float, cKDTree] = {}
    filled = 0.0
    rejections = 0
    batch = 4096
    done = False
    while not done:
        d = diam_choices[rng.choice(len(diam_choices), size=batch, p=weights)]
        rr = (insert.radius - d / 2) * np.sqrt(rng.random(batch))
        phi = 2 * np.pi * rng.random(batch)
        zz = (rng.random(batch) - 0.5) * (insert.height - d)
        cand = np.stack([cx + rr * np.cos(phi), cy + rr * np.sin(phi), cz + zz], axis=1)

        blocked = np.zeros(batch, dtype=bool)
        for dg, tree in trees.items():
            dist, _ = tree.query(cand, k=1, distance_upper_bound=(dmax + dg) / 2)
            blocked |= dist < (d + dg) / 2
        pairs = cKDTree(cand).query_pairs(r=dmax, output_type="ndarray")
        earlier: dict[int, list[int]] = {}
        if len(pairs):
            lo, hi = pairs.min(axis=1), pairs.max(axis=1)
            clash = np.linalg.norm(cand[lo] - cand[hi], axis=1) < (d[lo] + d[hi]) / 2
            for a, b in zip(lo[clash].tolist(), hi[clash].tolist()):
                earlier.setdefault(b, []).append(a)

        accepted = np.zeros(batch, dtype=bool)
        blocked_list = blocked.tolist()
        volumes = (math.pi / 6) * d**3
        for i in range(batch):
            if blocked_list[i] or any(accepted[j] for j in earlier.get(i, ())):
                rejections += 1
                if rejections >= max_rejections:
                    done = True
                    break
                continue
            accepted[i] = True
            filled += volumes[i]
            if filled >= target:
                done = True
                break
        if accepted.any():
            centers.append(cand[accepted])
            diams.append(d[accepted])
            all_c = np.concatenate(centers)
            all_d = np.concatenate(diams)
            trees = {float(dg): cKDTree(all_c[all_d == dg]) for dg in np.unique(all_d)}
    if centers:
        all_c = np.concatenate(centers)
        all_d = np.concatenate(diams)
    else:
        all_c = np.zeros((0, 3))
        all_d = np.zeros(0)
    all_c.setflags(write=False)
    all_d.setflags(write=False)
    return SpherePacking(all_c, all_d, filled / insert_volume, rejections)


# ---------------------------------------------------------------------------
# material map


@dataclass(frozen=True, eq=False)
class MaterialMap:
    """Material labels sampled on a grid.

    ``samples`` has shape ``(n_sub, nz, ny, nx)``: 2D multi-slice grids carry
    three sub-planes per slice for slice-thickness averaging, 3D grids one.
    """

    grid: Grid
    samples: np.ndarray
    pose: RigidTransform

    @property
    def labels(self) -> np.ndarray:
        """Labels at the slice-centre plane, shape ``grid.shape``."""
        return self.samples[self.samples.shape[0] // 2]


def _subsample_offsets(grid: Grid, slice_thickness: float | None) -> np.ndarray:
    if slice_thickness is None or slice_thickness <= 0:
        return np.zeros(1)
    return np.array([-1.0, 0.0, 1.0]) * slice_thickness / 3.0


def _classify_points(spec: PhantomSpec, pts: np.ndarray) -> np.ndarray:
    """Material label for points given in the phantom frame."""
    a = np.array(spec.compartment)
    labels = np.full(len(pts), AIR, dtype=np.int8)
    inside = np.sum((pts / a) ** 2, axis=1) <= 1.0
    labels[inside] = FLUID
    for ins in spec.inserts:
        cx, cy, cz = ins.center
        in_cyl = (
            ((pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 <= ins.radius**2)
            & (np.abs(pts[:, 2] - cz) <= ins.height / 2)
        )
        if not in_cyl.any():
            continue
        labels[in_cyl] = AGAR
        packing = pack_spheres(ins, spec.fill_fraction, spec.max_rejections)
        sub = pts[in_cyl]
        hit = np.zeros(len(sub), dtype=bool)
        for diameter in np.unique(packing.diameters):
            group = packing.centers[packing.diameters == diameter]
            dist, _ = cKDTree(group).query(sub, k=1, distance_upper_bound=diameter / 2)
            hit |= dist < diameter / 2
        idx = np.flatnonzero(in_cyl)
        labels[idx[hit]] = SPHERE
    return labels


def build_material_map(
    spec: PhantomSpec,
    grid: Grid,
    pose: RigidTransform | None = None,
    slice_thickness: float | None = None,
) -> MaterialMap:
    """Label every grid sample as air, fluid, agar matrix or sphere.

    With ``slice_thickness`` set, three planes spread across each slice are
    labelled (multi-slice acquisition); otherwise only voxel centres.

    Raises
    ------
    DegenerateGeometry
        If an insert centre falls outside the grid.
    """
    pose = pose or RigidTransform.identity()
    nz, ny, nx = grid.shape
    for ins in spec.inserts:
        idx = grid.physical_to_index(pose.apply(np.array(ins.center)))
        if np.any(idx < -0.5) or np.any(idx > np.array(grid.dims) - 0.5):
            raise DegenerateGeometry(f"insert centred at {ins.center} lies outside the grid")
    offsets = _subsample_offsets(grid, slice_thickness)
    zdir = grid.direction_matrix[:, 2]
    samples = np.empty((len(offsets), nz, ny, nx), dtype=np.int8)
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    for k in range(nz):
        ijk = np.stack([ii.ravel(), jj.ravel(), np.full(ii.size, k)], axis=1)
        centres = grid.index_to_physical(ijk)
        for s, off in enumerate(offsets):
            world = centres + off * zdir
            samples[s, k] = _classify_points(spec, pose.apply_inverse(world)).reshape(ny, nx)
    samples.setflags(write=False)
    return MaterialMap(grid, samples, pose)


# ---------------------------------------------------------------------------
# signal simulation


def spin_echo_signal(pd: float, t1: float, t2: float, te: float, tr: float, gain: float = 1.0) -> float:
    """Noiseless spin-echo magnitude ``gain * PD * (1 - exp(-TR/T1)) * exp(-TE/T2)``."""
    return gain * pd * (1.0 - math.exp(-tr / t1)) * math.exp(-te / t2)


def bias_field(grid: Grid, amplitude: float) -> np.ndarray:
    """Smooth multiplicative field ``1 + a * (0.5u + 0.3v + 0.2w)`` over the grid.

    ``u, v, w`` run from -1 to 1 across x, y, z, so the field stays within
    ``[1 - a, 1 + a]``.
    """
    if amplitude == 0:
        return np.ones(grid.shape)
    nz, ny, nx = grid.shape

    def ramp(n):
        return np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)

    w, v, u = np.meshgrid(ramp(nz), ramp(ny), ramp(nx), indexing="ij")
    return 1.0 + amplitude * (0.5 * u + 0.3 * v + 0.2 * w)


def simulate_t2w(
    materials: MaterialMap,
    spec: PhantomSpec,
    seq: SequenceParams,
    scanner: ScannerProfile,
    noise_seed: int,
) -> ImageVolume:
    """Simulate a magnitude T2-weighted image with Rician noise.

    Per-material signal follows :func:`spin_echo_signal`, is averaged over the
    sub-planes of each slice, multiplied by the scanner bias field and then
    corrupted as ``sqrt((S + g1*sigma)**2 + (g2*sigma)**2)``. The Gaussian
    pairs ``(g1, g2)`` are drawn in voxel-index order from
    ``default_rng(noise_seed)``.
    """
    lut = np.zeros(4)
    for label, mat in spec.material_table().items():
        lut[label] = spin_echo_signal(mat.pd, mat.t1, mat.t2, seq.te, seq.tr, scanner.gain)
    signal = lut[materials.samples].mean(axis=0)
    signal = signal * bias_field(materials.grid, scanner.bias_field_amplitude)
    sigma = scanner.noise_sigma
    if sigma > 0:
        g = np.random.default_rng(noise_seed).standard_normal((signal.size, 2))
        real = signal.reshape(-1) + g[:, 0] * sigma
        imag = g[:, 1] * sigma
        signal = np.sqrt(real * real + imag * imag).reshape(signal.shape)
    return ImageVolume(materials.grid, signal)


# ---------------------------------------------------------------------------
# ROIs


def _slab_offsets(grid: Grid) -> list[float]:
    pitch = _SLAB_PITCH * grid.spacing[2]
    n = len(ROI_DIAMETERS_MM)
    return [(s - (n - 1) / 2) * pitch for s in range(n)]


def generate_roi_masks(spec: PhantomSpec, grid: Grid, pose: RigidTransform | None = None) -> RoiMask:
    """Sixteen cylindrical ROIs: four diameters stacked inside each insert.

    ROI ``4*i + s + 1`` has diameter ``ROI_DIAMETERS_MM[s]`` inside insert
    ``i`` and covers exactly three consecutive slices of the identity-pose
    grid. A non-identity pose carries the identity-pose mask through
    :func:`~radrobust.imageio.transform_mask`.
    """
    pose = pose or RigidTransform.identity()
    nz, ny, nx = grid.shape
    labels = np.zeros(grid.shape, dtype=np.int32)
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    offsets = _slab_offsets(grid)
    for i, ins in enumerate(spec.inserts):
        for s, diameter in enumerate(ROI_DIAMETERS_MM):
            if diameter / 2 > ins.radius:
                raise DegenerateGeometry(f"{diameter} mm ROI does not fit insert {i}")
            centre = np.array(ins.center) + np.array([0.0, 0.0, offsets[s]])
            if abs(offsets[s]) + ROI_SLICES * grid.spacing[2] / 2 > ins.height / 2:
                raise DegenerateGeometry(f"ROI slab {s} extends beyond insert {i}")
            k0 = int(np.floor(grid.physical_to_index(centre)[2] + 0.5))
            if k0 - 1 < 0 or k0 + 1 >= nz:
                raise DegenerateGeometry(f"ROI {4 * i + s + 1} slices fall outside the grid")
            for k in range(k0 - 1, k0 + 2):
                ijk = np.stack([ii.ravel(), jj.ravel(), np.full(ii.size, k)], axis=1)
                p = grid.index_to_physical(ijk)
                inside = (p[:, 0] - centre[0]) ** 2 + (p[:, 1] - centre[1]) ** 2 <= (diameter / 2) ** 2
                sl = labels[k].reshape(-1)
                sl[inside] = 4 * i + s + 1
            if not np.any(labels == 4 * i + s + 1):
                raise DegenerateGeometry(f"ROI {4 * i + s + 1} contains no voxels")
    mask = RoiMask(grid, labels)
    if pose.is_identity:
        return mask
    return transform_mask(mask, pose, grid)


def qc_regions(spec: PhantomSpec, grid: Grid, radius: float = 10.0) -> dict[str, np.ndarray]:
    """Boolean masks for contrast and noise measurements on the central slice.

    ``insert`` is a disk in the first insert, ``compartment`` a disk at the
    compartment centre and ``air`` a square near the grid corner outside the
    phantom.
    """
    nz, ny, nx = grid.shape
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    k = nz // 2
    ijk = np.stack([ii.ravel(), jj.ravel(), np.full(ii.size, k)], axis=1)
    p = grid.index_to_physical(ijk)
    out = {}
    ins = spec.inserts[0]
    for name, (cx, cy) in (("insert", ins.center[:2]), ("compartment", (0.0, 0.0))):
        m = np.zeros(grid.shape, dtype=bool)
        m[k] = (((p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2) <= radius**2).reshape(ny, nx)
        out[name] = m
    corner = grid.index_to_physical(np.array([nx - 1, ny - 1, k]))
    m = np.zeros(grid.shape, dtype=bool)
    box = (np.abs(p[:, 0] - (corner[0] - 2 * radius)) <= radius) & (
        np.abs(p[:, 1] - (corner[1] - 2 * radius)) <= radius
    )
    m[k] = box.reshape(ny, nx)
    a = np.array(spec.compartment)
    if np.any(np.sum((p[box] / a) ** 2, axis=1) <= 1.0):
        raise DegenerateGeometry("air region overlaps the phantom; enlarge the field of view")
    out["air"] = m
    return out


def simulate_acquisition(
    spec: PhantomSpec,
    seq: SequenceParams,
    scanner: ScannerProfile,
    pose: RigidTransform | None,
    noise_seed: int,
) -> tuple[ImageVolume, MaterialMap]:
    grid = sequence_grid(seq, spec)
    thickness = seq.slice_thickness if seq.mode == "2D" else None
    materials = _cached_material_map(spec, grid, pose or RigidTransform.identity(), thickness)
    return simulate_t2w(materials, spec, seq, scanner, noise_seed), materials


_MAP_CACHE: dict = {}


def _pose_key(pose: RigidTransform) -> tuple:
    return tuple(np.round(pose.rotation, 15).ravel()) + tuple(pose.translation)


def _cached_material_map(spec, grid, pose, thickness) -> MaterialMap:
    # labels depend on geometry only, so materials are not part of the key
    key = (spec, grid, _pose_key(pose), thickness)
    hit = _MAP_CACHE.get(key)
    if hit is None:
        if len(_MAP_CACHE) >= 8:
            _MAP_CACHE.pop(next(iter(_MAP_CACHE)))
        hit = _MAP_CACHE[key] = build_material_map(spec, grid, pose, thickness)
    return hit
