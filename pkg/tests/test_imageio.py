import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radrobust.errors import CorruptHeader, RoiLost, UnsupportedFormat, ValidationError
from radrobust.imageio import (
    Grid,
    ImageVolume,
    RigidTransform,
    RoiMask,
    read_mask,
    read_nifti,
    transform_mask,
    write_mask,
    write_nifti,
)


def _grid(dims=(3, 3, 3), spacing=(0.6, 0.6, 5.0), origin=(0.0, 0.0, 0.0), direction=None):
    return Grid(dims, spacing, origin, direction if direction is not None else np.eye(3))


def _bitwise_equal(a, b):
    return np.array_equal(np.asarray(a).view(np.uint64), np.asarray(b).view(np.uint64))


def test_grid_rejects_non_orthonormal_direction():
    with pytest.raises(ValidationError):
        _grid(direction=np.diag([1.0, 1.0, 1.1]))


def test_grid_rejects_non_positive_spacing():
    with pytest.raises(ValidationError):
        _grid(spacing=(0.6, 0.0, 5.0))


def test_volume_rejects_non_finite_values():
    with pytest.raises(ValidationError):
        ImageVolume(_grid((1, 1, 2)), [0.0, np.inf])


def test_voxels_are_x_fastest():
    v = ImageVolume(_grid((2, 3, 1)), np.arange(6.0))
    assert v.data[0, 1, 0] == 2.0  # (x=0, y=1) is the third stored value
    assert v.data[0, 0, 1] == 1.0


def test_mask_requires_contiguous_ids():
    with pytest.raises(ValidationError):
        RoiMask(_grid((3, 1, 1)), [0, 1, 3])


def test_round_trip_2x2x2(tmp_path):
    v = ImageVolume(_grid((2, 2, 2)), np.arange(8.0) - 3.5)
    write_nifti(v, tmp_path / "a.nii")
    back = read_nifti(tmp_path / "a.nii")
    assert np.array_equal(back.data, v.data)
    assert back.dims == (2, 2, 2)


def test_spacing_example(tmp_path):
    v = ImageVolume(_grid(), np.zeros(27))
    write_nifti(v, tmp_path / "a.nii")
    back = read_nifti(tmp_path / "a.nii")
    assert back.dims == (3, 3, 3)
    assert back.spacing == (0.6, 0.6, 5.0)


def test_single_voxel_file_size(tmp_path):
    write_nifti(ImageVolume(_grid((1, 1, 1)), [0.0]), tmp_path / "a.nii")
    raw = (tmp_path / "a.nii").read_bytes()
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    assert vox_offset % 16 == 0
    assert len(raw) == vox_offset + 8
    assert read_nifti(tmp_path / "a.nii").data.ravel().tolist() == [0.0]


def test_rotated_direction_round_trip(tmp_path):
    r = RigidTransform.from_euler((10.0, -20.0, 33.0)).rotation
    v = ImageVolume(_grid(direction=r, origin=(-12.5, 3.25, 7.0)), np.random.default_rng(0).normal(size=27))
    write_nifti(v, tmp_path / "a.nii")
    back = read_nifti(tmp_path / "a.nii")
    assert np.allclose(back.direction, r, atol=1e-9)
    assert back.origin == v.origin


def _write_raw(path, data, datatype, bitpix, slope=1.0, inter=0.0, endian="<", dim0=3, gz=False):
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, 348)
    dims = (dim0, *data.shape[::-1], 1, 1, 1, 1)[:8]
    struct.pack_into(endian + "8h", hdr, 40, *dims)
    struct.pack_into(endian + "hh", hdr, 70, datatype, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into(endian + "3f", hdr, 108, 352.0, slope, inter)
    hdr[344:348] = b"n+1\x00"
    body = bytes(hdr) + b"\x00" * 4 + data.astype(data.dtype.newbyteorder(endian)).tobytes()
    path.write_bytes(gzip.compress(body) if gz else body)


def test_int16_scale_and_intercept(tmp_path):
    _write_raw(tmp_path / "a.nii", np.full((1, 1, 1), 5, dtype=np.int16), 4, 16, slope=2.0, inter=1.0)
    assert read_nifti(tmp_path / "a.nii").data.ravel().tolist() == [11.0]


def test_zero_slope_means_no_scaling(tmp_path):
    _write_raw(tmp_path / "a.nii", np.full((1, 1, 1), 5, dtype=np.int16), 4, 16, slope=0.0, inter=9.0)
    assert read_nifti(tmp_path / "a.nii").data.ravel().tolist() == [5.0]


def test_big_endian_matches_little_endian(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    _write_raw(tmp_path / "le.nii", data, 16, 32, endian="<")
    _write_raw(tmp_path / "be.nii", data, 16, 32, endian=">")
    a, b = read_nifti(tmp_path / "le.nii"), read_nifti(tmp_path / "be.nii")
    assert a.grid == b.grid
    assert np.array_equal(a.data, b.data)
    assert a.spacing == (1.0, 2.0, 3.0)


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"gz": True}, UnsupportedFormat),
        ({"datatype": 8, "bitpix": 32}, UnsupportedFormat),
        ({"dim0": 2}, CorruptHeader),
        ({"dim0": 5}, CorruptHeader),
    ],
)
def test_rejected_files(tmp_path, kwargs, error):
    args = {"datatype": 16, "bitpix": 32}
    args.update(kwargs)
    data = np.zeros((2, 2, 2), dtype=np.int32 if args["datatype"] == 8 else np.float32)
    _write_raw(tmp_path / "a.nii", data, **args)
    with pytest.raises(error):
        read_nifti(tmp_path / "a.nii")


def test_bad_magic(tmp_path):
    write_nifti(ImageVolume(_grid((1, 1, 1)), [1.0]), tmp_path / "a.nii")
    raw = bytearray((tmp_path / "a.nii").read_bytes())
    raw[344:348] = b"ni1\x00"
    (tmp_path / "a.nii").write_bytes(bytes(raw))
    with pytest.raises(UnsupportedFormat):
        read_nifti(tmp_path / "a.nii")


def test_truncated_file(tmp_path):
    write_nifti(ImageVolume(_grid((4, 4, 4)), np.ones(64)), tmp_path / "a.nii")
    raw = (tmp_path / "a.nii").read_bytes()
    (tmp_path / "a.nii").write_bytes(raw[:-8])
    with pytest.raises(CorruptHeader):
        read_nifti(tmp_path / "a.nii")


def test_mask_round_trip(tmp_path):
    labels = np.zeros((2, 3, 4), dtype=int)
    labels[0, 1, 1:3] = 1
    labels[1, 2, 0] = 2
    m = RoiMask(_grid((4, 3, 2)), labels)
    write_mask(m, tmp_path / "m.nii")
    back = read_mask(tmp_path / "m.nii")
    assert np.array_equal(back.labels, m.labels)
    assert back.roi_ids == [1, 2]


_finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    dims=st.tuples(*(st.integers(1, 6),) * 3),
    spacing=st.tuples(*(st.floats(0.01, 50.0),) * 3),
    origin=st.tuples(*(st.floats(-500, 500),) * 3),
    angles=st.tuples(*(st.floats(-180, 180),) * 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(tmp_path_factory, dims, spacing, origin, angles, seed):
    grid = Grid(dims, spacing, origin, RigidTransform.from_euler(angles).rotation)
    rng = np.random.default_rng(seed)
    v = ImageVolume(grid, rng.normal(scale=1e3, size=grid.size))
    path = tmp_path_factory.mktemp("rt") / "v.nii"
    write_nifti(v, path)
    back = read_nifti(path)
    assert back.grid == v.grid
    assert _bitwise_equal(back.data, v.data)


def test_round_trip_keeps_negative_zero(tmp_path):
    v = ImageVolume(_grid((2, 1, 1)), [-0.0, 0.0])
    write_nifti(v, tmp_path / "a.nii")
    assert _bitwise_equal(read_nifti(tmp_path / "a.nii").data, v.data)


def _cylinder_mask(grid, radius, z_slices):
    nz, ny, nx = grid.shape
    labels = np.zeros(grid.shape, dtype=int)
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    for k in z_slices:
        ijk = np.stack([ii.ravel(), jj.ravel(), np.full(ii.size, k)], axis=1)
        p = grid.index_to_physical(ijk)
        labels[k].reshape(-1)[(p[:, 0] ** 2 + p[:, 1] ** 2) <= radius**2] = 1
    return RoiMask(grid, labels)


def test_transform_identity_is_identity():
    grid = Grid((40, 40, 3), (1.0, 1.0, 2.0), (-19.5, -19.5, -2.0), np.eye(3))
    m = _cylinder_mask(grid, 12.0, [1])
    out = transform_mask(m, RigidTransform.identity(), grid)
    assert np.array_equal(out.labels, m.labels)


def test_transform_translation_shifts_labels():
    grid = Grid((6, 3, 1), (0.5, 1.0, 1.0), (0.0, 0.0, 0.0), np.eye(3))
    labels = np.zeros((1, 3, 6), dtype=int)
    labels[0, 1, 1:3] = 1
    out = transform_mask(RoiMask(grid, labels), RigidTransform(np.eye(3), (0.5, 0.0, 0.0)), grid)
    assert np.array_equal(out.labels[0, 1], [0, 0, 1, 1, 0, 0])


def test_transform_raises_when_roi_leaves_grid():
    grid = Grid((6, 3, 1), (0.5, 1.0, 1.0), (0.0, 0.0, 0.0), np.eye(3))
    labels = np.zeros((1, 3, 6), dtype=int)
    labels[0, :, 5] = 1
    with pytest.raises(RoiLost):
        transform_mask(RoiMask(grid, labels), RigidTransform(np.eye(3), (0.5, 0.0, 0.0)), grid)


def test_rotated_cylinder_volume_preserved():
    grid = Grid((80, 80, 3), (0.6, 0.6, 5.0), (-23.7, -23.7, -5.0), np.eye(3))
    m = _cylinder_mask(grid, 12.0, [1])
    out = transform_mask(m, RigidTransform.from_euler((0, 0, 10)), grid)
    analytic = np.pi * 12.0**2 * 5.0 / grid.voxel_volume
    before, after = int(np.sum(m.labels == 1)), int(np.sum(out.labels == 1))
    assert abs(before - analytic) / analytic < 0.05
    assert abs(after - analytic) / analytic < 0.05


def test_rigid_transform_validation():
    with pytest.raises(ValidationError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), (0, 0, 0))
    t = RigidTransform.from_euler((5, 10, -20), (1, 2, 3))
    pts = np.random.default_rng(1).normal(size=(10, 3))
    assert np.allclose(t.apply_inverse(t.apply(pts)), pts)
    assert np.allclose(t.compose(t.inverse()).rotation, np.eye(3))
    assert np.allclose(RigidTransform.from_dict(t.to_dict()).rotation, t.rotation)
