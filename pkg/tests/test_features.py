import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from radrobust.errors import ValidationError
from radrobust.features import (
    CANONICAL_2D,
    CANONICAL_3D,
    ExtractionConfig,
    FeatureKey,
    FeatureTable,
    compute_features,
)
from radrobust.features.config import CLASSES, FEATURE_NAMES
from radrobust.features.firstorder import firstorder_features
from radrobust.features.shape import shape_features
from radrobust.imageio import Grid, ImageVolume, RoiMask
from radrobust.robustness import shuffle_intensities

PER_CLASS = {"shape": 14, "firstorder": 18, "glcm": 24, "glrlm": 16, "glszm": 16, "ngtdm": 5, "gldm": 14}


def _volume(data, spacing=(0.6, 0.6, 5.0)):
    nz, ny, nx = data.shape
    return ImageVolume(Grid((nx, ny, nz), spacing, (0.0, 0.0, 0.0), np.eye(3)), data)


def test_per_class_feature_counts():
    assert {c: len(FEATURE_NAMES[c]) for c in CLASSES} == PER_CLASS
    assert sum(PER_CLASS.values()) - 14 == 93


def test_canonical_key_counts():
    assert len(CANONICAL_2D.feature_keys()) == 944
    assert len(CANONICAL_3D.feature_keys()) == 1316
    keys = CANONICAL_2D.feature_keys()
    assert len(set(keys)) == len(keys)
    assert all(k.image_type == "original" for k in keys if k.is_shape)


def test_key_grammar_round_trip():
    k = FeatureKey("log.sigma.6.mm.3D", "glcm", "Contrast")
    assert str(k) == "log.sigma.6.mm.3D_glcm_Contrast"
    assert FeatureKey.parse(str(k)) == k
    with pytest.raises(ValidationError):
        FeatureKey("square", "shape", "Sphericity")
    with pytest.raises(ValidationError):
        FeatureKey("original", "glcm", "Nope")


def test_firstorder_mean_example():
    f, _ = firstorder_features(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1, 2, 3, 4]), 1.0)
    assert f["Mean"] == 2.5


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=80).filter(lambda v: np.ptp(v) > 1e-3))
def test_firstorder_matches_scipy(values):
    x = np.array(values)
    levels = np.floor((x - x.min()) / 5.0).astype(int) + 1
    f, flags = firstorder_features(x, levels, 2.0)
    assert flags == []
    assert f["Variance"] == pytest.approx(np.var(x), rel=1e-9, abs=1e-9)
    assert f["Skewness"] == pytest.approx(stats.skew(x), rel=1e-6, abs=1e-6)
    assert f["Kurtosis"] == pytest.approx(stats.kurtosis(x, fisher=False), rel=1e-6, abs=1e-6)
    assert f["TotalEnergy"] == pytest.approx(2.0 * np.sum(x**2), rel=1e-12)
    p = np.unique(levels, return_counts=True)[1] / len(x)
    assert f["Entropy"] == pytest.approx(stats.entropy(p, base=2), rel=1e-9, abs=1e-12)
    assert f["Uniformity"] == pytest.approx(np.sum(p**2), rel=1e-12)


def test_firstorder_constant_roi():
    f, flags = firstorder_features(np.full(5, 3.0), np.ones(5, dtype=int), 1.0)
    assert f["Entropy"] == 0 and f["Variance"] == 0
    assert set(flags) == {"Skewness", "Kurtosis"}


def test_voxel_volume_example():
    mask = np.zeros((3, 4, 4), dtype=bool)
    mask[1, 1, :] = True
    mask[1, 2, :] = True
    mask[2, 1, 1:3] = True
    assert mask.sum() == 10
    f, _ = shape_features(mask, (5.0, 0.6, 0.6))
    assert f["VoxelVolume"] == pytest.approx(18.0, rel=1e-12)


def test_sphere_shape():
    r = 10.0
    z, y, x = np.indices((25, 25, 25)) - 12
    mask = x**2 + y**2 + z**2 <= r**2
    f, _ = shape_features(mask, (1.0, 1.0, 1.0))
    assert f["MeshVolume"] == pytest.approx(4 / 3 * math.pi * r**3, rel=0.03)
    assert 0.85 < f["Sphericity"] <= 1.0
    assert f["Elongation"] == pytest.approx(1.0, abs=1e-9)
    assert f["Maximum3DDiameter"] == pytest.approx(2 * r, rel=0.05)


def test_box_axis_lengths():
    mask = np.zeros((7, 22, 12), dtype=bool)
    mask[1:6, 1:21, 1:11] = True
    spacing = (2.0, 1.0, 1.0)
    f, _ = shape_features(mask, spacing)
    lengths = sorted(4 * math.sqrt(np.var(np.arange(n) * s)) for n, s in ((5, 2.0), (20, 1.0), (10, 1.0)))
    assert f["LeastAxisLength"] == pytest.approx(lengths[0], rel=1e-9)
    assert f["MinorAxisLength"] == pytest.approx(lengths[1], rel=1e-9)
    assert f["MajorAxisLength"] == pytest.approx(lengths[2], rel=1e-9)
    assert f["Maximum2DDiameterSlice"] <= math.hypot(20, 10) + 1e-9
    assert f["Maximum2DDiameterColumn"] <= math.hypot(20, 10) + 1e-9
    assert f["Maximum3DDiameter"] >= max(f["Maximum2DDiameterSlice"], f["Maximum2DDiameterRow"])


def test_single_voxel_flags_elongation():
    mask = np.zeros((1, 1, 1), dtype=bool)
    mask[0, 0, 0] = True
    f, flags = shape_features(mask, (1.0, 1.0, 1.0))
    assert f["Elongation"] == 1.0 and "Elongation" in flags
    assert all(np.isfinite(v) for v in f.values())


@pytest.fixture(scope="module")
def small_case():
    rng = np.random.default_rng(11)
    data = rng.normal(400, 60, size=(4, 30, 30))
    labels = np.zeros(data.shape, dtype=int)
    labels[1:4, 5:15, 6:14] = 1
    labels[1:3, 18:26, 17:27] = 2
    vol = _volume(data, (1.5, 1.5, 5.0))
    return vol, RoiMask(vol.grid, labels)


def test_extraction_counts_and_finiteness(small_case):
    vol, mask = small_case
    t = compute_features(vol, mask, CANONICAL_2D)
    assert t.values.shape == (2, 944)
    assert np.all(np.isfinite(t.values))
    assert t.roi_ids == (1, 2)
    assert list(t.keys) == CANONICAL_2D.feature_keys()


def test_extraction_3d_count(small_case):
    vol, mask = small_case
    assert compute_features(vol, mask, CANONICAL_3D).n_features == 1316


def test_extraction_thread_determinism(small_case):
    vol, mask = small_case
    a = compute_features(vol, mask, CANONICAL_2D, threads=1)
    b = compute_features(vol, mask, CANONICAL_2D, threads=4)
    assert np.array_equal(a.values, b.values)
    assert a.flags == b.flags


def test_shape_columns_ignore_intensity_shuffle(small_case):
    vol, mask = small_case
    cfg = ExtractionConfig(filters_enabled=(), classes_enabled=("shape", "firstorder"))
    a = compute_features(vol, mask, cfg)
    b = compute_features(shuffle_intensities(vol, 3), mask, cfg)
    shape = [i for i, k in enumerate(a.keys) if k.is_shape]
    assert len(shape) == 14
    assert np.array_equal(a.values[:, shape], b.values[:, shape])
    assert not np.array_equal(a.values, b.values)


def test_firstorder_mean_through_extractor():
    data = np.zeros((1, 2, 3))
    data[0, 0, :] = [1.0, 2.0, 3.0]
    data[0, 1, 0] = 4.0
    labels = np.zeros(data.shape, dtype=int)
    labels[0, 0, :] = 1
    labels[0, 1, 0] = 1
    vol = _volume(data)
    cfg = ExtractionConfig(normalize=False, bin_width=1.0, filters_enabled=(), classes_enabled=("firstorder",))
    t = compute_features(vol, RoiMask(vol.grid, labels), cfg)
    assert t.column("original_firstorder_Mean")[0] == 2.5


def test_constant_roi_is_flagged_not_nan():
    data = np.random.default_rng(0).normal(size=(3, 10, 10))
    data[1, 2:6, 2:6] = 1.0
    labels = np.zeros(data.shape, dtype=int)
    labels[1, 2:6, 2:6] = 1
    vol = _volume(data)
    cfg = ExtractionConfig(bin_width=5.0, filters_enabled=())
    t = compute_features(vol, RoiMask(vol.grid, labels), cfg)
    assert np.all(np.isfinite(t.values))
    assert t.column("original_glcm_Contrast")[0] == 0
    assert t.column("original_firstorder_Entropy")[0] == 0
    assert (1, "original_glcm_Correlation") in t.flags


def test_table_csv_json_round_trip(small_case, tmp_path):
    vol, mask = small_case
    t = compute_features(vol, mask, ExtractionConfig(filters_enabled=("Square",)))
    back = FeatureTable.from_csv(t.to_csv(tmp_path / "t.csv").replace("\r\n", "\n"))
    assert back.keys == t.keys and np.array_equal(back.values, t.values)
    back = FeatureTable.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.values, t.values)
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "roi_id" and header[1:] == t.column_names()
    j = FeatureTable.from_json(t.to_json(tmp_path / "t.json"))
    assert j.flags == t.flags and np.array_equal(j.values, t.values)
    assert json.loads((tmp_path / "t.json").read_text())["roi_ids"] == [1, 2]


def test_table_rejects_nan():
    with pytest.raises(ValidationError):
        FeatureTable([1], [FeatureKey("original", "glcm", "Contrast")], [[float("nan")]])


def test_table_select(small_case):
    vol, mask = small_case
    t = compute_features(vol, mask, ExtractionConfig(filters_enabled=(), classes_enabled=("shape",)))
    sub = t.select(["original_shape_VoxelVolume", "original_shape_Sphericity"])
    assert sub.column_names() == ["original_shape_VoxelVolume", "original_shape_Sphericity"]
    assert np.array_equal(sub.column("original_shape_VoxelVolume"), t.column("original_shape_VoxelVolume"))
