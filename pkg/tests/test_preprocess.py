import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from radrobust.errors import ValidationError, ZeroVariance
from radrobust.features import ExtractionConfig, apply_filter, auto_bin_width, discretize, normalize
from radrobust.features.preprocess import haar_swt, intensity_filter, laplacian_of_gaussian, log_margin
from radrobust.imageio import Grid, ImageVolume


def _vol(data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=float)
    nz, ny, nx = data.shape
    return ImageVolume(Grid((nx, ny, nz), spacing, (0.0, 0.0, 0.0), np.eye(3)), data)


def test_normalize_example_is_exact():
    out = normalize(_vol(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 4)))
    assert out.data.mean() == pytest.approx(300.0, rel=1e-12)
    assert out.data.std() == pytest.approx(100.0, rel=1e-12)


def test_normalize_constant_raises():
    with pytest.raises(ZeroVariance):
        normalize(_vol(np.zeros((1, 2, 2))))


_volumes = arrays(
    np.float64,
    st.tuples(st.integers(1, 3), st.integers(1, 5), st.integers(2, 5)),
    elements=st.floats(-1e4, 1e4, allow_nan=False),
).filter(lambda a: a.std() > 1e-3 * max(1.0, np.abs(a).max()))


@settings(max_examples=100, deadline=None)
@given(_volumes)
def test_normalize_moments_and_idempotence(a):
    once = normalize(_vol(a))
    assert once.data.mean() == pytest.approx(300.0, rel=1e-6)
    assert once.data.std() == pytest.approx(100.0, rel=1e-6)
    twice = normalize(once)
    assert np.allclose(twice.data, once.data, rtol=0, atol=1e-9 * 300)


def test_log_of_constant_is_zero():
    out = apply_filter(_vol(np.full((4, 6, 6), 7.0), (0.6, 0.6, 5.0)), "LoG")
    assert len(out) == 1 and out[0].image_type == "log.sigma.6.mm.3D"
    assert np.all(out[0].volume.data == 0)


def test_log_matches_analytic_laplacian_of_quadratic():
    # Gaussian blur keeps a quadratic's Laplacian; away from the edges it equals 2 + 2
    z, y, x = np.meshgrid(np.arange(1), np.arange(60), np.arange(60), indexing="ij")
    q = (x - 30.0) ** 2 + (y - 30.0) ** 2
    out = laplacian_of_gaussian(q, (1.0, 1.0, 1.0), 2.0)
    assert np.allclose(out[0, 20:40, 20:40], 4.0, atol=1e-6)


def test_square_example():
    y, flag = intensity_filter(np.array([4.0, 2.0, -4.0]), "Square", 4.0)
    assert not flag
    assert y.tolist() == pytest.approx([4.0, 1.0, 4.0])


@pytest.mark.parametrize("name", ["Square", "SquareRoot", "Logarithm", "Exponential"])
def test_intensity_filters_preserve_max(name):
    x = np.array([0.5, 3.0, 17.0, 250.0])
    y, _ = intensity_filter(x, name, 250.0)
    assert y[-1] == pytest.approx(250.0, rel=1e-12)


@pytest.mark.parametrize("name", ["Square", "SquareRoot", "Logarithm", "Exponential"])
def test_intensity_filters_all_zero_image(name):
    y, flag = intensity_filter(np.zeros(5), name, 0.0)
    assert flag and np.all(y == 0)


def test_wavelet_subband_counts():
    v = _vol(np.random.default_rng(0).normal(size=(3, 6, 6)))
    two = apply_filter(v, "Wavelet", mode="force2D")
    three = apply_filter(v, "Wavelet", mode="full3D")
    assert [r.image_type for r in two] == ["wavelet.LL", "wavelet.LH", "wavelet.HL", "wavelet.HH"]
    assert len(three) == 8 and three[0].image_type == "wavelet.LLL" and three[-1].image_type == "wavelet.HHH"


def test_haar_is_energy_preserving_on_periodic_interior():
    x = np.random.default_rng(1).normal(size=(1, 8, 8))
    bands = haar_swt(x, 2)
    ll = bands["LL"]
    # LL is a scaled 2x2 box average
    assert ll[0, 0, 0] == pytest.approx((x[0, 0, 0] + x[0, 0, 1] + x[0, 1, 0] + x[0, 1, 1]) / 2)
    assert np.all(haar_swt(np.ones((1, 4, 4)), 2)["HH"] == 0)


def test_log_crop_equivalence():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 120, 120))
    spacing = (5.0, 0.6, 0.6)
    full = laplacian_of_gaussian(x, spacing, 6.0)
    _, my, mx = log_margin(spacing, 6.0)
    crop = (slice(None), slice(55 - my, 65 + my), slice(55 - mx, 65 + mx))
    sub = laplacian_of_gaussian(x[crop], spacing, 6.0)
    assert np.allclose(sub[:, my : my + 10, mx : mx + 10], full[:, 55:65, 55:65], rtol=0, atol=1e-12)


def test_discretize_examples():
    mask = np.ones((1, 1, 4), dtype=bool)
    d = discretize(np.array([0.0, 5.0, 10.0, 15.0]).reshape(1, 1, 4), mask, 5.0)
    assert d.levels.ravel().tolist() == [1, 2, 3, 4]
    assert d.n_bins == 4


def test_discretize_range_450_width_5():
    values = np.linspace(0.0, 450.0, 200).reshape(1, 1, 200)
    d = discretize(values, np.ones_like(values, dtype=bool), 5.0)
    assert d.n_bins == 450 // 5 + 1 == 91
    assert 30 <= d.n_bins <= 130


def test_discretize_constant_roi():
    d = discretize(np.full((1, 2, 2), 3.0), np.ones((1, 2, 2), dtype=bool))
    assert d.constant and d.n_bins == 1
    assert np.all(d.levels == 1)


def test_discretize_empty_roi():
    with pytest.raises(ValidationError):
        discretize(np.zeros((1, 2, 2)), np.zeros((1, 2, 2), dtype=bool))


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 1e6))
def test_auto_width_is_largest_admissible_ladder_value(value_range):
    w = auto_bin_width(value_range)
    n = math.floor(value_range / w) + 1
    assert 30 <= n <= 130
    mant = w / 10 ** math.floor(math.log10(w) + 1e-12)
    assert any(math.isclose(mant, m) for m in (1.0, 2.0, 2.5, 5.0))
    # every larger ladder value violates the bounds
    for k in range(-6, 8):
        for m in (1.0, 2.0, 2.5, 5.0):
            cand = m * 10.0**k
            if cand > w * (1 + 1e-12):
                assert not (30 <= math.floor(value_range / cand) + 1 <= 130)


@settings(max_examples=100, deadline=None)
@given(
    arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e3, 1e3, allow_nan=False)),
    st.floats(0.1, 50.0),
)
def test_discretize_levels_property(values, width):
    values = values.reshape(1, 1, -1)
    mask = np.ones(values.shape, dtype=bool)
    d = discretize(values, mask, width)
    assert d.levels.min() == 1
    assert d.levels.max() == d.n_bins
    order = np.argsort(values.ravel(), kind="stable")
    assert np.all(np.diff(d.levels.ravel()[order]) >= 0)


def test_config_validation():
    with pytest.raises(ValidationError):
        ExtractionConfig(bin_width=0.0)
    with pytest.raises(ValidationError):
        ExtractionConfig(bin_count_bounds=(20, 130))
    with pytest.raises(ValidationError):
        ExtractionConfig(wavelet_levels=2)
    with pytest.raises(ValidationError):
        ExtractionConfig(filters_enabled=("Gabor",))
    assert len(ExtractionConfig().image_types()) == 10
    assert len(ExtractionConfig(mode="full3D").image_types()) == 14
