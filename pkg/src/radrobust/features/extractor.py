"""Full feature extraction and the :class:`FeatureTable` container."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IoError, ValidationError
from ..imageio import ImageVolume, RoiMask
from .config import FEATURE_NAMES, FILTERS, ExtractionConfig, FeatureKey
from .discretize import discretize
from .firstorder import firstorder_features
from .matrices import texture_matrices
from .preprocess import haar_swt, intensity_filter, laplacian_of_gaussian, log_margin, normalize
from .shape import shape_features
from .texture import gldm_features, glcm_features, glrlm_features, glszm_features, ngtdm_features

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """ROI x feature matrix with canonical column order.

    ``flags`` lists ``(roi_id, rendered key)`` pairs whose value came from a
    degenerate-input fallback.
    """

    roi_ids: tuple[int, ...]
    keys: tuple[FeatureKey, ...]
    values: np.ndarray = field(repr=False)
    flags: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "roi_ids", tuple(int(r) for r in self.roi_ids))
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "flags", tuple(sorted((int(r), str(k)) for r, k in self.flags)))
        v = np.array(self.values, dtype=float, copy=True).reshape(len(self.roi_ids), len(self.keys))
        if np.isnan(v).any():
            raise ValidationError("feature table contains NaN")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_features(self) -> int:
        return len(self.keys)

    def column_names(self) -> list[str]:
        return [str(k) for k in self.keys]

    def column(self, key: FeatureKey | str) -> np.ndarray:
        if isinstance(key, str):
            key = FeatureKey.parse(key)
        return self.values[:, self.keys.index(key)]

    def select(self, keys) -> "FeatureTable":
        keys = [FeatureKey.parse(k) if isinstance(k, str) else k for k in keys]
        idx = [self.keys.index(k) for k in keys]
        names = {str(k) for k in keys}
        flags = [f for f in self.flags if f[1] in names]
        return FeatureTable(self.roi_ids, keys, self.values[:, idx], flags)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["roi_id", *self.column_names()])
        for rid, row in zip(self.roi_ids, self.values):
            w.writerow([rid, *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            _write_text(path, text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "FeatureTable":
        text = _read_text(path_or_text)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:1] != ["roi_id"]:
            raise ValidationError("feature CSV must start with a roi_id column")
        keys = [FeatureKey.parse(k) for k in rows[0][1:]]
        body = [r for r in rows[1:] if r]
        return cls([int(r[0]) for r in body], keys, [[float(x) for x in r[1:]] for r in body])

    def to_dict(self) -> dict:
        return {
            "roi_ids": list(self.roi_ids),
            "keys": self.column_names(),
            "values": self.values.tolist(),
            "flags": [list(f) for f in self.flags],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1) + "\n"
        if path is not None:
            _write_text(path, text)
        return text

    @classmethod
    def from_json(cls, path_or_text) -> "FeatureTable":
        d = json.loads(_read_text(path_or_text))
        return cls(d["roi_ids"], [FeatureKey.parse(k) for k in d["keys"]], d["values"], d.get("flags", []))


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_text(path_or_text) -> str:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        try:
            return Path(path_or_text).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read {path_or_text}: {exc}") from exc
    return path_or_text


def resolve_threads(threads: int | None) -> int:
    """Thread cap from the argument, else ``RADROBUST_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("RADROBUST_THREADS", "")
        threads = int(env) if env.strip().isdigit() else 1
    return max(1, int(threads))


def _crop_box(mask: np.ndarray, margin) -> tuple[slice, ...]:
    idx = np.nonzero(mask)
    return tuple(
        slice(max(int(i.min()) - m, 0), min(int(i.max()) + m + 1, n))
        for i, m, n in zip(idx, margin, mask.shape)
    )


def _filtered_images(x: np.ndarray, full: np.ndarray, spacing_zyx, config: ExtractionConfig):
    """Yield ``(image_type, array, all_zero)`` for every image type.

    ``x`` is a crop with enough margin for the LoG support; intensity-filter
    gains use the max of ``full`` so results equal whole-image filtering.
    """
    yield "original", x, False
    max_abs = None
    for f in FILTERS:
        if f not in config.filters_enabled:
            continue
        if f == "LoG":
            yield config.log_label(), laplacian_of_gaussian(x, spacing_zyx, config.log_sigma_mm), False
        elif f == "Wavelet":
            for band, arr in haar_swt(x, 2 if config.is_2d else 3).items():
                yield f"wavelet.{band}", arr, False
        else:
            if max_abs is None:
                max_abs = float(np.max(np.abs(full)))
            arr, flag = intensity_filter(x, f, max_abs)
            yield f.lower(), arr, flag


def _roi_texture(levels, n_bins, config: ExtractionConfig) -> dict[str, tuple[dict[str, float], list[str]]]:
    m = texture_matrices(levels, n_bins, config.mode, config.gldm_alpha)
    out = {}
    if "glcm" in config.classes_enabled:
        out["glcm"] = glcm_features(m.glcm)
    if "glrlm" in config.classes_enabled:
        out["glrlm"] = glrlm_features(m.glrlm, m.n_voxels, m.n_directions)
    if "glszm" in config.classes_enabled:
        out["glszm"] = glszm_features(m.glszm, m.n_voxels)
    if "ngtdm" in config.classes_enabled:
        out["ngtdm"] = ngtdm_features(m.ngtdm_n, m.ngtdm_s)
    if "gldm" in config.classes_enabled:
        out["gldm"] = gldm_features(m.gldm)
    return out


def _image_type_features(image, roi_masks, boxes, voxel_volume, config) -> list[dict[str, tuple[dict, list]]]:
    """Per-ROI ``{class: (values, flags)}`` for one filtered image."""
    results = []
    for roi, box in zip(roi_masks, boxes):
        sub_mask = roi[box]
        sub = image[box]
        disc = discretize(sub, sub_mask, config.bin_width, config.bin_count_bounds)
        per_class = {}
        if "firstorder" in config.classes_enabled:
            fo, flags = firstorder_features(sub[sub_mask], disc.levels[sub_mask], voxel_volume)
            if disc.constant:
                flags = flags + ["Entropy"]
            per_class["firstorder"] = (fo, flags)
        per_class.update(_roi_texture(disc.levels, disc.n_bins, config))
        if disc.constant:
            per_class = {
                c: (vals, sorted(set(fl) | {"constant_roi"})) for c, (vals, fl) in per_class.items()
            }
        results.append(per_class)
    return results


def compute_features(
    volume: ImageVolume,
    mask: RoiMask,
    config: ExtractionConfig | None = None,
    threads: int | None = 1,
) -> FeatureTable:
    """Extract every configured feature for each ROI of ``mask``.

    Image types are filtered on a crop around the ROI union that carries
    enough margin for the filter supports, so values match whole-image
    filtering. Work is spread over image types when ``threads > 1``; the
    output order is fixed by :meth:`ExtractionConfig.feature_keys`.
    """
    config = config or ExtractionConfig()
    if mask.grid != volume.grid:
        raise ValidationError("mask grid does not match image grid")
    roi_ids = mask.roi_ids
    if not roi_ids:
        raise ValidationError("mask contains no ROI")
    if config.normalize:
        volume = normalize(volume, config.normalize_scale, config.normalize_shift)
    full = volume.data
    spacing_zyx = tuple(volume.spacing[::-1])
    voxel_volume = volume.grid.voxel_volume

    union = mask.labels > 0
    margin = log_margin(spacing_zyx, config.log_sigma_mm) if "LoG" in config.filters_enabled else (1, 1, 1)
    crop = _crop_box(union, margin)
    x = full[crop]
    labels = mask.labels[crop]
    roi_masks = [labels == r for r in roi_ids]
    boxes = [_crop_box(m, (1, 1, 1)) for m in roi_masks]

    keys = config.feature_keys()
    col = {k: i for i, k in enumerate(keys)}
    values = np.zeros((len(roi_ids), len(keys)))
    flags: list[tuple[int, str]] = []

    def record(row, image_type, cls, vals, fl):
        for name in FEATURE_NAMES[cls]:
            values[row, col[FeatureKey(image_type, cls, name)]] = vals[name]
        named = set(fl) & set(FEATURE_NAMES[cls])
        whole = bool(set(fl) - named)
        for name in FEATURE_NAMES[cls]:
            if whole or name in named:
                flags.append((roi_ids[row], str(FeatureKey(image_type, cls, name))))

    if "shape" in config.classes_enabled:
        for row, (roi, box) in enumerate(zip(roi_masks, boxes)):
            vals, fl = shape_features(roi[box], spacing_zyx)
            record(row, "original", "shape", vals, fl)

    def work(item):
        image_type, image, all_zero = item
        return image_type, all_zero, _image_type_features(image, roi_masks, boxes, voxel_volume, config)

    items = _filtered_images(x, full, spacing_zyx, config)
    n_threads = resolve_threads(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]

    for image_type, all_zero, per_roi in results:
        for row, per_class in enumerate(per_roi):
            for cls, (vals, fl) in per_class.items():
                record(row, image_type, cls, vals, list(fl) + (["all_zero_image"] if all_zero else []))
    return FeatureTable(roi_ids, keys, values, flags)
