"""Extraction configuration, feature names and the canonical key order."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Union

from ..errors import ValidationError

CLASSES = ("shape", "firstorder", "glcm", "glrlm", "glszm", "ngtdm", "gldm")
TEXTURE_CLASSES = ("glcm", "glrlm", "glszm", "ngtdm", "gldm")
FILTERS = ("LoG", "Wavelet", "Square", "SquareRoot", "Logarithm", "Exponential")

FEATURE_NAMES: dict[str, tuple[str, ...]] = {
    "shape": (
        "Elongation",
        "Flatness",
        "LeastAxisLength",
        "MajorAxisLength",
        "Maximum2DDiameterColumn",
        "Maximum2DDiameterRow",
        "Maximum2DDiameterSlice",
        "Maximum3DDiameter",
        "MeshVolume",
        "MinorAxisLength",
        "Sphericity",
        "SurfaceArea",
        "SurfaceVolumeRatio",
        "VoxelVolume",
    ),
    "firstorder": (
        "10Percentile",
        "90Percentile",
        "Energy",
        "Entropy",
        "InterquartileRange",
        "Kurtosis",
        "Maximum",
        "MeanAbsoluteDeviation",
        "Mean",
        "Median",
        "Minimum",
        "Range",
        "RobustMeanAbsoluteDeviation",
        "RootMeanSquared",
        "Skewness",
        "TotalEnergy",
        "Uniformity",
        "Variance",
    ),
    "glcm": (
        "Autocorrelation",
        "ClusterProminence",
        "ClusterShade",
        "ClusterTendency",
        "Contrast",
        "Correlation",
        "DifferenceAverage",
        "DifferenceEntropy",
        "DifferenceVariance",
        "Id",
        "Idm",
        "Idmn",
        "Idn",
        "Imc1",
        "Imc2",
        "InverseVariance",
        "JointAverage",
        "JointEnergy",
        "JointEntropy",
        "MCC",
        "MaximumProbability",
        "SumAverage",
        "SumEntropy",
        "SumSquares",
    ),
    "glrlm": (
        "GrayLevelNonUniformity",
        "GrayLevelNonUniformityNormalized",
        "GrayLevelVariance",
        "HighGrayLevelRunEmphasis",
        "LongRunEmphasis",
        "LongRunHighGrayLevelEmphasis",
        "LongRunLowGrayLevelEmphasis",
        "LowGrayLevelRunEmphasis",
        "RunEntropy",
        "RunLengthNonUniformity",
        "RunLengthNonUniformityNormalized",
        "RunPercentage",
        "RunVariance",
        "ShortRunEmphasis",
        "ShortRunHighGrayLevelEmphasis",
        "ShortRunLowGrayLevelEmphasis",
    ),
    "glszm": (
        "GrayLevelNonUniformity",
        "GrayLevelNonUniformityNormalized",
        "GrayLevelVariance",
        "HighGrayLevelZoneEmphasis",
        "LargeAreaEmphasis",
        "LargeAreaHighGrayLevelEmphasis",
        "LargeAreaLowGrayLevelEmphasis",
        "LowGrayLevelZoneEmphasis",
        "SizeZoneNonUniformity",
        "SizeZoneNonUniformityNormalized",
        "SmallAreaEmphasis",
        "SmallAreaHighGrayLevelEmphasis",
        "SmallAreaLowGrayLevelEmphasis",
        "ZoneEntropy",
        "ZonePercentage",
        "ZoneVariance",
    ),
    "ngtdm": ("Busyness", "Coarseness", "Complexity", "Contrast", "Strength"),
    "gldm": (
        "DependenceEntropy",
        "DependenceNonUniformity",
        "DependenceNonUniformityNormalized",
        "DependenceVariance",
        "GrayLevelNonUniformity",
        "GrayLevelVariance",
        "HighGrayLevelEmphasis",
        "LargeDependenceEmphasis",
        "LargeDependenceHighGrayLevelEmphasis",
        "LargeDependenceLowGrayLevelEmphasis",
        "LowGrayLevelEmphasis",
        "SmallDependenceEmphasis",
        "SmallDependenceHighGrayLevelEmphasis",
        "SmallDependenceLowGrayLevelEmphasis",
    ),
}


@dataclass(frozen=True, order=True)
class FeatureKey:
    image_type: str
    feature_class: str
    name: str

    def __post_init__(self):
        if self.feature_class not in CLASSES:
            raise ValidationError(f"unknown feature class {self.feature_class!r}")
        if self.name not in FEATURE_NAMES[self.feature_class]:
            raise ValidationError(f"{self.name!r} is not a {self.feature_class} feature")
        if self.feature_class == "shape" and self.image_type != "original":
            raise ValidationError("shape features pair only with the original image")

    def __str__(self) -> str:
        return f"{self.image_type}_{self.feature_class}_{self.name}"

    @property
    def is_shape(self) -> bool:
        return self.feature_class == "shape"

    @classmethod
    def parse(cls, text: str) -> "FeatureKey":
        # image types contain dots but never underscores
        image_type, feature_class, name = text.split("_", 2)
        return cls(image_type, feature_class, name)


BinWidth = Union[float, str]


@dataclass(frozen=True)
class ExtractionConfig:
    """Preprocessing and feature-class selection.

    ``bin_width`` is a positive width or ``"auto"`` (picked per ROI from the
    1-2-2.5-5 ladder so that the bin count lands within ``bin_count_bounds``).
    """

    mode: str = "force2D"
    normalize: bool = True
    normalize_scale: float = 100.0
    normalize_shift: float = 300.0
    bin_width: BinWidth = "auto"
    bin_count_bounds: tuple[int, int] = (30, 130)
    log_sigma_mm: float = 6.0
    wavelet_levels: int = 1
    filters_enabled: tuple[str, ...] = FILTERS
    classes_enabled: tuple[str, ...] = CLASSES
    gldm_alpha: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filters_enabled", tuple(self.filters_enabled))
        object.__setattr__(self, "classes_enabled", tuple(self.classes_enabled))
        object.__setattr__(self, "bin_count_bounds", tuple(int(b) for b in self.bin_count_bounds))
        if self.mode not in ("force2D", "full3D"):
            raise ValidationError(f"mode must be 'force2D' or 'full3D', got {self.mode!r}")
        if self.bin_width != "auto":
            if isinstance(self.bin_width, str) or not float(self.bin_width) > 0:
                raise ValidationError("bin_width must be positive or 'auto'")
            object.__setattr__(self, "bin_width", float(self.bin_width))
        lo, hi = self.bin_count_bounds
        if not (30 <= lo < hi <= 130):
            raise ValidationError("bin_count_bounds must satisfy 30 <= lo < hi <= 130")
        if not self.log_sigma_mm > 0:
            raise ValidationError("log_sigma_mm must be positive")
        if self.wavelet_levels != 1:
            raise ValidationError("only one wavelet level is supported")
        if self.normalize and not self.normalize_scale > 0:
            raise ValidationError("normalize_scale must be positive")
        bad = set(self.filters_enabled) - set(FILTERS)
        if bad:
            raise ValidationError(f"unknown filters {sorted(bad)}")
        bad = set(self.classes_enabled) - set(CLASSES)
        if bad:
            raise ValidationError(f"unknown feature classes {sorted(bad)}")

    @property
    def is_2d(self) -> bool:
        return self.mode == "force2D"

    def wavelet_subbands(self) -> list[str]:
        n = 2 if self.is_2d else 3
        return ["".join(p) for p in itertools.product("LH", repeat=n)]

    def log_label(self) -> str:
        return f"log.sigma.{self.log_sigma_mm:g}.mm.3D"

    def image_types(self) -> list[str]:
        """Image-type labels in canonical order."""
        types = ["original"]
        for f in FILTERS:
            if f not in self.filters_enabled:
                continue
            if f == "LoG":
                types.append(self.log_label())
            elif f == "Wavelet":
                types.extend(f"wavelet.{b}" for b in self.wavelet_subbands())
            else:
                types.append(f.lower())
        return types

    def feature_keys(self) -> list[FeatureKey]:
        keys = []
        for image_type in self.image_types():
            for cls in CLASSES:
                if cls not in self.classes_enabled:
                    continue
                if cls == "shape" and image_type != "original":
                    continue
                keys.extend(FeatureKey(image_type, cls, n) for n in FEATURE_NAMES[cls])
        return keys

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "normalize": self.normalize,
            "normalize_scale": self.normalize_scale,
            "normalize_shift": self.normalize_shift,
            "bin_width": self.bin_width,
            "bin_count_bounds": list(self.bin_count_bounds),
            "log_sigma_mm": self.log_sigma_mm,
            "wavelet_levels": self.wavelet_levels,
            "filters_enabled": list(self.filters_enabled),
            "classes_enabled": list(self.classes_enabled),
            "gldm_alpha": self.gldm_alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionConfig":
        d = dict(d)
        for key in ("bin_count_bounds", "filters_enabled", "classes_enabled"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


CANONICAL_2D = ExtractionConfig(mode="force2D")
CANONICAL_3D = ExtractionConfig(mode="full3D")
