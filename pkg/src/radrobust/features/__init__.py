"""Radiomic feature extraction."""

from .config import (
    CANONICAL_2D,
    CANONICAL_3D,
    CLASSES,
    FEATURE_NAMES,
    FILTERS,
    ExtractionConfig,
    FeatureKey,
)
from .discretize import Discretized, auto_bin_width, discretize
from .extractor import FeatureTable, compute_features
from .matrices import TextureMatrices, texture_matrices
from .preprocess import FilterResult, apply_filter, normalize

__all__ = [
    "CANONICAL_2D",
    "CANONICAL_3D",
    "CLASSES",
    "FEATURE_NAMES",
    "FILTERS",
    "Discretized",
    "ExtractionConfig",
    "FeatureKey",
    "FeatureTable",
    "FilterResult",
    "TextureMatrices",
    "apply_filter",
    "auto_bin_width",
    "compute_features",
    "discretize",
    "normalize",
    "texture_matrices",
]
