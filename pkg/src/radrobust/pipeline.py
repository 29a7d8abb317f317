"""Config-driven experiment suite and the end-to-end pipeline.

A run config (JSON, validated against :data:`CONFIG_SCHEMA`) describes the
phantom, base sequence, scanner profiles, repositioning transform, TE grid
and screen thresholds. Every acquisition's noise seed is derived from the
config ``seed`` and its position in the experiment, so a run is fully
determined by its config.
"""

from __future__ import annotations

import copy
import itertools
import json
import logging
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import IoError, ValidationError
from .features import ExtractionConfig, FeatureTable
from .imageio import RigidTransform
from .phantom import PhantomSpec, ScannerProfile, SequenceParams, qc_regions, simulate_acquisition
from .report import FORMATS, emit_report, emit_te_grid, to_json, write_text
from .robustness import image_quality
from .workflow import (
    Acquisition,
    ExperimentPlan,
    StabilityReport,
    TeGridResult,
    compose_robust_set,
    derive_seed,
    extract,
    run_repeatability,
    run_reproducibility,
    run_shape_screen,
    run_shuffle_screen,
    run_te_grid,
)

log = logging.getLogger(__name__)

_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "sequence", "scanners"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "description": "base seed; every noise and shuffle seed derives from it"},
        "phantom": {"type": "object", "description": "phantom geometry and materials (defaults to the built-in phantom)"},
        "sequence": {
            "type": "object",
            "description": "base acquisition: te, tr [ms], slice_thickness, slice_spacing [mm], pixel_spacing [mm, mm], fov [mm, mm], mode 2D|3D, slice_count",
            "required": ["te", "tr"],
            "additionalProperties": False,
            "properties": {
                "te": _NUM,
                "tr": _NUM,
                "slice_thickness": _NUM,
                "slice_spacing": _NUM,
                "pixel_spacing": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "fov": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "mode": {"enum": ["2D", "3D"]},
                "slice_count": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "extraction": {
            "type": "object",
            "description": "mode force2D|full3D, normalize, normalize_scale, normalize_shift, bin_width (number or 'auto'), bin_count_bounds, log_sigma_mm, wavelet_levels, filters_enabled, classes_enabled, gldm_alpha",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["force2D", "full3D"]},
                "normalize": {"type": "boolean"},
                "normalize_scale": _NUM,
                "normalize_shift": _NUM,
                "bin_width": {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
                "bin_count_bounds": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "log_sigma_mm": {"type": "number", "exclusiveMinimum": 0},
                "wavelet_levels": {"const": 1},
                "filters_enabled": {"type": "array", "items": {"type": "string"}},
                "classes_enabled": {"type": "array", "items": {"type": "string"}},
                "gldm_alpha": {"type": "integer", "minimum": 0},
            },
        },
        "scanners": {
            "type": "array",
            "minItems": 1,
            "description": "scanner profiles: name, gain, noise_sigma, bias_field_amplitude",
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "gain": _NUM,
                    "noise_sigma": _NUM,
                    "bias_field_amplitude": _NUM,
                },
            },
        },
        "repositioning": {
            "type": "object",
            "description": "rigid phantom displacement for the repositioned retest: angles_deg (x, y, z), translation [mm]",
            "additionalProperties": False,
            "properties": {"angles_deg": _VEC3, "translation": _VEC3},
        },
        "te_grid": {
            "type": "object",
            "description": "scanner name, te_values [ms] (strictly increasing), tr [ms], tr_pair [ms, ms] compared at the base TE",
            "additionalProperties": False,
            "properties": {
                "scanner": {"type": "string"},
                "te_values": {"type": "array", "items": _NUM, "minItems": 2},
                "tr": _NUM,
                "tr_pair": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "screens": {
            "type": "object",
            "description": "scanner name plus shape_threshold (|Spearman|) and shuffle_threshold (ICC)",
            "additionalProperties": False,
            "properties": {
                "scanner": {"type": "string"},
                "shape_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "shuffle_threshold": {"type": "number", "minimum": -1, "maximum": 1},
            },
        },
        "inputs": {
            "type": "array",
            "description": "user images instead of simulation: list of {label, image, mask} NIfTI paths",
            "items": {
                "type": "object",
                "required": ["label", "image", "mask"],
                "additionalProperties": False,
                "properties": {"label": {"type": "string"}, "image": {"type": "string"}, "mask": {"type": "string"}},
            },
        },
    },
}

DEFAULTS = {
    "repositioning": {"angles_deg": [0.0, 0.0, 2.0], "translation": [1.3, -0.9, 1.1]},
    "te_grid": {"te_values": [80, 85, 90, 95, 100, 105, 110, 115, 120], "tr": 5000, "tr_pair": [5000, 4405]},
    "screens": {"shape_threshold": 0.8, "shuffle_threshold": 0.9},
}


def demo_config() -> dict:
    """The canonical seeded demo: three scanner profiles and a 9-point TE grid."""
    text = resources.files("radrobust").joinpath("data/demo.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(config: dict) -> dict:
    """Validate against the schema and fill defaults; returns a new dict."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config {path}: {exc.message}") from None
    out = copy.deepcopy(config)
    for key, value in DEFAULTS.items():
        merged = copy.deepcopy(value)
        merged.update(out.get(key, {}))
        out[key] = merged
    names = [s["name"] for s in out["scanners"]]
    if len(set(names)) != len(names):
        raise ValidationError("scanner names must be unique")
    for section in ("te_grid", "screens"):
        out[section].setdefault("scanner", names[0])
        if out[section]["scanner"] not in names:
            raise ValidationError(f"{section}.scanner {out[section]['scanner']!r} is not a configured scanner")
    tes = out["te_grid"]["te_values"]
    if any(b <= a for a, b in zip(tes, tes[1:])):
        raise ValidationError("te_grid.te_values must be strictly increasing")
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    return validate_config(config)


# seed-tree roles
_REF, _FIXED, _REPOSITIONED, _TE, _TR, _SHUFFLE = range(6)


@dataclass(frozen=True)
class Suite:
    """Typed view of a validated config with acquisition factories."""

    seed: int
    spec: PhantomSpec
    sequence: SequenceParams
    extraction: ExtractionConfig
    scanners: tuple[ScannerProfile, ...]
    pose: RigidTransform
    te_values: tuple[float, ...]
    te_tr: float
    tr_pair: tuple[float, float]
    te_scanner: str
    screen_scanner: str
    shape_threshold: float
    shuffle_threshold: float
    inputs: tuple[Acquisition, ...] = ()
    threads: int | None = 1

    @classmethod
    def from_config(cls, config: dict, threads: int | None = 1) -> "Suite":
        c = validate_config(config)
        try:
            return cls._build(c, threads)
        except ValidationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"config: {exc}") from None

    @classmethod
    def _build(cls, c: dict, threads) -> "Suite":
        rep = c["repositioning"]
        return cls(
            seed=c["seed"],
            spec=PhantomSpec.from_dict(c["phantom"]) if "phantom" in c else PhantomSpec(),
            sequence=SequenceParams.from_dict(c["sequence"]),
            extraction=ExtractionConfig.from_dict(c.get("extraction", {})),
            scanners=tuple(ScannerProfile.from_dict(s) for s in c["scanners"]),
            pose=RigidTransform.from_euler(rep["angles_deg"], rep["translation"]),
            te_values=tuple(float(t) for t in c["te_grid"]["te_values"]),
            te_tr=float(c["te_grid"]["tr"]),
            tr_pair=tuple(float(t) for t in c["te_grid"]["tr_pair"]),
            te_scanner=c["te_grid"]["scanner"],
            screen_scanner=c["screens"]["scanner"],
            shape_threshold=float(c["screens"]["shape_threshold"]),
            shuffle_threshold=float(c["screens"]["shuffle_threshold"]),
            inputs=tuple(Acquisition(i["label"], image_path=i["image"], mask_path=i["mask"]) for i in c.get("inputs", [])),
            threads=threads,
        )

    def scanner_index(self, name: str) -> int:
        return [s.name for s in self.scanners].index(name)

    def acquisition(self, scanner: int, role: int, *, index: int = 0, sequence=None, pose=None) -> Acquisition:
        s = self.scanners[scanner]
        return Acquisition(
            f"{s.name}:{('ref', 'fixed', 'repositioned', 'te', 'tr', 'shuffle')[role]}:{index}",
            scanner=s,
            sequence=sequence or self.sequence,
            pose=pose,
            noise_seed=derive_seed(self.seed, scanner, role, index),
        )

    def reference(self, scanner: int) -> Acquisition:
        return self.acquisition(scanner, _REF)

    def plan(self, scenario: str, inputs) -> ExperimentPlan:
        return ExperimentPlan(scenario, tuple(inputs), self.extraction, (self.seed,), self.spec, self.threads)

    def table(self, acq: Acquisition) -> FeatureTable:
        return extract(acq, self.extraction, self.spec, self.threads)


def repeatability_suite(suite: Suite) -> dict[str, StabilityReport]:
    """Fixed and repositioned ICC reports for every scanner (or the two user inputs)."""
    if suite.inputs:
        return {"repeatability_inputs": run_repeatability(suite.plan("repeatability_fixed", suite.inputs[:2]))}
    out = {}
    for i, s in enumerate(suite.scanners):
        ref = suite.reference(i)
        fixed = suite.acquisition(i, _FIXED)
        moved = suite.acquisition(i, _REPOSITIONED, pose=suite.pose)
        out[f"repeatability_fixed_{s.name}"] = run_repeatability(suite.plan("repeatability_fixed", (ref, fixed)))
        out[f"repeatability_repositioned_{s.name}"] = run_repeatability(
            suite.plan("repeatability_repositioned", (ref, moved))
        )
    return out


def reproducibility_suite(suite: Suite) -> dict[str, StabilityReport]:
    """CCC reports for every scanner pair (or the two user inputs)."""
    if suite.inputs:
        return {"reproducibility_inputs": run_reproducibility(suite.plan("reproducibility_pair", suite.inputs[:2]))}
    out = {}
    for i, j in itertools.combinations(range(len(suite.scanners)), 2):
        name = f"reproducibility_{suite.scanners[i].name}_{suite.scanners[j].name}"
        out[name] = run_reproducibility(suite.plan("reproducibility_pair", (suite.reference(i), suite.reference(j))))
    return out


def te_suite(suite: Suite) -> tuple[TeGridResult, StabilityReport]:
    """TE grid at fixed TR plus the TR-pair comparison at the base TE."""
    k = suite.scanner_index(suite.te_scanner)
    te_inputs = [
        suite.acquisition(k, _TE, index=n, sequence=replace(suite.sequence, te=te, tr=suite.te_tr))
        for n, te in enumerate(suite.te_values)
    ]
    grid = run_te_grid(suite.plan("te_grid", te_inputs))
    tr_inputs = [
        suite.acquisition(k, _TR, index=n, sequence=replace(suite.sequence, tr=tr)) for n, tr in enumerate(suite.tr_pair)
    ]
    tr_report = run_reproducibility(suite.plan("tr_pair", tr_inputs))
    tr_report = StabilityReport(tr_report.scenario, tr_report.metric, tr_report.records,
                                {**tr_report.metadata, "tr": list(suite.tr_pair), "te": suite.sequence.te})
    return grid, tr_report


def _screen_input(suite: Suite) -> Acquisition:
    return suite.inputs[0] if suite.inputs else suite.reference(suite.scanner_index(suite.screen_scanner))


def shape_screen(suite: Suite) -> list[str]:
    return run_shape_screen(suite.table(_screen_input(suite)), suite.shape_threshold)


def shuffle_screen(suite: Suite) -> list[str]:
    volume, mask = _screen_input(suite).load(suite.spec)
    return run_shuffle_screen(
        volume, mask, suite.extraction, derive_seed(suite.seed, _SHUFFLE), suite.shuffle_threshold, suite.threads
    )


def screens_suite(suite: Suite) -> dict[str, list[str]]:
    """Shape-correlation and shuffle screens on the screen scanner's reference scan."""
    return {"shape_correlated": shape_screen(suite), "shuffle_invariant": shuffle_screen(suite)}


def quality_suite(suite: Suite) -> dict[str, dict[str, float]]:
    """CNR and SNR of each scanner's reference scan."""
    out = {}
    for i, s in enumerate(suite.scanners):
        acq = suite.reference(i)
        volume, _ = simulate_acquisition(suite.spec, acq.sequence, s, None, acq.noise_seed)
        out[s.name] = image_quality(volume, qc_regions(suite.spec, volume.grid))
    return out


def _summary(report: StabilityReport) -> dict:
    return {
        "metric": report.metric,
        "n_features": len(report.records),
        "counts": report.counts(),
        "percentages": report.percentages(),
        "mean_value": report.mean_value(),
    }


@dataclass(frozen=True)
class PipelineResult:
    repeatability: dict
    reproducibility: dict
    te_grid: TeGridResult
    tr_pair: StabilityReport
    screens: dict
    robust: StabilityReport
    quality: dict
    files: tuple[Path, ...]


def run_pipeline(config: dict, out_dir, formats=FORMATS, threads: int | None = 1) -> PipelineResult:
    """Run every scenario of ``config`` and write the report bundle to ``out_dir``."""
    suite = Suite.from_config(config, threads)
    out = Path(out_dir)
    files: list[Path] = []

    log.info("repeatability")
    rep = repeatability_suite(suite)
    log.info("reproducibility")
    repro = reproducibility_suite(suite)
    log.info("TE grid")
    grid, tr_report = te_suite(suite)
    log.info("screens")
    screens = screens_suite(suite)
    robust = compose_robust_set(list(rep.values()) + list(repro.values()), screens)
    quality = {} if suite.inputs else quality_suite(suite)

    for name, report in {**rep, **repro, "tr_pair": tr_report, "robust_set": robust}.items():
        files += emit_report(report, out, name, formats)
    files += emit_te_grid(grid, out, "te_grid", formats)
    if "csv" in formats and not suite.inputs:
        for i, s in enumerate(suite.scanners):
            files.append(write_text(out / f"features_{s.name}.csv", suite.table(suite.reference(i)).to_csv()))
    if "json" in formats:
        summary = {
            "config": validate_config(config),
            "scenarios": {name: _summary(r) for name, r in {**rep, **repro, "tr_pair": tr_report}.items()},
            "te_grid": {
                "mean_ccc_by_gap": grid.to_dict()["mean_ccc_by_gap"],
                "excellent_by_gap": grid.to_dict()["excellent_by_gap"],
                "trend_spearman": grid.trend() if len(grid.gaps()) >= 3 else None,
            },
            "screens": {k: len(v) for k, v in screens.items()},
            "robust_set": {
                "size": len(robust.robust_set),
                "size_without_shape": len(robust.metadata["robust_set_without_shape"]),
            },
            "quality": quality,
        }
        files.append(write_text(out / "summary.json", to_json(summary)))
        files.append(write_text(out / "screens.json", to_json(screens)))
    return PipelineResult(rep, repro, grid, tr_report, screens, robust, quality, tuple(files))
