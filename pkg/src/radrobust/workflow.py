"""Experiment orchestration: repeatability, reproducibility, TE grids and screens.

Feature tables are compared per feature across the ROIs of two conditions.
Simulated acquisitions are described by :class:`Acquisition` records and
extracted through a small in-process cache so scenarios sharing an
acquisition extract it once.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyUniverse, MismatchedRoiSets, MissingShapeColumns, ValidationError
from .features import CANONICAL_2D, FEATURE_NAMES, ExtractionConfig, FeatureKey, FeatureTable, compute_features
from .imageio import ImageVolume, RigidTransform, RoiMask, read_mask, read_nifti
from .phantom import (
    PhantomSpec,
    ScannerProfile,
    SequenceParams,
    generate_roi_masks,
    sequence_grid,
    simulate_acquisition,
)
from .robustness import STABILITY_ORDER, StabilityClass, ccc, ccc_ci, classify, icc21, shuffle_intensities, spearman

log = logging.getLogger(__name__)

SCENARIOS = (
    "repeatability_fixed",
    "repeatability_repositioned",
    "reproducibility_pair",
    "te_grid",
    "tr_pair",
    "shuffle_screen",
    "shape_screen",
    "full_pipeline",
)
_PAIR_SCENARIOS = ("repeatability_fixed", "repeatability_repositioned", "reproducibility_pair", "tr_pair")


def derive_seed(base: int, *path: int) -> int:
    """Independent 32-bit seed for a position in the experiment tree."""
    return int(np.random.SeedSequence([int(base), *(int(p) for p in path)]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class Acquisition:
    """One image plus ROI mask: either simulated or read from NIfTI files."""

    label: str
    scanner: ScannerProfile | None = None
    sequence: SequenceParams | None = None
    pose: RigidTransform | None = None
    noise_seed: int = 0
    image_path: str | None = None
    mask_path: str | None = None

    def __post_init__(self):
        simulated = self.scanner is not None and self.sequence is not None
        from_files = self.image_path is not None and self.mask_path is not None
        if simulated == from_files:
            raise ValidationError(f"acquisition {self.label!r} needs either scanner+sequence or image+mask paths")

    @property
    def is_simulated(self) -> bool:
        return self.image_path is None

    def key(self, spec: PhantomSpec) -> tuple:
        if not self.is_simulated:
            return ("file", self.image_path, self.mask_path)
        pose = self.pose or RigidTransform.identity()
        # materials do not take part in PhantomSpec equality
        materials = tuple(sorted((k, m.t1, m.t2, m.pd) for k, m in spec.materials.items()))
        return (
            "sim",
            spec,
            materials,
            self.scanner,
            self.sequence,
            tuple(np.asarray(pose.rotation).ravel()),
            tuple(pose.translation),
            self.noise_seed,
        )

    def load(self, spec: PhantomSpec | None = None) -> tuple[ImageVolume, RoiMask]:
        if not self.is_simulated:
            volume = read_nifti(self.image_path)
            mask = read_mask(self.mask_path)
            if mask.grid != volume.grid:
                raise ValidationError(f"{self.mask_path} is not on the grid of {self.image_path}")
            return volume, mask
        spec = spec or PhantomSpec()
        volume, _ = simulate_acquisition(spec, self.sequence, self.scanner, self.pose, self.noise_seed)
        return volume, simulated_roi_mask(spec, self.sequence, self.pose)


_MASK_CACHE: dict = {}
_TABLE_CACHE: dict = {}
_CACHE_LIMIT = 64


def simulated_roi_mask(spec: PhantomSpec, seq: SequenceParams, pose: RigidTransform | None) -> RoiMask:
    grid = sequence_grid(seq, spec)
    pose = pose or RigidTransform.identity()
    key = (spec, grid, tuple(np.asarray(pose.rotation).ravel()), tuple(pose.translation))
    if key not in _MASK_CACHE:
        _MASK_CACHE[key] = generate_roi_masks(spec, grid, pose)
    return _MASK_CACHE[key]


def clear_caches() -> None:
    """Drop cached masks and feature tables (and the phantom material maps)."""
    from . import phantom

    _MASK_CACHE.clear()
    _TABLE_CACHE.clear()
    phantom._MAP_CACHE.clear()


def extract(acq: Acquisition, config: ExtractionConfig, spec: PhantomSpec | None = None, threads=1) -> FeatureTable:
    """Feature table of an acquisition, memoized on its full description."""
    spec = spec or PhantomSpec()
    key = (acq.key(spec), config)
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        volume, mask = acq.load(spec)
        hit = compute_features(volume, mask, config, threads=threads)
        if len(_TABLE_CACHE) >= _CACHE_LIMIT:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = hit
    return hit


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: str
    inputs: tuple[Acquisition, ...]
    extraction: ExtractionConfig = CANONICAL_2D
    seeds: tuple[int, ...] = (0,)
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    threads: int | None = 1

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        n = len(self.inputs)
        if self.scenario in _PAIR_SCENARIOS and n != 2:
            raise ValidationError(f"{self.scenario} needs exactly 2 inputs, got {n}")
        if self.scenario == "te_grid":
            if n < 2:
                raise ValidationError("te_grid needs at least 2 echo times")
            tes = [a.sequence.te for a in self.inputs if a.sequence is not None]
            if len(tes) != n or tes != sorted(tes) or len(set(tes)) != n:
                raise ValidationError("te_grid inputs must be simulated with strictly increasing TE")
        if self.scenario in ("shuffle_screen", "shape_screen") and n < 1:
            raise ValidationError(f"{self.scenario} needs at least one input")

    def tables(self) -> list[FeatureTable]:
        return [extract(a, self.extraction, self.phantom, self.threads) for a in self.inputs]


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class FeatureRecord:
    key: str
    metric: str
    value: float
    ci_lo: float | None
    ci_hi: float | None
    stability: StabilityClass
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "metric": self.metric,
            "value": self.value,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "class": self.stability.value,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureRecord":
        return cls(d["key"], d["metric"], d["value"], d["ci_lo"], d["ci_hi"], StabilityClass(d["class"]), tuple(d["flags"]))


@dataclass(frozen=True)
class StabilityReport:
    """Per-feature agreement records for one scenario.

    ``robust_set`` is only filled by :func:`compose_robust_set`.
    """

    scenario: str
    metric: str
    records: tuple[FeatureRecord, ...]
    metadata: Mapping = field(default_factory=dict)
    robust_set: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "robust_set", tuple(self.robust_set))
        keys = {r.key for r in self.records}
        if not set(self.robust_set) <= keys:
            raise ValidationError("robust set must be a subset of the report's features")

    @property
    def keys(self) -> list[str]:
        return [r.key for r in self.records]

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in STABILITY_ORDER}
        for r in self.records:
            out[r.stability.value] += 1
        return out

    def percentages(self) -> dict[str, float]:
        n = len(self.records)
        return {c: round(100.0 * k / n, 1) if n else 0.0 for c, k in self.counts().items()}

    def fraction(self, cls: StabilityClass | str = StabilityClass.EXCELLENT) -> float:
        cls = StabilityClass(cls)
        return sum(r.stability is cls for r in self.records) / len(self.records) if self.records else 0.0

    def keys_in(self, cls: StabilityClass | str = StabilityClass.EXCELLENT) -> list[str]:
        cls = StabilityClass(cls)
        return [r.key for r in self.records if r.stability is cls]

    def mean_value(self) -> float:
        return float(np.mean(self.values())) if self.records else 0.0

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "metric": self.metric,
            "metadata": dict(self.metadata),
            "n_features": len(self.records),
            "counts": self.counts(),
            "percentages": self.percentages(),
            "robust_set": list(self.robust_set),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StabilityReport":
        return cls(
            d["scenario"],
            d["metric"],
            [FeatureRecord.from_dict(r) for r in d["records"]],
            d.get("metadata", {}),
            d.get("robust_set", ()),
        )


def _check_matched(a: FeatureTable, b: FeatureTable) -> None:
    if a.roi_ids != b.roi_ids:
        raise MismatchedRoiSets(f"ROI ids differ: {list(a.roi_ids)} vs {list(b.roi_ids)}")
    if a.keys != b.keys:
        raise MismatchedRoiSets("feature tables have different feature keys")


def _table_flags(*tables: FeatureTable) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for t in tables:
        for _, key in t.flags:
            out.setdefault(key, set()).add("fallback")
    return out


def compare_tables(
    a: FeatureTable,
    b: FeatureTable,
    metric: str,
    scenario: str,
    metadata: Mapping | None = None,
) -> StabilityReport:
    """Per-feature ICC(2,1) or CCC between two tables over matched ROIs."""
    _check_matched(a, b)
    if metric not in ("ICC", "CCC"):
        raise ValidationError(f"metric must be ICC or CCC, got {metric!r}")
    fallback = _table_flags(a, b)
    records = []
    for j, key in enumerate(a.keys):
        x, y = a.values[:, j], b.values[:, j]
        name = str(key)
        flags = set(fallback.get(name, ()))
        lo = hi = None
        if metric == "ICC":
            m = icc21(np.column_stack([x, y]))
        else:
            m = ccc(x, y)
            if len(x) >= 4:
                ci = ccc_ci(x, y)
                lo, hi = ci.lo, ci.hi
                if ci.flag:
                    flags.add(f"ci_{ci.flag}")
        if m.flag:
            flags.add(m.flag)
        records.append(FeatureRecord(name, metric, m.value, lo, hi, classify(m.value), tuple(sorted(flags))))
    return StabilityReport(scenario, metric, records, dict(metadata or {}))


def run_repeatability(plan: ExperimentPlan) -> StabilityReport:
    """ICC(2,1) between two acquisitions (fixed or repositioned phantom)."""
    a, b = plan.tables()
    return compare_tables(a, b, "ICC", plan.scenario, {"inputs": [x.label for x in plan.inputs]})


def run_reproducibility(plan: ExperimentPlan) -> StabilityReport:
    """CCC with confidence intervals between two conditions."""
    a, b = plan.tables()
    return compare_tables(a, b, "CCC", plan.scenario, {"inputs": [x.label for x in plan.inputs]})


@dataclass(frozen=True)
class TeGridResult:
    """Pairwise CCC reports over all TE combinations (``i <= j``)."""

    te_values: tuple[float, ...]
    reports: Mapping[tuple[int, int], StabilityReport]

    def report(self, te_a: float, te_b: float) -> StabilityReport:
        i, j = sorted((self.te_values.index(te_a), self.te_values.index(te_b)))
        return self.reports[(i, j)]

    def percent_matrix(self, cls: StabilityClass | str = StabilityClass.EXCELLENT) -> np.ndarray:
        n = len(self.te_values)
        out = np.zeros((n, n))
        for (i, j), r in self.reports.items():
            out[i, j] = out[j, i] = round(100.0 * r.fraction(cls), 1)
        return out

    def gaps(self) -> list[float]:
        return sorted({round(abs(b - a), 9) for a, b in itertools.combinations(self.te_values, 2)})

    def _pairs_at(self, gap: float):
        return [
            r for (i, j), r in self.reports.items()
            if i != j and abs(abs(self.te_values[j] - self.te_values[i]) - gap) < 1e-9
        ]

    def mean_ccc_by_gap(self) -> dict[float, float]:
        return {g: float(np.mean([r.mean_value() for r in self._pairs_at(g)])) for g in self.gaps()}

    def excellent_by_gap(self) -> dict[float, float]:
        return {g: float(np.mean([r.fraction() for r in self._pairs_at(g)])) for g in self.gaps()}

    def trend(self) -> float:
        """Spearman correlation of the mean CCC against the TE gap."""
        by_gap = self.mean_ccc_by_gap()
        if len(by_gap) < 3:
            raise ValidationError("trend needs at least 3 distinct TE gaps")
        return spearman(list(by_gap), list(by_gap.values())).value

    def to_dict(self) -> dict:
        pairs = []
        for (i, j), r in sorted(self.reports.items()):
            pairs.append(
                {
                    "te_a": self.te_values[i],
                    "te_b": self.te_values[j],
                    "gap": abs(self.te_values[j] - self.te_values[i]),
                    "mean_ccc": r.mean_value(),
                    "counts": r.counts(),
                    "percentages": r.percentages(),
                }
            )
        return {
            "te_values": list(self.te_values),
            "pairs": pairs,
            "mean_ccc_by_gap": [[g, v] for g, v in self.mean_ccc_by_gap().items()],
            "excellent_by_gap": [[g, v] for g, v in self.excellent_by_gap().items()],
        }


def run_te_grid(plan: ExperimentPlan) -> TeGridResult:
    """CCC for every pair of echo times (diagonal included, trivially 1)."""
    tables = plan.tables()
    tes = tuple(float(a.sequence.te) for a in plan.inputs)
    reports = {}
    for i, j in itertools.combinations_with_replacement(range(len(tables)), 2):
        meta = {"te_a": tes[i], "te_b": tes[j]}
        reports[(i, j)] = compare_tables(tables[i], tables[j], "CCC", "te_grid", meta)
    return TeGridResult(tes, reports)


def _shape_keys(keys: Sequence[FeatureKey]) -> list[FeatureKey]:
    return [k for k in keys if k.is_shape]


def run_shape_screen(table: FeatureTable, threshold: float = 0.8) -> list[str]:
    """Non-shape features with |Spearman| above ``threshold`` against any shape feature."""
    shape = _shape_keys(table.keys)
    if {k.name for k in shape} != set(FEATURE_NAMES["shape"]):
        raise MissingShapeColumns("shape screen needs all 14 shape columns")
    shape_cols = [table.column(k) for k in shape]
    flagged = []
    for j, key in enumerate(table.keys):
        if key.is_shape:
            continue
        x = table.values[:, j]
        if any(abs(spearman(x, s).value) > threshold for s in shape_cols):
            flagged.append(str(key))
    return flagged


def shuffle_screen_tables(original: FeatureTable, shuffled: FeatureTable, threshold: float = 0.9) -> list[str]:
    """Non-shape features whose ICC between original and shuffled tables exceeds ``threshold``."""
    _check_matched(original, shuffled)
    out = []
    for j, key in enumerate(original.keys):
        if key.is_shape:
            continue
        m = icc21(np.column_stack([original.values[:, j], shuffled.values[:, j]]))
        if m.value > threshold:
            out.append(str(key))
    return out


def _stack(tables: Sequence[FeatureTable]) -> FeatureTable:
    if len(tables) == 1:
        return tables[0]
    for t in tables[1:]:
        if t.keys != tables[0].keys:
            raise MismatchedRoiSets("tables to stack have different keys")
    values = np.vstack([t.values for t in tables])
    return FeatureTable(range(1, len(values) + 1), tables[0].keys, values)


def run_shuffle_screen(
    images: ImageVolume | Sequence[ImageVolume],
    masks: RoiMask | Sequence[RoiMask],
    config: ExtractionConfig = CANONICAL_2D,
    seed: int = 0,
    threshold: float = 0.9,
    threads: int | None = 1,
) -> list[str]:
    """Features that survive a voxel-intensity shuffle (ICC > ``threshold``).

    Several images are pooled: their ROIs form the rows of one comparison.
    """
    if isinstance(images, ImageVolume):
        images, masks = [images], [masks]
    if len(images) != len(masks) or not images:
        raise ValidationError("need one mask per image")
    originals, shuffled = [], []
    for n, (img, mask) in enumerate(zip(images, masks)):
        originals.append(compute_features(img, mask, config, threads))
        shuffled.append(compute_features(shuffle_intensities(img, derive_seed(seed, n)), mask, config, threads))
    return shuffle_screen_tables(_stack(originals), _stack(shuffled), threshold)


def compose_robust_set(
    reports: Iterable[StabilityReport],
    screens: Mapping[str, Iterable[str]] | None = None,
) -> StabilityReport:
    """Features Excellent in every report, minus those flagged by all screens.

    The returned report holds, per feature, the smallest value over the
    input reports. ``metadata`` lists the excluded keys and the robust set
    without shape features.
    """
    reports = list(reports)
    if not reports or not reports[0].records:
        raise EmptyUniverse("no reports or empty feature universe")
    keys = reports[0].keys
    for r in reports[1:]:
        if r.keys != keys:
            raise ValidationError("reports cover different feature universes")
    screens = {name: set(v) for name, v in (screens or {}).items()}
    excluded = set.intersection(*screens.values()) if screens else set()

    records = []
    robust = []
    for idx, key in enumerate(keys):
        recs = [r.records[idx] for r in reports]
        worst = min(rec.value for rec in recs)
        flags = sorted({f for rec in recs for f in rec.flags} | {n for n, s in screens.items() if key in s})
        records.append(FeatureRecord(key, "min", worst, None, None, classify(worst), tuple(flags)))
        if all(rec.stability is StabilityClass.EXCELLENT for rec in recs) and key not in excluded:
            robust.append(key)
    no_shape = [k for k in robust if not FeatureKey.parse(k).is_shape]
    meta = {
        "scenarios": sorted(r.scenario + ":" + ",".join(r.metadata.get("inputs", [])) for r in reports),
        "excluded": [k for k in keys if k in excluded],
        "robust_set_without_shape": no_shape,
        "screen_sizes": {n: len(s) for n, s in sorted(screens.items())},
    }
    return StabilityReport("robust_set", "min", records, meta, robust)


def run_plan(plan: ExperimentPlan):
    """Dispatch a single-scenario plan."""
    if plan.scenario.startswith("repeatability"):
        return run_repeatability(plan)
    if plan.scenario in ("reproducibility_pair", "tr_pair"):
        return run_reproducibility(plan)
    if plan.scenario == "te_grid":
        return run_te_grid(plan)
    if plan.scenario == "shape_screen":
        return run_shape_screen(_stack(plan.tables()))
    if plan.scenario == "shuffle_screen":
        loaded = [a.load(plan.phantom) for a in plan.inputs]
        return run_shuffle_screen(
            [v for v, _ in loaded], [m for _, m in loaded], plan.extraction, plan.seeds[0], threads=plan.threads
        )
    raise ValidationError("full_pipeline plans run through radrobust.pipeline.run_pipeline")

