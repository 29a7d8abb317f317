"""Deterministic CSV, JSON and SVG output for reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import IoError, ValidationError
from .workflow import StabilityReport, TeGridResult

FORMATS = ("csv", "json", "svg")

# lower bound of each Excellent-percentage band and its fill colour
_BANDS = ((90.0, "#1a9850"), (80.0, "#91cf60"), (60.0, "#d9ef8b"), (40.0, "#fee08b"), (0.0, "#fc8d59"))


def resolve_formats(fmt: str | None) -> tuple[str, ...]:
    if fmt in (None, "all"):
        return FORMATS
    if fmt not in FORMATS:
        raise ValidationError(f"format must be one of csv, json, svg, all; got {fmt!r}")
    return (fmt,)


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def to_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def report_csv(report: StabilityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["key", "metric", "value", "ci_lo", "ci_hi", "class", "flags", "robust"])
    robust = set(report.robust_set)
    for r in report.records:
        w.writerow([r.key, r.metric, _num(r.value), _num(r.ci_lo), _num(r.ci_hi), r.stability.value, ";".join(r.flags), int(r.key in robust)])
    return buf.getvalue()


def te_grid_csv(grid: TeGridResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["te_a", "te_b", "gap", "mean_ccc", "Excellent", "Good", "Moderate", "Poor"])
    for p in grid.to_dict()["pairs"]:
        pct = p["percentages"]
        w.writerow([_num(p["te_a"]), _num(p["te_b"]), _num(p["gap"]), _num(p["mean_ccc"]),
                    *(f"{pct[c]:.1f}" for c in ("Excellent", "Good", "Moderate", "Poor"))])
    return buf.getvalue()


def _band_colour(pct: float) -> str:
    for lo, colour in _BANDS:
        if pct >= lo:
            return colour
    return _BANDS[-1][1]


def te_grid_svg(grid: TeGridResult, cell: int = 48) -> str:
    """Upper-triangle heatmap of the Excellent percentage for every TE pair."""
    return heatmap_svg(grid.te_values, grid.percent_matrix(), cell)


def heatmap_svg(tes, pct, cell: int = 48) -> str:
    n = len(tes)
    left, top = 60, 40
    width = left + n * cell + 20
    height = top + n * cell + 70
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="20" font-size="13">Excellent features (%) by TE pair</text>',
    ]
    for k, te in enumerate(tes):
        cx = left + k * cell + cell // 2
        cy = top + k * cell + cell // 2
        out.append(f'<text x="{cx}" y="{top - 6}" text-anchor="middle">{te:g}</text>')
        out.append(f'<text x="{left - 6}" y="{cy + 4}" text-anchor="end">{te:g}</text>')
    for i in range(n):
        for j in range(i + 1, n):
            x = left + j * cell
            y = top + i * cell
            v = pct[i, j]
            out.append(
                f'<rect class="pair" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_band_colour(v)}" stroke="#ffffff" data-te-a="{tes[i]:g}" data-te-b="{tes[j]:g}"/>'
            )
            out.append(f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle">{v:.1f}</text>')
    ly = top + n * cell + 20
    for k, (lo, colour) in enumerate(_BANDS):
        x = left + k * 90
        out.append(f'<rect x="{x}" y="{ly}" width="14" height="14" fill="{colour}"/>')
        out.append(f'<text x="{x + 18}" y="{ly + 11}">&#8805;{lo:g}%</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: StabilityReport, out_dir, stem: str, formats=FORMATS) -> list[Path]:
    """Write ``<stem>.csv`` and/or ``<stem>.json``; SVG is not defined for single reports."""
    out_dir = Path(out_dir)
    written = []
    if "csv" in formats:
        written.append(write_text(out_dir / f"{stem}.csv", report_csv(report)))
    if "json" in formats:
        written.append(write_text(out_dir / f"{stem}.json", to_json(report.to_dict())))
    return written


def emit_te_grid(grid: TeGridResult, out_dir, stem: str = "te_grid", formats=FORMATS) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    if "csv" in formats:
        written.append(write_text(out_dir / f"{stem}.csv", te_grid_csv(grid)))
    if "json" in formats:
        written.append(write_text(out_dir / f"{stem}.json", to_json(grid.to_dict())))
    if "svg" in formats:
        written.append(write_text(out_dir / f"{stem}.svg", te_grid_svg(grid)))
    return written


def te_grid_svg_from_dict(d: dict, cell: int = 48) -> str:
    """SVG heatmap from the JSON written by :func:`emit_te_grid`."""
    tes = [float(t) for t in d["te_values"]]
    pct = np.full((len(tes), len(tes)), 100.0)
    for p in d["pairs"]:
        i, j = tes.index(p["te_a"]), tes.index(p["te_b"])
        pct[i, j] = pct[j, i] = p["percentages"]["Excellent"]
    return heatmap_svg(tes, pct, cell)
