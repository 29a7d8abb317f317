"""Command-line interface.

Exit codes: 0 success, 1 invalid input (bad flags, config or data), 2 runtime
failure. Diagnostics go to stderr; results are written only to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import RadRobustError, ValidationError
from .imageio import write_mask, write_nifti
from .pipeline import (
    CONFIG_SCHEMA,
    Suite,
    demo_config,
    load_config,
    quality_suite,
    repeatability_suite,
    reproducibility_suite,
    run_pipeline,
    shape_screen,
    shuffle_screen,
    te_suite,
)
from .phantom import simulate_acquisition
from .report import emit_report, emit_te_grid, resolve_formats, te_grid_svg_from_dict, to_json, write_text
from .workflow import StabilityReport, simulated_roi_mask

log = logging.getLogger("radrobust")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _config_help() -> str:
    lines = ["config fields (JSON):"]
    for name, spec in CONFIG_SCHEMA["properties"].items():
        lines.append(f"  {name:14s} {spec.get('description', spec.get('type', ''))}")
    lines.append("without --config the built-in three-scanner demo config is used")
    return "\n".join(lines)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run config (see fields below)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="thread cap (default: $RADROBUST_THREADS or 1)")
    p.add_argument("--format", choices=("csv", "json", "svg", "all"), default="all", help="output format(s)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")


_COMMANDS = {
    "simulate": "simulate each scanner's reference scan; write image and ROI mask NIfTI files",
    "extract": "extract the feature table of each reference scan (or each config input)",
    "repeatability": "ICC(2,1) reports for fixed and repositioned retests",
    "reproducibility": "CCC reports between scanner pairs",
    "te-grid": "pairwise CCC over the TE grid plus the TR pair",
    "shape-screen": "features correlated with shape (|Spearman| above threshold)",
    "shuffle-screen": "features insensitive to voxel shuffling (ICC above threshold)",
    "pipeline": "every scenario, screens, robust set and summary",
    "report": "re-render a saved report or TE-grid JSON",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radrobust", description="Radiomic feature robustness on simulated MR phantoms.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command", parser_class=_Parser)
    for name, text in _COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text, epilog=_config_help(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        if name == "report":
            p.add_argument("input", type=Path, help="report JSON or te_grid JSON written earlier")
    return parser


def _load(args) -> dict:
    config = load_config(args.config) if args.config else demo_config()
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be non-negative")
        config = {**config, "seed": args.seed}
    return config


def _emit_all(reports: dict[str, StabilityReport], out: Path, formats) -> None:
    for name, report in reports.items():
        emit_report(report, out, name, formats)


def _run(args) -> None:
    formats = resolve_formats(args.format)
    out: Path = args.out
    if args.threads is not None and args.threads < 1:
        raise ValidationError("--threads must be positive")

    if args.command == "report":
        try:
            data = json.loads(args.input.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.input} is not valid JSON: {exc}") from None
        stem = args.input.stem
        if "te_values" in data:
            if "svg" in formats:
                write_text(out / f"{stem}.svg", te_grid_svg_from_dict(data))
            if "json" in formats:
                write_text(out / f"{stem}.json", to_json(data))
        else:
            try:
                report = StabilityReport.from_dict(data)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{args.input} is not a report JSON: {exc}") from None
            emit_report(report, out, stem, formats)
        return

    config = _load(args)
    if args.command == "pipeline":
        run_pipeline(config, out, formats, args.threads)
        return
    suite = Suite.from_config(config, args.threads)
    if args.command == "simulate":
        if suite.inputs:
            raise ValidationError("simulate does not use config inputs")
        out.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(suite.scanners):
            acq = suite.reference(i)
            volume, _ = simulate_acquisition(suite.spec, acq.sequence, s, None, acq.noise_seed)
            write_nifti(volume, out / f"{s.name}_image.nii")
            write_mask(simulated_roi_mask(suite.spec, acq.sequence, None), out / f"{s.name}_mask.nii")
        if "json" in formats:
            write_text(out / "quality.json", to_json(quality_suite(suite)))
    elif args.command == "extract":
        acqs = list(suite.inputs) or [suite.reference(i) for i in range(len(suite.scanners))]
        for acq in acqs:
            table = suite.table(acq)
            stem = "features_" + (acq.label if suite.inputs else acq.scanner.name)
            if "csv" in formats:
                table.to_csv(_prepare(out) / f"{stem}.csv")
            if "json" in formats:
                table.to_json(_prepare(out) / f"{stem}.json")
    elif args.command == "repeatability":
        _emit_all(repeatability_suite(suite), out, formats)
    elif args.command == "reproducibility":
        _emit_all(reproducibility_suite(suite), out, formats)
    elif args.command == "te-grid":
        grid, tr_report = te_suite(suite)
        emit_te_grid(grid, out, "te_grid", formats)
        emit_report(tr_report, out, "tr_pair", formats)
    elif args.command == "shape-screen":
        _write_screen(out, "shape_screen", shape_screen(suite), formats)
    elif args.command == "shuffle-screen":
        _write_screen(out, "shuffle_screen", shuffle_screen(suite), formats)


def _prepare(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_screen(out: Path, stem: str, keys: list[str], formats) -> None:
    if "csv" in formats:
        write_text(out / f"{stem}.csv", "key\r\n" + "".join(f"{k}\r\n" for k in keys))
    if "json" in formats:
        write_text(out / f"{stem}.json", to_json({"flagged": keys}))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _run(args)
    except ValidationError as exc:
        print(f"radrobust: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RadRobustError, OSError) as exc:
        print(f"radrobust: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
