"""Command-line interface.

Subcommands mirror the pipeline stages and exchange plain files (CSV for
spectra and peak tables, JSON for partitions, models and reports), so
``pipeline`` is exactly the composition of ``preprocess``, ``detect``,
``partition``, ``decompose`` and ``postprocess``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    SpectrumSet,
    read_json,
    read_model_json,
    read_spectrum_csv,
    write_json,
    write_model_json,
    write_spectrum_csv,
)
from .errors import ConfigError, DataError, MsgmmError
from .evaluate import DEFAULT_REL_TOL, evaluate_positions
from .peaks import read_peaks_csv, read_positions, write_peaks_csv
from .pipeline import (
    PipelineConfig,
    decompose_stage,
    detect_stage,
    load_config,
    partition_from_manifest,
    partition_stage,
    postprocess_stage,
    preprocess_spectra,
    sweep_pipeline,
)
from .plotting import emit_plot, emit_sweep_plot
from .simulate import SimConfig, generate_dataset, truth_positions, write_dataset

logger = logging.getLogger("msgmm")

EXIT_OK = 0

# file names written by ``pipeline`` (and expected by nothing else)
CORRECTED = "corrected.csv"
PEAKS = "peaks.csv"
PARTITION = "partition.json"
RESIDUAL = "residual.csv"
RAW_MODEL = "model_raw.json"
MODEL = "model.json"
DIAGNOSTICS = "diagnostics.json"
PLOT = "model.svg"
REPORT = "report.json"


# ----------------------------------------------------------------- inputs


def load_spectra(paths: Sequence[str]):
    """One spectrum, or a set when several files (or a dataset directory) are given."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("sample_*.csv"))
            if not found:
                raise DataError(f"no sample_*.csv files in {p}")
            files.extend(found)
        elif p.is_file():
            files.append(p)
        else:
            raise DataError(f"input not found: {p}")
    spectra = [read_spectrum_csv(f) for f in files]
    if len(spectra) == 1:
        return spectra[0]
    mz = spectra[0].mz
    if any(len(s) != len(mz) or not np.array_equal(s.mz, mz) for s in spectra[1:]):
        raise DataError("input spectra do not share one m/z grid")
    return SpectrumSet(mz, np.vstack([s.intensity for s in spectra]))


def _read_spectrum(path: str):
    if not Path(path).is_file():
        raise DataError(f"input not found: {path}")
    return read_spectrum_csv(path)


def _read_model(path: str):
    if not Path(path).is_file():
        raise DataError(f"model file not found: {path}")
    model, _ = read_model_json(path)
    return model


def _detected_positions(path: str) -> np.ndarray:
    if not Path(path).is_file():
        raise DataError(f"detections not found: {path}")
    if path.endswith(".json"):
        return _read_model(path).mu
    return read_positions(path)


# ----------------------------------------------------------------- config


_FLAG_KEYS = {
    "baseline_window": "baseline_window",
    "baseline_quantile": "baseline_quantile",
    "smoothing_halfwidth": "smoothing_halfwidth",
    "min_snr": "min_snr",
    "epsilon": "epsilon",
    "alpha_min": "alpha_min",
    "max_iters": "max_iters",
    "k_max_cap": "k_max_cap",
    "mz_thr": "mz_thr",
    "sigma_thr": "sigma_thr",
    "workers": "workers",
    "seed": "seed",
}
_NEGATED = {"no_baseline": "baseline", "no_filter": "filter", "no_merge": "merge", "no_postprocess": "postprocess"}


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    """Config file first, then command-line flags on top."""
    overrides = {key: getattr(args, attr, None) for attr, key in _FLAG_KEYS.items()}
    for attr, key in _NEGATED.items():
        if getattr(args, attr, False):
            overrides[key] = False
    return load_config(getattr(args, "config", None), overrides)


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", help="flat key = value configuration file; flags override it")
    g.add_argument("--baseline-window", type=float, help="baseline window width in Da")
    g.add_argument("--baseline-quantile", type=float, help="baseline quantile per window")
    g.add_argument("--no-baseline", action="store_true", help="skip baseline correction")
    g.add_argument("--smoothing-halfwidth", type=float, help="peak-detection smoothing half-width in Da")
    g.add_argument("--min-snr", type=float, help="peak-detection SNR threshold")
    g.add_argument("--epsilon", type=float, help="per-component penalty of the model-order index")
    g.add_argument("--alpha-min", type=float, help="mixing-proportion floor below which components are removed")
    g.add_argument("--max-iters", type=int, help="EM iteration limit")
    g.add_argument("--k-max-cap", type=int, help="hard cap on components per fragment")
    g.add_argument("--mz-thr", type=float, help="merge threshold for means, percent of m/z")
    g.add_argument("--sigma-thr", type=float, help="merge threshold for sigmas, percent of m/z")
    g.add_argument("--no-filter", action="store_true", help="keep low-weight (noise) components")
    g.add_argument("--no-merge", action="store_true", help="do not merge similar components")
    g.add_argument("--no-postprocess", action="store_true", help="skip filtering and merging")
    g.add_argument("--workers", type=int, help="worker processes for fragment fits")
    g.add_argument("--seed", type=int, help="master seed")
    return p


# ----------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        n_components=args.n_components,
        n_samples=args.n_samples,
        seed=args.seed,
        noise=not args.no_noise,
        add_baseline=not args.no_baseline,
    )
    spectra, truth = generate_dataset(cfg)
    write_dataset(spectra, truth, args.out)
    logger.info("wrote %d samples to %s", len(spectra), args.out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = config_from_args(args)
    write_spectrum_csv(preprocess_spectra(load_spectra(args.inputs), cfg), args.out)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = config_from_args(args)
    write_peaks_csv(detect_stage(_read_spectrum(args.spectrum), cfg), args.out)
    return EXIT_OK


def _residual_path(out: str, residual: str | None) -> Path:
    return Path(residual) if residual else Path(out).with_name(Path(out).stem + "_residual.csv")


def _write_partition(part, spectrum_path: str, out: str, residual: str | None) -> None:
    res_path = _residual_path(out, residual)
    write_spectrum_csv(part.residual, res_path)
    base = Path(out).resolve().parent
    # paths in the manifest are relative to the manifest's directory
    rel = lambda p: os.path.relpath(Path(p).resolve(), base)
    write_json(part.manifest(rel(res_path), rel(spectrum_path)), out)


def cmd_partition(args) -> int:
    cfg = config_from_args(args)
    spectrum = _read_spectrum(args.spectrum)
    peaks = read_peaks_csv(args.peaks)
    _write_partition(partition_stage(spectrum, peaks, cfg), args.spectrum, args.out, args.residual)
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = config_from_args(args)
    spectrum = _read_spectrum(args.spectrum)
    if not Path(args.partition).is_file():
        raise DataError(f"partition manifest not found: {args.partition}")
    manifest = read_json(args.partition)
    res = args.residual or str(Path(args.partition).with_name(manifest.get("residual") or ""))
    part = partition_from_manifest(manifest, _read_spectrum(res))
    model, diagnostics = decompose_stage(spectrum, part, cfg)
    write_model_json(model, args.out)
    if args.diagnostics:
        write_json(diagnostics, args.diagnostics)
    return EXIT_OK


def cmd_postprocess(args) -> int:
    cfg = config_from_args(args)
    write_model_json(postprocess_stage(_read_model(args.model), cfg), args.out)
    return EXIT_OK


def _write_sweep_csv(table, path: str) -> None:
    rows = table.rows()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _parse_grid(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ConfigError("--sweep expects name=v1,v2,...")
    name, raw = text.split("=", 1)
    name = name.strip().replace("-", "_")
    if name not in PipelineConfig.__dataclass_fields__:
        raise ConfigError(f"unknown sweep parameter {name!r}")
    kind = str(PipelineConfig.__dataclass_fields__[name].type)
    cast = int if kind.startswith("int") else float
    try:
        values = [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid sweep values {raw!r}") from None
    if not values:
        raise ConfigError("empty sweep grid")
    return name, values


def cmd_evaluate(args) -> int:
    if not Path(args.truth).is_file():
        raise DataError(f"truth manifest not found: {args.truth}")
    truth = truth_positions(read_json(args.truth))
    if args.sweep:
        if not args.spectrum:
            raise ConfigError("--sweep needs --spectrum (a baseline-corrected spectrum)")
        cfg = config_from_args(args)
        name, values = _parse_grid(args.sweep)
        table = sweep_pipeline(_read_spectrum(args.spectrum), truth, name, values, cfg, args.rel_tol)
        report = {"parameter": name, "best_value": table.best_value, "rows": table.rows()}
        if args.sweep_csv:
            _write_sweep_csv(table, args.sweep_csv)
        if args.sweep_plot and any(r is not None for r in table.reports):
            emit_sweep_plot(table, args.sweep_plot)
    else:
        if not args.detected:
            raise ConfigError("evaluate needs a detections file or --sweep")
        report = evaluate_positions(_detected_positions(args.detected), truth, args.rel_tol).to_dict()
    write_json(report, args.out)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = config_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spectrum = preprocess_spectra(load_spectra(args.inputs), cfg)
    write_spectrum_csv(spectrum, out / CORRECTED)
    peaks = detect_stage(spectrum, cfg)
    write_peaks_csv(peaks, out / PEAKS)
    part = partition_stage(spectrum, peaks, cfg)
    _write_partition(part, str(out / CORRECTED), str(out / PARTITION), str(out / RESIDUAL))
    raw, diagnostics = decompose_stage(spectrum, part, cfg)
    write_model_json(raw, out / RAW_MODEL)
    final = postprocess_stage(raw, cfg)
    write_model_json(final, out / MODEL)
    diagnostics["K_final"] = final.K
    write_json(diagnostics, out / DIAGNOSTICS)
    if not args.no_plot:
        emit_plot(spectrum, final, peaks.positions, out / PLOT)
    if args.truth:
        if not Path(args.truth).is_file():
            raise DataError(f"truth manifest not found: {args.truth}")
        report = evaluate_positions(final.mu, truth_positions(read_json(args.truth)), args.rel_tol)
        write_json(report.to_dict(), out / REPORT)
    logger.info("K = %d components (%d before post-processing)", final.K, raw.K)
    return EXIT_OK


def cmd_plot(args) -> int:
    spectrum = _read_spectrum(args.spectrum)
    model = _read_model(args.model) if args.model else None
    peaks = None
    if args.peaks:
        if not Path(args.peaks).is_file():
            raise DataError(f"peak table not found: {args.peaks}")
        peaks = read_positions(args.peaks)
    mz_range = None
    if args.mz_min is not None or args.mz_max is not None:
        mz_range = (spectrum.mz[0] if args.mz_min is None else args.mz_min,
                    spectrum.mz[-1] if args.mz_max is None else args.mz_max)
    emit_plot(spectrum, model, peaks, args.out, mz_range, args.title)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msgmm", description="Gaussian-mixture decomposition of mass spectra.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    conf = _config_parent()

    p = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    p.add_argument("--n-components", type=int, default=100)
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", parents=[conf], help="average and baseline-correct spectra")
    p.add_argument("inputs", nargs="+", help="spectrum CSV files or a dataset directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("detect", parents=[conf], help="local-maxima peak detection")
    p.add_argument("spectrum")
    p.add_argument("--out", required=True, help="peak table CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("partition", parents=[conf], help="fit splitters and cut the residual into segments")
    p.add_argument("spectrum")
    p.add_argument("--peaks", required=True)
    p.add_argument("--out", required=True, help="partition manifest JSON")
    p.add_argument("--residual", help="residual spectrum CSV (default: next to the manifest)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("decompose", parents=[conf], help="fit segments and aggregate the model")
    p.add_argument("spectrum")
    p.add_argument("--partition", required=True)
    p.add_argument("--residual", help="residual CSV (default: the one named in the manifest)")
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--diagnostics", help="per-fragment diagnostics JSON")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("postprocess", parents=[conf], help="filter noise components and merge duplicates")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", parents=[conf], help="score detections against ground truth")
    p.add_argument("detected", nargs="?", help="peak CSV or model JSON")
    p.add_argument("--truth", required=True)
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.add_argument("--sweep", help="name=v1,v2,... grid over one configuration key")
    p.add_argument("--spectrum", help="baseline-corrected spectrum for --sweep")
    p.add_argument("--sweep-csv")
    p.add_argument("--sweep-plot")
    p.add_argument("--out", required=True, help="report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[conf], help="all stages in one go")
    p.add_argument("inputs", nargs="+", help="spectrum CSV files or a dataset directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--truth", help="truth manifest; adds report.json")
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plot", help="SVG overlay of spectrum, model and peaks")
    p.add_argument("spectrum")
    p.add_argument("--model")
    p.add_argument("--peaks")
    p.add_argument("--mz-min", type=float)
    p.add_argument("--mz-max", type=float)
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MsgmmError as exc:
        print(f"msgmm {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"msgmm {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
