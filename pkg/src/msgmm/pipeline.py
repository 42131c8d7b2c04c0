"""End-to-end decomposition: baseline -> peaks -> splitters -> segments -> model.

Every stage is a pure function of its inputs; the CLI subcommands call the
same functions on intermediate files, so running them in sequence gives the
same model as :func:`run_pipeline`.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MixtureModel, Spectrum, SpectrumSet
from .em import DEFAULT_EPSILON, EmConfig, FitResult, k_cap, select_model
from .errors import ConfigError, DataError, DegenerateFitError, MsgmmError, SplitterRejected, StageError
from .evaluate import SweepTable, sweep_parameter
from .partition import (
    Segment,
    Splitter,
    default_taper,
    extract_splitter,
    extract_splitter_segment,
    partition_segments,
    pick_clear_peaks,
    subtract_splitters,
    warp_down,
)
from .peaks import PeakList, average_cv, detect_peaks
from .postprocess import MergePolicy, aggregate, filter_noise_components, merge_components
from .preprocess import correct_baseline, estimate_baseline, mean_spectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline; see the README for the meaning of each key."""

    # preprocessing
    baseline: bool = True
    baseline_window: float = 200.0
    baseline_quantile: float = 0.10
    # peak detection
    smoothing_halfwidth: float | None = None
    min_snr: float = 3.0
    expected_cv: float | None = None
    # partitioning
    min_quality: float = 2.0
    min_gap: float = 5.0
    max_gap: float = 50.0
    margin_mult: float = 6.0
    floor_frac: float = 0.01
    # EM
    epsilon: float = DEFAULT_EPSILON
    alpha_min: float = 1e-3
    sigma_min_cv_mult: float = 0.5
    max_iters: int = 500
    rel_tol: float = 1e-6
    k_max_cap: int | None = None
    patience: int | None = 3
    # post-processing
    postprocess: bool = True
    filter: bool = True
    merge: bool = True
    mz_thr: float = 0.3
    sigma_thr: float = 0.05
    # execution
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if self.k_max_cap is not None and self.k_max_cap < 1:
            raise ConfigError("k_max_cap must be at least 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be at least 1")
        MergePolicy(self.mz_thr, self.sigma_thr)

    def em_config(self, avg_cv: float) -> EmConfig:
        return EmConfig(self.alpha_min, self.sigma_min_cv_mult, self.max_iters, self.rel_tol, avg_cv)

    def merge_policy(self) -> MergePolicy:
        return MergePolicy(self.mz_thr, self.sigma_thr)

    def replace(self, **changes) -> "PipelineConfig":
        unknown = set(changes) - set(self.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(name: str, raw: str, annotation: str):
    raw = raw.strip()
    optional = "None" in annotation
    if optional and raw.lower() in {"", "none", "null"}:
        return None
    try:
        if annotation.startswith("bool"):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if annotation.startswith("int"):
            return int(raw)
        if annotation.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None
    return raw


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    base = base or PipelineConfig()
    fields = {f.name: str(f.type) for f in dataclasses.fields(PipelineConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        changes[key] = _parse_value(key, raw, fields[key])
    return base.replace(**changes)


def load_config(path: str | Path | None, overrides: dict | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        cfg = parse_config_text(text, cfg)
    if overrides:
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    return cfg


def config_to_text(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ stages


def preprocess_spectra(spectra: Spectrum | SpectrumSet, cfg: PipelineConfig) -> Spectrum:
    """Average (for sets) and baseline-correct."""
    spectrum = mean_spectrum(spectra) if isinstance(spectra, SpectrumSet) else spectra
    if not cfg.baseline:
        return spectrum
    return correct_baseline(spectrum, estimate_baseline(spectrum, cfg.baseline_window, cfg.baseline_quantile))


def detect_stage(spectrum: Spectrum, cfg: PipelineConfig) -> PeakList:
    return detect_peaks(spectrum, cfg.smoothing_halfwidth, cfg.min_snr, cfg.expected_cv)


def _splitter_task(args):
    spectrum, anchor, avg_cv, cfg = args
    seg = extract_splitter_segment(spectrum, anchor, avg_cv, cfg.margin_mult)
    warped = warp_down(seg, default_taper(anchor, avg_cv))
    expected = int(round(seg.width / (avg_cv * anchor))) if avg_cv > 0 else 3
    k_max = max(3, expected)
    if cfg.k_max_cap is not None:
        k_max = min(k_max, cfg.k_max_cap)
    try:
        fit = select_model(warped, range(1, k_max + 1), cfg.epsilon, cfg.em_config(avg_cv), cfg.patience)
        splitter = extract_splitter(fit.model, anchor, warped.real_range)
    except (SplitterRejected, DegenerateFitError) as exc:
        return None, {"anchor": anchor, "rejected": str(exc)}
    diag = {"anchor": anchor, "n_min": seg.n_min, "n_max": seg.n_max, "kept": len(splitter.components),
            **fit.diagnostics()}
    return splitter, diag


def _segment_task(args):
    segment, avg_cv, cfg = args
    cap = k_cap(segment.width, segment.center, avg_cv)
    if cfg.k_max_cap is not None:
        cap = min(cap, cfg.k_max_cap)
    try:
        fit = select_model(segment, range(1, cap + 1), cfg.epsilon, cfg.em_config(avg_cv), cfg.patience)
    except DegenerateFitError as exc:
        return None, {"n_min": segment.n_min, "n_max": segment.n_max, "failed": str(exc)}
    return fit, {"n_min": segment.n_min, "n_max": segment.n_max, **fit.diagnostics()}


def _run_tasks(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


@dataclass(frozen=True, eq=False)
class Partition:
    avg_cv: float
    clear_peaks: PeakList
    splitters: tuple[Splitter, ...]
    residual: Spectrum
    segments: tuple[Segment, ...]
    diagnostics: dict

    def manifest(self, residual_path: str | None = None, spectrum_path: str | None = None) -> dict:
        return {
            "avg_cv": self.avg_cv,
            "spectrum": spectrum_path,
            "residual": residual_path,
            "anchors": [sp.anchor for sp in self.splitters],
            "splitters": [sp.to_dict() for sp in self.splitters],
            "segments": [{"n_min": s.n_min, "n_max": s.n_max} for s in self.segments],
            "diagnostics": self.diagnostics,
        }


def partition_stage(spectrum: Spectrum, peaks: PeakList, cfg: PipelineConfig) -> Partition:
    """Pick clear peaks, fit splitter-segments, subtract splitters and cut segments."""
    try:
        cv = average_cv(peaks)
    except DataError as exc:
        raise StageError("partition", exc) from exc
    clear = pick_clear_peaks(peaks, cv, cfg.min_quality, cfg.min_gap, cfg.max_gap)
    results = _run_tasks(_splitter_task, [(spectrum, p.position, cv, cfg) for p in clear], cfg.workers)
    splitters = tuple(sp for sp, _ in results if sp is not None)
    residual = subtract_splitters(spectrum, splitters)
    segments = tuple(partition_segments(residual, splitters, cfg.floor_frac, cfg.alpha_min))
    diagnostics = {
        "n_peaks": len(peaks),
        "avg_cv": cv,
        "n_clear_peaks": len(clear),
        "rejected_anchors": [d["anchor"] for sp, d in results if sp is None],
        "splitters": [d for sp, d in results if sp is not None],
    }
    return Partition(cv, clear, splitters, residual, segments, diagnostics)


def segments_from_manifest(residual: Spectrum, manifest: dict) -> tuple[Segment, ...]:
    return tuple(Segment.from_spectrum(residual, int(s["n_min"]), int(s["n_max"])) for s in manifest["segments"])


def partition_from_manifest(manifest: dict, residual: Spectrum) -> Partition:
    """Rebuild a :class:`Partition` from its JSON manifest and residual spectrum."""
    try:
        splitters = tuple(Splitter.from_dict(d) for d in manifest["splitters"])
        segments = segments_from_manifest(residual, manifest)
        return Partition(float(manifest["avg_cv"]), PeakList(), splitters, residual, segments,
                         dict(manifest.get("diagnostics", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed partition manifest: {exc}") from exc


def decompose_stage(spectrum: Spectrum, part: Partition, cfg: PipelineConfig) -> tuple[MixtureModel, dict]:
    """Fit every segment and aggregate with the splitters into one model."""
    results = _run_tasks(_segment_task, [(s, part.avg_cv, cfg) for s in part.segments], cfg.workers)
    fits = [f for f, _ in results if f is not None]
    try:
        model = aggregate(part.splitters, fits, spectrum)
    except DataError as exc:
        raise StageError("decompose", exc) from exc
    diagnostics = dict(part.diagnostics)
    diagnostics["segments"] = [d for _, d in results]
    diagnostics["K_decomposed"] = model.K
    return model, diagnostics


def postprocess_stage(model: MixtureModel, cfg: PipelineConfig) -> MixtureModel:
    if not cfg.postprocess:
        return model
    if cfg.filter:
        model = filter_noise_components(model)
    if cfg.merge:
        model = merge_components(model, cfg.merge_policy())
    return model


def decompose(spectrum: Spectrum, cfg: PipelineConfig) -> tuple[MixtureModel, dict]:
    """Unpost-processed whole-spectrum model of a baseline-corrected spectrum."""
    peaks = detect_stage(spectrum, cfg)
    part = partition_stage(spectrum, peaks, cfg)
    return decompose_stage(spectrum, part, cfg)


def run_pipeline(spectra: Spectrum | SpectrumSet, cfg: PipelineConfig | None = None,
                 preprocessed: bool = False) -> tuple[MixtureModel, dict]:
    """Full decomposition of a raw spectrum (or spectrum set, averaged first)."""
    cfg = cfg or PipelineConfig()
    spectrum = spectra if preprocessed else preprocess_spectra(spectra, cfg)
    model, diagnostics = decompose(spectrum, cfg)
    final = postprocess_stage(model, cfg)
    diagnostics["K_final"] = final.K
    return final, diagnostics


def gmm_peak_positions(model: MixtureModel) -> np.ndarray:
    """Component means serve as detected peak positions."""
    return model.mu


def local_maxima_positions(spectrum: Spectrum, cfg: PipelineConfig | None = None) -> np.ndarray:
    cfg = cfg or PipelineConfig()
    return detect_stage(spectrum, cfg).positions


_POSTPROCESS_KEYS = {"postprocess", "filter", "merge", "mz_thr", "sigma_thr"}


def sweep_pipeline(spectrum: Spectrum, truth: Sequence[float], parameter: str, values: Sequence,
                   cfg: PipelineConfig | None = None, rel_tol: float = 0.003) -> SweepTable:
    """Run the pipeline for each value of one configuration key on a corrected spectrum.

    When only a post-processing key varies, the decomposition is computed once.
    """
    cfg = cfg or PipelineConfig()
    if parameter not in cfg.__dataclass_fields__:
        raise ConfigError(f"unknown configuration key {parameter!r}")
    cached: dict = {}

    def detect(value):
        point = cfg.replace(**{parameter: value})
        if parameter in _POSTPROCESS_KEYS:
            if "model" not in cached:
                cached["model"], _ = decompose(spectrum, cfg)
            return gmm_peak_positions(postprocess_stage(cached["model"], point))
        model, _ = run_pipeline(spectrum, point, preprocessed=True)
        return gmm_peak_positions(model)

    return sweep_parameter(parameter, values, detect, truth, rel_tol)
