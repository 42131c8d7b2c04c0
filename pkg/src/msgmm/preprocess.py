"""Mean spectrum and baseline estimation/removal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import Spectrum, SpectrumSet
from .errors import ConfigError, DataError

DEFAULT_BASELINE_WINDOW = 200.0
DEFAULT_BASELINE_QUANTILE = 0.10


@dataclass(frozen=True, eq=False)
class BaselineEstimate:
    baseline: np.ndarray
    window_da: float
    quantile: float
    anchors_mz: np.ndarray
    anchors_value: np.ndarray


def mean_spectrum(spectra: SpectrumSet) -> Spectrum:
    return Spectrum(spectra.mz, spectra.intensities.mean(axis=0))


def estimate_baseline(
    spectrum: Spectrum,
    window_da: float = DEFAULT_BASELINE_WINDOW,
    quantile: float = DEFAULT_BASELINE_QUANTILE,
) -> BaselineEstimate:
    """Sliding-window quantile baseline.

    Windows of width ``window_da`` are centred every ``window_da / 2``
    starting at the first grid point (edge windows are clipped to the data).
    The per-window quantiles are joined by a monotone piecewise-cubic
    interpolant and clamped at zero.
    """
    mz, y = spectrum.mz, spectrum.intensity
    span = mz[-1] - mz[0]
    if not window_da > 0:
        raise ConfigError(f"baseline window must be positive, got {window_da}")
    if window_da >= span:
        raise ConfigError(f"baseline window {window_da} Da exceeds spectrum span {span:.6g} Da")
    if not 0 < quantile <= 0.5:
        raise ConfigError(f"baseline quantile must lie in (0, 0.5], got {quantile}")

    step = window_da / 2.0
    n_anchor = int(np.ceil(span / step)) + 1
    centers = mz[0] + step * np.arange(n_anchor)
    centers[-1] = min(centers[-1], mz[-1])
    lo = np.searchsorted(mz, centers - window_da / 2.0, side="left")
    hi = np.searchsorted(mz, centers + window_da / 2.0, side="right")
    values = np.array([np.quantile(y[a:b], quantile) for a, b in zip(lo, hi)])
    # the last centre may sit closer than `step` to its predecessor; keep strictly increasing
    keep = np.concatenate([[True], np.diff(centers) > 0])
    centers, values = centers[keep], values[keep]

    baseline = PchipInterpolator(centers, values, extrapolate=True)(mz)
    baseline = np.maximum(baseline, 0.0)
    baseline.setflags(write=False)
    return BaselineEstimate(baseline, float(window_da), float(quantile), centers, values)


def correct_baseline(spectrum: Spectrum, baseline: BaselineEstimate | np.ndarray) -> Spectrum:
    """Subtract the baseline and cut negative values off."""
    b = baseline.baseline if isinstance(baseline, BaselineEstimate) else np.asarray(baseline, dtype=float)
    if b.shape != spectrum.intensity.shape:
        raise DataError(f"baseline length {b.size} does not match spectrum length {len(spectrum)}")
    return spectrum.with_intensity(np.maximum(spectrum.intensity - b, 0.0))
