"""Local-maxima peak detection, FWHH estimation and peak quality scores.

This detector doubles as the baseline method that mixture-based detection is
compared against in the evaluation harness.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .core import FWHH_FACTOR, Spectrum
from .errors import DataError

QUALITY_CAP = 1e12
DEFAULT_MIN_SNR = 3.0
DEFAULT_SEARCH_SIGMAS = 20.0
_MAD_TO_STD = 1.4826
# maxima below this fraction of the tallest one are numerical ripple, not peaks
_RELATIVE_FLOOR = 1e-9


@dataclass(frozen=True)
class Peak:
    position: float
    height: float
    fwhh: float
    quality: float = 0.0

    def __post_init__(self):
        if not self.height > 0:
            raise DataError(f"peak height must be positive, got {self.height}")
        if not self.fwhh > 0:
            raise DataError(f"peak FWHH must be positive, got {self.fwhh}")
        if self.quality < 0:
            raise DataError("peak quality must be nonnegative")


@dataclass(frozen=True)
class PeakList:
    peaks: tuple[Peak, ...] = ()
    source: str = ""

    def __post_init__(self):
        peaks = tuple(sorted(self.peaks, key=lambda p: p.position))
        pos = [p.position for p in peaks]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise DataError("peak positions must be strictly increasing")
        object.__setattr__(self, "peaks", peaks)

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self) -> Iterator[Peak]:
        return iter(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks], dtype=float)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.peaks], dtype=float)


def noise_scale(intensity: np.ndarray) -> float:
    """Robust white-noise std estimate from the MAD of first differences."""
    d = np.diff(np.asarray(intensity, dtype=float))
    if d.size == 0:
        return 0.0
    mad = np.median(np.abs(d - np.median(d)))
    return float(_MAD_TO_STD * mad / math.sqrt(2.0))


def kernel_sigma_da(halfwidth_da: float) -> float:
    """Standard deviation of a Gaussian kernel with the given half width at half maximum."""
    return halfwidth_da / math.sqrt(2.0 * math.log(2.0))


def smooth(spectrum: Spectrum, halfwidth_da: float) -> np.ndarray:
    """Gaussian-kernel smoothing; the kernel width is converted with the median grid step."""
    if halfwidth_da <= 0:
        return np.array(spectrum.intensity)
    step = float(np.median(np.diff(spectrum.mz)))
    return gaussian_filter1d(spectrum.intensity, kernel_sigma_da(halfwidth_da) / step, mode="nearest")


def default_smoothing_halfwidth(spectrum: Spectrum, expected_cv: float | None = None) -> float:
    step = float(np.median(np.diff(spectrum.mz)))
    hw = 3.0 * step
    if expected_cv:
        hw = max(hw, 0.25 * expected_cv * float(np.median(spectrum.mz)))
    return hw


def _half_crossing(mz, ys, i, half, direction) -> float | None:
    """Distance from the apex to the half-height crossing, or None if cut off."""
    j = i
    n = ys.size
    while True:
        k = j + direction
        if k < 0 or k >= n:
            return None
        if ys[k] > ys[j]:
            return None  # rising again before reaching half height: neighbour peak
        if ys[k] <= half:
            # linear interpolation between j (above) and k (at/below)
            t = (ys[j] - half) / (ys[j] - ys[k]) if ys[j] != ys[k] else 0.0
            x = mz[j] + t * (mz[k] - mz[j])
            return abs(x - mz[i])
        j = k


def _curvature_fwhh(mz, ys, i) -> float | None:
    if i == 0 or i == ys.size - 1:
        return None
    h1, h2 = mz[i] - mz[i - 1], mz[i + 1] - mz[i]
    d2 = 2.0 * (h1 * ys[i + 1] - (h1 + h2) * ys[i] + h2 * ys[i - 1]) / (h1 * h2 * (h1 + h2))
    if not d2 < 0:
        return None
    return FWHH_FACTOR * math.sqrt(-ys[i] / d2)


def _measure_fwhh(mz, ys, i) -> float:
    half = ys[i] / 2.0
    left = _half_crossing(mz, ys, i, half, -1)
    right = _half_crossing(mz, ys, i, half, +1)
    if left is not None and right is not None:
        return left + right
    if left is not None or right is not None:
        return 2.0 * (left if left is not None else right)
    width = _curvature_fwhh(mz, ys, i)
    if width is None:
        width = mz[min(i + 1, mz.size - 1)] - mz[max(i - 1, 0)]
    return width


def detect_peaks(
    spectrum: Spectrum,
    smoothing_halfwidth_da: float | None = None,
    min_snr: float = DEFAULT_MIN_SNR,
    expected_cv: float | None = None,
    search_sigmas: float = DEFAULT_SEARCH_SIGMAS,
    source: str = "",
) -> PeakList:
    """Strict local maxima of the smoothed signal above ``min_snr`` times the noise scale.

    FWHH is measured on the smoothed signal from the half-height crossings and
    corrected in quadrature for the kernel width. Each peak's quality is the
    ratio of its height to the higher of the two neighbouring valley floors.
    """
    if smoothing_halfwidth_da is None:
        smoothing_halfwidth_da = default_smoothing_halfwidth(spectrum, expected_cv)
    mz = spectrum.mz
    ys = smooth(spectrum, smoothing_halfwidth_da)
    if ys.size < 3 or not np.any(ys > 0):
        return PeakList((), source)

    threshold = max(min_snr * noise_scale(spectrum.intensity), _RELATIVE_FLOOR * float(ys.max()))
    inner = ys[1:-1]
    is_max = (inner > ys[:-2]) & (inner > ys[2:]) & (inner >= threshold) & (inner > 0)
    idx = np.flatnonzero(is_max) + 1
    if idx.size == 0:
        return PeakList((), source)

    kernel_fwhh = 2.0 * smoothing_halfwidth_da if smoothing_halfwidth_da > 0 else 0.0
    step = float(np.median(np.diff(mz)))
    widths = []
    for i in idx:
        w = _measure_fwhh(mz, ys, i)
        w = math.sqrt(w * w - kernel_fwhh * kernel_fwhh) if w > kernel_fwhh else 0.0
        widths.append(max(w, step))
    widths = np.array(widths)

    positions = mz[idx]
    cv = float(np.mean(widths / positions))
    smoothed = spectrum.with_intensity(np.maximum(ys, 0.0))
    peaks = []
    for j, i in enumerate(idx):
        bounds = (
            positions[j - 1] if j > 0 else None,
            positions[j + 1] if j + 1 < idx.size else None,
        )
        p = Peak(float(positions[j]), float(ys[i]), float(widths[j]))
        hw = search_sigmas * cv * p.position / FWHH_FACTOR
        q = peak_quality(smoothed, p, hw, bounds=bounds)
        peaks.append(Peak(p.position, p.height, p.fwhh, q))
    return PeakList(tuple(peaks), source)


def average_cv(peaklist: PeakList | Sequence[Peak]) -> float:
    """Mean of FWHH / position over all peaks (FWHH-based, not sigma-based)."""
    peaks = list(peaklist)
    if not peaks:
        raise DataError("no peaks for scale estimation")
    return float(np.mean([p.fwhh / p.position for p in peaks]))


def peak_quality(
    spectrum: Spectrum,
    peak: Peak,
    search_halfwidth_da: float,
    bounds: tuple[float | None, float | None] = (None, None),
) -> float:
    """Peak height over the higher of the lowest points on either side.

    Each side is searched up to ``search_halfwidth_da`` away, stopping early at
    the neighbouring detected peak given in ``bounds``. Returns
    ``QUALITY_CAP`` when both valley floors are zero.
    """
    mz, y = spectrum.mz, spectrum.intensity
    p = peak.position
    if p < mz[0] or p > mz[-1]:
        raise DataError(f"peak at {p} lies outside the spectrum range")
    left_lim = p - search_halfwidth_da
    right_lim = p + search_halfwidth_da
    if bounds[0] is not None:
        left_lim = max(left_lim, bounds[0])
    if bounds[1] is not None:
        right_lim = min(right_lim, bounds[1])
    i = spectrum.nearest_index(p)
    lo = int(np.searchsorted(mz, left_lim, side="left"))
    hi = int(np.searchsorted(mz, right_lim, side="right"))
    left = y[lo:i]
    right = y[i + 1 : hi]
    floors = [float(side.min()) for side in (left, right) if side.size]
    floor = max(floors) if floors else 0.0
    if floor <= 0:
        return QUALITY_CAP
    return min(peak.height / floor, QUALITY_CAP)


PEAK_COLUMNS = ("position", "height", "fwhh", "quality")


def write_peaks_csv(peaks: PeakList, path: str | Path) -> None:
    lines = [",".join(PEAK_COLUMNS)]
    lines.extend(",".join(repr(float(getattr(p, c))) for c in PEAK_COLUMNS) for p in peaks)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_peaks_csv(path: str | Path) -> PeakList:
    """Read a peak table written by :func:`write_peaks_csv`."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read peak table {path}: {exc}") from exc
    try:
        peaks = tuple(Peak(*(float(r[c]) for c in PEAK_COLUMNS)) for r in rows)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed peak table ({exc})") from exc
    return PeakList(peaks, str(path))


def read_positions(path: str | Path) -> np.ndarray:
    """First column (or the ``position``/``mz`` column) of a CSV of detected peaks."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and "".join(r).strip()]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    col, start = 0, 0
    if rows:
        header = [h.strip().lower() for h in rows[0]]
        try:
            float(header[0])
        except ValueError:
            start = 1
            for name in ("position", "mz", "mu"):
                if name in header:
                    col = header.index(name)
                    break
    try:
        return np.array([float(r[col]) for r in rows[start:]], dtype=float)
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed position column ({exc})") from exc
