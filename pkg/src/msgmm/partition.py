"""Splitting a spectrum into independently fittable fragments.

Clear peaks anchor *splitter-segments*; the reliable part of each
splitter-segment fit (the *splitter*) is subtracted from the spectrum and
the residual is cut at the anchors into *segments*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FWHH_FACTOR, GaussianComponent, MixtureModel, Spectrum, render_components
from .errors import DataError, SplitterRejected
from .peaks import Peak, PeakList

SPLITTER_SEGMENT = "splitter_segment"
SEGMENT = "segment"

DEFAULT_MIN_QUALITY = 2.0
DEFAULT_MIN_GAP = 5.0
DEFAULT_MAX_GAP = 50.0
FALLBACK_MIN_QUALITY = 1.2
DEFAULT_MARGIN_MULT = 6.0
DEFAULT_FLOOR_FRAC = 0.01


@dataclass(frozen=True, eq=False)
class Segment:
    """Index range ``[n_min, n_max]`` of a parent spectrum with its data.

    ``pad_left``/``pad_right`` count synthetic points added by
    :func:`warp_down`; ``mz`` and ``intensity`` include them.
    """

    n_min: int
    n_max: int
    mz: np.ndarray
    intensity: np.ndarray
    kind: str = SEGMENT
    anchor: float | None = None
    pad_left: int = 0
    pad_right: int = 0

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise DataError(f"segment bounds reversed: {self.n_min} > {self.n_max}")
        if len(self.mz) != len(self.intensity):
            raise DataError("segment mz/intensity lengths differ")
        if len(self.mz) != self.n_max - self.n_min + 1 + self.pad_left + self.pad_right:
            raise DataError("segment data length inconsistent with its bounds")

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, n_min: int, n_max: int, kind: str = SEGMENT,
                      anchor: float | None = None) -> "Segment":
        sl = slice(n_min, n_max + 1)
        return cls(n_min, n_max, spectrum.mz[sl], spectrum.intensity[sl], kind, anchor)

    @property
    def real_range(self) -> tuple[float, float]:
        """m/z span of the non-synthetic part."""
        return float(self.mz[self.pad_left]), float(self.mz[len(self.mz) - 1 - self.pad_right])

    @property
    def mass(self) -> float:
        return float(np.sum(self.intensity))

    @property
    def width(self) -> float:
        lo, hi = self.real_range
        return hi - lo

    @property
    def center(self) -> float:
        lo, hi = self.real_range
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Splitter:
    """Reliable sub-model around a clear peak, rendered in counts as ``scale * alpha_k f_k``."""

    anchor: float
    components: tuple[GaussianComponent, ...]
    scale: float

    def __post_init__(self):
        for c in self.components:
            if not abs(c.mu - self.anchor) < 3.0 * c.sigma:
                raise DataError(f"splitter component at {c.mu} is not within 3 sigma of {self.anchor}")

    @property
    def weights(self) -> np.ndarray:
        return self.scale * np.array([c.alpha for c in self.components])

    def render(self, mz) -> np.ndarray:
        return render_components(self.components, mz, self.scale).sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor,
            "scale": self.scale,
            "components": [{"alpha": c.alpha, "mu": c.mu, "sigma": c.sigma} for c in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Splitter":
        comps = tuple(GaussianComponent(float(c["alpha"]), float(c["mu"]), float(c["sigma"]))
                      for c in data["components"])
        return cls(float(data["anchor"]), comps, float(data["scale"]))


def expected_fwhh(position: float, avg_cv: float) -> float:
    return avg_cv * position


def pick_clear_peaks(
    peaklist: PeakList,
    avg_cv: float,
    min_quality: float = DEFAULT_MIN_QUALITY,
    min_gap: float = DEFAULT_MIN_GAP,
    max_gap: float = DEFAULT_MAX_GAP,
) -> PeakList:
    """Greedy left-to-right choice of splitting peaks.

    Gaps are measured in expected FWHH at the left peak (``avg_cv * p``).
    From the last accepted peak, the first peak of quality >= ``min_quality``
    at least ``min_gap`` widths away opens a window ``min_gap`` widths wide and
    the best-quality qualifying peak in it is accepted. If no qualifying peak
    lies within ``max_gap`` widths, the best peak of quality >= 1.2 in that
    stretch is accepted instead.
    """
    peaks = list(peaklist)
    if not peaks:
        return PeakList((), peaklist.source)
    pos = np.array([p.position for p in peaks])
    qual = np.array([p.quality for p in peaks])
    accepted: list[Peak] = []
    last: float | None = None
    while True:
        if last is None:
            lo, hi = -math.inf, math.inf
        else:
            lo = last + min_gap * expected_fwhh(last, avg_cv)
            hi = last + max_gap * expected_fwhh(last, avg_cv)
        ahead = pos >= lo
        good = np.flatnonzero(ahead & (qual >= min_quality))
        choice = None
        if good.size and pos[good[0]] <= hi:
            first = pos[good[0]]
            w_end = min(first + min_gap * expected_fwhh(first, avg_cv), hi)
            window = good[pos[good] < w_end] if w_end > first else good[:1]
            choice = window[np.argmax(qual[window])]
        else:
            stretch = np.flatnonzero(ahead & (pos <= hi) & (qual >= FALLBACK_MIN_QUALITY))
            if stretch.size:
                choice = stretch[np.argmax(qual[stretch])]
            elif good.size:
                choice = good[0]
        if choice is None:
            break
        accepted.append(peaks[int(choice)])
        last = float(pos[choice])
    return PeakList(tuple(accepted), peaklist.source)


def extract_splitter_segment(
    spectrum: Spectrum,
    anchor: float,
    avg_cv: float,
    margin_mult: float = DEFAULT_MARGIN_MULT,
) -> Segment:
    """Cut ``anchor +/- margin_mult * avg_cv * anchor`` out of the spectrum."""
    mz = spectrum.mz
    if not mz[0] <= anchor <= mz[-1]:
        raise DataError(f"anchor {anchor} outside spectrum range [{mz[0]}, {mz[-1]}]")
    margin = margin_mult * avg_cv * anchor
    n_min = int(np.searchsorted(mz, anchor - margin, side="left"))
    n_max = int(np.searchsorted(mz, anchor + margin, side="right")) - 1
    i = spectrum.nearest_index(anchor)
    n_min, n_max = min(n_min, i), max(n_max, i)
    return Segment.from_spectrum(spectrum, n_min, n_max, SPLITTER_SEGMENT, anchor)


def warp_down(segment: Segment, taper_width: float) -> Segment:
    """Extend a segment with Gaussian tails that start at its border values.

    Points are added at the border grid spacing over ``taper_width`` on each
    side with values ``border * exp(-((x - border_x) / (taper_width / 3))**2)``.
    """
    if not taper_width > 0:
        raise DataError("taper width must be positive")
    mz, y = np.asarray(segment.mz), np.asarray(segment.intensity)
    if mz.size >= 2:
        step_l, step_r = mz[1] - mz[0], mz[-1] - mz[-2]
    else:
        step_l = step_r = taper_width / 10.0
    n_l = max(1, int(math.ceil(taper_width / step_l)))
    n_r = max(1, int(math.ceil(taper_width / step_r)))
    scale = taper_width / 3.0
    dl = step_l * np.arange(n_l, 0, -1)
    dr = step_r * np.arange(1, n_r + 1)
    left_x, right_x = mz[0] - dl, mz[-1] + dr
    left_y = y[0] * np.exp(-((dl / scale) ** 2))
    right_y = y[-1] * np.exp(-((dr / scale) ** 2))
    return Segment(
        segment.n_min, segment.n_max,
        np.concatenate([left_x, mz, right_x]),
        np.concatenate([left_y, y, right_y]),
        segment.kind, segment.anchor,
        segment.pad_left + n_l, segment.pad_right + n_r,
    )


def extract_splitter(model: MixtureModel, anchor: float, real_range: tuple[float, float] | None = None) -> Splitter:
    """Keep the components whose mean is within three sigma of the anchor.

    Components centred in the synthetic (warped) part of the segment, i.e.
    outside ``real_range``, are ignored. Raises :class:`SplitterRejected`
    when nothing survives.
    """
    kept = []
    for c in model.components:
        if not abs(c.mu - anchor) < 3.0 * c.sigma:
            continue
        if real_range is not None and not real_range[0] <= c.mu <= real_range[1]:
            continue
        kept.append(c)
    if not kept:
        raise SplitterRejected(f"splitter rejected: no component within 3 sigma of {anchor}")
    return Splitter(float(anchor), tuple(kept), float(model.scale))


def render_splitters(mz, splitters: Sequence[Splitter]) -> np.ndarray:
    total = np.zeros(np.size(mz))
    for sp in splitters:
        total += sp.render(mz)
    return total


def subtract_splitters(spectrum: Spectrum, splitters: Sequence[Splitter]) -> Spectrum:
    if not splitters:
        return spectrum
    residual = spectrum.intensity - render_splitters(spectrum.mz, splitters)
    return spectrum.with_intensity(np.maximum(residual, 0.0))


def partition_segments(
    residual: Spectrum,
    splitters: Sequence[Splitter],
    floor_frac: float = DEFAULT_FLOOR_FRAC,
    alpha_min: float = 1e-3,
) -> list[Segment]:
    """Cut the residual at the splitter anchors into trimmed segments.

    Each anchor's nearest grid index starts a new cut. Within a cut, leading
    and trailing points below ``floor_frac`` times the cut maximum are
    trimmed. Segments whose mass is below ``10 * alpha_min`` times the mean
    mass per cut are dropped.
    """
    y = residual.intensity
    n = y.size
    anchors = sorted(sp.anchor for sp in splitters)
    cuts = sorted({residual.nearest_index(a) for a in anchors} - {0})
    edges = [0, *cuts, n]
    total = float(y.sum())
    mean_share = total / (len(edges) - 1)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        part = y[a:b]
        if part.size == 0:
            continue
        peak = float(part.max())
        if peak <= 0:
            continue
        above = np.flatnonzero(part >= floor_frac * peak)
        lo, hi = a + int(above[0]), a + int(above[-1])
        mass = float(y[lo : hi + 1].sum())
        if mass < 10.0 * alpha_min * mean_share:
            continue
        out.append(Segment.from_spectrum(residual, lo, hi, SEGMENT))
    return out


def default_taper(anchor: float, avg_cv: float) -> float:
    """Three expected standard deviations at the anchor."""
    return 3.0 * avg_cv * anchor / FWHH_FACTOR
