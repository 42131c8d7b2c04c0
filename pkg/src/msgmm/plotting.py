"""Static SVG figures: spectrum/model overlays and parameter-sweep curves.

Figures are drawn with the object-oriented matplotlib API straight onto an
SVG canvas, with a fixed hash salt and no date stamp so identical inputs
give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .core import MixtureModel, Spectrum, component_densities, render_components
from .errors import DataError
from .evaluate import SweepTable

SIGNAL_COLOR = "black"
COMPONENT_COLOR = "green"
MODEL_COLOR = "red"
PEAK_COLOR = "blue"

_RC = {
    "svg.hashsalt": "msgmm",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 0.8,
}
_COMPONENT_SPAN = 4.0  # draw each component over mu +/- this many sigma


def _save(fig: Figure, out_path: str | Path) -> Path:
    out = Path(out_path)
    try:
        FigureCanvasSVG(fig).print_svg(str(out), metadata={"Date": None})
    except OSError as exc:
        raise DataError(f"cannot write figure {out}: {exc}") from exc
    return out


def _window(mz: np.ndarray, mz_range: tuple[float, float] | None) -> slice:
    if mz_range is None:
        return slice(0, mz.size)
    lo, hi = mz_range
    if not lo < hi:
        raise DataError(f"empty plot range [{lo}, {hi}]")
    a = int(np.searchsorted(mz, lo, side="left"))
    b = int(np.searchsorted(mz, hi, side="right"))
    if b - a < 2:
        raise DataError(f"plot range [{lo}, {hi}] holds fewer than two grid points")
    return slice(a, b)


def emit_plot(
    spectrum: Spectrum,
    model: MixtureModel | None,
    peaks: Sequence[float] | None,
    out_path: str | Path,
    mz_range: tuple[float, float] | None = None,
    title: str | None = None,
) -> Path:
    """Overlay a spectrum with its mixture model and write an SVG.

    The signal is drawn in black, each component in green (element id
    ``component-<k>``), the summed model in red and ``peaks`` as blue
    markers at the signal height. Only components whose mean lies in the
    plotted range are drawn.

    Parameters
    ----------
    spectrum : Spectrum
        Signal on the grid the model was fitted to.
    model : MixtureModel or None
        ``None`` gives a signal-only plot.
    peaks : sequence of float or None
        Positions (Da) of externally detected peaks.
    out_path : path
    mz_range : (float, float), optional
        Restrict the plot to this m/z window.
    """
    mz = np.asarray(spectrum.mz)
    sl = _window(mz, mz_range)
    x, y = mz[sl], np.asarray(spectrum.intensity)[sl]

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(8.0, 3.2))
        ax = fig.add_subplot(1, 1, 1)
        ax.plot(x, y, color=SIGNAL_COLOR, lw=0.7, label="signal", gid="signal")
        if model is not None:
            inside = [k for k, c in enumerate(model.components) if x[0] <= c.mu <= x[-1]]
            for n, k in enumerate(inside):
                c = model.components[k]
                lo = np.searchsorted(x, c.mu - _COMPONENT_SPAN * c.sigma)
                hi = np.searchsorted(x, c.mu + _COMPONENT_SPAN * c.sigma, side="right")
                xs = x[lo:hi]
                if xs.size < 2:
                    xs = np.array([c.mu - c.sigma, c.mu, c.mu + c.sigma])
                ys = render_components([c], xs, model.scale)[0]
                ax.plot(xs, ys, color=COMPONENT_COLOR, lw=0.6, gid=f"component-{k}",
                        label="components" if n == 0 else None)
            total = model.scale * (model.alpha @ component_densities(x, model.mu, model.sigma))
            ax.plot(x, total, color=MODEL_COLOR, lw=0.9, label="model", gid="model")
        if peaks is not None and len(peaks):
            p = np.asarray(peaks, dtype=float)
            p = p[(p >= x[0]) & (p <= x[-1])]
            if p.size:
                ax.plot(p, np.interp(p, x, y), ls="none", marker="*", ms=5, color=PEAK_COLOR,
                        label="peaks", gid="peaks")
        ax.set_xlim(x[0], x[-1])
        ax.set_xlabel("m/z [Da]")
        ax.set_ylabel("intensity")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", frameon=False, fontsize=7)
        fig.tight_layout()
        return _save(fig, out_path)


def emit_sweep_plot(table: SweepTable, out_path: str | Path) -> Path:
    """F1, 1 - FDR and sensitivity against the swept parameter."""
    ok = [(v, r) for v, r in zip(table.values, table.reports) if r is not None]
    if not ok:
        raise DataError("sweep has no successful points to plot")
    v = np.array([float(a) for a, _ in ok])
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(4.5, 3.2))
        ax = fig.add_subplot(1, 1, 1)
        ax.plot(v, [r.f1 for _, r in ok], "o-", color="black", label="F1", gid="f1")
        ax.plot(v, [1.0 - r.fdr for _, r in ok], "s--", color="grey", label="1 - FDR", gid="precision")
        ax.plot(v, [r.sensitivity for _, r in ok], "^:", color="grey", label="S", gid="sensitivity")
        best = table.best_value
        if best is not None:
            ax.axvline(float(best), color=MODEL_COLOR, lw=0.6, gid="best")
        ax.set_xlabel(table.parameter)
        ax.set_ylim(0.0, 1.02)
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        return _save(fig, out_path)
