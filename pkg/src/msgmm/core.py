"""Spectra, Gaussian mixtures and the density <-> ion-count scaling identities."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

#: FWHH of a Gaussian divided by its standard deviation, 2*sqrt(2 ln 2).
FWHH_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_ALPHA_SUM_TOL = 1e-9


def _frozen(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A single spectrum: strictly increasing m/z grid and nonnegative counts."""

    mz: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        mz = _frozen(self.mz, "mz", 1)
        intensity = _frozen(self.intensity, "intensity", 1)
        if mz.size != intensity.size:
            raise DataError(f"mz and intensity lengths differ ({mz.size} != {intensity.size})")
        if mz.size < 2:
            raise DataError("a spectrum needs at least two points")
        if np.any(np.diff(mz) <= 0):
            raise DataError("mz must be strictly increasing")
        if np.any(intensity < 0):
            raise DataError("intensity must be nonnegative")
        object.__setattr__(self, "mz", mz)
        object.__setattr__(self, "intensity", intensity)

    def __len__(self) -> int:
        return self.mz.size

    def with_intensity(self, intensity) -> "Spectrum":
        return Spectrum(self.mz, intensity)

    def nearest_index(self, position: float) -> int:
        """Index of the grid point closest to ``position``."""
        i = int(np.searchsorted(self.mz, position))
        if i <= 0:
            return 0
        if i >= self.mz.size:
            return self.mz.size - 1
        return i if self.mz[i] - position < position - self.mz[i - 1] else i - 1


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    """M spectra registered on one shared m/z grid (rows are spectra)."""

    mz: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        mz = _frozen(self.mz, "mz", 1)
        intensities = _frozen(np.atleast_2d(self.intensities), "intensities", 2)
        if intensities.shape[0] < 1:
            raise DataError("a spectrum set needs at least one spectrum")
        if intensities.shape[1] != mz.size:
            raise DataError("intensity rows must match the mz grid length")
        if mz.size < 2 or np.any(np.diff(mz) <= 0):
            raise DataError("mz must be strictly increasing with at least two points")
        if np.any(intensities < 0):
            raise DataError("intensities must be nonnegative")
        object.__setattr__(self, "mz", mz)
        object.__setattr__(self, "intensities", intensities)

    def __len__(self) -> int:
        return self.intensities.shape[0]

    def __getitem__(self, m: int) -> Spectrum:
        return Spectrum(self.mz, self.intensities[m])


def bin_widths(mz: np.ndarray) -> np.ndarray:
    """Width of the bin centred at each grid point.

    Interior points use the centred difference ``(mz[n+1] - mz[n-1]) / 2``;
    the two end points use the one-sided neighbour difference.
    """
    mz = np.asarray(mz, dtype=np.float64)
    if mz.size < 2:
        raise DataError("bin widths need at least two grid points")
    delta = np.empty_like(mz)
    delta[1:-1] = (mz[2:] - mz[:-2]) / 2.0
    delta[0] = mz[1] - mz[0]
    delta[-1] = mz[-1] - mz[-2]
    return delta


@dataclass(frozen=True)
class GaussianComponent:
    alpha: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DataError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.alpha <= 1.0 + _ALPHA_SUM_TOL):
            raise DataError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not math.isfinite(self.mu):
            raise DataError("mu must be finite")


def _sort_key(c: GaussianComponent):
    return (c.mu, c.sigma)


@dataclass(frozen=True)
class MixtureModel:
    """Gaussian mixture with local scale ``s`` (counts) and total ion current.

    Components are kept sorted by mean (ties: smaller sigma first). The local
    weights ``w_k = scale * alpha_k`` are derived on demand.
    """

    components: tuple[GaussianComponent, ...]
    scale: float = 1.0
    tic: float = 0.0

    def __post_init__(self):
        comps = tuple(sorted(self.components, key=_sort_key))
        if not comps:
            raise DataError("a mixture model needs at least one component")
        total = math.fsum(c.alpha for c in comps)
        if abs(total - 1.0) > _ALPHA_SUM_TOL:
            raise DataError(f"mixing proportions sum to {total!r}, expected 1")
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise DataError(f"scale must be finite and nonnegative, got {self.scale}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_weights(cls, weights, mu, sigma, tic: float = 0.0) -> "MixtureModel":
        """Build a model from count-scale weights; alpha = w / sum(w), scale = sum(w)."""
        weights = np.asarray(weights, dtype=np.float64)
        total = float(weights.sum())
        if weights.size == 0 or total <= 0:
            raise DataError("weights must be nonempty with a positive sum")
        alpha = weights / total
        comps = [GaussianComponent(float(a), float(m), float(s)) for a, m, s in zip(alpha, mu, sigma)]
        return cls(tuple(comps), scale=total, tic=tic)

    @classmethod
    def from_arrays(cls, alpha, mu, sigma, scale: float = 1.0, tic: float = 0.0) -> "MixtureModel":
        alpha = np.asarray(alpha, dtype=np.float64)
        alpha = alpha / alpha.sum()
        comps = [GaussianComponent(float(a), float(m), float(s)) for a, m, s in zip(alpha, mu, sigma)]
        return cls(tuple(comps), scale=scale, tic=tic)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    @property
    def mu(self) -> np.ndarray:
        return np.array([c.mu for c in self.components])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components])

    @property
    def weights(self) -> np.ndarray:
        return self.scale * self.alpha

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "tic": self.tic,
            "components": [{"alpha": c.alpha, "mu": c.mu, "sigma": c.sigma} for c in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureModel":
        try:
            comps = tuple(
                GaussianComponent(float(c["alpha"]), float(c["mu"]), float(c["sigma"]))
                for c in data["components"]
            )
            return cls(comps, scale=float(data["scale"]), tic=float(data.get("tic", 0.0)))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed mixture model JSON: {exc}") from exc


def gaussian_pdf(x, mu, sigma) -> np.ndarray:
    """Gaussian density; broadcasts ``x`` against ``mu``/``sigma``."""
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * _SQRT_2PI)


def component_densities(x, mu, sigma) -> np.ndarray:
    """Matrix of component densities, shape (K, N)."""
    mu = np.asarray(mu, dtype=np.float64)[:, None]
    sigma = np.asarray(sigma, dtype=np.float64)[:, None]
    return gaussian_pdf(np.asarray(x, dtype=np.float64)[None, :], mu, sigma)


def total_ion_current(spectrum: Spectrum) -> float:
    return float(np.sum(spectrum.intensity))


def mixture_density(model: MixtureModel, x) -> np.ndarray | float:
    """Probability density of the mixture at ``x`` (per Da)."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    dens = model.alpha @ component_densities(xs, model.mu, model.sigma)
    return float(dens[0]) if scalar else dens


def _check_range(n_points: int, n_min: int, n_max: int | None) -> tuple[int, int]:
    if n_max is None:
        n_max = n_points - 1
    if n_max < n_min:
        raise DataError(f"empty index range [{n_min}, {n_max}]")
    if n_min < 0 or n_max >= n_points:
        raise DataError(f"index range [{n_min}, {n_max}] outside grid of {n_points} points")
    return n_min, n_max


def render_components(model_or_components, mz, scale: float | None = None) -> np.ndarray:
    """Per-component count signals ``w_k f_k(x_n)``, shape (K, N)."""
    if isinstance(model_or_components, MixtureModel):
        comps = model_or_components.components
        scale = model_or_components.scale if scale is None else scale
    else:
        comps = tuple(model_or_components)
        scale = 1.0 if scale is None else scale
    if not comps:
        return np.zeros((0, np.size(mz)))
    alpha = np.array([c.alpha for c in comps])
    dens = component_densities(mz, [c.mu for c in comps], [c.sigma for c in comps])
    return scale * alpha[:, None] * dens


def render_scaled(model: MixtureModel, mz, n_min: int = 0, n_max: int | None = None) -> np.ndarray:
    """Locally scaled model signal ``sum_k w_k f_k(x_n)`` for ``n_min <= n <= n_max``."""
    mz = np.asarray(mz, dtype=np.float64)
    n_min, n_max = _check_range(mz.size, n_min, n_max)
    x = mz[n_min : n_max + 1]
    return model.scale * mixture_density(model, x)


def render_global(model: MixtureModel, mz) -> np.ndarray:
    """Globally scaled model ``tic * delta_n * f(x_n)`` over the whole grid."""
    mz = np.asarray(mz, dtype=np.float64)
    return model.tic * bin_widths(mz) * mixture_density(model, mz)


def local_scale(spectrum: Spectrum, model: MixtureModel, n_min: int = 0, n_max: int | None = None) -> float:
    """Scale factor mapping the mixture density onto the counts of a fragment."""
    n_min, n_max = _check_range(len(spectrum), n_min, n_max)
    return scale_factor(spectrum.mz[n_min : n_max + 1], spectrum.intensity[n_min : n_max + 1],
                        model.alpha, model.mu, model.sigma)


def scale_factor(x, y, alpha, mu, sigma) -> float:
    denom = float(np.sum(np.asarray(alpha) @ component_densities(x, mu, sigma)))
    if not denom > 0:
        raise DataError("model density vanishes on the fitted range; degenerate fit")
    return float(np.sum(y)) / denom


# --------------------------------------------------------------------------- I/O


def read_spectrum_csv(path: str | Path) -> Spectrum:
    """Read a two-column ``mz,intensity`` CSV (header optional)."""
    mz, inten = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{i + 1}: expected two columns")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise DataError(f"{path}:{i + 1}: non-numeric value") from None
            mz.append(x)
            inten.append(y)
    return Spectrum(np.array(mz), np.array(inten))


def _fmt(value: float) -> str:
    return repr(float(value))


def write_spectrum_csv(spectrum: Spectrum, path: str | Path) -> None:
    lines = ["mz,intensity"]
    lines.extend(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(spectrum.mz, spectrum.intensity))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(data, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_model_json(model: MixtureModel, path: str | Path, diagnostics: dict | None = None) -> None:
    data = model.to_dict()
    if diagnostics is not None:
        data["diagnostics"] = diagnostics
    write_json(data, path)


def read_model_json(path: str | Path) -> tuple[MixtureModel, dict | None]:
    data = read_json(path)
    return MixtureModel.from_dict(data), data.get("diagnostics")


def components_to_list(components: Iterable[GaussianComponent]) -> list[dict]:
    return [{"alpha": c.alpha, "mu": c.mu, "sigma": c.sigma} for c in components]


def components_from_list(items: Sequence[dict]) -> tuple[GaussianComponent, ...]:
    return tuple(GaussianComponent(float(c["alpha"]), float(c["mu"]), float(c["sigma"])) for c in items)
