"""Synthetic MALDI-ToF-like spectra with known ground truth.

A catalog of species (mass, prevalence, abundance) is drawn once per
dataset. Every sample then decides species presence by a Bernoulli trial,
draws a log-normal intensity and a jittered position for each present
species, renders Gaussian peaks whose FWHH is ``cv * position``, and adds a
two-exponential baseline plus ARMA(1, 6) noise before clamping at zero.

Seeding: ``np.random.SeedSequence(seed).spawn(1 + n_samples)``; child 0
drives the catalog and child ``m + 1`` drives sample ``m``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import FWHH_FACTOR, Spectrum, SpectrumSet, component_densities, write_json, write_spectrum_csv
from .errors import ConfigError

_ARMA_BURN_IN = 200


@dataclass(frozen=True)
class TrueComponent:
    mass: float
    prevalence: float
    abundance: float


@dataclass(frozen=True)
class BaselineParams:
    b1: float = 100.0
    b2: float = 3000.0
    b3: float = 80.0
    b4: float = 500.0

    def __post_init__(self):
        if not (self.b2 > 0 and self.b4 > 0):
            raise ConfigError("baseline decay constants b2, b4 must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.b1 * np.exp(-x / self.b2) - self.b3 * np.exp(-x / self.b4)


@dataclass(frozen=True)
class SimConfig:
    n_components: int = 100
    n_samples: int = 100
    mz_min: float = 2000.0
    mz_step: float = 0.8
    n_points: int = 10000
    seed: int = 0
    cv: float = 0.002
    position_jitter: float = 0.001
    intensity_var_coef: float = 1.45
    prevalence_beta: tuple[float, float] = (1.0, 0.2)
    abundance_shift: float = 100.0
    abundance_log_mean: float = 5.0
    abundance_log_sd: float = 1.0
    ar: tuple[float, ...] = (0.3,)
    ma: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1, 0.05, 0.02)
    noise_std: float = 1.0
    baseline: BaselineParams = field(default_factory=BaselineParams)
    noise: bool = True
    add_baseline: bool = True

    def __post_init__(self):
        if self.n_components < 1 or self.n_samples < 1:
            raise ConfigError("n_components and n_samples must be positive")
        if self.n_points < 2 or self.mz_step <= 0:
            raise ConfigError("the grid needs at least two points and a positive step")
        if self.cv <= 0 or self.noise_std < 0:
            raise ConfigError("cv must be positive and noise_std nonnegative")

    @property
    def grid(self) -> np.ndarray:
        return self.mz_min + self.mz_step * np.arange(self.n_points)

    @property
    def mz_max(self) -> float:
        return self.mz_min + self.mz_step * (self.n_points - 1)


def sample_catalog(config: SimConfig, rng: np.random.Generator) -> list[TrueComponent]:
    """Masses ~ U(grid), prevalence ~ Beta(1, 0.2), abundance = 100 + LogNormal(5, 1)."""
    n = config.n_components
    mass = rng.uniform(config.mz_min, config.mz_max, n)
    a, b = config.prevalence_beta
    prevalence = rng.beta(a, b, n)
    # Beta(1, b) rounds to exactly 0 only with probability ~0; guard the (0, 1] contract anyway
    prevalence = np.clip(prevalence, np.nextafter(0.0, 1.0), 1.0)
    abundance = config.abundance_shift + rng.lognormal(config.abundance_log_mean, config.abundance_log_sd, n)
    return [TrueComponent(float(m), float(p), float(ab)) for m, p, ab in zip(mass, prevalence, abundance)]


def lognormal_params(mean, var) -> tuple[np.ndarray, np.ndarray]:
    """Underlying normal (mu, sigma) of a log-normal with the given natural-scale moments."""
    mean = np.asarray(mean, dtype=float)
    s2 = np.log1p(np.asarray(var, dtype=float) / mean**2)
    return np.log(mean) - 0.5 * s2, np.sqrt(s2)


def draw_intensity(abundance, rng: np.random.Generator, var_coef: float = 1.45, size=None):
    """Log-normal peak intensity with mean ``abundance`` and variance ``var_coef * sqrt(abundance)``."""
    mu, sigma = lognormal_params(abundance, var_coef * np.sqrt(abundance))
    return rng.lognormal(mu, sigma, size)


def draw_position(mass, rng: np.random.Generator, jitter: float = 0.001, size=None):
    return rng.normal(mass, jitter * np.asarray(mass, dtype=float), size)


def arma_noise(n: int, rng: np.random.Generator, ar, ma, std: float) -> np.ndarray:
    """ARMA(p, q) series ``e_t = sum ar_i e_{t-i} + w_t + sum ma_j w_{t-j}``."""
    if std == 0:
        return np.zeros(n)
    w = rng.normal(0.0, std, n + _ARMA_BURN_IN)
    e = lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], w)
    return e[_ARMA_BURN_IN:]


def render_peaks(mz, positions, intensities, cv: float) -> np.ndarray:
    """Sum of Gaussians with areas ``intensities`` and FWHH ``cv * position``."""
    positions = np.asarray(positions, dtype=float)
    if positions.size == 0:
        return np.zeros(np.size(mz))
    sigma = cv * positions / FWHH_FACTOR
    return np.asarray(intensities, dtype=float) @ component_densities(mz, positions, sigma)


def realize_sample(catalog: list[TrueComponent], config: SimConfig, rng: np.random.Generator):
    """One spectrum and the list of peaks actually placed in it."""
    mass = np.array([c.mass for c in catalog])
    prevalence = np.array([c.prevalence for c in catalog])
    abundance = np.array([c.abundance for c in catalog])
    n = mass.size
    present = rng.random(n) < prevalence
    intensity = draw_intensity(abundance, rng, config.intensity_var_coef, n)
    position = draw_position(mass, rng, config.position_jitter, n)
    noise = arma_noise(config.n_points, rng, config.ar, config.ma, config.noise_std if config.noise else 0.0)

    mz = config.grid
    idx = np.flatnonzero(present)
    y = render_peaks(mz, position[idx], intensity[idx], config.cv)
    if config.add_baseline:
        y = y + config.baseline(mz)
    y = np.maximum(y + noise, 0.0)
    realized = [
        {"component": int(k), "position": float(position[k]), "intensity": float(intensity[k])} for k in idx
    ]
    return Spectrum(mz, y), realized


def generate_dataset(config: SimConfig):
    """Draw a catalog and ``n_samples`` spectra; returns ``(SpectrumSet, truth manifest)``."""
    children = np.random.SeedSequence(config.seed).spawn(1 + config.n_samples)
    catalog = sample_catalog(config, np.random.default_rng(children[0]))
    rows, samples = [], []
    for m in range(config.n_samples):
        spectrum, realized = realize_sample(catalog, config, np.random.default_rng(children[m + 1]))
        rows.append(spectrum.intensity)
        samples.append(realized)
    truth = {
        "config": config_to_dict(config),
        "catalog": [asdict(c) for c in catalog],
        "samples": samples,
    }
    return SpectrumSet(config.grid, np.vstack(rows)), truth


def config_to_dict(config: SimConfig) -> dict:
    d = asdict(config)
    d["prevalence_beta"] = list(config.prevalence_beta)
    d["ar"] = list(config.ar)
    d["ma"] = list(config.ma)
    return d


def truth_positions(truth: dict) -> np.ndarray:
    """Catalog masses: the reference peak positions used for evaluation."""
    return np.array([c["mass"] for c in truth["catalog"]], dtype=float)


def write_dataset(spectra: SpectrumSet, truth: dict, out_dir: str | Path) -> list[Path]:
    """Write ``sample_XXXX.csv`` files, ``mean.csv`` and ``truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, int(math.log10(max(len(spectra), 1))) + 1)
    paths = []
    for m in range(len(spectra)):
        p = out / f"sample_{m:0{width}d}.csv"
        write_spectrum_csv(spectra[m], p)
        paths.append(p)
    write_spectrum_csv(Spectrum(spectra.mz, spectra.intensities.mean(axis=0)), out / "mean.csv")
    write_json(truth, out / "truth.json")
    return paths
