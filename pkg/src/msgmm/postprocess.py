"""Aggregation of fragment models, noise-component filtering and merging."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GaussianComponent, MixtureModel, Spectrum, total_ion_current
from .em import FitResult, dp_boundaries, dp_tables, em_iterate
from .errors import ConfigError, DataError
from .partition import Splitter

logger = logging.getLogger(__name__)

DEFAULT_MZ_THR = 0.3
DEFAULT_SIGMA_THR = 0.05


@dataclass(frozen=True)
class MergePolicy:
    """Two neighbours merge when both their means and their sigmas differ by
    at most the given thresholds, expressed in percent of the pair's mean m/z.

    Peak widths in time-of-flight spectra grow in proportion to m/z, so
    m/z-relative thresholds act the same way across the whole range.
    """

    mz_thr: float = DEFAULT_MZ_THR
    sigma_thr: float = DEFAULT_SIGMA_THR

    def __post_init__(self):
        if self.mz_thr < 0 or self.sigma_thr < 0:
            raise ConfigError("merge thresholds must be nonnegative")

    def mergeable(self, c1: GaussianComponent, c2: GaussianComponent) -> bool:
        unit = 0.005 * abs(c1.mu + c2.mu)  # one percent of the mean position
        return (abs(c1.mu - c2.mu) <= self.mz_thr * unit
                and abs(c1.sigma - c2.sigma) <= self.sigma_thr * unit)


def aggregate(splitters: Sequence[Splitter], segment_fits: Sequence[FitResult], spectrum: Spectrum) -> MixtureModel:
    """Pool all components in count units and renormalise into one model."""
    weights, mus, sigmas = [], [], []
    for sp in splitters:
        for c, w in zip(sp.components, sp.weights):
            weights.append(w)
            mus.append(c.mu)
            sigmas.append(c.sigma)
    for fit in segment_fits:
        for c, w in zip(fit.model.components, fit.model.weights):
            weights.append(w)
            mus.append(c.mu)
            sigmas.append(c.sigma)
    if not weights:
        raise DataError("no components to aggregate")
    return MixtureModel.from_weights(weights, mus, sigmas, tic=total_ion_current(spectrum))


def _with_components(model: MixtureModel, comps: Sequence[GaussianComponent]) -> MixtureModel:
    """Renormalise a subset of a model's components, keeping their count weights."""
    weights = np.array([model.scale * c.alpha for c in comps])
    return MixtureModel.from_weights(weights, [c.mu for c in comps], [c.sigma for c in comps], tic=model.tic)


def two_class_split(values: np.ndarray, max_iters: int = 500, rel_tol: float = 1e-10):
    """Fit a two-component Gaussian mixture to unit-weight 1-D data.

    Returns ``(alpha, mu, sigma)`` ordered by mean, or None when the fit
    collapses to a single class.
    """
    x = np.sort(np.asarray(values, dtype=float))
    y = np.ones_like(x)
    if x.size < 2 or np.ptp(x) == 0:
        return None
    _, back = dp_tables(x, y, 2)
    bounds = dp_boundaries(back, 2, x.size)
    alpha, mu, sigma = [], [], []
    spread = float(np.std(x))
    floor_val = 1e-3 * spread
    for a, b in zip(bounds[:-1], bounds[1:]):
        blk = x[a:b]
        alpha.append(blk.size / x.size)
        mu.append(float(blk.mean()))
        sigma.append(max(float(blk.std()), floor_val))
    alpha, mu, sigma, *_ = em_iterate(
        x, y, alpha, mu, sigma, lambda m: np.full_like(m, floor_val), 0.0, max_iters, rel_tol,
    )
    if alpha.size < 2:
        return None
    order = np.argsort(mu)
    alpha, mu, sigma = alpha[order], mu[order], sigma[order]
    pooled = math.sqrt(float(np.dot(alpha, sigma**2)))
    if abs(mu[1] - mu[0]) < 0.1 * pooled:
        return None
    return alpha, mu, sigma


def filter_noise_components(model: MixtureModel, min_components: int = 4) -> MixtureModel:
    """Drop components whose log-weight is assigned (MAP) to the lower of two classes.

    A two-component mixture is fitted to ``log w_k``. Components at or above
    the upper class mean are always kept, so the largest component survives.
    Models with fewer than ``min_components`` components, or whose weights do
    not separate into two classes, pass through unchanged.
    """
    if model.K < min_components:
        return model
    logw = np.log(model.weights)
    split = two_class_split(logw)
    if split is None:
        logger.warning("noise filter: weights do not split into two classes; model kept as is")
        return model
    alpha, mu, sigma = split
    z = (logw[None, :] - mu[:, None]) / sigma[:, None]
    logpost = np.log(alpha)[:, None] - 0.5 * z * z - np.log(sigma)[:, None]
    low = (logpost[0] > logpost[1]) & (logw < mu[1])
    kept = [c for c, drop in zip(model.components, low) if not drop]
    return _with_components(model, kept)


def merge_pair(c1: GaussianComponent, c2: GaussianComponent) -> GaussianComponent:
    """Moment-preserving merge of two weighted Gaussians."""
    alpha = c1.alpha + c2.alpha
    if not alpha > 0:
        raise DataError("cannot merge two components with zero total weight")
    if c2.alpha == 0:
        return c1
    if c1.alpha == 0:
        return c2
    a1, a2 = c1.alpha / alpha, c2.alpha / alpha
    mu = a1 * c1.mu + a2 * c2.mu
    # central form of sum a_i (mu_i^2 + s_i^2) - mu^2; avoids cancellation at large m/z
    var = a1 * (c1.sigma**2 + (c1.mu - mu) ** 2) + a2 * (c2.sigma**2 + (c2.mu - mu) ** 2)
    return GaussianComponent(alpha, mu, math.sqrt(var))


def merge_components(model: MixtureModel, policy: MergePolicy = MergePolicy()) -> MixtureModel:
    """Single left-to-right pass merging adjacent similar components.

    A merged component is immediately compared with its next neighbour.
    """
    comps = list(model.components)
    out: list[GaussianComponent] = []
    cur = comps[0]
    for nxt in comps[1:]:
        if policy.mergeable(cur, nxt):
            cur = merge_pair(cur, nxt)
        else:
            out.append(cur)
            cur = nxt
    out.append(cur)
    if len(out) == len(comps):
        return model
    return _with_components(model, out)
