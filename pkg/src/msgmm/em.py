"""EM for Gaussian mixtures fitted to binned (histogram-like) signals.

The bin counts ``y_n`` act as observation weights. Heteroscedastic mixtures
have an unbounded likelihood, so every M-step floors each standard deviation
at ``sigma_min(mu)`` (proportional to m/z) and components whose mixing
proportion drops below ``alpha_min`` are removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import FWHH_FACTOR, GaussianComponent, MixtureModel, component_densities
from .errors import ConfigError, DataError, DegenerateFitError, NumericalFailure

DEFAULT_EPSILON = 0.002
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# DP cost matrices are evaluated in column blocks of at most this many cells
_DP_BLOCK_CELLS = 2_000_000


@dataclass(frozen=True)
class EmConfig:
    """Tunables of the EM fit.

    ``avg_cv`` is the FWHH-based coefficient of variation measured by the peak
    detector; it is converted to a sigma-based one when the floor is applied.
    """

    alpha_min: float = 1e-3
    sigma_min_cv_mult: float = 0.5
    max_iters: int = 500
    rel_tol: float = 1e-6
    avg_cv: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha_min < 0.1:
            raise ConfigError(f"alpha_min must lie in (0, 0.1), got {self.alpha_min}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.sigma_min_cv_mult < 0 or self.avg_cv < 0 or self.rel_tol <= 0:
            raise ConfigError("sigma_min_cv_mult and avg_cv must be >= 0, rel_tol > 0")

    def sigma_min(self, mu):
        return self.sigma_min_cv_mult * np.abs(mu) * self.avg_cv / FWHH_FACTOR


@dataclass(frozen=True)
class FitResult:
    model: MixtureModel
    penalty: float
    delta: float
    iters: int
    k_removed: int
    loglik: float = float("nan")
    converged: bool = False

    @property
    def K(self) -> int:
        return self.model.K

    def diagnostics(self) -> dict:
        return {
            "K": self.K,
            "iters": self.iters,
            "delta": self.delta,
            "penalty": self.penalty,
            "k_removed": self.k_removed,
            "converged": self.converged,
        }


def _xy(segment) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(segment.mz, dtype=float), np.asarray(segment.intensity, dtype=float)


# ------------------------------------------------------------------ DP initialisation


def block_cost_table(x: np.ndarray, y: np.ndarray):
    """Prefix sums giving the weighted scatter ``sum y (x - mean)^2`` of any block."""
    xc = x - np.average(x, weights=y)
    s0 = np.concatenate([[0.0], np.cumsum(y)])
    s1 = np.concatenate([[0.0], np.cumsum(y * xc)])
    s2 = np.concatenate([[0.0], np.cumsum(y * xc * xc)])
    return s0, s1, s2


def _cost_block(s0, s1, s2, i, j):
    """Cost of blocks [i, j) for broadcastable index arrays with i < j."""
    m0 = s0[j] - s0[i]
    m1 = s1[j] - s1[i]
    m2 = s2[j] - s2[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        c = m2 - m1 * m1 / m0
    # prefix-sum cancellation can leave a far-tail block with zero mass
    return np.where(m0 > 0, np.maximum(c, 0.0), np.inf)


def dp_tables(x: np.ndarray, y: np.ndarray, k_max: int):
    """Optimal contiguous partitions of weighted points into 1..k_max blocks.

    Returns ``(cost, back)`` where ``cost[k, j]`` is the minimal total scatter
    of the first ``j`` points split into ``k`` blocks and ``back[k, j]`` the
    start of the last block. All points must carry positive weight.
    """
    n = x.size
    if k_max > n:
        raise DataError(f"cannot split {n} weighted points into {k_max} blocks")
    s0, s1, s2 = block_cost_table(x, y)
    cost = np.full((k_max + 1, n + 1), np.inf)
    back = np.zeros((k_max + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    starts = np.arange(n + 1)
    chunk = max(1, _DP_BLOCK_CELLS // (n + 1))
    for k in range(1, k_max + 1):
        prev = cost[k - 1]
        for a in range(k, n + 1, chunk):
            js = np.arange(a, min(n + 1, a + chunk))
            i = starts[:, None]
            valid = i < js[None, :]
            c = np.where(valid, _cost_block(s0, s1, s2, np.minimum(i, js[None, :] - 1), js[None, :]), np.inf)
            total = prev[:, None] + c
            arg = np.argmin(total, axis=0)
            cost[k, js] = total[arg, np.arange(js.size)]
            back[k, js] = arg
    return cost, back


def dp_boundaries(back: np.ndarray, k: int, n: int) -> list[int]:
    """Block start indices (plus the final end ``n``) recovered from the DP table."""
    bounds = [n]
    j = n
    for kk in range(k, 0, -1):
        j = int(back[kk, j])
        bounds.append(j)
    return bounds[::-1]


def _blocks_to_components(x, y, bounds, sigma_floor) -> list[GaussianComponent]:
    total = float(y.sum())
    comps = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        xb, yb = x[a:b], y[a:b]
        mass = float(yb.sum())
        mu = float(np.dot(yb, xb) / mass)
        sd = math.sqrt(max(float(np.dot(yb, (xb - mu) ** 2) / mass), 0.0))
        floor = float(sigma_floor(mu))
        if not floor > 0:
            # single-point blocks need some width when no floor is configured
            floor = 0.5 * float(np.median(np.diff(x))) if x.size > 1 else 1.0
        comps.append(GaussianComponent(mass / total, mu, max(sd, floor)))
    return comps


def _positive(segment):
    x, y = _xy(segment)
    keep = y > 0
    return x[keep], y[keep]


def dp_initialize(segment, K: int, config: EmConfig | None = None) -> list[GaussianComponent]:
    """Initial components from the optimal split of the m/z range into K blocks.

    Blocks minimise the summed intensity-weighted scatter of m/z; only grid
    points with positive intensity take part.
    """
    config = config or EmConfig()
    x, y = _positive(segment)
    bounds, _ = dp_partition(segment, K)
    return _blocks_to_components(x, y, bounds, config.sigma_min)


def dp_partition(segment, K: int) -> tuple[list[int], float]:
    """Optimal block boundaries over the positive-intensity points and their cost.

    Boundaries index the positive points only: block ``b`` covers
    ``[bounds[b], bounds[b + 1])``.
    """
    if K < 1:
        raise ConfigError("K must be at least 1")
    x, y = _positive(segment)
    if x.size == 0:
        raise DataError("segment has no positive mass")
    if K > x.size:
        raise DataError(f"K={K} exceeds the {x.size} grid points with positive intensity")
    cost, back = dp_tables(x, y, K)
    return dp_boundaries(back, K, x.size), float(cost[K, x.size])


# ------------------------------------------------------------------ EM iterations


def responsibilities(x, alpha, mu, sigma) -> tuple[np.ndarray, np.ndarray]:
    """Posterior component probabilities p(k|n) and the log mixture density per point."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)[:, None]
    sigma = np.asarray(sigma, dtype=float)[:, None]
    z = (x[None, :] - mu) / sigma
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(alpha, dtype=float))[:, None] - 0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI
    # max-shifted log-sum-exp, reusing the shifted exponentials for the posteriors
    top = logp.max(axis=0)
    e = np.exp(logp - top)
    total = e.sum(axis=0)
    return e / total, top + np.log(total)


def em_iterate(
    x: np.ndarray,
    y: np.ndarray,
    alpha,
    mu,
    sigma,
    sigma_floor: Callable[[np.ndarray], np.ndarray],
    alpha_min: float,
    max_iters: int,
    rel_tol: float,
    trace: list | None = None,
):
    """Run weighted EM from the given start; returns the final parameters.

    ``trace``, if given, receives ``(loglik, K)`` after every E-step.
    """
    alpha = np.array(alpha, dtype=float)
    mu = np.array(mu, dtype=float)
    sigma = np.array(sigma, dtype=float)
    total = float(y.sum())
    yx = y * x
    prev = None
    removed = 0
    converged = False
    iters = 0
    loglik = float("nan")
    for iters in range(1, max_iters + 1):
        resp, logf = responsibilities(x, alpha, mu, sigma)
        loglik = float(np.dot(y, logf))
        if not math.isfinite(loglik):
            raise NumericalFailure("non-finite log-likelihood during EM")
        if trace is not None:
            trace.append((loglik, alpha.size))
        if prev is not None and abs(loglik - prev) <= rel_tol * abs(loglik):
            converged = True
            iters -= 1
            break
        prev = loglik

        nk = resp @ y
        dead = nk <= total * 1e-300
        if np.any(dead):
            keep = ~dead
            removed += int(dead.sum())
            resp, nk, mu, sigma = resp[keep], nk[keep], mu[keep], sigma[keep]
            prev = None
            if nk.size == 0:
                raise DegenerateFitError("segment degenerate: all components removed")
        alpha = nk / total
        mu = (resp @ yx) / nk
        var = (resp * (x[None, :] - mu[:, None]) ** 2) @ y / nk
        sigma = np.maximum(np.sqrt(var), sigma_floor(mu))
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise NumericalFailure("non-finite parameters during EM")
        # without a floor a component can shrink onto one grid point: a likelihood singularity
        singular = ~(sigma > 0)
        if np.any(singular):
            keep = ~singular
            removed += int(singular.sum())
            alpha, mu, sigma = alpha[keep], mu[keep], sigma[keep]
            prev = None
            if alpha.size == 0:
                raise DegenerateFitError("segment degenerate: all components collapsed")
            alpha = alpha / alpha.sum()

        if alpha_min > 0 and np.any(alpha < alpha_min):
            worst = int(np.argmin(alpha))
            alpha = np.delete(alpha, worst)
            mu = np.delete(mu, worst)
            sigma = np.delete(sigma, worst)
            removed += 1
            prev = None
            if alpha.size == 0:
                raise DegenerateFitError("segment degenerate: all components removed")
            alpha = alpha / alpha.sum()
    return alpha, mu, sigma, iters, removed, loglik, converged


def fit_arrays(x, y, init: Sequence[GaussianComponent], config: EmConfig, epsilon: float = 0.0,
               trace: list | None = None) -> FitResult:
    if not init:
        raise DataError("EM needs at least one initial component")
    total = float(y.sum())
    if not total > 0:
        raise DataError("segment has no positive mass")
    floor = config.sigma_min
    alpha, mu, sigma, iters, removed, loglik, converged = em_iterate(
        x, y,
        [c.alpha for c in init], [c.mu for c in init], [np.maximum(c.sigma, floor(c.mu)) for c in init],
        floor, config.alpha_min, config.max_iters, config.rel_tol, trace,
    )
    alpha = alpha / alpha.sum()
    dens = alpha @ component_densities(x, mu, sigma)
    denom = float(dens.sum())
    if not denom > 0:
        raise DegenerateFitError("model density vanishes on the segment")
    scale = total / denom
    delta = float(np.sum(np.abs(y - scale * dens)) / total)
    model = MixtureModel.from_arrays(alpha, mu, sigma, scale=scale, tic=total)
    return FitResult(model, delta + epsilon * model.K, delta, iters, removed, loglik, converged)


def em_fit(segment, init: Sequence[GaussianComponent], config: EmConfig | None = None,
           epsilon: float = 0.0, trace: list | None = None) -> FitResult:
    """Fit a mixture to one segment starting from ``init``.

    The returned model carries the local scale (counts per unit density) and
    the fit's scaled absolute error ``delta = sum|y - yhat| / sum y``.
    """
    x, y = _xy(segment)
    return fit_arrays(x, y, init, config or EmConfig(), epsilon, trace)


# ------------------------------------------------------------------ model-order selection


def k_cap(width_da: float, center_da: float, avg_cv: float) -> int:
    """Upper bound on K: twice the number of expected peak widths in the segment, plus two."""
    fwhh = avg_cv * center_da
    if not fwhh > 0:
        return 2
    return int(2.0 * width_da / fwhh) + 2


def select_model(
    segment,
    k_range: Sequence[int] | range,
    epsilon: float = DEFAULT_EPSILON,
    config: EmConfig | None = None,
    patience: int | None = None,
) -> FitResult:
    """Choose K by minimising ``delta + K * epsilon`` over ``k_range``.

    With ``patience`` set, the scan stops once that many consecutive K values
    fail to improve on the best penalty so far. Ties go to the smaller K.
    """
    config = config or EmConfig()
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise ConfigError("k_range must contain positive integers")
    x, y = _xy(segment)
    xp, yp = x[y > 0], y[y > 0]
    if xp.size == 0:
        raise DegenerateFitError("segment degenerate: no positive mass")
    ks = [k for k in ks if k <= xp.size] or [min(ks[0], xp.size)]
    _, back = dp_tables(xp, yp, ks[-1])

    best: FitResult | None = None
    best_k = None
    failures = []
    for k in ks:
        init = _blocks_to_components(xp, yp, dp_boundaries(back, k, xp.size), config.sigma_min)
        try:
            fit = fit_arrays(x, y, init, config, epsilon)
        except DegenerateFitError as exc:
            failures.append(exc)
            continue
        if best is None or fit.penalty < best.penalty or (fit.penalty == best.penalty and fit.K < best.K):
            best, best_k = fit, k
        elif patience is not None and k - best_k >= patience:
            break
    if best is None:
        raise DegenerateFitError(f"segment degenerate: every K failed ({failures[-1]})")
    return best
