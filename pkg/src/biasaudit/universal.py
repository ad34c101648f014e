"""Universal inference (split likelihood ratio) confidence sets.

The model is the symmetric mixture ``0.5 N(-theta, 1) + 0.5 N(theta, 1)``,
``theta >= 0``, which is non-regular at ``theta = 0``. Confidence sets are
computed on a grid of ``theta`` values and are valid in finite samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
ESTIMATORS = ("moment", "grid_mle")


@dataclass(frozen=True)
class UniversalConfig:
    B: int = 1
    alpha: float = 0.05
    grid_hi: float = 3.0
    grid_step: float = 0.01
    estimator: str = "moment"
    split_fraction: float = 0.5  # share of the data used to estimate theta_1

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.grid_hi <= 0.0 or self.grid_step <= 0.0:
            raise ValueError("grid needs hi > 0 and step > 0")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")

    def grid(self) -> np.ndarray:
        count = int(np.floor(self.grid_hi / self.grid_step + 1e-9)) + 1
        return np.arange(count) * self.grid_step


@dataclass(frozen=True)
class ConfidenceSet:
    grid: np.ndarray
    log_tbar: np.ndarray
    included: np.ndarray
    clipped: bool

    @property
    def values(self) -> np.ndarray:
        return self.grid[self.included]

    @property
    def hull(self) -> tuple[float, float]:
        v = self.values
        if len(v) == 0:
            return float("nan"), float("nan")
        return float(v.min()), float(v.max())

    def contains(self, theta: float, tol: float = 1e-9) -> bool:
        return bool(np.any(np.abs(self.values - theta) <= tol))


def log_likelihood_terms(theta, data) -> np.ndarray:
    """Per-observation log densities; ``theta`` may be an array (rows) of parameters."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(data, dtype=float)
    t = theta[..., None]
    a = -0.5 * (x - t) ** 2
    b = -0.5 * (x + t) ** 2
    return np.logaddexp(a, b) - np.log(2.0) - LOG_SQRT_2PI


def log_likelihood(theta, data):
    """Mixture log likelihood, vectorized over ``theta``."""
    out = log_likelihood_terms(theta, data).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def estimate_theta(data, estimator: str = "moment", grid: np.ndarray | None = None) -> float:
    """``sqrt(max(0, mean(x^2) - 1))`` or the grid maximizer of the likelihood."""
    x = np.asarray(data, dtype=float)
    if len(x) == 0:
        raise ValueError("need at least one observation")
    if estimator == "moment":
        return float(np.sqrt(max(0.0, float(np.mean(x * x)) - 1.0)))
    if estimator == "grid_mle":
        if grid is None:
            grid = UniversalConfig().grid()
        ll = log_likelihood(grid, x)
        return float(grid[int(np.argmax(ll))])  # argmax returns the first (smallest) maximizer
    raise ValueError(f"unknown estimator {estimator!r}")


def split_indices(n: int, rng: np.random.Generator, fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Random split into ``(D0, D1)`` with ``floor(fraction * n)`` points in D1.

    At the default one half, an odd leftover goes to the likelihood side D0.
    Both sides always get at least one point.
    """
    perm = rng.permutation(n)
    n1 = min(max(int(np.floor(fraction * n + 1e-9)), 1), n - 1)
    return perm[n1:], perm[:n1]


def log_tbar(data, config: UniversalConfig, rng: np.random.Generator, thetas=None) -> np.ndarray:
    """``log mean_b T_b(theta)`` over ``B`` independent half splits."""
    x = np.asarray(data, dtype=float)
    if len(x) < 2:
        raise ValueError("universal inference needs at least two observations")
    thetas = config.grid() if thetas is None else np.asarray(thetas, dtype=float)
    grid = config.grid()
    logs = np.empty((config.B, len(thetas)))
    for b in range(config.B):
        i0, i1 = split_indices(len(x), rng, config.split_fraction)
        d0, d1 = x[i0], x[i1]
        theta1 = estimate_theta(d1, config.estimator, grid)
        logs[b] = log_likelihood(theta1, d0) - log_likelihood(thetas, d0)
    return logsumexp(logs, axis=0) - np.log(config.B)


def set_from_log_tbar(grid: np.ndarray, lt: np.ndarray, alpha: float) -> ConfidenceSet:
    grid = np.array(grid, dtype=float)
    lt = np.array(lt, dtype=float)
    included = lt <= -np.log(alpha)
    clipped = bool(int(np.argmin(lt)) == len(grid) - 1 or included[-1])
    for arr in (grid, lt, included):
        arr.setflags(write=False)
    return ConfidenceSet(grid, lt, included, clipped)


def confidence_set(data, config: UniversalConfig, rng: np.random.Generator) -> ConfidenceSet:
    """Grid points with averaged split likelihood ratio at most ``1/alpha``.

    ``clipped`` flags sets that touch the upper grid end or whose ratio is
    minimized there, in which case the true set may extend past the grid.
    """
    return set_from_log_tbar(config.grid(), log_tbar(data, config, rng), config.alpha)


@dataclass(frozen=True)
class FunctionalSet:
    candidates: np.ndarray
    profile_log_tbar: np.ndarray
    included: np.ndarray
    tolerance: float

    @property
    def values(self) -> np.ndarray:
        return self.candidates[self.included]

    @property
    def hull(self) -> tuple[float, float]:
        v = self.values
        if len(v) == 0:
            return float("nan"), float("nan")
        return float(v.min()), float(v.max())

    def contains(self, psi: float) -> bool:
        hit = np.abs(self.candidates - psi) <= self.tolerance
        return bool(np.any(hit & self.included))


def _cluster_images(images: np.ndarray):
    """Merge numerically equal images; return sorted candidates and a matching tolerance."""
    uniq = np.unique(images)
    scale = max(1.0, float(np.max(np.abs(uniq)))) if len(uniq) else 1.0
    keep = np.concatenate([[True], np.diff(uniq) > 1e-9 * scale])
    candidates = uniq[keep]
    if len(candidates) > 1:
        tol = 0.5 * float(np.min(np.diff(candidates)))
    else:
        tol = 1e-9 * scale
    return candidates, tol


def profile_from_log_tbar(f, grid: np.ndarray, lt: np.ndarray, alpha: float) -> FunctionalSet:
    images = np.array([float(f(t)) for t in grid])
    candidates, tol = _cluster_images(images)
    order = np.argsort(images, kind="stable")
    sorted_images = images[order]
    lo = np.searchsorted(sorted_images, candidates - tol, side="left")
    hi = np.searchsorted(sorted_images, candidates + tol, side="right")
    profile = np.array([lt[order[a:b]].min() for a, b in zip(lo, hi)])
    return FunctionalSet(candidates, profile, profile <= -np.log(alpha), tol)


def functional_confidence_set(f, data, config: UniversalConfig, rng: np.random.Generator) -> FunctionalSet:
    """Profile the averaged ratio over level sets of ``f`` on the theta grid.

    Candidate values are the images ``f(grid)`` with numerically equal images
    merged; each candidate's profile ratio is the smallest ratio among grid
    points mapping within half the minimum candidate spacing of it.
    """
    grid = config.grid()
    return profile_from_log_tbar(f, grid, log_tbar(data, config, rng), config.alpha)
