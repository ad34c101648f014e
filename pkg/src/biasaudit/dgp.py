"""Ground-truth data-generating processes on [0, 1] with exact oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .basis import FixedBasis
from .quadrature import integrate

CDF_TABLE_SIZE = 4097
VERIFY_GRID_SIZE = 4097
DESIGN_KINDS = ("iid_uniform", "fixed_grid")


class ModelError(ValueError):
    """Invalid data-generating model."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


def cosine_series(coefficients, x) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float)
    basis = FixedBasis("cosine", len(coefficients))
    return basis.evaluate(x) @ coefficients


@dataclass(frozen=True, eq=False)
class SeriesDensity:
    """Density ``p = sum_j theta_j phi_j`` over the cosine basis.

    ``theta_1`` must be 1 so that ``p`` integrates to one; positivity is
    checked on a 4097-point grid against ``p_min``.
    """

    coefficients: np.ndarray
    p_min: float = 0.1
    _cdf_x: np.ndarray = field(init=False, repr=False)
    _cdf_u: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        theta = _frozen(self.coefficients)
        object.__setattr__(self, "coefficients", theta)
        if len(theta) == 0 or not np.all(np.isfinite(theta)):
            raise ModelError("density coefficients must be a nonempty finite vector")
        if abs(theta[0] - 1.0) > 1e-12:
            raise ModelError(f"theta_1 must equal 1 for a density, got {theta[0]}")
        if self.p_min <= 0:
            raise ModelError("p_min must be positive")
        grid = np.linspace(0.0, 1.0, VERIFY_GRID_SIZE)
        low = float(self.pdf(grid).min())
        if low < self.p_min:
            raise ModelError(f"density dips to {low:.4g} < p_min={self.p_min}")
        x = np.linspace(0.0, 1.0, CDF_TABLE_SIZE)
        u = self.cdf(x)
        u[0], u[-1] = 0.0, 1.0
        u = np.maximum.accumulate(u)
        object.__setattr__(self, "_cdf_x", _frozen(x))
        object.__setattr__(self, "_cdf_u", _frozen(u))

    @property
    def basis(self) -> FixedBasis:
        return FixedBasis("cosine", len(self.coefficients))

    def pdf(self, x) -> np.ndarray:
        return cosine_series(self.coefficients, np.atleast_1d(x))

    def cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = x.copy()
        for j, th in enumerate(self.coefficients[1:], start=1):
            out += th * np.sqrt(2.0) * np.sin(j * np.pi * x) / (j * np.pi)
        return out

    def inverse_cdf(self, u) -> np.ndarray:
        """Invert the tabulated CDF by linear interpolation (the table is strictly increasing)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.interp(u, self._cdf_u, self._cdf_x)


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """``pi(x) = clamp(sum_j c_j phi_j(x) + jumps, clip, 1 - clip)``.

    ``jumps`` is an optional tuple of ``(location, height)`` pairs adding a
    step of ``height`` on ``[location, 1]``; it exists to build non-smooth
    truths for power comparisons.
    """

    raw_coefficients: np.ndarray
    clip: float = 0.05
    jumps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        c = _frozen(self.raw_coefficients)
        object.__setattr__(self, "raw_coefficients", c)
        if len(c) == 0 or not np.all(np.isfinite(c)):
            raise ModelError("propensity coefficients must be a nonempty finite vector")
        if not 0.0 < self.clip < 0.5:
            raise ModelError("clip must lie in (0, 1/2)")
        jumps = tuple((float(a), float(h)) for a, h in self.jumps)
        if any(not 0.0 < a < 1.0 for a, _ in jumps):
            raise ModelError("jump locations must lie strictly inside (0, 1)")
        object.__setattr__(self, "jumps", jumps)

    def raw(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = cosine_series(self.raw_coefficients, x)
        for a, h in self.jumps:
            out = out + h * (x >= a)
        return out

    def __call__(self, x) -> np.ndarray:
        return np.clip(self.raw(x), self.clip, 1.0 - self.clip)

    def clipping_binds(self, n_grid: int = VERIFY_GRID_SIZE) -> bool:
        r = self.raw(np.linspace(0.0, 1.0, n_grid))
        return bool(np.any(r < self.clip) or np.any(r > 1.0 - self.clip))

    def breakpoints(self) -> list[float]:
        """Jump locations plus the kinks where clipping starts or stops."""
        return self._breakpoints

    @cached_property
    def _breakpoints(self) -> list[float]:
        jumps = [a for a, _ in self.jumps]
        return sorted(set(jumps) | set(clip_kinks(self.raw, self.clip, avoid=jumps)))


def clip_kinks(raw, clip: float, avoid=(), n_grid: int = VERIFY_GRID_SIZE) -> list[float]:
    """Points where ``raw`` crosses ``clip`` or ``1 - clip``.

    Crossings are bracketed on a grid and refined by root finding; brackets
    containing a point of ``avoid`` (a jump) are skipped.
    """
    grid = np.linspace(0.0, 1.0, n_grid)
    r = raw(grid)
    out = []
    for level in (clip, 1.0 - clip):
        side = r >= level
        for i in np.flatnonzero(side[1:] != side[:-1]):
            lo, hi = grid[i], grid[i + 1]
            if any(lo <= a <= hi for a in avoid):
                continue
            out.append(float(brentq(lambda t: raw(t)[0] - level, lo, hi, xtol=1e-15)))
    return sorted(out)


@dataclass(frozen=True)
class Design:
    kind: str = "iid_uniform"
    n: int = 100

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ModelError(f"unknown design {self.kind!r}; expected one of {DESIGN_KINDS}")
        if self.n < 0:
            raise ModelError("design size must be nonnegative")

    def grid(self) -> np.ndarray:
        return (np.arange(1, self.n + 1) - 0.5) / self.n

    def covariates(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "fixed_grid":
            return self.grid()
        return rng.random(self.n)


def true_expected_density(d: SeriesDensity) -> float:
    """``int p^2``, which by Parseval is the sum of squared coefficients."""
    return float(np.sum(d.coefficients**2))


def sample_density(d: SeriesDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.empty(0)
    return d.inverse_cdf(rng.random(n))


def sample_conditional(design: Design, pi: PropensityModel, rng: np.random.Generator):
    """Draw ``(X, A)`` with ``A | X ~ Bernoulli(pi(X))``."""
    x = design.covariates(rng)
    a = (rng.random(len(x)) < pi(x)).astype(float)
    return x, a


def true_expected_cond_variance(pi: PropensityModel, design: Design) -> float:
    """Population ``int pi (1 - pi)`` (random design) or its grid average (fixed design)."""
    if design.kind == "fixed_grid":
        return sample_average_cond_variance(pi, design.grid())
    return integrate(lambda x: pi(x) * (1.0 - pi(x)), breakpoints=pi.breakpoints())


def sample_average_cond_variance(pi: PropensityModel, x) -> float:
    p = pi(np.asarray(x, dtype=float))
    return float(np.mean(p * (1.0 - p)))
