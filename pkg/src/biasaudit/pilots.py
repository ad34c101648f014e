"""Pilot (nuisance) fits on auxiliary folds, with fold bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .basis import FixedBasis
from .dgp import clip_kinks

ORACLE_FOLD = "oracle"


class FoldError(ValueError):
    """A pilot was combined with data from the fold it was fitted on."""


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Fold:
    """Covariates (and optionally a binary response) tagged with a fold id."""

    x: np.ndarray
    fold_id: str
    a: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.a is not None:
            a = np.array(self.a, dtype=float).ravel()
            if a.shape != x.shape:
                raise ValueError("x and a must have the same length")
            a.setflags(write=False)
            object.__setattr__(self, "a", a)

    def __len__(self) -> int:
        return len(self.x)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PilotDensity:
    coefficients: np.ndarray
    fold_id: str = ORACLE_FOLD
    perturbation: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients))
        if self.J < 1 or not np.all(np.isfinite(self.coefficients)):
            raise ValueError("pilot needs at least one finite coefficient")

    @property
    def J(self) -> int:
        return len(self.coefficients)

    @cached_property
    def _basis(self) -> FixedBasis:
        return FixedBasis("cosine", self.J)

    def __call__(self, x) -> np.ndarray:
        return self._basis.evaluate(x) @ self.coefficients


@dataclass(frozen=True, eq=False)
class PilotRegression:
    coefficients: np.ndarray
    clip: float = 0.05
    fold_id: str = ORACLE_FOLD
    perturbation: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients))
        if self.J < 1 or not np.all(np.isfinite(self.coefficients)):
            raise ValueError("pilot needs at least one finite coefficient")

    @property
    def J(self) -> int:
        return len(self.coefficients)

    @cached_property
    def _basis(self) -> FixedBasis:
        return FixedBasis("cosine", self.J)

    def raw(self, x) -> np.ndarray:
        return self._basis.evaluate(x) @ self.coefficients

    def __call__(self, x) -> np.ndarray:
        return np.clip(self.raw(x), self.clip, 1.0 - self.clip)

    def breakpoints(self) -> list[float]:
        """Kinks introduced by clipping, for quadrature."""
        return self._kinks

    @cached_property
    def _kinks(self) -> list[float]:
        return clip_kinks(self.raw, self.clip)


def check_folds(*fold_ids: str) -> None:
    """Raise :class:`FoldError` unless all ids are distinct.

    The oracle id marks pilots built from known truth; they are not tied to
    any data so they never collide with each other.
    """
    seen = [f for f in fold_ids if f != ORACLE_FOLD]
    if len(set(seen)) != len(seen):
        raise FoldError(f"fold discipline violated: {fold_ids}")


def fit_series_density(aux: Fold, J: int) -> PilotDensity:
    """Coefficients ``theta_j = mean(phi_j(X))`` over the auxiliary fold."""
    if len(aux) == 0:
        raise FitError("cannot fit a density pilot on an empty sample")
    if J < 1:
        raise ValueError("J must be >= 1")
    phi = FixedBasis("cosine", J).evaluate(aux.x)
    return PilotDensity(phi.mean(axis=0), fold_id=aux.fold_id)


def series_least_squares(x, y, J: int, ridge: float = 1e-8) -> np.ndarray:
    """Solve ``(G + ridge I) c = g`` with the empirical Gram and cross moment."""
    phi = FixedBasis("cosine", J).evaluate(x)
    n = len(phi)
    gram = phi.T @ phi / n
    cross = phi.T @ np.asarray(y, dtype=float) / n
    try:
        coef = np.linalg.solve(gram + ridge * np.eye(J), cross)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"series regression is singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise FitError("series regression produced non-finite coefficients")
    return coef


def fit_series_regression(aux: Fold, J: int, ridge: float = 1e-8, clip: float = 0.05) -> PilotRegression:
    if aux.a is None:
        raise FitError("regression pilot needs a response")
    if len(aux) <= J:
        raise FitError(f"need more than J={J} observations, got {len(aux)}")
    coef = series_least_squares(aux.x, aux.a, J, ridge)
    return PilotRegression(coef, clip=clip, fold_id=aux.fold_id)


def corrupt_pilot(pilot, deltas):
    """Return a copy of ``pilot`` with ``deltas`` added to its leading coefficients."""
    deltas = np.asarray(deltas, dtype=float).ravel()
    if len(deltas) > pilot.J:
        raise ValueError(f"{len(deltas)} deltas for a pilot with J={pilot.J}")
    full = np.zeros(pilot.J)
    full[: len(deltas)] = deltas
    previous = pilot.perturbation if pilot.perturbation is not None else np.zeros(pilot.J)
    return replace(pilot, coefficients=pilot.coefficients + full, perturbation=_frozen(previous + full))
