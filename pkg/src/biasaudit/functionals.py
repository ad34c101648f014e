"""Point estimators and exact conditional-bias oracles.

Two functionals are covered: the expected density ``int p^2`` and the
expected conditional variance ``E var(A | X)`` for binary ``A``. Each has a
first-order (one-step) estimator, whose conditional bias has a fixed sign,
and a split estimator built from two independent pilots whose bias is a
cross product of the two errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import Design, PropensityModel, SeriesDensity
from .pilots import Fold, PilotDensity, PilotRegression, check_folds
from .quadrature import integrate

ESTIMATOR_KINDS = ("plugin", "first_order", "split")


@dataclass(frozen=True)
class FunctionalEstimate:
    value: float
    se: float
    n: int
    estimator_kind: str

    def interval(self, z: float) -> tuple[float, float]:
        return self.value - z * self.se, self.value + z * self.se


def _wald_se(influence: np.ndarray) -> float:
    n = len(influence)
    if n < 2:
        return 0.0
    return float(np.std(influence, ddof=1) / np.sqrt(n))


def _require_nonempty(main: Fold) -> None:
    if len(main) == 0:
        raise ValueError("evaluation sample is empty")


def _require_response(main: Fold) -> np.ndarray:
    _require_nonempty(main)
    if main.a is None:
        raise ValueError("conditional-variance estimators need the response A")
    return main.a


def _pad(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[: len(a)] = a
    return out


def plugin_expected_density(pilot: PilotDensity, main: Fold | None = None) -> FunctionalEstimate:
    """``sum theta_hat^2``; the standard error (if data are given) is the first-order one."""
    value = float(np.sum(pilot.coefficients**2))
    if main is None:
        return FunctionalEstimate(value, 0.0, 0, "plugin")
    check_folds(pilot.fold_id, main.fold_id)
    _require_nonempty(main)
    se = 2.0 * _wald_se(pilot(main.x))
    return FunctionalEstimate(value, se, len(main), "plugin")


def first_order_expected_density(pilot: PilotDensity, main: Fold) -> FunctionalEstimate:
    check_folds(pilot.fold_id, main.fold_id)
    _require_nonempty(main)
    vals = pilot(main.x)
    value = 2.0 * float(np.mean(vals)) - float(np.sum(pilot.coefficients**2))
    return FunctionalEstimate(value, 2.0 * _wald_se(vals), len(main), "first_order")


def split_expected_density(pilot1: PilotDensity, pilot2: PilotDensity, main: Fold) -> FunctionalEstimate:
    check_folds(pilot1.fold_id, pilot2.fold_id, main.fold_id)
    _require_nonempty(main)
    infl = pilot1(main.x) + pilot2(main.x)
    J = max(pilot1.J, pilot2.J)
    cross = float(_pad(pilot1.coefficients, J) @ _pad(pilot2.coefficients, J))
    return FunctionalEstimate(float(np.mean(infl)) - cross, _wald_se(infl), len(main), "split")


def conditional_bias_oracle_density(pilot, truth: SeriesDensity) -> float:
    """Exact conditional bias of the first-order (single pilot) or split (pair) estimator.

    Single pilot: ``-sum (theta_hat - theta)^2``. Pair: ``-sum (theta_hat1 - theta)(theta_hat2 - theta)``.
    """
    pilots = pilot if isinstance(pilot, tuple) else (pilot, pilot)
    J = max(len(truth.coefficients), *(p.J for p in pilots))
    theta = _pad(truth.coefficients, J)
    e1 = _pad(pilots[0].coefficients, J) - theta
    e2 = _pad(pilots[1].coefficients, J) - theta
    return -float(e1 @ e2)


def first_order_cond_variance(pihat: PilotRegression, main: Fold) -> FunctionalEstimate:
    check_folds(pihat.fold_id, main.fold_id)
    a = _require_response(main)
    sq = (a - pihat(main.x)) ** 2
    return FunctionalEstimate(float(np.mean(sq)), _wald_se(sq), len(main), "first_order")


def split_cond_variance(pihat1: PilotRegression, pihat2: PilotRegression, main: Fold) -> FunctionalEstimate:
    check_folds(pihat1.fold_id, pihat2.fold_id, main.fold_id)
    a = _require_response(main)
    prod = (a - pihat1(main.x)) * (a - pihat2(main.x))
    return FunctionalEstimate(float(np.mean(prod)), _wald_se(prod), len(main), "split")


def conditional_bias_oracle_cv(pihat, truth: PropensityModel, design: Design, x=None) -> float:
    """``int (pihat1 - pi)(pihat2 - pi)`` under the design's covariate law.

    A single pilot gives the squared-error form. For a fixed design the
    integral becomes an average over the grid points, or over ``x`` when a
    sub-fold of the grid is supplied.
    """
    p1, p2 = pihat if isinstance(pihat, tuple) else (pihat, pihat)

    def integrand(t):
        p = truth(t)
        return (p1(t) - p) * (p2(t) - p)

    if design.kind == "fixed_grid":
        pts = design.grid() if x is None else np.asarray(x, dtype=float)
        return float(np.mean(integrand(pts)))
    cuts = sorted(set(truth.breakpoints()) | set(p1.breakpoints()) | set(p2.breakpoints()))
    return integrate(integrand, breakpoints=cuts)
