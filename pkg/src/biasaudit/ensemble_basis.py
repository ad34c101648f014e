"""Estimated bases from an ensemble of residual regressions.

Several regressors are fitted to pilot residuals on an auxiliary fold; their
fitted functions (optionally preceded by a few fixed basis functions) are then
orthonormalized on the covariates of the fold used for testing. Given the
auxiliary fold, every fitted function is deterministic, so the resulting basis
is fixed from the test's point of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import EstimatedBasis, FixedBasis, orthonormalize
from .pilots import Fold, check_folds, series_least_squares

REGRESSOR_KINDS = ("knn", "kernel_nw", "series_ols", "boosted_stumps")
BASIS_MODES = ("test", "aux")
_NW_FLOOR = 1e-12
_CHUNK = 2048


@dataclass(frozen=True)
class RegressorSpec:
    """A regressor kind and its hyperparameters.

    knn: ``neighbors``; kernel_nw: ``bandwidth``; series_ols: ``J``;
    boosted_stumps: ``stumps`` and ``shrinkage``.
    """

    kind: str
    neighbors: int = 25
    bandwidth: float = 0.2
    J: int = 5
    stumps: int = 50
    shrinkage: float = 0.1

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}; expected one of {REGRESSOR_KINDS}")
        if min(self.neighbors, self.bandwidth, self.J, self.stumps, self.shrinkage) <= 0:
            raise ValueError("regressor hyperparameters must be positive")

    @classmethod
    def parse(cls, text: str) -> "RegressorSpec":
        """Parse ``"knn:25"``, ``"kernel_nw:0.05"``, ``"series_ols:15"``, ``"boosted_stumps:50:0.1"``."""
        kind, *args = [t.strip() for t in str(text).split(":")]
        try:
            if kind == "knn":
                return cls(kind, neighbors=int(args[0]) if args else 25)
            if kind == "kernel_nw":
                return cls(kind, bandwidth=float(args[0]) if args else 0.2)
            if kind == "series_ols":
                return cls(kind, J=int(args[0]) if args else 5)
            if kind == "boosted_stumps":
                return cls(
                    kind,
                    stumps=int(args[0]) if args else 50,
                    shrinkage=float(args[1]) if len(args) > 1 else 0.1,
                )
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad regressor spec {text!r}: {exc}") from exc
        raise ValueError(f"unknown regressor kind {kind!r}; expected one of {REGRESSOR_KINDS}")

    @property
    def label(self) -> str:
        if self.kind == "knn":
            return f"knn:{self.neighbors}"
        if self.kind == "kernel_nw":
            return f"kernel_nw:{self.bandwidth:g}"
        if self.kind == "series_ols":
            return f"series_ols:{self.J}"
        return f"boosted_stumps:{self.stumps}:{self.shrinkage:g}"


DEFAULT_MENU = tuple(
    RegressorSpec.parse(s)
    for s in ("knn:5", "knn:25", "kernel_nw:0.05", "kernel_nw:0.2", "series_ols:5", "series_ols:15", "boosted_stumps:50:0.1")
)


class KNNPredictor:
    """Mean of the ``k`` nearest training residuals; ties go to the smaller X."""

    def __init__(self, x, r, neighbors, fold_id=None, label="knn"):
        order = np.argsort(x, kind="stable")
        self.xs = np.asarray(x, dtype=float)[order]
        self.k = min(int(neighbors), len(self.xs))
        self.csum = np.concatenate([[0.0], np.cumsum(np.asarray(r, dtype=float)[order])])
        self.fold_id, self.label = fold_id, label

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        xs, k = self.xs, self.k
        lo = np.zeros(q.shape, dtype=np.int64)
        hi = np.full(q.shape, len(xs) - k, dtype=np.int64)
        # binary search for the left end of the optimal contiguous window
        while True:
            active = lo < hi
            if not active.any():
                break
            mid = (lo + hi) // 2
            go_right = active & (q - xs[mid] > xs[np.minimum(mid + k, len(xs) - 1)] - q)
            lo = np.where(go_right, mid + 1, lo)
            hi = np.where(active & ~go_right, mid, hi)
        return (self.csum[lo + k] - self.csum[lo]) / k


class KernelNWPredictor:
    """Nadaraya-Watson smoother with a Gaussian kernel."""

    def __init__(self, x, r, bandwidth, fold_id=None, label="kernel_nw"):
        self.x = np.asarray(x, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.h = float(bandwidth)
        self.mean = float(np.mean(self.r))
        self.fold_id, self.label = fold_id, label

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.empty(q.shape)
        for s in range(0, len(q), _CHUNK):
            z = (q[s : s + _CHUNK, None] - self.x[None, :]) / self.h
            w = np.exp(-0.5 * z * z)
            den = w.sum(axis=1)
            num = w @ self.r
            ok = den >= _NW_FLOOR
            out[s : s + _CHUNK] = np.where(ok, num / np.where(ok, den, 1.0), self.mean)
        return out


class SeriesPredictor:
    """Unclipped least-squares fit on the first ``J`` cosine functions."""

    def __init__(self, x, r, J, fold_id=None, label="series_ols", ridge=1e-8):
        self.coefficients = series_least_squares(x, r, int(J), ridge)
        self.basis = FixedBasis("cosine", int(J))
        self.fold_id, self.label = fold_id, label

    def __call__(self, q) -> np.ndarray:
        return self.basis.evaluate(np.atleast_1d(q)) @ self.coefficients


class StumpsPredictor:
    """L2 boosting with depth-one threshold stumps, started from the mean."""

    def __init__(self, x, r, stumps, shrinkage, fold_id=None, label="boosted_stumps"):
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        order = np.argsort(x, kind="stable")
        xs, rs = x[order], r[order]
        n = len(xs)
        self.offset = float(np.mean(rs))
        self.shrinkage = float(shrinkage)
        fitted = np.full(n, self.offset)
        counts = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        thresholds, lefts, rights = [], [], []
        for _ in range(int(stumps)):
            res = rs - fitted
            total = res.sum()
            if valid.any():
                cs = np.cumsum(res)[:-1]
                gain = cs**2 / counts + (total - cs) ** 2 / (n - counts)
                i = int(np.argmax(np.where(valid, gain, -np.inf)))
                thr = 0.5 * (xs[i] + xs[i + 1])
                left, right = cs[i] / (i + 1), (total - cs[i]) / (n - i - 1)
            else:
                thr, left, right = np.inf, total / n, total / n
            thresholds.append(thr)
            lefts.append(left)
            rights.append(right)
            fitted = fitted + self.shrinkage * np.where(xs <= thr, left, right)
        self.thresholds = np.array(thresholds)
        self.lefts = np.array(lefts)
        self.rights = np.array(rights)
        self.fold_id, self.label = fold_id, label

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.full(q.shape, self.offset)
        for s in range(0, len(q), _CHUNK):
            below = q[s : s + _CHUNK, None] <= self.thresholds[None, :]
            steps = np.where(below, self.lefts, self.rights)
            out[s : s + _CHUNK] += self.shrinkage * steps.sum(axis=1)
        return out


def fit_regressor(spec: RegressorSpec, aux: Fold, residuals=None):
    """Fit one regressor to ``residuals`` (defaults to ``aux.a``) on ``aux.x``."""
    r = aux.a if residuals is None else np.asarray(residuals, dtype=float)
    if r is None or len(aux) == 0:
        raise ValueError("cannot fit a regressor on empty training data")
    if len(r) != len(aux):
        raise ValueError("residuals and covariates differ in length")
    x = aux.x
    if spec.kind == "knn":
        return KNNPredictor(x, r, spec.neighbors, aux.fold_id, spec.label)
    if spec.kind == "kernel_nw":
        return KernelNWPredictor(x, r, spec.bandwidth, aux.fold_id, spec.label)
    if spec.kind == "series_ols":
        return SeriesPredictor(x, r, spec.J, aux.fold_id, spec.label)
    return StumpsPredictor(x, r, spec.stumps, spec.shrinkage, aux.fold_id, spec.label)


class _FixedComponent:
    def __init__(self, basis: FixedBasis, j: int):
        self.basis, self.j = basis, j
        self.label = f"{basis.kind}:{j + 1}"

    def __call__(self, x):
        return self.basis.evaluate(x, self.j + 1)[:, self.j]


def build_estimated_basis(
    predictors,
    sample: Fold,
    concat_fixed: tuple[FixedBasis, int] | None = None,
    drop_tol: float = 1e-6,
    mode: str = "test",
) -> EstimatedBasis:
    """Orthonormalize ``fixed prefix ++ predictors`` on ``sample``'s covariates.

    In ``test`` mode the sample must come from a fold the predictors never saw.
    ``aux`` mode orthonormalizes on the predictors' own training fold.
    """
    if mode not in BASIS_MODES:
        raise ValueError(f"unknown basis mode {mode!r}; expected one of {BASIS_MODES}")
    if mode == "test":
        for p in predictors:
            fid = getattr(p, "fold_id", None)
            if fid is not None:
                check_folds(fid, sample.fold_id)
    dictionary = []
    if concat_fixed is not None:
        fixed, count = concat_fixed
        dictionary.extend(_FixedComponent(fixed, j) for j in range(int(count)))
    dictionary.extend(predictors)
    labels = [getattr(f, "label", "f") for f in dictionary]
    return orthonormalize(dictionary, sample.x, drop_tol=drop_tol, labels=labels)
