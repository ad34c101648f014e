"""Orthonormal function systems on [0, 1].

Two flavours live here:

* :class:`FixedBasis`: closed-form cosine or Haar systems, orthonormal in
  L2(Lebesgue).
* :class:`EstimatedBasis`: an arbitrary dictionary of functions made
  orthonormal under the empirical inner product of a covariate sample by
  modified Gram-Schmidt. The transform is stored so the basis can be evaluated
  anywhere, not just at the sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quadrature import DEFAULT_NODES, QuadratureError, simpson_nodes

SQRT2 = np.sqrt(2.0)
BASIS_KINDS = ("cosine", "haar")


class BasisError(ValueError):
    """Bad index, bad point, or bad basis configuration."""


class DegenerateDictionaryError(BasisError):
    """Every dictionary member was dropped during orthonormalization."""


def _haar_level_shift(j: int) -> tuple[int, int]:
    m = j - 2
    level = int(np.floor(np.log2(m + 1)))
    return level, m - (2**level - 1)


def _check_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    # written so that NaN fails the check too
    if x.size and not (x.min() >= 0.0 and x.max() <= 1.0):
        raise BasisError("basis functions are defined on [0, 1] only")
    return x


@dataclass(frozen=True)
class FixedBasis:
    """Cosine or Haar system truncated at ``max_index`` functions.

    Indices are 1-based to match the usual series notation: ``phi_1 == 1``.
    """

    kind: str = "cosine"
    max_index: int = 64

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise BasisError(f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}")
        if int(self.max_index) < 1:
            raise BasisError("max_index must be a positive integer")

    @property
    def name(self) -> str:
        return self.kind

    @property
    def size(self) -> int:
        return self.max_index

    def _phi(self, j: int, x: np.ndarray) -> np.ndarray:
        if j == 1:
            return np.ones_like(x)
        if self.kind == "cosine":
            return SQRT2 * np.cos((j - 1) * np.pi * x)
        level, shift = _haar_level_shift(j)
        scale = 2.0 ** (level / 2.0)
        t = (2.0**level) * x - shift
        out = np.where((t >= 0.0) & (t < 0.5), scale, 0.0)
        out = np.where((t >= 0.5) & (t < 1.0), -scale, out)
        if shift == 2**level - 1:
            # right end point belongs to the last wavelet of each level
            out = np.where(x == 1.0, -scale, out)
        return out

    def evaluate(self, x, k: int | None = None) -> np.ndarray:
        """Matrix of ``phi_1..phi_k`` at ``x``, shape ``(len(x), k)``."""
        k = self.max_index if k is None else int(k)
        if not 1 <= k <= self.max_index:
            raise BasisError(f"k={k} outside 1..{self.max_index}")
        x = _check_points(np.atleast_1d(x))
        if self.kind == "cosine":
            freqs = np.arange(k) * np.pi
            out = SQRT2 * np.cos(np.outer(x, freqs))
            out[:, 0] = 1.0
            return out
        return np.column_stack([self._phi(j, x) for j in range(1, k + 1)])

    def breakpoints(self, k: int | None = None) -> list[float]:
        """Points where the first ``k`` functions may jump (empty for cosine)."""
        if self.kind == "cosine":
            return []
        k = self.max_index if k is None else k
        pts = set()
        for j in range(2, k + 1):
            level, shift = _haar_level_shift(j)
            width = 2.0**-level
            pts.update((shift * width, (shift + 0.5) * width, (shift + 1) * width))
        return sorted(p for p in pts if 0.0 < p < 1.0)


def eval_fixed(basis: FixedBasis, j: int, x: float) -> float:
    """Value of the ``j``-th (1-based) basis function at a single point."""
    if not 1 <= j <= basis.max_index:
        raise BasisError(f"index {j} outside 1..{basis.max_index}")
    if not 0.0 <= x <= 1.0:
        raise BasisError(f"x={x} outside [0, 1]")
    return float(basis._phi(j, np.asarray([float(x)]))[0])


def gram_matrix(basis: FixedBasis, k: int, quadrature: int = DEFAULT_NODES) -> np.ndarray:
    """Quadrature Gram matrix of the first ``k`` basis functions.

    Cosine uses composite Simpson with ``quadrature`` nodes. Haar functions are
    piecewise constant on a dyadic mesh, so their Gram matrix is computed
    exactly on that mesh; the node count is still validated.
    """
    if quadrature < 257 or quadrature % 2 == 0:
        raise QuadratureError(f"quadrature needs an odd node count >= 257, got {quadrature}")
    if not 1 <= k <= basis.max_index:
        raise BasisError(f"k={k} outside 1..{basis.max_index}")
    if basis.kind == "haar":
        finest = _haar_level_shift(k)[0] + 1 if k > 1 else 0
        cells = 2**finest
        mid = (np.arange(cells) + 0.5) / cells
        vals = basis.evaluate(mid, k)
        return vals.T @ vals / cells
    x, w = simpson_nodes(quadrature)
    vals = basis.evaluate(x, k)
    return (vals * w[:, None]).T @ vals


@dataclass(frozen=True, eq=False)
class EstimatedBasis:
    """Dictionary functions orthonormalized under an empirical inner product.

    ``transform`` has one row per retained function and one column per
    dictionary member; row ``r`` gives the coefficients of the ``r``-th
    orthonormal function in terms of the dictionary. It is lower triangular
    in the sense that row ``r`` only touches members up to ``retained[r]``.
    """

    dictionary: tuple[Callable[[np.ndarray], np.ndarray], ...]
    transform: np.ndarray
    retained: tuple[int, ...]
    inner_product_sample: np.ndarray
    labels: tuple[str, ...] = field(default=())

    name = "estimated"

    @property
    def size(self) -> int:
        return len(self.retained)

    def dictionary_values(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([np.broadcast_to(f(x), x.shape) for f in self.dictionary])

    def evaluate(self, x, k: int | None = None) -> np.ndarray:
        k = self.size if k is None else int(k)
        if not 1 <= k <= self.size:
            raise BasisError(f"k={k} outside 1..{self.size}")
        return self.dictionary_values(x) @ self.transform[:k].T

    def empirical_gram(self) -> np.ndarray:
        vals = self.evaluate(self.inner_product_sample)
        return vals.T @ vals / len(self.inner_product_sample)

    def breakpoints(self, k: int | None = None) -> list[float]:
        return []


def orthonormalize(
    dictionary: Sequence[Callable[[np.ndarray], np.ndarray]],
    sample,
    drop_tol: float = 1e-6,
    labels: Sequence[str] | None = None,
) -> EstimatedBasis:
    """Modified Gram-Schmidt under ``<u, v> = mean(u(X) v(X))``.

    A member is dropped when its residual norm falls below ``drop_tol`` times
    its original norm. Members whose projection onto the current span has a
    large cosine (> 0.5) get a second orthogonalization pass.
    """
    sample = np.asarray(sample, dtype=float).ravel()
    m, n = len(dictionary), len(sample)
    if m == 0:
        raise DegenerateDictionaryError("empty dictionary")
    if n < m:
        raise BasisError(f"sample size {n} smaller than dictionary size {m}")
    if not 0.0 < drop_tol < 1.0:
        raise BasisError("drop_tol must lie in (0, 1)")

    values = np.column_stack([np.broadcast_to(f(sample), sample.shape) for f in dictionary])
    q_vals: list[np.ndarray] = []
    rows: list[np.ndarray] = []
    retained: list[int] = []
    for i in range(m):
        u = values[:, i].astype(float).copy()
        t = np.zeros(m)
        t[i] = 1.0
        norm0 = np.sqrt(np.mean(u * u))
        if not np.isfinite(norm0) or norm0 == 0.0:
            continue
        for sweep in range(2):
            large = False
            for q, row in zip(q_vals, rows):
                c = np.mean(u * q)
                u -= c * q
                t -= c * row
                large |= abs(c) > 0.5 * norm0
            if not large:
                break
        norm = np.sqrt(np.mean(u * u))
        if norm < drop_tol * norm0:
            continue
        q_vals.append(u / norm)
        rows.append(t / norm)
        retained.append(i)

    if not retained:
        raise DegenerateDictionaryError("all dictionary members were dropped (zero span)")
    transform = np.vstack(rows)
    transform.setflags(write=False)
    sample = sample.copy()
    sample.setflags(write=False)
    return EstimatedBasis(
        dictionary=tuple(dictionary),
        transform=transform,
        retained=tuple(retained),
        inner_product_sample=sample,
        labels=tuple(labels) if labels is not None else (),
    )
