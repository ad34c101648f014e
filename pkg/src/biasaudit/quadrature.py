"""Composite Simpson quadrature on [0, 1]."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DEFAULT_NODES = 2049


class QuadratureError(ValueError):
    pass


def simpson_nodes(nodes: int = DEFAULT_NODES, a: float = 0.0, b: float = 1.0):
    """Return ``(x, w)`` for composite Simpson's rule with ``nodes`` points."""
    if nodes < 3 or nodes % 2 == 0:
        raise QuadratureError(f"Simpson rule needs an odd node count >= 3, got {nodes}")
    x = np.linspace(a, b, nodes)
    h = (b - a) / (nodes - 1)
    w = np.full(nodes, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    nodes: int = DEFAULT_NODES,
    breakpoints: Sequence[float] = (),
) -> float | np.ndarray:
    """Integrate ``f`` over [0, 1].

    ``f`` may return shape ``(n,)`` or ``(n, k)``; the result is a float or a
    length-``k`` array accordingly. With ``breakpoints`` the interval is cut
    at those points and each piece gets its own Simpson rule, so jumps located
    there do not pollute the result.
    """
    cuts = sorted({0.0, 1.0, *(float(b) for b in breakpoints if 0.0 < b < 1.0)})
    if len(cuts) == 2:
        x, w = simpson_nodes(nodes)
        return _scalar(w @ f(x))
    per_piece = max(33, (nodes // (len(cuts) - 1)) | 1)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        x, w = simpson_nodes(per_piece, a, b)
        # nudge the end points inward so one-sided limits are used at jumps
        eps = 1e-13 * (b - a)
        x = x.copy()
        x[0] += eps
        x[-1] -= eps
        total = total + w @ f(x)
    return _scalar(total)


def _scalar(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v
