"""Adaptive composite Gauss-Legendre quadrature for vector-valued integrands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ToleranceNotMet

__all__ = ["QuadResult", "adaptive_gauss_legendre"]

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadResult:
    value: np.ndarray
    error: float
    panels: int


def _panel(f, lo, hi):
    half = 0.5 * (hi - lo)
    x = lo + half * (_NODES + 1.0)
    y = np.asarray(f(x), dtype=float)
    return half * np.tensordot(_WEIGHTS, y, axes=(0, 0)), float(np.max(np.abs(y)))


def adaptive_gauss_legendre(f, lo: float, hi: float, tol: float, initial_panels: int = 8,
                            max_depth: int = 40, max_panels: int = 200_000) -> QuadResult:
    """Integrate ``f`` over ``[lo, hi]`` to absolute accuracy ``tol``.

    ``f`` maps an array of abscissae of shape ``(m,)`` to values of shape
    ``(m,)`` or ``(m, k)``.  Each panel is compared with the sum over its two
    halves; a panel is accepted when that difference is within its share of
    ``tol`` (proportional to its width) or below the panel's roundoff floor.
    Returns the summed halves.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not hi > lo:
        raise ValueError("need hi > lo")
    width = hi - lo
    edges = np.linspace(lo, hi, initial_panels + 1)
    stack = [(edges[i], edges[i + 1], _panel(f, edges[i], edges[i + 1])[0], 0)
             for i in range(initial_panels)]
    total = None
    err = 0.0
    count = 0
    while stack:
        a, b, whole, depth = stack.pop()
        m = 0.5 * (a + b)
        left, s1 = _panel(f, a, m)
        right, s2 = _panel(f, m, b)
        fine = left + right
        diff = float(np.max(np.abs(fine - whole)))
        # below the roundoff floor of the panel further bisection cannot help
        floor = 1e3 * _EPS * (b - a) * max(s1, s2)
        if diff <= max(tol * (b - a) / width, floor):
            total = fine if total is None else total + fine
            err += diff
            count += 1
            continue
        if depth >= max_depth or count + len(stack) > max_panels:
            raise ToleranceNotMet(f"quadrature stalled on [{a:.6g}, {b:.6g}] with error {diff:.3e}")
        stack.append((m, b, right, depth + 1))
        stack.append((a, m, left, depth + 1))
    return QuadResult(value=np.asarray(total), error=err, panels=count)
