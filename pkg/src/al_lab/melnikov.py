"""Melnikov function of the first invariant along the even heteroclinic orbit.

``M = alpha1 f1 + alpha2 f2`` with ``f_k = 2 int integrand_k dt``.  Because
the orbit depends on ``gamma`` only through the phase ``e^{i gamma}``, the
integrands are single harmonics in ``gamma``:

    integrand_1 = Im(e^{i gamma} C1(t)),   integrand_2 = Im(e^{2 i gamma} C2(t)).

:class:`MelnikovProfile` integrates ``C1`` and ``C2`` once per
``(a, omega, N, p, ear)`` and then gives ``M`` and ``dM/dgamma`` at any
``gamma`` exactly; :func:`melnikov_coefficients` integrates at a single
``gamma`` directly and is used to cross-check the profile.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .darboux import OrbitParams, even_heteroclinic_orbit, even_melnikov_vector
from .errors import DegenerateF1, DegenerateRoot, NoRoot
from .lattice import _g_terms
from .quadrature import adaptive_gauss_legendre

__all__ = [
    "MelnikovCoefficients",
    "MelnikovProfile",
    "ZeroSurfaceSample",
    "melnikov_integrand",
    "melnikov_coefficients",
    "melnikov_profile",
    "kappa",
    "solve_zero_surface",
    "dM_dgamma",
    "transversality_scan",
    "zero_surface_scan",
    "kappa_to_csv",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class MelnikovCoefficients:
    f1: float
    f2: float
    a: float
    gamma: float
    omega: float
    N: int
    p: float
    ear: int
    truncation_T: float
    quad_error: float


@dataclass(frozen=True)
class ZeroSurfaceSample:
    a0: float
    gamma0: float
    residual_M: float
    dM_dgamma0: float
    nondegenerate: bool
    kappa: float | None


def melnikov_integrand(t, a: float, gamma: float, omega: float, N: int,
                       p: float = 0.0, ear: int = 1):
    """``(integrand_1, integrand_2)`` at time(s) ``t``; each is ``sum_n Im(v_r g^{(k)})``."""
    params = OrbitParams(a, omega, gamma, p, ear, N)
    return _integrand(params, t)


def _integrand(params, t):
    t = np.asarray(t, dtype=float)
    Q = even_heteroclinic_orbit(params, t)
    _, vr = even_melnikov_vector(params, t)
    g1, g2 = _g_terms(Q, params.h)
    return np.sum(np.imag(vr * g1), axis=-1), np.sum(np.imag(vr * g2), axis=-1)


def _truncation(params, fun, tol):
    """Half-width ``T`` about the orbit centre with ``C e^{-2 mu T} / mu < tol / 10``.

    ``C`` bounds ``|integrand| cosh(2 mu t + 2 p)``; it is sampled on a grid
    over the core with a safety factor of 2.  ``tol`` is relative to
    ``max(1, 2 int |integrand| dt)``; the absolute tolerance is returned too.
    """
    mu = params.mu
    t0 = -params.p / mu
    ts = t0 + np.linspace(-12.0, 12.0, 241) / (2 * mu)
    vals = np.abs(np.atleast_2d(fun(ts).T).T)
    env = np.cosh(2 * mu * ts + 2 * params.p)
    C = 2.0 * float(np.max(vals * env[:, None])) + 1e-300
    mag = float(np.max(np.trapezoid(vals, ts, axis=0)))
    atol = tol * max(1.0, 2.0 * mag)
    T = max(math.log(10.0 * C / (mu * atol)) / (2 * mu), 6.0 / (2 * mu))
    return t0, T, atol


def _integrate(params, fun, tol, T_scale=1.0, panels=8):
    t0, T, atol = _truncation(params, fun, tol)
    T *= T_scale
    res = adaptive_gauss_legendre(fun, t0 - T, t0 + T, atol / 2.0, initial_panels=panels)
    return 2.0 * res.value, 2.0 * res.error, T


def melnikov_coefficients(a: float, gamma: float, omega: float, N: int, p: float = 0.0,
                          ear: int = 1, tol: float = DEFAULT_TOL,
                          T_scale: float = 1.0, panels: int = 8) -> MelnikovCoefficients:
    """Direct quadrature of ``f1, f2`` at one ``gamma``.

    ``T_scale`` multiplies the automatically chosen truncation and ``panels``
    sets the initial panel count (both used by stability checks).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    params = OrbitParams(a, omega, gamma, p, ear, N)

    def fun(t):
        i1, i2 = _integrand(params, t)
        return np.stack([i1, i2], axis=-1)

    val, err, T = _integrate(params, fun, tol, T_scale, panels)
    return MelnikovCoefficients(float(val[0]), float(val[1]), a, gamma, omega, N, p, ear, T, err)


@dataclass(frozen=True)
class MelnikovProfile:
    """Integrated harmonic amplitudes ``J_k = 2 int C_k dt``.

    ``f1(gamma) = Im(e^{i gamma} J1)`` and ``f2(gamma) = Im(e^{2 i gamma} J2)``.
    """

    a: float
    omega: float
    N: int
    p: float
    ear: int
    J1: complex
    J2: complex
    quad_error: float
    truncation_T: float

    def f(self, gamma):
        g = np.asarray(gamma, dtype=float)
        return np.imag(np.exp(1j * g) * self.J1), np.imag(np.exp(2j * g) * self.J2)

    def M(self, gamma, alpha):
        f1, f2 = self.f(gamma)
        return alpha[0] * f1 + alpha[1] * f2

    def dM(self, gamma, alpha):
        g = np.asarray(gamma, dtype=float)
        return (alpha[0] * np.real(np.exp(1j * g) * self.J1)
                + 2.0 * alpha[1] * np.real(np.exp(2j * g) * self.J2))

    def scale(self, alpha=(1.0, 1.0)) -> float:
        """Magnitude used for relative tolerances: ``|alpha1||J1| + |alpha2||J2|``."""
        return abs(alpha[0]) * abs(self.J1) + abs(alpha[1]) * abs(self.J2)


@lru_cache(maxsize=256)
def melnikov_profile(a: float, omega: float, N: int, p: float = 0.0, ear: int = 1,
                     tol: float = DEFAULT_TOL) -> MelnikovProfile:
    params = OrbitParams(a, omega, 0.0, p, ear, N)
    q0 = OrbitParams(a, omega, 0.5 * math.pi, p, ear, N)
    q4 = OrbitParams(a, omega, 0.25 * math.pi, p, ear, N)

    def fun(t):
        r0 = _integrand(params, t)
        r1 = _integrand(q0, t)[0]
        r2 = _integrand(q4, t)[1]
        # C1 = I1(pi/2) + i I1(0);  C2 = I2(pi/4) + i I2(0)
        return np.stack([r1, r0[0], r2, r0[1]], axis=-1)

    val, err, T = _integrate(params, fun, tol)
    return MelnikovProfile(a, omega, N, p, ear, complex(val[0], val[1]), complex(val[2], val[3]), err, T)


def kappa(a: float, gamma: float, omega: float, N: int, p: float = 0.0, ear: int = 1,
          tol: float = DEFAULT_TOL) -> float:
    """``kappa = -f2 / (4 omega f1)``; undefined where ``f1`` vanishes (e.g. ``gamma = 0, pi``)."""
    prof = melnikov_profile(a, omega, N, p, ear, tol)
    f1, f2 = prof.f(gamma)
    if abs(f1) <= 1e-12 * prof.scale():
        raise DegenerateF1(f"f1 = {f1:.3e} vanishes at a = {a}, gamma = {gamma}")
    return float(-f2 / (4.0 * omega * f1))


def _fd4(fun, x, h):
    return (-fun(x + 2 * h) + 8 * fun(x + h) - 8 * fun(x - h) + fun(x - 2 * h)) / (12 * h)


def dM_dgamma(a0: float, gamma0: float, alpha, omega: float, N: int, p: float = 0.0,
              ear: int = 1, step: float = 1e-4, tol: float = DEFAULT_TOL,
              with_error: bool = False):
    """Fourth-order central difference of ``M`` in ``gamma0`` at step ``step``.

    With ``with_error=True`` returns ``(value, richardson_error)`` where the
    error compares steps ``h`` and ``2h``.
    """
    prof = melnikov_profile(a0, omega, N, p, ear, tol)
    fun = lambda g: float(prof.M(g, alpha))  # noqa: E731
    d1 = _fd4(fun, gamma0, step)
    if not with_error:
        return d1
    d2 = _fd4(fun, gamma0, 2 * step)
    return d1, abs(d1 - d2) / 15.0


def _rtsafe(fun, dfun, lo, hi, flo, fhi, xtol=1e-15, maxiter=100):
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo > 0:
        lo, hi = hi, lo
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx, dx = fun(x), dfun(x)
        if fx == 0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        step = fx / dx if dx != 0 else math.inf
        xn = x - step
        if not (min(lo, hi) < xn < max(lo, hi)):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= xtol * max(1.0, abs(x)):
            return xn
        x = xn
    return x


def _brackets(prof, alpha, grid=256):
    g = np.linspace(0.0, 2 * math.pi, grid + 1)
    m = prof.M(g, alpha)
    out = []
    for i in range(grid):
        if m[i] == 0 or m[i] * m[i + 1] < 0:
            out.append((g[i], g[i + 1], m[i], m[i + 1]))
    return out


def solve_zero_surface(a0: float, alpha, omega: float, N: int, gamma_seed: float,
                       p: float = 0.0, ear: int = 1, tol: float = DEFAULT_TOL) -> ZeroSurfaceSample:
    """Root ``gamma0`` of ``M(a0, .)`` closest to ``gamma_seed`` (circular distance).

    Sign changes are bracketed on a uniform grid over ``[0, 2 pi]`` and refined
    by Newton steps safeguarded with bisection.  ``kappa`` is reported when
    ``f1`` does not vanish at the root.
    """
    prof = melnikov_profile(a0, omega, N, p, ear, tol)
    scale = 2.0 * prof.scale(alpha)
    brackets = _brackets(prof, alpha)
    if not brackets or scale == 0:
        raise NoRoot(f"M has no sign change in gamma at a0 = {a0}")
    seed = gamma_seed % (2 * math.pi)

    def cdist(x):
        d = abs(x - seed) % (2 * math.pi)
        return min(d, 2 * math.pi - d)

    lo, hi, flo, fhi = min(brackets, key=lambda b: cdist(0.5 * (b[0] + b[1])))
    fun = lambda g: float(prof.M(g, alpha))  # noqa: E731
    dfun = lambda g: float(prof.dM(g, alpha))  # noqa: E731
    root = _rtsafe(fun, dfun, lo, hi, flo, fhi) % (2 * math.pi)
    res = fun(root)
    d = dM_dgamma(a0, root, alpha, omega, N, p, ear, tol=tol)
    if abs(d) < 1e-8 * scale:
        raise DegenerateRoot(f"dM/dgamma0 = {d:.3e} at gamma0 = {root}")
    f1, f2 = prof.f(root)
    kap = None
    if abs(f1) > 1e-6 * prof.scale():
        kap = float(-f2 / (4.0 * omega * f1))
    return ZeroSurfaceSample(a0, root, float(res), float(d), True, kap)


def transversality_scan(a_grid, gamma_grid, alpha, omega: float, N: int, ear: int = 1,
                        p: float = 0.0, tol: float = DEFAULT_TOL, threads: int = 1,
                        threshold: float = 1e-8) -> list[dict]:
    """Evaluate ``M`` and ``dM/dgamma0`` on a grid and flag transversal cells.

    A cell is transversal when ``|dM/dgamma0| > threshold * scale``; a cell
    is marked ``root`` when ``M`` changes sign between it and the next
    ``gamma`` in the grid.  Rows come back in grid order regardless of
    ``threads``.
    """
    a_grid = [float(a) for a in a_grid]
    gamma_grid = [float(g) for g in gamma_grid]

    def row_block(ia):
        a = a_grid[ia]
        prof = melnikov_profile(a, omega, N, p, ear, tol)
        scale = 2.0 * prof.scale(alpha)
        ms = [float(prof.M(g, alpha)) for g in gamma_grid]
        rows = []
        for ig, g in enumerate(gamma_grid):
            d = dM_dgamma(a, g, alpha, omega, N, p, ear, tol=tol)
            nxt = ms[ig + 1] if ig + 1 < len(ms) else None
            rows.append({
                "a0": a, "gamma0": g, "M": ms[ig], "dMdgamma": d,
                "transversal": abs(d) > threshold * scale,
                "root": nxt is not None and (ms[ig] == 0 or ms[ig] * nxt < 0),
            })
        return ia, rows

    blocks = _map(row_block, range(len(a_grid)), threads)
    out = []
    for _, rows in sorted(blocks, key=lambda b: b[0]):
        out.extend(rows)
    return out


def zero_surface_scan(a_grid, seeds, alpha, omega: float, N: int, ear: int = 1,
                      p: float = 0.0, tol: float = DEFAULT_TOL, threads: int = 1) -> list:
    """``solve_zero_surface`` over every ``(a0, seed)`` pair; failures are kept as ``None`` entries."""
    jobs = [(i, j, float(a), float(s)) for i, a in enumerate(a_grid) for j, s in enumerate(seeds)]

    def one(job):
        i, j, a, s = job
        try:
            return (i, j), solve_zero_surface(a, alpha, omega, N, s, p, ear, tol)
        except (NoRoot, DegenerateRoot) as exc:
            return (i, j), exc

    results = _map(one, jobs, threads)
    return [r for _, r in sorted(results, key=lambda x: x[0])]


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def kappa_to_csv(rows, header: str = "") -> str:
    """Rows of ``(a, gamma, omega, f1, f2, kappa)``; ``kappa`` may be ``nan``."""
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "gamma", "omega", "f1", "f2", "kappa"])
    for r in rows:
        w.writerow([f"{float(v):.17g}" for v in r])
    return buf.getvalue()
