"""Dynamics on the invariant plane of uniform states and in the resonant annulus.

On the plane ``q_n = q`` the perturbed lattice reduces to a single complex
ODE.  Near the resonant circle ``|q| = omega`` we write
``q = (omega + eta y) e^{i xi}`` with ``eta = sqrt(eps)`` and rescaled time
``tau = eta t``.  The lattice spacing is ``h = 1/N`` with ``N`` a parameter
(default 3).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    BoundaryCase,
    ContinuationFailure,
    IndeterminateKind,
    NegativeModulus,
    NoSaddle,
    ZeroModulus,
)
from .lattice import PerturbationParams

__all__ = [
    "AnnulusFixedPoint",
    "plane_rhs",
    "polar_rhs",
    "annulus_rhs",
    "annulus_jacobian",
    "leading_rhs",
    "leading_fixed_points",
    "refine_fixed_points",
    "classify_fixed_point",
    "rescaled_hamiltonian",
    "leading_hamiltonian",
    "first_order_offsets",
    "separatrix_levels",
    "SeparatrixLevel",
    "point_in_polygon",
    "annulus_hamiltonian",
    "phase_portrait_csv",
    "fixed_points_json",
    "separatrix_csv",
]

DEFAULT_N = 3
ETA0 = 0.1
DELTA0 = 0.05


@dataclass(frozen=True)
class AnnulusFixedPoint:
    y: float
    xi: float
    kind: str
    trace: float
    det: float
    eta: float
    label: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _h(N):
    return 1.0 / N


def _log_term(I, h):
    """``(rho/h^2) ln rho`` and its derivative in ``I``."""
    u = (h * I) ** 2
    lr = np.log1p(u)
    return (1.0 + u) * lr / (h * h), 2.0 * I * (lr + 1.0)


def _omega_term(omega, h):
    """``Omega = rho_0 ln rho_0 / h^2``."""
    return _log_term(omega, h)[0]


# ---------------------------------------------------------------------------
# plane and polar forms

def plane_rhs(q: complex, omega: float, pert: PerturbationParams, N: int = DEFAULT_N) -> complex:
    h = _h(N)
    qb = np.conj(q)
    w = _log_term(abs(q), h)[0]
    bracket = (pert.alpha1 * (q + qb) + pert.alpha2 * (q * q + qb * qb)) * q \
        + (pert.alpha1 + 2.0 * pert.alpha2 * qb) * w
    return -1j * (2.0 * (abs(q) ** 2 - omega**2) * q + pert.epsilon * bracket)


def polar_rhs(I: float, xi: float, omega: float, pert: PerturbationParams,
              N: int = DEFAULT_N) -> tuple[float, float]:
    if I <= 0:
        raise ZeroModulus("polar form needs I > 0")
    h = _h(N)
    a1, a2, eps = pert.alpha1, pert.alpha2, pert.epsilon
    w = _log_term(I, h)[0]
    dI = -eps * math.sin(xi) * (a1 + 4 * a2 * I * math.cos(xi)) * w
    dxi = -2.0 * (I * I - omega**2) - eps * (
        2 * a1 * I * math.cos(xi) + 2 * a2 * I * I * math.cos(2 * xi)
        + (a1 * math.cos(xi) / I + 2 * a2 * math.cos(2 * xi)) * w)
    return dI, dxi


# ---------------------------------------------------------------------------
# resonant annulus

def _modulus(y, eta, omega):
    I = omega + eta * y
    if np.any(np.asarray(I) <= 0):
        raise NegativeModulus("omega + eta*y must be positive")
    return I


def annulus_rhs(y: float, xi: float, eta: float, alpha, omega: float,
                N: int = DEFAULT_N) -> tuple[float, float]:
    a1, a2 = alpha
    I = _modulus(y, eta, omega)
    L = _log_term(I, _h(N))[0]
    c, s = math.cos(xi), math.sin(xi)
    c2 = math.cos(2 * xi)
    f1 = -s * (a1 + 4 * a2 * I * c) * L
    f2 = -4 * omega * y - eta * (2 * y * y + 2 * a1 * I * c + 2 * a2 * c2 * I * I
                                 + (a1 * c / I + 2 * a2 * c2) * L)
    return f1, f2


def annulus_jacobian(y: float, xi: float, eta: float, alpha, omega: float,
                     N: int = DEFAULT_N) -> np.ndarray:
    """Analytic linearisation ``[[df1/dy, df1/dxi], [df2/dy, df2/dxi]]``."""
    a1, a2 = alpha
    I = _modulus(y, eta, omega)
    L, dL = _log_term(I, _h(N))
    c, s = math.cos(xi), math.sin(xi)
    c2, s2 = math.cos(2 * xi), math.sin(2 * xi)
    P = a1 + 4 * a2 * I * c
    j11 = -s * (4 * a2 * eta * c * L + P * eta * dL)
    j12 = L * (4 * a2 * I * s * s - c * P)
    j21 = -4 * omega - eta * (4 * y + 2 * a1 * eta * c + 4 * a2 * c2 * I * eta
                              - a1 * c * eta * L / (I * I) + (a1 * c / I + 2 * a2 * c2) * eta * dL)
    j22 = eta * (2 * a1 * I * s + 4 * a2 * s2 * I * I + (a1 * s / I + 4 * a2 * s2) * L)
    return np.array([[j11, j12], [j21, j22]])


def leading_rhs(y: float, xi: float, alpha, omega: float, N: int = DEFAULT_N) -> tuple[float, float]:
    a1, a2 = alpha
    Om = _omega_term(omega, _h(N))
    return -Om * math.sin(xi) * (a1 + 4 * a2 * omega * math.cos(xi)), -4.0 * omega * y


def leading_hamiltonian(y, xi, alpha, omega: float, N: int = DEFAULT_N):
    """``H~ = 2 omega y^2 + Omega (alpha1 cos xi + alpha2 omega cos 2 xi)``."""
    a1, a2 = alpha
    Om = _omega_term(omega, _h(N))
    return 2 * omega * np.asarray(y) ** 2 + Om * (a1 * np.cos(xi) + a2 * omega * np.cos(2 * np.asarray(xi)))


def _u_minus_log1p(u):
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-2
    us = np.where(small, u, 0.0)
    series = sum(((-1) ** k) * us**k / k for k in range(2, 10))
    ul = np.where(small, 0.0, u)
    return np.where(small, series, ul - np.log1p(ul))


def rescaled_hamiltonian(y, xi, eta: float, alpha, omega: float, N: int = DEFAULT_N):
    """Level function of the annulus flow, ``2 omega y^2 + ... + O(eta)``.

    Evaluated without cancellation: with ``u = h^2 (I^2 - omega^2) / rho_0`` the
    leading bracket equals ``(rho_0 / h^2) (u - log1p(u))``.  At ``eta = 0``
    the limit :func:`leading_hamiltonian` is returned.
    """
    if eta == 0:
        return leading_hamiltonian(y, xi, alpha, omega, N)
    a1, a2 = alpha
    h = _h(N)
    y = np.asarray(y, dtype=float)
    xi = np.asarray(xi, dtype=float)
    I = _modulus(y, eta, omega)
    rho0 = 1.0 + (h * omega) ** 2
    u = h * h * eta * y * (2 * omega + eta * y) / rho0
    lnrho = math.log(rho0) + np.log1p(u)
    pre = rho0 / (omega * h * h)
    core = pre * rho0 / (h * h) * _u_minus_log1p(u) / eta**2
    pert = pre * (a1 * I * np.cos(xi) + a2 * I * I * np.cos(2 * xi)) * lnrho
    return core + pert


def annulus_hamiltonian(y, xi, eta: float, alpha, omega: float, N: int = DEFAULT_N):
    """Restriction ``H`` of the lattice Hamiltonian to the annulus (direct formula)."""
    a1, a2 = alpha
    h = _h(N)
    I = _modulus(np.asarray(y, dtype=float), eta, omega)
    rho0 = 1.0 + (h * omega) ** 2
    lnrho = np.log1p((h * I) ** 2)
    return 2 * N / h**2 * ((I * I - rho0 / h**2 * lnrho)
                           + eta**2 * (a1 * I * np.cos(xi) + a2 * I * I * np.cos(2 * xi)) * lnrho)


# ---------------------------------------------------------------------------
# fixed points

def _kind(J, scale=None):
    det = float(np.linalg.det(J))
    scale = scale if scale is not None else float(np.linalg.norm(J)) ** 2
    if abs(det) < 1e-10 * scale:
        raise IndeterminateKind(f"det = {det:.3e} is too small to classify")
    return ("saddle" if det < 0 else "center"), det


def classify_fixed_point(y: float, xi: float, eta: float, alpha, omega: float,
                         N: int = DEFAULT_N, label: int = 0) -> AnnulusFixedPoint:
    """Linearise at ``(y, xi)``; saddle iff ``det < 0``, centre iff ``det > 0``."""
    J = annulus_jacobian(y, xi, eta, alpha, omega, N)
    kind, det = _kind(J)
    return AnnulusFixedPoint(float(y), float(xi), kind, float(np.trace(J)), det, float(eta), label)


def leading_fixed_points(alpha, omega: float, N: int = DEFAULT_N,
                         delta0: float = DELTA0) -> list[AnnulusFixedPoint]:
    """Fixed points of the ``eta = 0`` flow: ``y = 0`` with ``xi`` in ``{0, pi}`` plus
    ``+-arccos(-alpha1 / (4 alpha2 omega))`` when that ratio is below one in modulus."""
    a1, a2 = alpha
    xis = [0.0, math.pi]
    if a2 != 0:
        r = -a1 / (4 * a2 * omega)
        if abs(abs(r) - 1.0) <= delta0:
            raise BoundaryCase(f"|alpha1/(4 alpha2 omega)| = {abs(r):.4f} within {delta0} of 1")
        if abs(r) < 1:
            x3 = math.acos(r)
            xis += [x3, -x3]
    return [classify_fixed_point(0.0, x, 0.0, alpha, omega, N, label=j + 1)
            for j, x in enumerate(xis)]


def first_order_offsets(alpha, omega: float, N: int = DEFAULT_N) -> dict:
    """Closed-form first-order coefficients ``y_1^{(j)}`` of ``y^{(j)} = eta y_1^{(j)} + O(eta^2)``."""
    a1, a2 = alpha
    L0 = _omega_term(omega, _h(N))
    out = {
        1: -(2 * omega * (a2 * omega + a1) + (2 * a2 + a1 / omega) * L0) / (4 * omega),
        2: -(2 * omega * (a2 * omega - a1) + (2 * a2 - a1 / omega) * L0) / (4 * omega),
    }
    if a2 != 0:
        y3 = (8 * a2 * a2 * omega**2 + a1 * a1) / (16 * a2 * omega) + a2 / (2 * omega) * L0
        out[3] = out[4] = y3
    return out


def _newton_1d(y, xi, eta, alpha, omega, N, tol=1e-12, maxiter=50):
    for _ in range(maxiter):
        f2 = annulus_rhs(y, xi, eta, alpha, omega, N)[1]
        if abs(f2) <= tol:
            return y
        d = annulus_jacobian(y, xi, eta, alpha, omega, N)[1, 0]
        y -= f2 / d
    if abs(annulus_rhs(y, xi, eta, alpha, omega, N)[1]) <= tol:
        return y
    raise ContinuationFailure("1-D Newton did not converge")


def _newton_2d(y, xi, eta, alpha, omega, N, tol=1e-12, maxiter=50):
    x = np.array([y, xi], dtype=float)
    for _ in range(maxiter):
        f = np.array(annulus_rhs(x[0], x[1], eta, alpha, omega, N))
        if np.linalg.norm(f) <= tol:
            return x
        J = annulus_jacobian(x[0], x[1], eta, alpha, omega, N)
        x = x - np.linalg.solve(J, f)
    if np.linalg.norm(annulus_rhs(x[0], x[1], eta, alpha, omega, N)) <= tol:
        return x
    raise ContinuationFailure("2-D Newton did not converge")


def refine_fixed_points(eta: float, alpha, omega: float, continuation_steps: int = 10,
                        N: int = DEFAULT_N, eta0: float = ETA0, delta0: float = DELTA0,
                        tol: float = 1e-12) -> list[AnnulusFixedPoint]:
    """Continue each leading fixed point from ``eta = 0`` to ``eta`` by Newton steps.

    ``xi = 0`` and ``xi = pi`` stay exact (only ``y`` is solved for there).
    A failed step is halved up to 20 times before giving up.
    """
    if abs(eta) >= eta0:
        raise ContinuationFailure(f"|eta| = {abs(eta)} not below eta0 = {eta0}")
    out = []
    for fp in leading_fixed_points(alpha, omega, N, delta0):
        y, xi = fp.y, fp.xi
        exact = fp.label in (1, 2)
        e_cur = 0.0
        step = eta / max(1, continuation_steps)
        halvings = 0
        while e_cur != eta:
            e_new = eta if abs(eta - e_cur) <= abs(step) * (1 + 1e-12) else e_cur + step
            try:
                if exact:
                    y_new = _newton_1d(y, xi, e_new, alpha, omega, N, tol)
                    xi_new = xi
                else:
                    y_new, xi_new = _newton_2d(y, xi, e_new, alpha, omega, N, tol)
            except (ContinuationFailure, np.linalg.LinAlgError):
                halvings += 1
                if halvings > 20:
                    raise ContinuationFailure(f"step halving exhausted for fixed point {fp.label}")
                step *= 0.5
                continue
            y, xi, e_cur = y_new, xi_new, e_new
        out.append(classify_fixed_point(y, xi, eta, alpha, omega, N, label=fp.label))
    return out


# ---------------------------------------------------------------------------
# level sets

@dataclass(frozen=True)
class SeparatrixLevel:
    saddle: AnnulusFixedPoint
    level: float
    lines: list  # arrays of (y, xi) points; closed on the cylinder
    closure_gaps: list
    cell: float


def _graded_axis(lo, hi, n, focus, width, n_fine):
    base = np.linspace(lo, hi, n)
    extra = []
    for c in focus:
        k = np.arange(-n_fine, n_fine) + 0.5
        extra.append(c + k * (width / n_fine))
    pts = np.concatenate([base] + extra) if extra else base
    pts = pts[(pts >= lo) & (pts <= hi)]
    return np.unique(pts)


def _join_periodic(lines, period, tol):
    """Chain open polylines whose end points agree modulo ``period`` in xi."""
    pool = [np.asarray(l) for l in lines]
    chains = []
    while pool:
        cur = pool.pop(0)
        changed = True
        while changed:
            changed = False
            end = cur[-1]
            for i, seg in enumerate(pool):
                for cand, flip in ((seg, False), (seg[::-1], True)):
                    for shift in (0.0, period, -period):
                        d = np.hypot(cand[0, 0] - end[0], cand[0, 1] + shift - end[1])
                        if d <= tol:
                            nxt = cand.copy()
                            nxt[:, 1] += shift
                            cur = np.vstack([cur, nxt[1:]])
                            pool.pop(i)
                            changed = True
                            break
                    if changed:
                        break
                if changed:
                    break
        chains.append(cur)
    return chains


def _closure_gap(line, period):
    dy = line[-1, 0] - line[0, 0]
    dx = (line[-1, 1] - line[0, 1]) % period
    dx = min(dx, period - dx)
    return float(math.hypot(dy, dx))


def point_in_polygon(y: float, xi: float, line: np.ndarray) -> bool:
    """Even-odd ray test in the ``(xi, y)`` plane."""
    xs, ys = line[:, 1], line[:, 0]
    inside = False
    for k in range(len(xs) - 1):
        x1, y1, x2, y2 = xs[k], ys[k], xs[k + 1], ys[k + 1]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > xi:
                inside = not inside
    return inside


def separatrix_levels(eta: float, alpha, omega: float, N: int = DEFAULT_N,
                      n_grid: int = 401, n_fine: int = 40,
                      fixed_points: list | None = None) -> list[SeparatrixLevel]:
    """Trace the level set of the rescaled Hamiltonian through every saddle.

    Marching squares on a ``(y, xi)`` grid spanning one period in ``xi``, with
    extra grid lines packed around each saddle.  The window starts midway
    between fixed points so no saddle sits on the cut; polylines crossing the
    cut are rejoined modulo ``2 pi``.
    """
    import contourpy

    fps = fixed_points if fixed_points is not None else (
        leading_fixed_points(alpha, omega, N) if eta == 0 else
        refine_fixed_points(eta, alpha, omega, N=N))
    saddles = [f for f in fps if f.kind == "saddle"]
    if not saddles:
        raise NoSaddle("no saddle among the fixed points")
    xs = sorted(f.xi % (2 * math.pi) for f in fps)
    gaps = [(xs[(i + 1) % len(xs)] - xs[i]) % (2 * math.pi) or 2 * math.pi for i in range(len(xs))]
    i = int(np.argmax(gaps))
    start = xs[i] + 0.5 * gaps[i]
    period = 2 * math.pi

    hvals = [float(rescaled_hamiltonian(f.y, f.xi, eta, alpha, omega, N)) for f in fps]
    spread = max(hvals) - min(hvals)
    ymax = 1.5 * math.sqrt(max(spread, 1e-12) / (2 * omega)) + max(abs(f.y) for f in fps)
    if eta != 0:
        ymax = min(ymax, 0.9 * omega / abs(eta))
    out = []
    for s in saddles:
        xi_s = start + ((s.xi - start) % period)
        xi_ax = _graded_axis(start, start + period, n_grid, [xi_s], 0.05 * period, n_fine)
        y_ax = _graded_axis(-ymax, ymax, n_grid, [s.y], 0.05 * ymax, n_fine)
        Y, X = np.meshgrid(y_ax, xi_ax, indexing="ij")
        Z = rescaled_hamiltonian(Y, X, eta, alpha, omega, N)
        level = float(rescaled_hamiltonian(s.y, s.xi, eta, alpha, omega, N))
        gen = contourpy.contour_generator(x=xi_ax, y=y_ax, z=Z, line_type="Separate")
        raw = [np.column_stack([seg[:, 1], seg[:, 0]]) for seg in gen.lines(level)]
        cell = float(max(np.max(np.diff(xi_ax)), np.max(np.diff(y_ax))))
        lines = _join_periodic(raw, period, 2 * cell)
        out.append(SeparatrixLevel(s, level, lines, [_closure_gap(l, period) for l in lines], cell))
    return out


# ---------------------------------------------------------------------------
# outputs

def phase_portrait_csv(eta, alpha, omega, N=DEFAULT_N, ny=101, nxi=101, ymax=None, header="") -> str:
    if ymax is None:
        ymax = 2.0 * math.sqrt(_omega_term(omega, _h(N)) * (abs(alpha[0]) + abs(alpha[1]) * omega) / omega + 1e-12)
        if eta != 0:
            ymax = min(ymax, 0.9 * omega / abs(eta))
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y", "xi", "H"])
    for y in np.linspace(-ymax, ymax, ny):
        for xi in np.linspace(0.0, 2 * math.pi, nxi):
            w.writerow([f"{y:.17g}", f"{xi:.17g}",
                        f"{float(rescaled_hamiltonian(y, xi, eta, alpha, omega, N)):.17g}"])
    return buf.getvalue()


def fixed_points_json(fps) -> str:
    return json.dumps([{k: v for k, v in f.to_dict().items()} for f in fps], indent=2)


def separatrix_csv(levels, header="") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["contour_id", "saddle_label", "level", "y", "xi"])
    cid = 0
    for lev in levels:
        for line in lev.lines:
            for y, xi in line:
                w.writerow([cid, lev.saddle.label, f"{lev.level:.17g}", f"{y:.17g}", f"{xi:.17g}"])
            cid += 1
    return buf.getvalue()
