"""Floquet discriminant of the discrete Lax problem and its spectral data.

The spatial Lax operator is the transfer matrix ``L_n(z) = [[z, i h q_n],
[i h conj(q_n), 1/z]]``; the discriminant is the trace of the ordered product
``L_{N-1} ... L_0``.  Because ``det L_n = rho_n = 1 + h^2 |q_n|^2`` the
natural normalisation is ``D = sqrt(prod rho_n)``.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BranchAmbiguity,
    NoConvergence,
    NotSimpleCritical,
    ZeroSpectralParameter,
)
from .lattice import LatticeState, in_window

log = logging.getLogger(__name__)

__all__ = [
    "DiscriminantValue",
    "SpectralPoint",
    "SpectralTolerances",
    "BlochPair",
    "transfer_matrix",
    "fundamental_matrix",
    "prefix_matrices",
    "discriminant",
    "discriminant_z_derivatives",
    "uniform_spectral_points",
    "uniform_z",
    "find_critical_points",
    "classify_spectral_point",
    "discriminant_gradient",
    "normalized_gradient",
    "invariant_F",
    "grad_invariant_F",
    "uniform_bloch_functions",
    "bloch_gradient",
    "default_seeds",
]

KINDS = ("periodic", "antiperiodic", "critical", "double", "multiple", "regular")


@dataclass(frozen=True)
class DiscriminantValue:
    z: complex
    delta: complex
    D: float

    @property
    def delta_tilde(self) -> complex:
        return self.delta / self.D


@dataclass(frozen=True)
class SpectralTolerances:
    """Relative thresholds used to turn exact spectral conditions into tests.

    ``|Delta -+ 2D| <= rel_periodic * 2D`` marks a (anti)periodic point and
    ``|Delta'| <= rel_critical * max(1, |Delta''|)`` a critical point.
    """

    rel_periodic: float = 1e-8
    rel_critical: float = 1e-8


@dataclass(frozen=True)
class SpectralPoint:
    z: complex
    kind: str
    algebraic_multiplicity: int
    residual_periodic: float
    residual_antiperiodic: float
    abs_d1: float
    abs_d2: float
    D: float


@dataclass(frozen=True)
class BlochPair:
    """Bloch solutions ``psi_n^{+-}`` for ``n = 0..N`` with multipliers ``D zeta^{+-1}``."""

    z: complex
    beta: complex
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    multipliers: tuple
    omega_plus: complex
    omega_minus: complex

    def wronskian(self) -> np.ndarray:
        p, m = self.psi_plus, self.psi_minus
        return p[:, 0] * m[:, 1] - p[:, 1] * m[:, 0]


class _Raw:
    """Unchecked view of an amplitude array (gradients are defined off the even subspace too)."""

    __slots__ = ("q", "N", "h")

    def __init__(self, q):
        self.q = np.asarray(q, dtype=complex)
        self.N = self.q.size
        self.h = 1.0 / self.N


def _view(state):
    return state if isinstance(state, (LatticeState, _Raw)) else _Raw(state)


def _check_z(z):
    if z == 0:
        raise ZeroSpectralParameter("spectral parameter z must be nonzero")


def transfer_matrix(z: complex, q_n: complex, h: float) -> np.ndarray:
    _check_z(z)
    return np.array([[z, 1j * h * q_n], [1j * h * np.conj(q_n), 1.0 / z]], dtype=complex)


def prefix_matrices(z: complex, state: LatticeState) -> np.ndarray:
    """Stack ``M_0 = I, M_1, ..., M_N`` with ``M_{n+1} = L_n M_n``."""
    state = _view(state)
    _check_z(z)
    q = state.q
    h = state.h
    out = np.empty((state.N + 1, 2, 2), dtype=complex)
    out[0] = np.eye(2)
    iz = 1.0 / z
    for n in range(state.N):
        m = out[n]
        a = 1j * h * q[n]
        b = 1j * h * np.conj(q[n])
        out[n + 1, 0] = z * m[0] + a * m[1]
        out[n + 1, 1] = b * m[0] + iz * m[1]
    return out


def fundamental_matrix(z: complex, state: LatticeState) -> np.ndarray:
    return prefix_matrices(z, state)[-1]


def d_factor(state: LatticeState) -> float:
    """``D = + sqrt(prod_n rho_n)``."""
    state = _view(state)
    rho = 1.0 + state.h**2 * np.abs(state.q) ** 2
    return float(math.exp(0.5 * np.sum(np.log(rho))))


def discriminant(z: complex, state: LatticeState) -> DiscriminantValue:
    state = _view(state)
    M = fundamental_matrix(z, state)
    return DiscriminantValue(complex(z), complex(M[0, 0] + M[1, 1]), d_factor(state))


def _derivative_products(z, state, order):
    q, h = state.q, state.h
    iz = 1.0 / z
    M = np.eye(2, dtype=complex)
    M1 = np.zeros((2, 2), dtype=complex)
    M2 = np.zeros((2, 2), dtype=complex)
    dL = np.diag([1.0, -iz * iz])
    ddL = np.diag([0.0, 2.0 * iz**3])
    for n in range(state.N):
        L = np.array([[z, 1j * h * q[n]], [1j * h * np.conj(q[n]), iz]])
        if order >= 2:
            M2 = L @ M2 + 2.0 * dL @ M1 + ddL @ M
        M1 = L @ M1 + dL @ M
        M = L @ M
    return M, M1, M2


def discriminant_z_derivatives(z: complex, state: LatticeState, order: int = 1) -> complex:
    """``d Delta / dz`` (order 1) or ``d^2 Delta / dz^2`` (order 2) by product-rule accumulation."""
    state = _view(state)
    _check_z(z)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    M, M1, M2 = _derivative_products(z, state, order)
    T = M1 if order == 1 else M2
    return complex(T[0, 0] + T[1, 1])


def _all_derivatives(z, state):
    state = _view(state)
    M, M1, M2 = _derivative_products(z, state, 2)
    return complex(np.trace(M)), complex(np.trace(M1)), complex(np.trace(M2))


# ---------------------------------------------------------------------------
# uniform potential: closed forms

def uniform_z(beta, rho):
    """``z(beta) = sqrt(rho) cos beta + sqrt(rho cos^2 beta - 1)`` (principal root)."""
    c = cmath.cos(beta)
    return math.sqrt(rho) * c + cmath.sqrt(rho * c * c - 1.0)


def _point(z, kind, mult, delta, d1, d2, D):
    return SpectralPoint(z=complex(z), kind=kind, algebraic_multiplicity=mult,
                         residual_periodic=abs(delta - 2 * D),
                         residual_antiperiodic=abs(delta + 2 * D),
                         abs_d1=abs(d1), abs_d2=abs(d2), D=D)


def uniform_spectral_points(a: float, N: int) -> list[SpectralPoint]:
    """Catalogue of (anti)periodic, double and critical points of the uniform potential.

    Kinds are assigned from the closed forms: ``beta = m pi / N`` gives a
    periodic point for even ``m`` and an antiperiodic one for odd ``m``; for
    ``0 < m < N`` it is a double point (multiplicity 4 when ``rho cos^2 beta
    = 1``).  ``cos^2 beta = 1/rho`` (``z = +-1``) gives plain critical points.
    Residuals are measured on the numerical discriminant.
    """
    h = 1.0 / N
    rho = 1.0 + h * h * a * a
    state = LatticeState.uniform(N, a)
    D = rho ** (N / 2)
    pts = []
    for m in range(N + 1):
        beta = m * math.pi / N
        z = uniform_z(beta, rho)
        delta, d1, d2 = _all_derivatives(z, state)
        base = "periodic" if m % 2 == 0 else "antiperiodic"
        if 0 < m < N:
            tangent = abs(rho * math.cos(beta) ** 2 - 1.0) < 1e-12
            kind, mult = ("multiple", 4) if tangent else ("double", 2)
        else:
            kind, mult = base, 1
        pts.append(_point(z, kind, mult, delta, d1, d2, D))
    for z in (1.0, -1.0):
        delta, d1, d2 = _all_derivatives(z, state)
        if any(abs(p.z - z) < 1e-9 for p in pts):
            continue
        pts.append(_point(z, "critical", 1, delta, d1, d2, D))
    return pts


def double_point(a: float, N: int) -> complex:
    """``z_1^{(d)}`` at ``beta = pi / N`` (real and > 1 inside the amplitude window)."""
    rho = 1.0 + (a / N) ** 2
    z = uniform_z(math.pi / N, rho)
    if in_window(a, N):
        return float(z.real)
    return z


# ---------------------------------------------------------------------------
# classification and critical points

def classify_spectral_point(z: complex, state: LatticeState,
                            tol: SpectralTolerances = SpectralTolerances()) -> SpectralPoint:
    state = _view(state)
    _check_z(z)
    delta, d1, d2 = _all_derivatives(z, state)
    D = d_factor(state)
    tau_s = tol.rel_periodic * 2.0 * D
    tau_c = tol.rel_critical * max(1.0, abs(d2))
    per = abs(delta - 2 * D) <= tau_s
    anti = abs(delta + 2 * D) <= tau_s
    crit = abs(d1) <= tau_c
    if (per or anti) and crit:
        if abs(d2) <= tol.rel_critical:
            kind, mult = "multiple", 4
        else:
            kind, mult = "double", 2
    elif per:
        kind, mult = "periodic", 1
    elif anti:
        kind, mult = "antiperiodic", 1
    elif crit:
        kind, mult = "critical", 1
    else:
        kind, mult = "regular", 1
    return _point(z, kind, mult, delta, d1, d2, D)


def default_seeds(state: LatticeState) -> list[complex]:
    """Critical points of the uniform potential at the mean modulus of ``state``."""
    a = float(np.mean(np.abs(state.q)))
    N = state.N
    rho = 1.0 + (a / N) ** 2
    seeds = []
    for m in range(1, N):
        z = uniform_z(m * math.pi / N, rho)
        seeds.extend([z, 1.0 / z])
    seeds.extend([1.0, -1.0])
    phase = np.exp(1j * np.angle(np.mean(state.q))) if a > 0 else 1.0
    del phase  # the spectrum is phase independent
    return seeds


def _newton_critical(state, seed, maxiter=50, hess_floor=1e-14):
    state = _view(state)
    z = complex(seed)
    prev = None
    prev_d1 = None
    for _ in range(maxiter):
        _, d1, d2 = _all_derivatives(z, state)
        if abs(d2) < hess_floor * max(1.0, abs(z) ** state.N):
            if prev is None or prev_d1 == d1:
                raise NoConvergence(f"flat second derivative at z = {z}")
            step = d1 * (z - prev) / (d1 - prev_d1)  # secant fallback
        else:
            step = d1 / d2
        prev, prev_d1 = z, d1
        z = z - step
        if z == 0 or not cmath.isfinite(z):
            raise NoConvergence(f"Newton iterate left the domain from seed {seed}")
        if abs(step) <= 1e-14 * max(1.0, abs(z)):
            return z
    _, d1, _ = _all_derivatives(z, state)
    if abs(d1) <= 1e-10 * max(1.0, d_factor(state)):
        return z
    raise NoConvergence(f"no critical point after {maxiter} iterations from seed {seed}")


def find_critical_points(state: LatticeState, seeds=None,
                         tol: SpectralTolerances = SpectralTolerances(),
                         failed: list | None = None) -> list[SpectralPoint]:
    """Locate zeros of ``d Delta / dz`` by complex Newton iteration from each seed.

    Seeds that do not converge within 50 iterations are dropped; they are
    logged and appended to ``failed`` when a list is supplied.
    """
    state = _view(state)
    if seeds is None:
        seeds = default_seeds(state)
    roots: list[complex] = []
    for s in seeds:
        if s == 0:
            raise ZeroSpectralParameter("seeds must be nonzero")
        try:
            z = _newton_critical(state, s)
        except NoConvergence as exc:
            log.warning("dropping seed %s: %s", s, exc)
            if failed is not None:
                failed.append(s)
            continue
        if all(abs(z - r) > 1e-6 for r in roots):
            roots.append(z)
    return [classify_spectral_point(z, state, tol) for z in roots]


# ---------------------------------------------------------------------------
# gradients

_E12 = np.array([[0, 1], [0, 0]], dtype=complex)
_E21 = np.array([[0, 0], [1, 0]], dtype=complex)


def discriminant_gradient(z: complex, state: LatticeState):
    """``(dDelta/dq_n, dDelta/dr_n)`` with ``r_n = -conj(q_n)`` held independent.

    ``dDelta/dq_n = i h tr(M_{n+1}^{-1} E12 M_n M_N)`` and
    ``dDelta/dr_n = -i h tr(M_{n+1}^{-1} E21 M_n M_N)``; inverses are
    adjugates over ``prod_{k<=n} rho_k``.
    """
    state = _view(state)
    Ms = prefix_matrices(z, state)
    MN = Ms[-1]
    h = state.h
    rho = 1.0 + h * h * np.abs(state.q) ** 2
    dets = np.cumprod(rho)
    nxt = Ms[1:]
    adj = np.empty_like(nxt)
    adj[:, 0, 0] = nxt[:, 1, 1]
    adj[:, 1, 1] = nxt[:, 0, 0]
    adj[:, 0, 1] = -nxt[:, 0, 1]
    adj[:, 1, 0] = -nxt[:, 1, 0]
    inv = adj / dets[:, None, None]
    Y = Ms[:-1] @ MN
    gq = 1j * h * np.einsum("nij,jk,nki->n", inv, _E12, Y)
    gr = -1j * h * np.einsum("nij,jk,nki->n", inv, _E21, Y)
    return gq, gr


def normalized_gradient(z: complex, state: LatticeState):
    """Gradient of ``Delta / D`` in the ``(q, r)`` variables."""
    state = _view(state)
    gq, gr = discriminant_gradient(z, state)
    h = state.h
    q = state.q
    r = -np.conj(q)
    rho = 1.0 + h * h * np.abs(q) ** 2
    D = d_factor(state)
    dt = discriminant(z, state).delta / D
    dDq = -0.5 * D * h * h * r / rho
    dDr = -0.5 * D * h * h * q / rho
    return (gq - dt * dDq) / D, (gr - dt * dDr) / D


def invariant_F(state: LatticeState, seed: complex,
                tol: SpectralTolerances = SpectralTolerances()):
    """Return ``(F, z_c)`` with ``F = Delta~(z_c)`` at the critical point reached from ``seed``."""
    state = _view(state)
    zc = _newton_critical(state, seed)
    _, _, d2 = _all_derivatives(zc, state)
    if abs(d2) <= tol.rel_critical:
        raise NotSimpleCritical(f"critical point {zc} is not simple")
    return discriminant(zc, state).delta_tilde, zc


def grad_invariant_F(state: LatticeState, zc: complex, method: str = "transfer",
                     tol: SpectralTolerances = SpectralTolerances()):
    """Gradient of ``F = Delta~(z_c(q); q)``; the motion of ``z_c`` does not contribute.

    ``method="transfer"`` uses the monodromy products; ``method="bloch"`` uses
    the Bloch-function form and is available for uniform states only.
    """
    _, _, d2 = _all_derivatives(zc, state)
    if abs(d2) <= tol.rel_critical:
        raise NotSimpleCritical(f"critical point {zc} is not simple")
    if method == "transfer":
        return normalized_gradient(zc, state)
    if method == "bloch":
        q0 = state.q[0]
        if np.max(np.abs(state.q - q0)) > 1e-12 * max(1.0, abs(q0)):
            raise ValueError("the Bloch-form gradient needs a uniform state")
        return bloch_gradient(zc, abs(q0), float(np.angle(q0)), state.N)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Bloch functions of the uniform potential

def uniform_bloch_functions(z: complex, a: float, omega: float, gamma: float,
                            t: float, N: int) -> BlochPair:
    """Bloch solutions of both Lax equations for ``q_n = q_c(t)``."""
    _check_z(z)
    h = 1.0 / N
    rho = 1.0 + h * h * a * a
    sr = math.sqrt(rho)
    cb = (z + 1.0 / z) / (2.0 * sr)
    if abs(rho * cb * cb - 1.0) < 1e-12:
        raise BranchAmbiguity("rho cos^2 beta = 1: the two z branches coincide")
    beta = cmath.acos(cb)
    if abs(cmath.sin(beta)) < 1e-12:
        raise BranchAmbiguity("sin beta = 0: Bloch multipliers coincide")
    lam = cmath.log(z) / (1j * h)
    ep = sr * cmath.exp(1j * beta)
    em = sr * cmath.exp(-1j * beta)
    om_p = 1j / h**2 * ((1.0 / z - z) * ep + 2j * lam * h)
    om_m = 1j / h**2 * ((1.0 / z - z) * em + 2j * lam * h)
    th = (a * a - omega * omega) * t - gamma / 2.0
    n = np.arange(N + 1)
    vp = np.array([(1.0 / z - ep) * cmath.exp(-1j * th), -1j * h * a * cmath.exp(1j * th)])
    vm = np.array([-1j * h * a * cmath.exp(-1j * th), (z - em) * cmath.exp(1j * th)])
    psi_p = (ep**n)[:, None] * cmath.exp(om_p * t) * vp[None, :]
    psi_m = (em**n)[:, None] * cmath.exp(om_m * t) * vm[None, :]
    return BlochPair(z=complex(z), beta=beta, psi_plus=psi_p, psi_minus=psi_m,
                     multipliers=(ep**N, em**N), omega_plus=om_p, omega_minus=om_m)


def bloch_gradient(z: complex, a: float, gamma: float, N: int):
    """Gradient of ``Delta~`` for ``q_n = a e^{i gamma}`` from the Bloch pair.

    ``i h (zeta - 1/zeta) / (2 W_{n+1})`` times the symmetric products of the
    second (for ``q``) and first (for ``r``) Bloch components.
    """
    bp = uniform_bloch_functions(z, a, 0.0, gamma, 0.0, N)
    zeta = cmath.exp(1j * N * bp.beta)
    p, m = bp.psi_plus, bp.psi_minus
    W = bp.wronskian()
    n = np.arange(N)
    pref = 1j * (1.0 / N) * (zeta - 1.0 / zeta) / (2.0 * W[n + 1])
    gq = pref * (p[n + 1, 1] * m[n, 1] + p[n, 1] * m[n + 1, 1])
    gr = pref * (p[n + 1, 0] * m[n, 0] + p[n, 0] * m[n + 1, 0])
    return gq, gr


def lax_time_matrix(z: complex, q_n: complex, q_prev: complex, omega: float, h: float) -> np.ndarray:
    """``B_n`` of the temporal Lax equation ``d phi_n / dt = B_n phi_n``."""
    lam = cmath.log(z) / (1j * h)
    return 1j / h**2 * np.array([
        [1 - z * z + 2j * lam * h - h * h * q_n * np.conj(q_prev) + omega**2 * h * h,
         -1j * z * h * q_n + 1j * h * q_prev / z],
        [-1j * z * h * np.conj(q_prev) + 1j * h * np.conj(q_n) / z,
         1 / (z * z) - 1 + 2j * lam * h + h * h * np.conj(q_n) * q_prev - omega**2 * h * h],
    ])


def scan_discriminant(state: LatticeState, zs) -> list[DiscriminantValue]:
    return [discriminant(z, state) for z in zs]
