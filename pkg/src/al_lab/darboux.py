"""Backlund-Darboux transformation and the heteroclinic orbits it produces.

The orbit formulas are vectorised in ``t``: a scalar time gives an array of
shape ``(N,)``, an array of times gives ``(len(t), N)``.  Orbits for general
``vtheta`` are not even in ``n`` and are therefore returned as plain complex
arrays; wrap an ear-parameterised orbit in :class:`LatticeState` if needed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EigenfunctionResidualTooLarge,
    PoleInLambda,
    ZeroEigenfunction,
)
from .floquet import uniform_bloch_functions
from .lattice import LatticeState, amplitude_window, uniform_orbit

__all__ = [
    "OrbitParams",
    "darboux_coefficients",
    "darboux_transform",
    "uniform_eigenfunction",
    "heteroclinic_orbit",
    "even_heteroclinic_orbit",
    "melnikov_vector",
    "even_melnikov_vector",
    "asymptotic_phase_shift",
    "distance_to_circle",
    "orbit_to_csv",
]


@dataclass(frozen=True)
class OrbitParams:
    """Parameters of the heteroclinic orbit built on the uniform state.

    ``vtheta`` defaults to the ear value (``-beta`` for ``ear=+1`` and
    ``-beta + pi`` for ``ear=-1``); passing it explicitly selects the
    general, non-even member of the family.
    """

    a: float
    omega: float
    gamma: float = 0.0
    p: float = 0.0
    ear: int = 1
    N: int = 6
    vtheta: float | None = None

    def __post_init__(self):
        if self.ear not in (1, -1):
            raise ConfigError("ear must be +1 or -1")
        if self.N < 3:
            raise ConfigError("N must be at least 3")
        lo, hi = amplitude_window(self.N)
        if not lo < self.a < hi:
            raise ConfigError(f"a = {self.a} outside the amplitude window ({lo}, {hi})")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def beta(self) -> float:
        return math.pi / self.N

    @property
    def rho(self) -> float:
        return 1.0 + (self.a * self.h) ** 2

    @property
    def root(self) -> float:
        """``sqrt(rho cos^2 beta - 1)``, positive inside the window."""
        return math.sqrt(self.rho * math.cos(self.beta) ** 2 - 1.0)

    @property
    def z(self) -> float:
        return math.sqrt(self.rho) * math.cos(self.beta) + self.root

    @property
    def mu(self) -> float:
        return 2.0 / self.h**2 * math.sqrt(self.rho) * math.sin(self.beta) * self.root

    @property
    def phi(self) -> float:
        return math.asin(math.sqrt(self.rho) / (self.h * self.a) * math.sin(self.beta))

    @property
    def theta_param(self) -> float:
        if self.vtheta is not None:
            return self.vtheta
        return -self.beta if self.ear == 1 else -self.beta + math.pi

    @property
    def ratio(self) -> complex:
        """Backlund parameter ``c_+/c_- = i e^{2p} e^{i vtheta}``."""
        return 1j * math.exp(2 * self.p) * complex(math.cos(self.theta_param), math.sin(self.theta_param))


def _envelope(params: OrbitParams, t):
    x = 2.0 * params.mu * np.asarray(t, dtype=float) + 2.0 * params.p
    return 1.0 / np.cosh(x), np.tanh(x)


def _col(x):
    x = np.asarray(x)
    return x[..., None]


# ---------------------------------------------------------------------------
# generic transformation

def darboux_coefficients(phi, zd: complex):
    """``(a_n, b_n, c_n, d_n, Delta_n)`` of the gauge matrix built from ``phi``.

    ``phi`` has shape ``(2,)`` or ``(..., 2)``.
    """
    if abs(abs(zd) - 1.0) < 1e-14:
        raise ConfigError("double point on the unit circle: |zd|^4 - 1 vanishes")
    phi = np.asarray(phi, dtype=complex)
    p1, p2 = phi[..., 0], phi[..., 1]
    m1, m2 = np.abs(p1) ** 2, np.abs(p2) ** 2
    if np.any(m1 + m2 == 0):
        raise ZeroEigenfunction("eigenfunction vanishes at some site")
    zb = np.conj(zd)
    az2 = abs(zd) ** 2
    dn = -(m1 + az2 * m2) / zb
    a = zd / (zb**2 * dn) * (m2 + az2 * m1)
    d = -(m2 + az2 * m1) / (zd * dn)
    k = abs(zd) ** 4 - 1.0
    b = k / (zb**2 * dn) * p1 * np.conj(p2)
    c = k / (zd * zb * dn) * np.conj(p1) * p2
    return a, b, c, d, dn


def darboux_transform(state, zd: complex, phi, gate: float = 1e-8) -> np.ndarray:
    """``Q_n = (i/h) b_{n+1} - a_{n+1} q_n`` from an eigenfunction ``phi_0 .. phi_N``.

    ``phi`` must solve the spatial Lax equation at ``(state, zd)``; the
    relative residual per step is gated at ``gate``.
    """
    q = state.q if isinstance(state, LatticeState) else np.asarray(state, dtype=complex)
    N = q.size
    h = 1.0 / N
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (N + 1, 2):
        raise ValueError(f"phi must have shape {(N + 1, 2)}")
    nxt0 = zd * phi[:-1, 0] + 1j * h * q * phi[:-1, 1]
    nxt1 = 1j * h * np.conj(q) * phi[:-1, 0] + phi[:-1, 1] / zd
    res = np.hypot(np.abs(phi[1:, 0] - nxt0), np.abs(phi[1:, 1] - nxt1))
    scale = np.maximum(np.linalg.norm(phi[1:], axis=1), 1e-300)
    worst = float(np.max(res / scale))
    if worst > gate:
        raise EigenfunctionResidualTooLarge(f"Lax residual {worst:.3e} exceeds {gate:.1e}")
    a, b, _, _, _ = darboux_coefficients(phi[1:], zd)
    return 1j / h * b - a * q


def uniform_eigenfunction(params: OrbitParams, t: float, c_minus: complex = 1.0) -> np.ndarray:
    """``phi = c_+ psi^+ + c_- psi^-`` at the double point for the uniform state."""
    bp = uniform_bloch_functions(params.z, params.a, params.omega, params.gamma, t, params.N)
    return params.ratio * c_minus * bp.psi_plus + c_minus * bp.psi_minus


# ---------------------------------------------------------------------------
# closed forms on the uniform state

def heteroclinic_orbit(params: OrbitParams, t) -> np.ndarray:
    se, ta = _envelope(params, t)
    se, ta = _col(se), _col(ta)
    n = np.arange(params.N)
    b, vt, s = params.beta, params.theta_param, params.root
    ha_cb = params.h * params.a * math.cos(b)
    E = ha_cb + s * se * np.cos((2 * n + 1) * b + vt)
    A = ha_cb + s * se * np.cos((2 * n + 3) * b + vt)
    B = math.cos(params.phi) + 1j * math.sin(params.phi) * ta + se * np.cos(2 * (n + 1) * b + vt)
    qc = _col(uniform_orbit(params.a, params.omega, params.gamma, t))
    return qc / E * (A - 2.0 * math.cos(b) * s * B)


def _cos2(k, params):
    """``cos(2 k beta)`` with ``k`` folded to ``min(k mod N, N - k mod N)``.

    Sites ``n`` and ``N - n`` then use bitwise identical values, so the even
    closed forms are exactly even in floating point.
    """
    k = np.asarray(k) % params.N
    return np.cos(2 * np.minimum(k, params.N - k) * params.beta)


def _lambda(params, se):
    n = np.arange(params.N)
    return 1.0 + params.ear * math.cos(params.phi) / math.cos(params.beta) * se * _cos2(n, params)


def even_heteroclinic_orbit(params: OrbitParams, t) -> np.ndarray:
    se, ta = _envelope(params, t)
    se, ta = _col(se), _col(ta)
    lam = _lambda(params, se)
    if np.any(np.abs(lam) < 1e-14):
        raise PoleInLambda("Lambda_n vanishes")
    f = params.phi
    G = 1.0 - math.cos(2 * f) - 1j * math.sin(2 * f) * ta
    qc = _col(uniform_orbit(params.a, params.omega, params.gamma, t))
    return qc * (G / lam - 1.0)


def _theta_t(params, t):
    return (params.a**2 - params.omega**2) * np.asarray(t, dtype=float) - params.gamma / 2.0


def k_hat(params: OrbitParams) -> float:
    z, rho = params.z, params.rho
    return -2 * params.N * params.h**2 * params.a * (1 - z**4) / (8 * rho**1.5 * z * z) * params.root


def k_hat_even(params: OrbitParams) -> float:
    z, rho = params.z, params.rho
    return -2 * params.N * (1 - z**4) / (8 * params.a * rho**1.5 * z * z) * params.root


def melnikov_vector(params: OrbitParams, t):
    """Closed-form Melnikov vector on the orbit; returns the two components.

    The second component already carries the minus sign of the closed form.
    """
    se, ta = _envelope(params, t)
    se, ta = _col(se), _col(ta)
    n = np.arange(params.N)
    b, vt, s, f = params.beta, params.theta_param, params.root, params.phi
    ha_cb = params.h * params.a * math.cos(b)
    E = ha_cb + s * se * np.cos((2 * n - 1) * b + vt)
    A = ha_cb + s * se * np.cos((2 * n + 3) * b + vt)
    ph = (2 * n + 1) * b + vt
    th = _col(_theta_t(params, t))
    X1 = (math.cos(b) * se + np.cos(ph + f) - 1j * ta * np.sin(ph + f)) * np.exp(2j * th)
    X2 = (math.cos(b) * se + np.cos(ph - f) - 1j * ta * np.sin(ph - f)) * np.exp(-2j * th)
    pre = k_hat(params) * se / (E * A)
    return pre * X1, -pre * X2


def even_melnikov_vector(params: OrbitParams, t):
    se, ta = _envelope(params, t)
    se, ta = _col(se), _col(ta)
    n = np.arange(params.N)
    b, f, e = params.beta, params.phi, params.ear
    cf = math.cos(f)
    Pi = (math.cos(b) + e * cf * se * _cos2(n - 1, params)) * (
        math.cos(b) + e * cf * se * _cos2(n + 1, params))
    th = _col(_theta_t(params, t))
    c2n = _cos2(n, params)
    X1 = (math.cos(b) * se + e * (cf - 1j * math.sin(f) * ta) * c2n) * np.exp(2j * th)
    X2 = (math.cos(b) * se + e * (cf + 1j * math.sin(f) * ta) * c2n) * np.exp(-2j * th)
    pre = k_hat_even(params) * se / Pi
    return pre * X1, -pre * X2


def asymptotic_phase_shift(params: OrbitParams) -> tuple[float, float]:
    """``(theta_+, theta_-) = (pi + 2 phi, pi - 2 phi)`` modulo ``2 pi``."""
    two_pi = 2.0 * math.pi
    return (math.pi + 2 * params.phi) % two_pi, (math.pi - 2 * params.phi) % two_pi


def distance_to_circle(Q, qc) -> np.ndarray:
    """``min_theta ||Q - e^{i theta} q_c||`` over the last axis, minimiser in closed form."""
    Q = np.asarray(Q, dtype=complex)
    qc = np.broadcast_to(np.asarray(qc, dtype=complex), Q.shape)
    s = np.sum(Q * np.conj(qc), axis=-1)
    rot = np.exp(1j * np.angle(s))[..., None]
    return np.linalg.norm(Q - rot * qc, axis=-1)


def orbit_to_csv(params: OrbitParams, ts, header: str = "") -> str:
    """Rows ``t, n, re_Q, im_Q, dist_to_circle`` for the ear orbit at the given times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    Q = even_heteroclinic_orbit(params, ts) if params.vtheta is None else heteroclinic_orbit(params, ts)
    qc = uniform_orbit(params.a, params.omega, params.gamma, ts)[:, None] * np.ones(params.N)
    dist = distance_to_circle(Q, qc)
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "n", "re_Q", "im_Q", "dist_to_circle"])
    for i, t in enumerate(ts):
        for n in range(params.N):
            w.writerow([f"{t:.17g}", n, f"{Q[i, n].real:.17g}", f"{Q[i, n].imag:.17g}", f"{dist[i]:.17g}"])
    return buf.getvalue()


def melnikov_vector_to_csv(params: OrbitParams, ts, header: str = "") -> str:
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    m1, m2 = even_melnikov_vector(params, ts) if params.vtheta is None else melnikov_vector(params, ts)
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "n", "re_m1", "im_m1", "re_m2", "im_m2"])
    for i, t in enumerate(ts):
        for n in range(params.N):
            w.writerow([f"{t:.17g}", n] + [f"{v:.17g}" for v in
                       (m1[i, n].real, m1[i, n].imag, m2[i, n].real, m2[i, n].imag)])
    return buf.getvalue()
