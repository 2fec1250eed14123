"""Lattice state, Ablowitz-Ladik vector fields and mode coordinates.

All states are stored with their full period ``q_0 ... q_{N-1}``; the even
symmetry ``q_{N-n} = q_n`` is checked on construction, never assumed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDenominator,
    InvalidState,
    SingularModeSystem,
    ZeroCarrier,
)

__all__ = [
    "LatticeSize",
    "LatticeState",
    "ALParams",
    "PerturbationParams",
    "BlockCoords",
    "LinearGrowthRates",
    "al_rhs",
    "perturbation_terms",
    "perturbed_rhs",
    "i2_invariant",
    "uniform_orbit",
    "amplitude_window",
    "linearized_growth_rates",
    "vtheta_angle",
    "to_block_coords",
    "from_block_coords",
    "state_to_json",
    "state_from_json",
    "state_to_csv",
    "state_from_csv",
]

EVEN_RTOL = 1e-12


@dataclass(frozen=True)
class LatticeSize:
    """Number of sites ``N``, mesh ``h = 1/N`` and mode count ``M``."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise InvalidState(f"lattice size must be an integer >= 3, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def M(self) -> int:
        return self.N // 2


@dataclass(frozen=True, eq=False)
class LatticeState:
    """Even, N-periodic lattice configuration ``q_0 ... q_{N-1}``."""

    q: np.ndarray
    size: LatticeSize = field(default=None)

    def __post_init__(self):
        q = np.array(self.q, dtype=complex).reshape(-1)
        size = self.size if self.size is not None else LatticeSize(q.size)
        if q.size != size.N:
            raise InvalidState(f"expected {size.N} amplitudes, got {q.size}")
        if not np.all(np.isfinite(q)):
            raise InvalidState("state contains non-finite amplitudes")
        gap = even_defect(q)
        if gap > EVEN_RTOL * max(1.0, float(np.max(np.abs(q)))):
            raise InvalidState(f"state is not even: max |q_n - q_(N-n)| = {gap:.3e}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "size", size)

    @classmethod
    def uniform(cls, N: int, value: complex) -> "LatticeState":
        return cls(np.full(N, complex(value)))

    @classmethod
    def symmetrized(cls, values) -> "LatticeState":
        """Build a state from arbitrary values by even projection."""
        return cls(even_projection(np.asarray(values, dtype=complex)))

    @property
    def N(self) -> int:
        return self.size.N

    @property
    def h(self) -> float:
        return self.size.h

    def __len__(self):
        return self.size.N

    def __eq__(self, other):
        if not isinstance(other, LatticeState):
            return NotImplemented
        return self.N == other.N and np.array_equal(self.q, other.q)

    __hash__ = None


@dataclass(frozen=True)
class ALParams:
    omega: float
    size: LatticeSize


@dataclass(frozen=True)
class PerturbationParams:
    epsilon: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0


@dataclass(frozen=True)
class BlockCoords:
    """Coordinates ``(a, gamma, b1, b2, c_2..c_M)`` of the block around the circle."""

    a: float
    gamma: float
    b1: float
    b2: float
    c: tuple
    vtheta: float


@dataclass(frozen=True)
class LinearGrowthRates:
    """``Omega[j] = (Omega_j^+, Omega_j^-)`` for modes ``j = 0..M``."""

    a: float
    N: int
    Omega: tuple

    def plus(self) -> np.ndarray:
        return np.array([w[0] for w in self.Omega])


def even_defect(q) -> float:
    q = np.asarray(q)
    return float(np.max(np.abs(q - np.roll(q[::-1], 1)))) if q.size else 0.0


def even_projection(q) -> np.ndarray:
    """Return ``(q_n + q_{N-n}) / 2``."""
    q = np.asarray(q)
    return 0.5 * (q + np.roll(q[::-1], 1, axis=0))


# ---------------------------------------------------------------------------
# vector fields (array level; the integrator calls these directly)

def al_field(q: np.ndarray, h: float, omega: float) -> np.ndarray:
    qp = np.roll(q, -1)
    qm = np.roll(q, 1)
    s = qp + qm
    return -1j * ((s - 2.0 * q) / h**2 + (q.real**2 + q.imag**2) * s - 2.0 * omega**2 * q)


def _log_weight(q, h):
    """``(rho/h^2) ln rho`` with ``rho = 1 + h^2 |q|^2``."""
    u = h * h * (np.real(q) ** 2 + np.imag(q) ** 2)
    return (1.0 + u) * np.log1p(u) / (h * h)


def perturbation_field(q: np.ndarray, h: float, pert: PerturbationParams) -> np.ndarray:
    """The ``P_n`` of ``dq/dt = AL(q) - i eps P``."""
    w = _log_weight(q, h)
    qb = np.conj(q)
    return (pert.alpha1 * (w + (q + qb) * q)
            + pert.alpha2 * (2.0 * qb * w + (q * q + qb * qb) * q))


def perturbed_field(q, h, omega, pert: PerturbationParams):
    out = al_field(q, h, omega)
    if pert.epsilon != 0.0:
        out = out - 1j * pert.epsilon * perturbation_field(q, h, pert)
    return out


def al_rhs(state: LatticeState, params: ALParams) -> np.ndarray:
    """Time derivative of the integrable Ablowitz-Ladik lattice."""
    return al_field(state.q, state.h, params.omega)


def perturbation_terms(state: LatticeState, size: LatticeSize | None = None):
    """Return the bracket sequences ``(g1, g2)`` paired with the invariant gradient.

    ``g1 = (rho/h^2) ln rho + (q + conj q) conj q`` and
    ``g2 = 2 q (rho/h^2) ln rho + (q^2 + conj q^2) conj q``.
    """
    h = (size or state.size).h
    return _g_terms(state.q, h)


def _g_terms(q, h):
    w = _log_weight(q, h)
    qb = np.conj(q)
    g1 = w + (q + qb) * qb
    g2 = 2.0 * q * w + (q * q + qb * qb) * qb
    return g1, g2


def perturbed_rhs(state: LatticeState, params: ALParams, pert: PerturbationParams) -> np.ndarray:
    """Integrable field plus ``-i eps P_n``; ``P_n`` is the conjugate of ``alpha1 g1 + alpha2 g2``."""
    return perturbed_field(state.q, state.h, params.omega, pert)


def i2_invariant(state: LatticeState) -> complex:
    """``I_2 = sum_n conj(q_n) (q_{n+1} + q_{n-1})``."""
    q = state.q
    val = complex(np.sum(np.conj(q) * (np.roll(q, -1) + np.roll(q, 1))))
    if abs(val.imag) > 1e-12 * abs(val):
        # real for every periodic state; a sizeable imaginary part means corrupted input
        raise InvalidState(f"I2 has imaginary part {val.imag:.3e}")
    return val


def uniform_orbit(a: float, omega: float, gamma: float, t):
    """``q_c(t) = a exp(-i [2 (a^2 - omega^2) t - gamma])``."""
    return a * np.exp(-1j * (2.0 * (a * a - omega * omega) * np.asarray(t) - gamma))


def amplitude_window(N: int, cap: float = math.inf) -> tuple[float, float]:
    """Open interval of uniform amplitudes with a single unstable mode.

    For ``N <= 4`` the upper endpoint diverges and ``cap`` (default +inf) is
    returned instead.
    """
    if N < 3:
        raise InvalidState("N must be >= 3")
    lo = N * math.tan(math.pi / N)
    hi = N * math.tan(2 * math.pi / N) if N > 4 else cap
    return lo, hi


def in_window(a: float, N: int) -> bool:
    lo, hi = amplitude_window(N)
    return lo < a < hi


def linearized_growth_rates(a: float, N: int) -> LinearGrowthRates:
    M = N // 2
    out = []
    for j in range(M + 1):
        k = 2 * math.pi * j / N
        w = 2 * math.sin(k) * np.sqrt(complex(a * a + N * N)) * np.sqrt(
            complex(a * a - N * N * math.tan(k / 2) ** 2))
        if j == 0:
            w = 0j
        out.append((complex(w), complex(-w)))
    return LinearGrowthRates(a=a, N=N, Omega=tuple(out))


def vtheta_angle(a: float, N: int) -> float:
    """Angle of the unstable direction ``e^{i vtheta} cos(k_1 n)``.

    Two-argument arctangent, so the angle stays continuous where the
    denominator ``N^2 - (N^2 + a^2) cos(2 pi / N)`` changes sign.
    """
    k = 2 * math.pi / N
    rad = (a * a + N * N) * math.sin(k) ** 2 * (a * a - N * N * math.tan(math.pi / N) ** 2)
    num = math.sqrt(max(rad, 0.0))
    den = N * N - (N * N + a * a) * math.cos(k)
    if num == 0.0 and abs(den) < 1e-14 * (N * N + a * a):
        raise DegenerateDenominator("vartheta undefined: numerator and denominator vanish")
    return -0.5 * math.atan2(num, den)


def _cos_modes(N: int) -> np.ndarray:
    M = N // 2
    n = np.arange(M + 1)[:, None]
    j = np.arange(M + 1)[None, :]
    return np.cos(2 * np.pi * j * n / N)


def to_block_coords(state: LatticeState, a_ref: float | None = None) -> BlockCoords:
    """Decompose an even state over ``cos(k_j n)`` and split mode 1 along ``e^{+-i vtheta}``.

    ``vtheta`` is evaluated at ``a_ref`` when given, otherwise at the extracted
    carrier amplitude.
    """
    N = state.N
    M = N // 2
    A = np.linalg.solve(_cos_modes(N), state.q[: M + 1])
    a = abs(A[0])
    if a == 0.0:
        raise ZeroCarrier("cosine mode 0 vanishes")
    gamma = float(np.angle(A[0]) % (2 * np.pi))
    vt = vtheta_angle(a if a_ref is None else a_ref, N)
    if abs(math.sin(vt)) < 1e-14 or abs(math.cos(vt)) < 1e-14:
        raise SingularModeSystem(f"cannot separate b1, b2 at vartheta = {vt!r}")
    w = A[1] * np.exp(-1j * gamma)
    s = w.real / math.cos(vt)
    d = w.imag / math.sin(vt)
    c = tuple(complex(x) for x in A[2:] * np.exp(-1j * gamma))
    return BlockCoords(a=float(a), gamma=gamma, b1=0.5 * (s + d), b2=0.5 * (s - d), c=c, vtheta=vt)


def from_block_coords(bc: BlockCoords, size: LatticeSize) -> LatticeState:
    N = size.N
    M = N // 2
    if len(bc.c) != M - 1:
        raise InvalidState(f"expected {M - 1} higher modes, got {len(bc.c)}")
    amps = np.zeros(M + 1, dtype=complex)
    amps[0] = bc.a
    amps[1] = bc.b1 * np.exp(1j * bc.vtheta) + bc.b2 * np.exp(-1j * bc.vtheta)
    amps[2:] = bc.c
    n = np.arange(N)
    k = 2 * np.pi * np.arange(M + 1) / N
    q = np.exp(1j * bc.gamma) * (np.cos(np.outer(n, k)) @ amps)
    return LatticeState(even_projection(q), size)


# ---------------------------------------------------------------------------
# serialization

def _f(x: float) -> str:
    return format(float(x), ".17g")


def state_to_json(state: LatticeState, omega: float) -> str:
    doc = {"n": state.N, "omega": float(omega),
           "q": [[float(z.real), float(z.imag)] for z in state.q]}
    return json.dumps(doc)


def state_from_json(text: str) -> tuple[LatticeState, float]:
    doc = json.loads(text)
    q = np.array([complex(re, im) for re, im in doc["q"]])
    if len(q) != doc["n"]:
        raise InvalidState("field 'n' disagrees with the length of 'q'")
    return LatticeState(q), float(doc["omega"])


def state_to_csv(state: LatticeState) -> str:
    buf = io.StringIO()
    buf.write("n,re,im\n")
    for n, z in enumerate(state.q):
        buf.write(f"{n},{_f(z.real)},{_f(z.imag)}\n")
    return buf.getvalue()


def state_from_csv(text: str) -> LatticeState:
    rows = [r for r in csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))]
    rows.sort(key=lambda r: int(r["n"]))
    return LatticeState(np.array([complex(float(r["re"]), float(r["im"])) for r in rows]))
