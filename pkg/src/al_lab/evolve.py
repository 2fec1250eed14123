"""Time integration, invariant monitoring and decay-rate fits.

The integrator is the Dormand-Prince 5(4) pair with PI step-size control and
its fourth-order continuous extension for dense output.  Lattice states are
projected onto the even subspace after every accepted step; the size of the
correction is recorded and must stay within ``10 * rel_tol``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDecade, StepSizeUnderflow, ToleranceNotMet
from .floquet import discriminant, invariant_F
from .lattice import (
    ALParams,
    LatticeState,
    PerturbationParams,
    al_field,
    even_projection,
    i2_invariant,
    perturbed_field,
)

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorSpec",
    "Trajectory",
    "InvariantDrift",
    "InvariantDriftReport",
    "integrate",
    "lattice_field",
    "monitor_invariants",
    "fit_decay_rate",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])


@dataclass(frozen=True)
class IntegratorSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    first_step: float | None = None
    fixed_step: float | None = None
    project_even: bool = True

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Accepted steps with their dense-output coefficients."""

    times: np.ndarray
    values: np.ndarray
    accepted: int
    rejected: int
    projection_residuals: np.ndarray
    _dense: list = field(repr=False, default_factory=list)

    @property
    def states(self) -> list[LatticeState]:
        return [LatticeState(v) for v in self.values]

    def __call__(self, t):
        """Dense output at time(s) ``t`` inside the integration interval."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((ts.size,) + self.values.shape[1:], dtype=self.values.dtype)
        sign = 1.0 if self.times[-1] >= self.times[0] else -1.0
        key = sign * self.times
        for i, tt in enumerate(ts):
            j = int(np.searchsorted(key, sign * tt, side="right")) - 1
            j = min(max(j, 0), len(self._dense) - 1)
            t0, h, r = self._dense[j]
            th = (tt - t0) / h
            th1 = 1.0 - th
            out[i] = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
        return out if np.ndim(t) else out[0]


def lattice_field(omega: float, pert: PerturbationParams | None = None, N: int | None = None):
    """``f(t, q)`` for the integrable (``pert`` None or ``eps = 0``) or perturbed lattice."""
    def f(t, q):
        h = 1.0 / q.size
        if pert is None or pert.epsilon == 0.0:
            return al_field(q, h, omega)
        return perturbed_field(q, h, omega, pert)
    return f


def _norm(err, y0, y1, spec):
    scale = spec.abs_tol + spec.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))


def _step(f, t, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(t + _C[i] * h, yi))
    y1 = y + h * sum(b * k for b, k in zip(_B[:6], ks[:6]))
    err = h * sum(e * k for e, k in zip(_E, ks))
    return y1, err, ks


def _dense_coeffs(y0, y1, h, ks):
    ydiff = y1 - y0
    bspl = h * ks[0] - ydiff
    return (y0, ydiff, bspl, ydiff - h * ks[6] - bspl,
            h * sum(d * k for d, k in zip(_D, ks)))


def integrate(field_fn, init, t_span, spec: IntegratorSpec = IntegratorSpec(),
              even: bool | None = None, max_steps: int = 10_000_000) -> Trajectory:
    """Integrate ``dy/dt = field_fn(t, y)`` over ``t_span = (t0, t1)``.

    ``init`` may be a :class:`LatticeState` or any array (real or complex).
    Even projection is applied when ``even`` is true; by default it is on for
    lattice states and off for plain arrays.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError("t_span must be finite")
    if isinstance(init, LatticeState):
        y = np.array(init.q, dtype=complex)
        even = spec.project_even if even is None else even
    else:
        y = np.array(init, dtype=complex if np.iscomplexobj(init) else float)
        even = bool(even)
    direction = 1.0 if t1 >= t0 else -1.0
    times, values, resid, dense = [t0], [y.copy()], [0.0], []
    if t1 == t0:
        return Trajectory(np.array(times), np.array(values), 0, 0, np.array(resid), dense)

    t = t0
    k1 = field_fn(t, y)
    span = abs(t1 - t0)
    if spec.fixed_step is not None:
        n = max(1, int(round(span / spec.fixed_step)))
        h = direction * span / n
    elif spec.first_step is not None:
        h = direction * min(spec.first_step, span)
    else:
        d0 = float(np.max(np.abs(y))) + 1e-300
        d1 = float(np.max(np.abs(k1))) + 1e-300
        h = direction * min(0.01 * d0 / d1 * spec.rel_tol ** 0.2 * 10, span, spec.max_step)
    accepted = rejected = 0
    err_prev = 1e-4
    beta = 0.04
    alpha = 0.2 - 0.75 * beta
    while direction * (t1 - t) > 1e-14 * max(1.0, abs(t1)):
        if accepted + rejected > max_steps:
            raise ToleranceNotMet("step budget exhausted")
        if direction * (t + h - t1) > 0:
            h = t1 - t
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at t = {t}")
        y1, err, ks = _step(field_fn, t, y, h, k1)
        if spec.fixed_step is not None:
            en = 0.0
        else:
            en = _norm(err, y, y1, spec)
            if not math.isfinite(en):
                rejected += 1
                h *= 0.2
                continue
        if en <= 1.0:
            tn = t + h
            if even:
                proj = even_projection(y1)
                r = float(np.max(np.abs(proj - y1))) / max(1.0, float(np.max(np.abs(y1))))
                if spec.fixed_step is None and r > 10 * spec.rel_tol:
                    raise ToleranceNotMet(f"even projection residual {r:.3e} exceeds 10*rel_tol")
                if r:
                    log.debug("projection residual %.3e at t = %.6g", r, tn)
                y1 = proj
                ks[6] = field_fn(tn, y1)
            else:
                r = 0.0
            dense.append((t, h, _dense_coeffs(y, y1, h, ks)))
            t, y, k1 = tn, y1, ks[6]
            accepted += 1
            times.append(t)
            values.append(y.copy())
            resid.append(r)
            if spec.fixed_step is None:
                fac = 0.9 * max(en, 1e-10) ** (-alpha) * err_prev ** beta
                fac = min(10.0, max(0.2, fac))
                err_prev = max(en, 1e-4)
                h = direction * min(abs(h) * fac, spec.max_step)
        else:
            rejected += 1
            fac = max(0.2, 0.9 * en ** (-0.2))
            h *= fac
    return Trajectory(np.array(times), np.array(values), accepted, rejected, np.array(resid), dense)


# ---------------------------------------------------------------------------
# invariants

@dataclass(frozen=True)
class InvariantDrift:
    name: str
    reference: complex
    max_abs_drift: float
    relative_drift: float


@dataclass(frozen=True)
class InvariantDriftReport:
    entries: list

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self) -> str:
        def enc(v):
            return [v.real, v.imag] if isinstance(v, complex) else v
        return json.dumps([{"name": e.name, "reference": enc(complex(e.reference)),
                            "max_abs_drift": e.max_abs_drift,
                            "relative_drift": e.relative_drift} for e in self.entries], indent=2)


def _drift(name, series):
    series = np.asarray(series)
    ref = series[0]
    d = float(np.max(np.abs(series - ref)))
    return InvariantDrift(name, complex(ref), d, d / max(abs(ref), 1e-300))


def monitor_invariants(traj: Trajectory, z_samples=(), epsilon: float = 0.0,
                       f1_seed: complex | None = None, stride: int = 1) -> InvariantDriftReport:
    """Drift of ``Delta~(z_k)``, of ``F~_1`` (critical point re-rooted every sample) and of ``I_2``.

    ``epsilon`` is informational; drifts are measured the same way for any flow.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    states = [LatticeState(v) for v in traj.values[::stride]]
    entries = []
    for k, z in enumerate(z_samples):
        entries.append(_drift(f"delta_tilde[{k}]", [discriminant(z, s).delta_tilde for s in states]))
    if f1_seed is not None:
        vals = []
        zc = f1_seed
        for s in states:
            F, zc = invariant_F(s, zc)
            vals.append(F)
        entries.append(_drift("F1", vals))
    entries.append(_drift("I2", [i2_invariant(s) for s in states]))
    return InvariantDriftReport(entries)


def fit_decay_rate(t, d):
    """Least-squares fit of ``log d = c - rate * t``; returns ``(rate, intercept, r2)``."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 samples")
    if np.any(d <= 1e-14):
        raise ValueError("distances must exceed 1e-14")
    ld = np.log10(d)
    if ld.max() - ld.min() < 2.0:
        raise InsufficientDecade("distances span fewer than two decades")
    y = np.log(d)
    A = np.column_stack([t, np.ones_like(t)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return -float(slope), float(icpt), 1.0 - ss_res / ss_tot


def trajectory_csv(traj: Trajectory, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "n", "re_q", "im_q"])
    for t, v in zip(traj.times, traj.values):
        for n, q in enumerate(v):
            w.writerow([f"{t:.17g}", n, f"{q.real:.17g}", f"{q.imag:.17g}"])
    return buf.getvalue()


def uniform_params_field(omega, epsilon=0.0, alpha=(0.0, 0.0)):
    return lattice_field(omega, PerturbationParams(epsilon, *alpha))


__all__ += ["trajectory_csv", "ALParams"]
