import json
import math

import numpy as np
import pytest

from al_lab.darboux import OrbitParams, even_heteroclinic_orbit
from al_lab.errors import InsufficientDecade, StepSizeUnderflow, ToleranceNotMet
from al_lab.evolve import (
    IntegratorSpec,
    fit_decay_rate,
    integrate,
    lattice_field,
    monitor_invariants,
    trajectory_csv,
)
from al_lab.lattice import (
    BlockCoords,
    LatticeSize,
    LatticeState,
    PerturbationParams,
    from_block_coords,
    uniform_orbit,
    vtheta_angle,
)


def block_state(a, b1=1e-2, N=6):
    bc = BlockCoords(a, 0.0, b1, 0.0, (0j,) * (N // 2 - 1), vtheta_angle(5.0, N))
    return from_block_coords(bc, LatticeSize(N))


def test_spec_validation():
    with pytest.raises(ValueError):
        IntegratorSpec(rel_tol=0.0)


def test_scalar_exponential_and_dense_output():
    tr = integrate(lambda t, y: -2.0 * y + np.sin(t), np.array([1.0]), (0.0, 3.0),
                   IntegratorSpec(rel_tol=1e-11, abs_tol=1e-13))
    exact = lambda t: (1 + 1 / 5) * np.exp(-2 * t) + (2 * np.sin(t) - np.cos(t)) / 5  # noqa: E731
    assert tr.values[-1, 0] == pytest.approx(exact(3.0), abs=1e-10)
    ts = np.linspace(0, 3, 97)
    assert np.max(np.abs(tr(ts)[:, 0] - exact(ts))) < 1e-9
    assert np.all(np.diff(tr.times) > 0)


def test_uniform_orbit_within_ten_tol():
    a, om, tol = 2.0, 1.0, 1e-10
    tr = integrate(lattice_field(om), LatticeState.uniform(6, a), (0.0, 1.0), IntegratorSpec(rel_tol=tol))
    ts = np.linspace(0, 1, 51)
    err = np.max(np.abs(tr(ts) - uniform_orbit(a, om, 0.0, ts)[:, None]))
    assert err <= 10 * tol
    assert np.max(tr.projection_residuals) <= 10 * tol


def test_tolerance_reduction_reduces_error():
    a, om = 2.0, 1.0
    errs = []
    for tol in (1e-8, 5e-9):
        tr = integrate(lattice_field(om), LatticeState.uniform(6, a), (0.0, 1.0),
                       IntegratorSpec(rel_tol=tol, abs_tol=1e-2 * tol))
        errs.append(abs(tr.values[-1, 0] - uniform_orbit(a, om, 0.0, 1.0)))
    assert errs[1] <= 0.6 * errs[0]


def test_fixed_step_order_is_five():
    # small steps keep the stiff high modes inside the stability region
    a, om = 2.0, 1.0
    errs = []
    ns = (256, 512, 1024)
    for n in ns:
        tr = integrate(lattice_field(om), LatticeState.uniform(6, a), (0.0, 1.0),
                       IntegratorSpec(fixed_step=1.0 / n))
        errs.append(np.max(np.abs(tr.values[-1] - uniform_orbit(a, om, 0.0, 1.0))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(ns) - 1)]
    assert all(4.5 <= p <= 5.5 for p in orders), orders


def test_reversibility_on_a_stable_state():
    s0 = block_state(2.0)
    spec = IntegratorSpec()
    fwd = integrate(lattice_field(1.0), s0, (0.0, 1.0), spec)
    back = integrate(lattice_field(1.0), LatticeState(fwd.values[-1]), (1.0, 0.0), spec)
    assert np.max(np.abs(back.values[-1] - s0.q)) <= 100 * spec.rel_tol * np.max(np.abs(s0.q))


def test_isospectrality_and_i2():
    tr = integrate(lattice_field(1.3), block_state(5.0), (0.0, 1.0), IntegratorSpec())
    zs = (0.5 + 0.5j, 1.5, -1.2 + 0.3j)
    rep = monitor_invariants(tr, zs, f1_seed=1.6, stride=10)
    for k in range(len(zs)):
        assert rep[f"delta_tilde[{k}]"].relative_drift <= 1e-8
    assert rep["F1"].relative_drift <= 1e-8
    assert rep["I2"].relative_drift <= 1e-8
    doc = json.loads(rep.to_json())
    assert [e["name"] for e in doc][-1] == "I2"
    with pytest.raises(KeyError):
        rep["nope"]


def test_i2_drift_linear_in_epsilon():
    s0 = block_state(2.0)
    eps = np.array([1e-3, 1e-2, 1e-1])
    drift = []
    for e in eps:
        tr = integrate(lattice_field(1.0, PerturbationParams(e, 1.0, 1.0)), s0, (0.0, 1.0), IntegratorSpec())
        drift.append(monitor_invariants(tr, (), e, stride=5)["I2"].max_abs_drift)
    slope = np.polyfit(np.log(eps), np.log(drift), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_shadowing_of_closed_form():
    P = OrbitParams(3.5, 1.0, 0.3, 0.0, 1, 6)
    tr = integrate(lattice_field(1.0), LatticeState(even_heteroclinic_orbit(P, -2.0)), (-2.0, 2.0),
                   IntegratorSpec(rel_tol=1e-12, abs_tol=1e-14))
    ts = np.linspace(-2, 2, 41)
    assert np.max(np.abs(tr(ts) - even_heteroclinic_orbit(P, ts))) <= 1e-6


def test_projection_residual_gate():
    # a field that breaks evenness must trip the projection check
    def skew(t, q):
        out = np.zeros_like(q)
        out[1] = 1.0
        return out
    with pytest.raises(ToleranceNotMet):
        integrate(skew, LatticeState.uniform(6, 1.0), (0.0, 1.0), IntegratorSpec())


def test_step_size_underflow():
    with pytest.raises(StepSizeUnderflow):
        integrate(lambda t, y: y * y, np.array([1.0]), (0.0, 2.0), IntegratorSpec())


def test_fit_decay_rate():
    t = np.linspace(0, 2, 20)
    rate, icpt, r2 = fit_decay_rate(t, 3.0 * np.exp(-4.2 * t))
    assert rate == pytest.approx(4.2, rel=1e-10) and icpt == pytest.approx(math.log(3.0))
    assert r2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InsufficientDecade):
        fit_decay_rate(t, np.ones_like(t))
    with pytest.raises(ValueError):
        fit_decay_rate(t[:5], np.exp(-t[:5]))


def test_decay_rate_of_orbit():
    P = OrbitParams(5.0, 1.0, 0.3)
    from al_lab.darboux import distance_to_circle
    ts = np.linspace(2 / P.mu, 5 / P.mu, 30)
    d = distance_to_circle(even_heteroclinic_orbit(P, ts), uniform_orbit(5.0, 1.0, 0.3, ts)[:, None])
    assert fit_decay_rate(ts, d)[0] == pytest.approx(2 * P.mu, rel=0.01)


def test_trajectory_csv():
    tr = integrate(lattice_field(1.0), LatticeState.uniform(3, 1.0), (0.0, 0.01), IntegratorSpec())
    lines = trajectory_csv(tr, header="# h\n").splitlines()
    assert lines[1] == "t,n,re_q,im_q" and len(lines) == 2 + 3 * len(tr.times)


def test_zero_span():
    tr = integrate(lattice_field(1.0), LatticeState.uniform(3, 1.0), (0.5, 0.5))
    assert tr.accepted == 0 and len(tr.times) == 1
