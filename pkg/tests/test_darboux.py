import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from al_lab.darboux import (
    OrbitParams,
    asymptotic_phase_shift,
    darboux_transform,
    distance_to_circle,
    even_heteroclinic_orbit,
    even_melnikov_vector,
    heteroclinic_orbit,
    k_hat,
    k_hat_even,
    melnikov_vector,
    melnikov_vector_to_csv,
    orbit_to_csv,
    uniform_eigenfunction,
)
from al_lab.errors import ConfigError, EigenfunctionResidualTooLarge
from al_lab.floquet import discriminant, normalized_gradient
from al_lab.lattice import LatticeState, amplitude_window, even_defect, even_projection, uniform_orbit


def qc(P, t):
    return np.full(P.N, complex(uniform_orbit(P.a, P.omega, P.gamma, t)))


def test_params_validation():
    with pytest.raises(ConfigError):
        OrbitParams(2.0, 1.0, N=6)
    with pytest.raises(ConfigError):
        OrbitParams(5.0, 1.0, ear=0)
    P = OrbitParams(5.0, 1.0)
    assert P.z > 1 and P.mu > 0 and 0 < P.phi < math.pi / 2


@pytest.mark.parametrize("vtheta", [0.3, -1.1, 2.0])
def test_transform_matches_closed_form(vtheta):
    P = OrbitParams(5.0, 1.3, 0.4, 0.2, 1, 6, vtheta=vtheta)
    for t in (-0.05, 0.0, 0.03):
        Q = darboux_transform(qc(P, t), P.z, uniform_eigenfunction(P, t))
        assert np.allclose(Q, heteroclinic_orbit(P, t), rtol=1e-12, atol=1e-12)


def test_transform_rejects_non_eigenfunction():
    P = OrbitParams(5.0, 1.3)
    phi = uniform_eigenfunction(P, 0.0)
    phi[3] *= 1.01
    with pytest.raises(EigenfunctionResidualTooLarge):
        darboux_transform(qc(P, 0.0), P.z, phi)


@pytest.mark.parametrize("ear", [1, -1])
def test_even_orbit_is_the_ear_member(ear):
    P = OrbitParams(5.0, 1.3, 0.4, 0.1, ear, 6)
    vt = -P.beta if ear == 1 else -P.beta + math.pi
    G = OrbitParams(5.0, 1.3, 0.4, 0.1, ear, 6, vtheta=vt)
    ts = np.linspace(-0.2, 0.2, 9)
    assert np.allclose(even_heteroclinic_orbit(P, ts), heteroclinic_orbit(G, ts), rtol=1e-12, atol=1e-12)


@given(st.floats(-0.3, 0.3), st.sampled_from([5, 6, 8]), st.floats(0.1, 0.9), st.sampled_from([1, -1]))
def test_orbit_is_even_and_isospectral(t, N, frac, ear):
    lo, hi = amplitude_window(N)
    P = OrbitParams(lo + frac * (hi - lo), 1.0, 0.2, 0.0, ear, N)
    Q = even_heteroclinic_orbit(P, t)
    assert even_defect(Q) == 0.0
    LatticeState(Q)
    for z in (0.7 + 0.4j, 1.2, -0.9 + 0.1j):
        dq = discriminant(z, qc(P, t)).delta
        assert abs(discriminant(z, Q).delta - dq) <= 1e-9 * max(1.0, abs(dq))


def test_asymptotic_phases():
    P = OrbitParams(5.0, 1.3, 0.4, 0.0, 1, 6)
    for sign in (1, -1):
        t = sign * 30.0 / P.mu
        ratio = even_heteroclinic_orbit(P, t) / qc(P, t)
        assert np.allclose(ratio, -np.exp(sign * 2j * P.phi), atol=1e-10)
    tp, tm = asymptotic_phase_shift(P)
    assert (tp - tm) % (2 * math.pi) == pytest.approx((4 * P.phi) % (2 * math.pi))


def test_distance_decays_at_twice_mu():
    P = OrbitParams(5.0, 1.0, 0.3, 0.0, 1, 6)
    t1, t2 = 3 / P.mu, 4 / P.mu
    d1 = distance_to_circle(even_heteroclinic_orbit(P, t1), qc(P, t1))
    d2 = distance_to_circle(even_heteroclinic_orbit(P, t2), qc(P, t2))
    assert math.log(d1 / d2) / (t2 - t1) == pytest.approx(2 * P.mu, rel=1e-3)


def test_distance_to_circle_closed_form_minimiser(rng):
    q = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    th = np.linspace(0, 2 * np.pi, 20001)
    brute = np.min(np.linalg.norm(q[None, :] - np.exp(1j * th)[:, None] * c[None, :], axis=1))
    assert distance_to_circle(q, c) == pytest.approx(brute, rel=1e-7)


def test_melnikov_vector_is_minus_gradient():
    P = OrbitParams(5.0, 1.3, 0.4, 0.2, 1, 6, vtheta=0.3)
    for t in (-0.04, 0.07):
        m1, m2 = melnikov_vector(P, t)
        gq, gr = normalized_gradient(P.z, heteroclinic_orbit(P, t))
        assert np.allclose(m1, -gq, rtol=1e-11) and np.allclose(m2, -gr, rtol=1e-11)


@pytest.mark.parametrize("ear", [1, -1])
def test_even_part_of_melnikov_vector(ear):
    P = OrbitParams(4.5, 1.3, 0.7, 0.1, ear, 6)
    ts = np.linspace(-1, 1, 11) / P.mu
    for m, e in zip(melnikov_vector(P, ts), even_melnikov_vector(P, ts)):
        assert np.allclose(even_projection(m.T).T, e, rtol=1e-12, atol=1e-14)
    assert k_hat(P) == pytest.approx(P.h**2 * P.a**2 * k_hat_even(P), rel=1e-14)


def test_csv_outputs():
    P = OrbitParams(5.0, 1.3)
    text = orbit_to_csv(P, [0.0, 0.1], header="# x\n")
    lines = text.splitlines()
    assert lines[0] == "# x" and lines[1].startswith("t,n,re_Q")
    assert len(lines) == 2 + 2 * 6
    assert len(melnikov_vector_to_csv(P, [0.0]).splitlines()) == 1 + 6
