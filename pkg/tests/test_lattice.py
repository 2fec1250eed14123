import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from al_lab.errors import InvalidState, ZeroCarrier
from al_lab.lattice import (
    ALParams,
    BlockCoords,
    LatticeSize,
    LatticeState,
    PerturbationParams,
    al_rhs,
    amplitude_window,
    even_projection,
    from_block_coords,
    i2_invariant,
    in_window,
    linearized_growth_rates,
    perturbation_terms,
    perturbed_rhs,
    state_from_csv,
    state_from_json,
    state_to_csv,
    state_to_json,
    to_block_coords,
    uniform_orbit,
    vtheta_angle,
)

from conftest import random_even


def test_size_validation():
    assert LatticeSize(6).h == pytest.approx(1 / 6)
    assert LatticeSize(7).M == 3
    with pytest.raises(InvalidState):
        LatticeSize(2)


def test_state_rejects_odd_and_nonfinite():
    with pytest.raises(InvalidState):
        LatticeState(np.array([1, 2, 3, 4], dtype=complex))
    with pytest.raises(InvalidState):
        LatticeState(np.array([np.nan, 0, 0]))
    s = LatticeState(np.array([1, 2, 3, 2], dtype=complex))
    assert s.N == 4 and not s.q.flags.writeable


@given(st.integers(3, 12), st.integers(0, 2**31 - 1))
def test_even_projection_is_idempotent_and_even(N, seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    p = even_projection(q)
    assert np.allclose(even_projection(p), p, atol=0)
    LatticeState(p)


def test_uniform_orbit_solves_lattice():
    a, omega, gamma = 2.5, 1.1, 0.3
    t, dt = 0.37, 1e-6
    q = uniform_orbit(a, omega, gamma, t)
    deriv = (uniform_orbit(a, omega, gamma, t + dt) - uniform_orbit(a, omega, gamma, t - dt)) / (2 * dt)
    rhs = al_rhs(LatticeState.uniform(5, q), ALParams(omega, LatticeSize(5)))
    assert np.allclose(rhs, deriv, rtol=1e-8)


def test_perturbed_field_matches_conjugate_bracket(rng):
    s = random_even(rng, 6)
    pert = PerturbationParams(0.1, 0.7, -0.4)
    g1, g2 = perturbation_terms(s)
    P = np.conj(pert.alpha1 * g1 + pert.alpha2 * g2)
    diff = perturbed_rhs(s, ALParams(1.2, s.size), pert) - al_rhs(s, ALParams(1.2, s.size))
    assert np.allclose(diff, -1j * pert.epsilon * P, rtol=1e-13, atol=1e-13)


@given(st.integers(3, 10), st.integers(0, 2**31 - 1))
def test_flow_preserves_evenness(N, seed):
    s = random_even(np.random.default_rng(seed), N)
    f = perturbed_rhs(s, ALParams(0.8, s.size), PerturbationParams(0.3, 1.0, 1.0))
    LatticeState(f)


def test_i2_real_and_uniform_value():
    s = LatticeState.uniform(6, 2.0 * np.exp(0.4j))
    assert i2_invariant(s) == pytest.approx(2 * 6 * 4.0)


def test_amplitude_window_edges():
    lo, hi = amplitude_window(6)
    assert lo == pytest.approx(6 * math.tan(math.pi / 6))
    assert hi == pytest.approx(6 * math.tan(math.pi / 3))
    assert amplitude_window(4)[1] == math.inf
    assert amplitude_window(3, cap=9.0) == (pytest.approx(3 * math.tan(math.pi / 3)), 9.0)
    assert in_window(5.0, 6) and not in_window(3.0, 6) and not in_window(11.0, 6)


def test_single_unstable_mode_inside_window():
    for N in (5, 6, 8):
        lo, hi = amplitude_window(N)
        rates = linearized_growth_rates(0.5 * (lo + hi), N).plus()
        unstable = [j for j, w in enumerate(rates) if abs(w.real) > 1e-12]
        assert unstable == [1]


@given(st.floats(0.05, 3.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0, 2 * math.pi))
def test_block_coordinate_roundtrip(a_off, b1, b2, gamma):
    N = 6
    a = amplitude_window(N)[0] + a_off
    c = (0.1 + 0.05j, -0.02j)
    bc = BlockCoords(a=a, gamma=gamma, b1=b1, b2=b2, c=c, vtheta=vtheta_angle(a, N))
    back = to_block_coords(from_block_coords(bc, LatticeSize(N)), a_ref=a)
    assert back.a == pytest.approx(a, rel=1e-12)
    assert back.b1 == pytest.approx(b1, abs=1e-11)
    assert back.b2 == pytest.approx(b2, abs=1e-11)
    assert np.allclose(back.c, c, atol=1e-11)


def test_zero_carrier():
    q = np.cos(2 * np.pi * np.arange(6) / 6).astype(complex)
    with pytest.raises(ZeroCarrier):
        to_block_coords(LatticeState(q))


def test_serialization_roundtrip(rng):
    s = random_even(rng, 8)
    s2, om = state_from_json(state_to_json(s, 1.25))
    assert s2 == s and om == 1.25
    assert state_from_csv(state_to_csv(s)) == s
