import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from al_lab.errors import BranchAmbiguity, ZeroSpectralParameter
from al_lab.floquet import (
    classify_spectral_point,
    d_factor,
    default_seeds,
    discriminant,
    discriminant_gradient,
    discriminant_z_derivatives,
    double_point,
    find_critical_points,
    grad_invariant_F,
    invariant_F,
    normalized_gradient,
    uniform_bloch_functions,
    uniform_spectral_points,
    uniform_z,
)
from al_lab.lattice import LatticeState, amplitude_window

from conftest import random_even


def fd_gradient(fun, q, step=1e-6):
    """Finite-difference gradient in ``(q, r = -conj q)`` treated as independent."""
    gq = np.empty(q.size, dtype=complex)
    gr = np.empty(q.size, dtype=complex)
    for n in range(q.size):
        e = np.zeros(q.size, dtype=complex)
        e[n] = step
        d_re = (fun(q + e) - fun(q - e)) / (2 * step)
        d_im = (fun(q + 1j * e) - fun(q - 1j * e)) / (2 * step)
        gq[n] = 0.5 * (d_re - 1j * d_im)
        gr[n] = 0.5 * (-d_re - 1j * d_im)
    return gq, gr


def test_zero_state_is_z_power():
    s = LatticeState.uniform(6, 0.0)
    for z in (0.7, 1.3 + 0.2j, -2.0):
        assert discriminant(z, s).delta == pytest.approx(z**6 + z**-6, rel=1e-14)


def test_zero_z_rejected():
    with pytest.raises(ZeroSpectralParameter):
        discriminant(0.0, LatticeState.uniform(4, 1.0))


@given(st.sampled_from([3, 4, 5, 6, 8]), st.floats(0.0, 10.0), st.floats(0.0, math.pi))
def test_uniform_closed_form(N, a, beta):
    rho = 1 + (a / N) ** 2
    z = uniform_z(beta, rho)
    D = rho ** (N / 2)
    val = discriminant(z, LatticeState.uniform(N, a)).delta
    assert abs(val - 2 * D * math.cos(N * beta)) <= 1e-10 * 2 * D


@given(st.integers(0, 2**31 - 1))
def test_symmetry_under_relabelling(seed):
    rng = np.random.default_rng(seed)
    s = random_even(rng, 6)
    z = complex(rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5))
    shifted = np.roll(s.q[::-1], 1)
    assert discriminant(z, shifted).delta == pytest.approx(discriminant(z, s).delta, rel=1e-12)


def test_phase_invariance(rng):
    s = random_even(rng, 6)
    for z in (0.8 + 0.1j, 1.4):
        assert discriminant(z, s.q * np.exp(0.9j)).delta == pytest.approx(discriminant(z, s).delta, rel=1e-12)


def test_d_factor():
    s = LatticeState.uniform(6, 3.0)
    assert d_factor(s) == pytest.approx((1 + 0.25) ** 3)


def test_z_derivatives_against_finite_differences(rng):
    s = random_even(rng, 6)
    z, dz = 1.1 + 0.2j, 1e-5
    d1 = (discriminant(z + dz, s).delta - discriminant(z - dz, s).delta) / (2 * dz)
    d2 = (discriminant(z + dz, s).delta - 2 * discriminant(z, s).delta + discriminant(z - dz, s).delta) / dz**2
    assert discriminant_z_derivatives(z, s, 1) == pytest.approx(d1, rel=1e-8)
    assert discriminant_z_derivatives(z, s, 2) == pytest.approx(d2, rel=1e-4)


@pytest.mark.parametrize("N", [4, 6])
def test_gradient_matches_finite_differences_off_the_even_subspace(N, rng):
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    z = 0.9 + 0.3j
    gq, gr = discriminant_gradient(z, q)
    fq, fr = fd_gradient(lambda x: discriminant(z, x).delta, q)
    assert np.allclose(gq, fq, rtol=1e-6, atol=1e-7)
    assert np.allclose(gr, fr, rtol=1e-6, atol=1e-7)


def test_normalized_gradient_matches_finite_differences(rng):
    q = random_even(rng, 6).q
    z = 1.2 - 0.1j
    gq, gr = normalized_gradient(z, q)
    fq, fr = fd_gradient(lambda x: discriminant(z, x).delta_tilde, q)
    assert np.allclose(gq, fq, rtol=1e-6, atol=1e-8)
    assert np.allclose(gr, fr, rtol=1e-6, atol=1e-8)


def test_catalog_residuals_and_kinds():
    a, N = 5.0, 6
    pts = uniform_spectral_points(a, N)
    s = LatticeState.uniform(N, a)
    for m, p in enumerate(pts[: N + 1]):
        target = p.residual_periodic if m % 2 == 0 else p.residual_antiperiodic
        assert target <= 1e-9 * 2 * p.D
        assert classify_spectral_point(p.z, s).kind == p.kind
    assert pts[1].kind == "double" and pts[1].algebraic_multiplicity == 2
    assert [p.kind for p in pts[-2:]] == ["critical", "critical"]


def test_double_point_real_in_window():
    for N in (5, 6, 8):
        lo, hi = amplitude_window(N)
        z = double_point(0.5 * (lo + hi), N)
        assert isinstance(z, float) and z > 1


def test_critical_points_of_uniform_state():
    s = LatticeState.uniform(6, 5.0)
    pts = find_critical_points(s)
    zs = [p.z for p in pts]
    zd = double_point(5.0, 6)
    assert any(abs(z - zd) < 1e-10 for z in zs)
    assert any(abs(z - 1.0) < 1e-10 for z in zs)
    for p in pts:
        assert p.abs_d1 <= 1e-8 * max(1.0, p.abs_d2)
    assert len(default_seeds(s)) == 2 * 5 + 2


def test_invariant_F_at_double_point():
    s = LatticeState.uniform(6, 5.0)
    F, zc = invariant_F(s, double_point(5.0, 6) + 0.01)
    assert zc == pytest.approx(double_point(5.0, 6), abs=1e-10)
    assert F == pytest.approx(-2.0, abs=1e-12)


def test_bloch_and_transfer_gradients_agree():
    s = LatticeState.uniform(6, 5.0 * np.exp(0.7j))
    for p in find_critical_points(s):
        if abs(abs(p.z) - 1) < 1e-9 and abs(p.z.imag) < 1e-9:
            continue
        bq, br = grad_invariant_F(s, p.z, method="bloch")
        tq, tr = grad_invariant_F(s, p.z, method="transfer")
        assert np.allclose(bq, tq, atol=1e-12) and np.allclose(br, tr, atol=1e-12)


def test_bloch_gradient_needs_uniform_state(rng):
    with pytest.raises(ValueError):
        grad_invariant_F(random_even(rng, 6), 1.3, method="bloch")


def test_bloch_functions_solve_the_lax_pair():
    z, a, omega, gamma, t, N = 1.4 + 0.1j, 4.0, 1.2, 0.3, 0.2, 6
    h = 1 / N
    bp = uniform_bloch_functions(z, a, omega, gamma, t, N)
    q = a * cmath.exp(-1j * (2 * (a * a - omega * omega) * t - gamma))
    L = np.array([[z, 1j * h * q], [1j * h * np.conj(q), 1 / z]])
    for psi, mult in ((bp.psi_plus, bp.multipliers[0]), (bp.psi_minus, bp.multipliers[1])):
        assert np.allclose(psi[1:], (L @ psi[:-1].T).T, rtol=1e-12)
        assert np.allclose(psi[N], mult * psi[0], rtol=1e-12)
    # temporal equation by finite differences in t
    dt = 1e-6
    for sign in (0, 1):
        p1 = (uniform_bloch_functions(z, a, omega, gamma, t + dt, N).psi_plus if sign == 0
              else uniform_bloch_functions(z, a, omega, gamma, t + dt, N).psi_minus)
        p0 = (uniform_bloch_functions(z, a, omega, gamma, t - dt, N).psi_plus if sign == 0
              else uniform_bloch_functions(z, a, omega, gamma, t - dt, N).psi_minus)
        psi = bp.psi_plus if sign == 0 else bp.psi_minus
        from al_lab.floquet import lax_time_matrix
        B = lax_time_matrix(z, q, q, omega, h)
        assert np.allclose((p1 - p0) / (2 * dt), (B @ psi.T).T, rtol=1e-6)


def test_bloch_branch_ambiguity():
    a, N = 5.0, 6
    with pytest.raises(BranchAmbiguity):
        uniform_bloch_functions(1.0, a, 1.0, 0.0, 0.0, N)
