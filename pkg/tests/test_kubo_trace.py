import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from kubolab.core import NonPositiveGamma
from kubolab.fermi import OccupationSpec, ZeroTemperatureUnsupported, density_of
from kubolab.kubo_bloch import conductivity_bloch
from kubolab.kubo_trace import (DegenerateToleranceMisuse, apply_liouvillian_resolvent,
                                conductivity_trace, eigendecompose, gradient_fermi)
from kubolab.models import FiniteModel, build_free_gas, free_gas_cutoff, ring

OCC = OccupationSpec(2.0, mu=0.0)


def _random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


def test_zero_hamiltonian():
    fm = FiniteModel(H=np.zeros((4, 4)), dH=np.zeros((2, 4, 4)), volume=4.0)
    assert np.all(conductivity_trace(fm, OCC, 0.5, [0.0, 1.0]).sigma == 0)


def test_onsite_only_model():
    fm = FiniteModel.from_positions(np.diag([0.1, -0.3, 0.7]), [[0.0], [1.0], [2.0]])
    assert np.all(conductivity_trace(fm, OCC, 0.5, [0.0, 1.0]).sigma == 0)


def test_ring_matches_bloch_route():
    fm, bm = ring(16)
    occ = OccupationSpec(2.0, mu=0.0)
    a = conductivity_trace(fm, occ, 0.3, [0.7]).sigma
    b = conductivity_bloch(bm, occ, 0.3, [0.7], L=16).sigma
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))


def test_resolvent_diagonal():
    M = np.diag([1.0, 2.0, 3.0]).astype(complex)
    out = apply_liouvillian_resolvent(M, [0.0, 0.5, 2.0], 0.7, 0.4)
    assert np.allclose(out, M / (0.4 - 0.7j), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_resolvent_forward_identity(seed):
    rng = np.random.default_rng(seed)
    H = _random_hermitian(rng, 6)
    E, U = np.linalg.eigh(H)
    M = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    omega, gamma, hbar = 0.9, 0.3, 1.7
    R = U @ apply_liouvillian_resolvent(U.conj().T @ M @ U, E, omega, gamma, hbar) @ U.conj().T
    forward = (1j / hbar) * (H @ R - R @ H) - 1j * omega * R + gamma * R
    assert np.max(np.abs(forward - M)) <= 1e-12 * max(1.0, np.max(np.abs(M)))


def test_resolvent_orientation():
    H = np.diag([0.0, 1.0])
    M = np.array([[0, 1], [0, 0]], dtype=complex)
    R = apply_liouvillian_resolvent(M, [0.0, 1.0], 0.0, 1.0)
    assert R[0, 1] == pytest.approx(1 / (1 - 1j))
    forward = 1j * (H @ R - R @ H) + R
    assert np.allclose(forward, M, atol=1e-15)


def test_gradient_fermi_matches_commutator():
    rng = np.random.default_rng(11)
    n = 6
    H = _random_hermitian(rng, n)
    X = rng.uniform(-2, 2, (n, 1))
    fm = FiniteModel.from_positions(H, X)
    beta, mu = 0.7, 0.2
    occ = OccupationSpec(beta, mu=mu)
    # Phi(H) through the matrix exponential, independent of the eigensolver
    Phi = np.linalg.inv(linalg.expm(beta * (H - mu * np.eye(n))) + np.eye(n))
    Xm = np.diag(X[:, 0])
    ref = -1j * (Xm @ Phi - Phi @ Xm)
    got = gradient_fermi(fm, occ)[0]
    assert np.max(np.abs(got - ref)) <= 1e-8


def test_gradient_fermi_hermitian_and_traceless_on_real_ring():
    fm, _ = ring(10)
    G = gradient_fermi(fm, OCC)
    assert np.max(np.abs(G[0] - G[0].conj().T)) <= 1e-12
    assert abs(np.trace(G[0])) <= 1e-12


def test_bad_eps_warns():
    fm, _ = ring(8)
    with pytest.warns(DegenerateToleranceMisuse):
        conductivity_trace(fm, OCC, 0.5, [0.0], eps_deg=10.0)


def test_errors():
    fm, _ = ring(8)
    with pytest.raises(NonPositiveGamma):
        conductivity_trace(fm, OCC, 0.0, [0.0])
    with pytest.raises(NonPositiveGamma):
        conductivity_trace(fm, OCC, -1.0, [0.0])
    with pytest.raises(ZeroTemperatureUnsupported):
        conductivity_trace(fm, OccupationSpec(np.inf, mu=0.0), 0.5, [0.0])


def test_eigendecomposition_quality():
    rng = np.random.default_rng(2)
    H = _random_hermitian(rng, 20)
    eig = eigendecompose(H)
    assert eig.residual(H) <= 1e-10 * np.linalg.norm(H, 2)
    assert np.max(np.abs(eig.vectors.conj().T @ eig.vectors - np.eye(20))) <= 1e-12


@pytest.mark.parametrize("omega", [0.0, 1.0])
def test_free_gas_drude(omega):
    L, beta, mu, gamma = 400.0, 1.0, 0.0, 0.5
    fm = build_free_gas(L, 1, free_gas_cutoff(L, beta, mu))
    density = density_of(np.diag(fm.H).real, beta, mu, L)
    sigma = conductivity_trace(fm, OccupationSpec(beta, mu=mu), gamma, [omega]).sigma[0, 0, 0]
    ref = density / (gamma - 1j * omega)
    assert abs(sigma - ref) <= 1e-2 * abs(ref)


def test_free_gas_gamma_scaling():
    L = 100.0
    fm = build_free_gas(L, 1, free_gas_cutoff(L, 1.0, 0.0))
    vals = [g * conductivity_trace(fm, OccupationSpec(1.0, mu=0.0), g, [0.0]).sigma[0, 0, 0]
            for g in (0.1, 0.5, 1.0)]
    assert np.max(np.abs(np.array(vals) - vals[0])) <= 1e-6 * abs(vals[0])


def test_decay_at_high_frequency():
    fm, _ = ring(16)
    gamma = 0.3
    s = conductivity_trace(fm, OCC, gamma, [0.0, 100 * gamma]).sigma
    assert abs(s[1, 0, 0]) < 0.05 * abs(s[0, 0, 0])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.1, 3.0), st.floats(0.2, 5.0), st.floats(-1.5, 1.5))
def test_conjugation_symmetry_real_ring(omega, gamma, beta, mu):
    fm, _ = ring(12)
    s = conductivity_trace(fm, OccupationSpec(beta, mu=mu), gamma, [-omega, omega]).sigma
    assert np.max(np.abs(s[0] - np.conj(s[1]))) <= 1e-10 * max(1.0, np.max(np.abs(s)))


def test_real_part_of_dc_conductivity_positive():
    rng = np.random.default_rng(5)
    H = _random_hermitian(rng, 8)
    fm = FiniteModel.from_positions(H, rng.uniform(0, 4, (8, 2)))
    s = conductivity_trace(fm, OCC, 0.5, [0.0]).sigma[0]
    assert np.all(np.linalg.eigvalsh(0.5 * (s + s.conj().T)) >= -1e-12)
