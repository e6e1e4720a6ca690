import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kubolab.fermi import (ZERO_TEMPERATURE, DensityOutOfRange, OccupationSpec,
                           ZeroTemperatureUnsupported, density_of, fermi_derivative, fermi_dirac,
                           maxwellian, solve_mu)
from kubolab.graphene import graphene_lattice, structure_factor
from kubolab.core import k_grid


def test_half_at_mu():
    assert fermi_dirac(0.3, 7.0, 0.3) == 0.5


def test_tail_without_overflow():
    with np.errstate(all="raise"):
        v = fermi_dirac(100.0, 10.0, 0.0)
    assert 0 <= v < 1e-43


def test_zero_temperature_step():
    assert fermi_dirac(-0.5, ZERO_TEMPERATURE, 0.0) == 1.0
    assert fermi_dirac(0.5, ZERO_TEMPERATURE, 0.0) == 0.0
    assert fermi_dirac(0.0, ZERO_TEMPERATURE, 0.0) == 0.5


def test_derivative_at_mu():
    assert fermi_derivative(1.0, 3.0, 1.0) == pytest.approx(-0.75, rel=1e-15)


@pytest.mark.parametrize("x", [-1.0, 0.0, 1.0])
def test_derivative_finite_difference(x):
    h = 1e-5
    fd = (fermi_dirac(x + h, 2.0, 0.0) - fermi_dirac(x - h, 2.0, 0.0)) / (2 * h)
    assert abs(fermi_derivative(x, 2.0, 0.0) - fd) < 1e-8


def test_derivative_tail_and_zero_temperature():
    assert abs(fermi_derivative(40.0, 1.0, 0.0)) < 1e-16
    with pytest.raises(ZeroTemperatureUnsupported):
        fermi_derivative(0.0, ZERO_TEMPERATURE, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 100), st.floats(-5, 5))
def test_occupation_bounded_and_monotone(e1, e2, beta, mu):
    f1, f2 = fermi_dirac(e1, beta, mu), fermi_dirac(e2, beta, mu)
    assert 0 <= f1 <= 1 and 0 <= f2 <= 1
    if e1 <= e2:
        assert f1 >= f2


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10), st.floats(-3, 3))
def test_derivative_matches_fd_property(beta, x):
    h = 1e-6 / beta
    fd = (fermi_dirac(x + h, beta, 0.0) - fermi_dirac(x - h, beta, 0.0)) / (2 * h)
    assert abs(fermi_derivative(x, beta, 0.0) - fd) < 1e-8 * max(1.0, beta)
    assert fermi_derivative(x, beta, 0.0) <= 0


def test_solve_mu_single_level():
    mu = solve_mu(np.array([0.0]), 0.25, 1.0)
    assert mu == pytest.approx(-math.log(3), abs=1e-9)


def test_solve_mu_graphene_half_filling():
    lat = graphene_lattice()
    ks = k_grid(lat, 8)
    absF = np.abs(structure_factor(ks))
    E = np.concatenate([-absF, absF])
    volume = ks.shape[0] * lat.cell_volume
    mu = solve_mu(E, 1.0 / lat.cell_volume, 3.0, volume)
    assert abs(mu) < 1e-9


def test_solve_mu_free_gas_roundtrip():
    L = 200.0
    n = np.arange(-600, 601)
    E = 0.5 * (2 * np.pi * n / L) ** 2
    mu = solve_mu(E, 0.1, 5.0, L)
    assert density_of(E, 5.0, mu, L) == pytest.approx(0.1, rel=1e-10)


def test_solve_mu_out_of_range():
    with pytest.raises(DensityOutOfRange):
        solve_mu(np.array([0.0, 1.0]), 3.0, 1.0, 1.0)
    with pytest.raises(DensityOutOfRange):
        OccupationSpec(1.0, density=-1.0)
    with pytest.raises(ValueError):
        OccupationSpec(1.0, mu=0.0, density=0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_solve_mu_monotone(n1, n2):
    E = np.linspace(-1, 1, 21)
    m1, m2 = solve_mu(E, n1 * 21, 2.0), solve_mu(E, n2 * 21, 2.0)
    if n1 < n2:
        assert m1 <= m2


def test_maxwellian_normalisation_and_moments():
    beta, density, mass = 2.0, 0.7, 1.3
    f = lambda p: maxwellian(np.array([[p]]), beta, density, mass)[0]
    norm, _ = integrate.quad(f, -np.inf, np.inf)
    first, _ = integrate.quad(lambda p: p * f(p), -np.inf, np.inf)
    assert norm == pytest.approx(density, abs=1e-8)
    assert abs(first) < 1e-8
    assert maxwellian(np.array([0.0]), 1.0, 1.0, 1.0) == pytest.approx((2 * np.pi) ** -0.5, rel=1e-15)
