import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kubolab.fermi import OccupationSpec
from kubolab.graphene import (GrapheneParams, conductivity_graphene_closed_form, graphene_bands,
                              graphene_bloch, graphene_tight_binding, structure_factor,
                              structure_factor_gradient)
from kubolab.kubo_bloch import conductivity_bloch

OCC = OccupationSpec(4.0, mu=0.0)
K = np.array([4 * np.pi / 3, 0.0])
RNG_K = np.random.default_rng(42).uniform(-5, 5, (20, 2))


def test_structure_factor_examples():
    assert structure_factor(np.zeros(2)) == pytest.approx(3.0)
    assert abs(structure_factor(K)) <= 1e-15
    F = structure_factor(RNG_K[:10])
    assert np.allclose(structure_factor(-RNG_K[:10]), np.conj(F), atol=1e-15)
    assert np.all(np.abs(structure_factor(RNG_K)) <= 3 + 1e-14)


def test_structure_factor_gradient_fd():
    h = 1e-6
    for k in RNG_K[:5]:
        fd = [(structure_factor(k + h * e) - structure_factor(k - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(structure_factor_gradient(k), fd, atol=1e-8)


def test_params_validated():
    with pytest.raises(ValueError):
        GrapheneParams(a=0.0)
    with pytest.raises(ValueError):
        GrapheneParams(t=-1.0)


def test_bloch_spectrum_and_form():
    g = graphene_bloch(GrapheneParams(t=1.3))
    assert np.allclose(np.linalg.eigvalsh(g.h_of_k([0.0, 0.0])), [-3.9, 3.9], atol=1e-14)
    for k in RNG_K:
        Hk = g.h_of_k(k)
        assert np.max(np.abs(Hk - Hk.conj().T)) <= 1e-15
        assert abs(np.trace(Hk)) <= 1e-15


def test_bloch_derivative_fd():
    g = graphene_bloch()
    h = 1e-6
    for k in RNG_K:
        fd = np.array([(g.h_of_k(k + h * e) - g.h_of_k(k - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.max(np.abs(g.dh_dk(k) - fd)) <= 1e-6


def test_bands_and_eigenvectors():
    params = GrapheneParams(t=0.8)
    g = graphene_bloch(params)
    E, chi = graphene_bands(RNG_K, params)
    assert np.allclose(E[:, 1], params.t * np.abs(structure_factor(RNG_K)), atol=1e-15)
    assert np.allclose(E[:, 0], -E[:, 1], atol=0)
    for i, k in enumerate(RNG_K):
        Hk = g.h_of_k(k)
        for n in range(2):
            v = chi[i, :, n]
            assert np.allclose(Hk @ v, E[i, n] * v, atol=1e-14)
            assert v[0].real > 0 and v[0].imag == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_bands_even(kx, ky):
    k = np.array([kx, ky])
    assert np.allclose(graphene_bands(k)[0], graphene_bands(-k)[0], atol=1e-12)


def test_tight_binding_matches_analytic():
    tb = graphene_tight_binding().bloch()
    g = graphene_bloch()
    for k in RNG_K:
        assert np.max(np.abs(tb.h_of_k(k) - g.h_of_k(k))) <= 1e-14
        assert np.max(np.abs(tb.dh_dk(k) - g.dh_dk(k))) <= 1e-14


def test_closed_form_matches_generic_route():
    w = [0.0, 1.0, 2.0, 3.0]
    a = conductivity_graphene_closed_form(GrapheneParams(), OCC, 0.2, w, L=32)
    b = conductivity_bloch(graphene_bloch(), OCC, 0.2, w, L=32)
    for part in ("drude", "regular"):
        assert np.max(np.abs(a.parts[part] - b.parts[part])) <= 1e-9 * np.max(np.abs(b.sigma))
    assert a.metadata["dirac_points_on_grid"] == 0


def test_closed_form_dirac_points_on_grid_are_zeroed():
    r = conductivity_graphene_closed_form(GrapheneParams(), OCC, 0.2, [1.0], L=12)
    assert r.metadata["dirac_points_on_grid"] == 2
    assert np.all(np.isfinite(r.sigma))


def test_closed_form_hopping_scale():
    # velocity^2 ~ t^2, divided difference ~ 1/t, denominator ~ t:
    # sigma(t; beta, Gamma, w) = sigma(1; beta t, Gamma / t, w / t)
    t = 2.0
    a = conductivity_graphene_closed_form(GrapheneParams(t=t), OccupationSpec(2.0, mu=0.0), 0.4, [1.0], L=32)
    b = conductivity_graphene_closed_form(GrapheneParams(), OccupationSpec(4.0, mu=0.0), 0.2, [0.5], L=32)
    assert np.allclose(a.sigma, b.sigma, rtol=1e-12, atol=0)


def test_sigma_xy_vanishes():
    r = conductivity_graphene_closed_form(GrapheneParams(), OCC, 0.2, [1.0], L=128).sigma[0]
    assert abs(r[0, 1]) < 1e-6 * abs(r[0, 0])
    assert abs(r[1, 0]) < 1e-6 * abs(r[0, 0])


def test_drude_part_isotropic():
    r = conductivity_graphene_closed_form(GrapheneParams(), OCC, 0.2, [0.0, 1.0], L=128)
    D = r.parts["drude"]
    assert np.max(np.abs(D[:, 0, 0] - D[:, 1, 1])) <= 1e-6 * np.max(np.abs(D[:, 0, 0]))


def test_atomic_convention_isotropic_and_same_xx():
    tb = graphene_tight_binding()
    w = [0.0, 1.0, 2.0]
    atomic = conductivity_bloch(tb.bloch("atomic"), OCC, 0.2, w, L=128).sigma
    cell = conductivity_bloch(tb.bloch("cell"), OCC, 0.2, w, L=128).sigma
    assert np.max(np.abs(atomic[:, 0, 0] - atomic[:, 1, 1])) <= 1e-6 * np.max(np.abs(atomic[:, 0, 0]))
    assert np.max(np.abs(atomic[:, 0, 1])) <= 1e-6 * np.max(np.abs(atomic[:, 0, 0]))
    assert np.allclose(atomic[:, 0, 0], cell[:, 0, 0], rtol=1e-12, atol=0)
