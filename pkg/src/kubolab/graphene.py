"""Nearest-neighbour graphene: analytic Bloch Hamiltonian and closed-form conductivity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (REDUCED, ConductivityResult, FrequencyGrid, Lattice, PhysicalConstants,
                   _check_resolution, k_grid, reciprocal_of)
from .fermi import OccupationSpec, ZeroTemperatureUnsupported, divided_difference, fermi_derivative
from .kernels import parallel_resolvent_sum
from .kubo_trace import DissipationSpec
from .models import BlochModel, TightBinding

__all__ = [
    "GrapheneParams",
    "graphene_lattice",
    "structure_factor",
    "structure_factor_gradient",
    "graphene_bloch",
    "graphene_tight_binding",
    "graphene_bands",
    "conductivity_graphene_closed_form",
    "DIRAC_TOL",
]

DIRAC_TOL = 1e-12


@dataclass(frozen=True)
class GrapheneParams:
    a: float = 1.0
    t: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("lattice constant a must be > 0")
        if not (self.t > 0 and math.isfinite(self.t)):
            raise ValueError("hopping t must be > 0")


def _primitive(params: GrapheneParams):
    s3 = math.sqrt(3.0)
    a1 = 0.5 * params.a * np.array([1.0, s3])
    a2 = 0.5 * params.a * np.array([-1.0, s3])
    return a1, a2


def graphene_lattice(params: GrapheneParams = GrapheneParams()) -> Lattice:
    a1, a2 = _primitive(params)
    return reciprocal_of(np.column_stack([a1, a2]))


def structure_factor(k, params: GrapheneParams = GrapheneParams()):
    """F(k) = 1 + exp(-i k.a1) + exp(-i k.a2); accepts (..., 2) arrays."""
    a1, a2 = _primitive(params)
    k = np.asarray(k, dtype=float)
    out = 1.0 + np.exp(-1j * (k @ a1)) + np.exp(-1j * (k @ a2))
    return out if np.ndim(out) else complex(out)


def structure_factor_gradient(k, params: GrapheneParams = GrapheneParams()) -> np.ndarray:
    """dF/dk_l with shape (..., 2)."""
    a1, a2 = _primitive(params)
    k = np.asarray(k, dtype=float)
    e1 = np.exp(-1j * (k @ a1))[..., None]
    e2 = np.exp(-1j * (k @ a2))[..., None]
    return -1j * a1 * e1 - 1j * a2 * e2


def graphene_bloch(params: GrapheneParams = GrapheneParams()) -> BlochModel:
    """H(k) = -t [[0, F], [conj F, 0]]."""
    t = params.t

    def h_batch(ks):
        F = structure_factor(np.atleast_2d(ks), params)
        out = np.zeros(F.shape + (2, 2), dtype=complex)
        out[:, 0, 1] = -t * F
        out[:, 1, 0] = -t * np.conj(F)
        return out

    def dh_batch(ks):
        dF = structure_factor_gradient(np.atleast_2d(ks), params)
        out = np.zeros(dF.shape + (2, 2), dtype=complex)
        out[..., 0, 1] = -t * dF
        out[..., 1, 0] = -t * np.conj(dF)
        return out

    return BlochModel(lattice=graphene_lattice(params), n_bands=2, h_batch=h_batch,
                      dh_batch=dh_batch, name="graphene", real_hamiltonian=False,
                      info={"a": params.a, "t": params.t})


def graphene_tight_binding(params: GrapheneParams = GrapheneParams()) -> TightBinding:
    """The same model as explicit hoppings; orbital A at 0, B at (0, a/sqrt(3))."""
    hop = -params.t
    blocks = {}
    for R in [(0, 0), (-1, 0), (0, -1)]:
        b = np.zeros((2, 2), dtype=complex)
        b[0, 1] = hop
        blocks[R] = blocks.get(R, 0) + b
        neg = tuple(-r for r in R)
        blocks[neg] = blocks.get(neg, 0) + b.conj().T
    return TightBinding(graphene_lattice(params), 2, blocks, labels=["A", "B"],
                        taus=[[0.0, 0.0], [0.0, params.a / math.sqrt(3.0)]], name="graphene")


def graphene_bands(k, params: GrapheneParams = GrapheneParams()):
    """Band energies (E_-, E_+) = (-t|F|, +t|F|) and eigenvectors chi_-, chi_+.

    Eigenvectors follow the phase convention with a real positive first
    component, chi_pm = (1, -+ conj F / |F|) / sqrt(2). At F = 0 the vector
    components are returned for conj F/|F| := 1.
    """
    F = np.asarray(structure_factor(k, params))
    absF = np.abs(F)
    phase = np.where(absF > DIRAC_TOL, np.conj(F) / np.where(absF > DIRAC_TOL, absF, 1.0), 1.0)
    E = np.stack([-params.t * absF, params.t * absF], axis=-1)
    inv = 1 / math.sqrt(2.0)
    chi_minus = np.stack([np.full_like(phase, inv), inv * phase], axis=-1)
    chi_plus = np.stack([np.full_like(phase, inv), -inv * phase], axis=-1)
    return E, np.stack([chi_minus, chi_plus], axis=-1)


def conductivity_graphene_closed_form(params: GrapheneParams, occ: OccupationSpec, gamma, omegas,
                                      L: int = 128, constants: PhysicalConstants = REDUCED,
                                      eps_deg=None) -> ConductivityResult:
    """Drude and regular conductivity from the explicit graphene integrands on the L x L grid.

    Band energies carry the hopping scale (E = s t |F|) both in the occupation
    factors and in the interband denominator (i/hbar)(E_s' - E_s) - i w + Gamma.
    Grid points with |F| < DIRAC_TOL contribute zero.
    """
    gamma = DissipationSpec.coerce(gamma).gamma
    if not occ.finite_temperature:
        raise ZeroTemperatureUnsupported("the Kubo formula needs finite beta")
    grid = FrequencyGrid.coerce(omegas)
    L = _check_resolution(L)
    lattice = graphene_lattice(params)
    ks = k_grid(lattice, L)
    F = structure_factor(ks, params)
    dF = structure_factor_gradient(ks, params)
    absF = np.abs(F)
    t, hb, e = params.t, constants.hbar, constants.e_charge
    E = np.stack([-t * absF, t * absF], axis=-1)
    volume = ks.shape[0] * lattice.cell_volume
    mu = occ.resolve_mu(E, volume, max_density=2 / lattice.cell_volume
                        if occ.density is not None else None)
    if eps_deg is None:
        eps_deg = 1e-8 * max(1.0, float(np.max(np.abs(E))))
    regular_pt = absF > DIRAC_TOL
    safe = np.where(regular_pt, absF, 1.0)
    prod = np.conj(F)[:, None] * dF
    re = np.where(regular_pt[:, None], prod.real / safe[:, None], 0.0)
    im = np.where(regular_pt[:, None], prod.imag / safe[:, None], 0.0)
    scale = -(e ** 2) * t ** 2 / (hb ** 2 * volume)
    d = 2
    # Drude: (Gamma - i w)^{-1} sum_s dPhi/dE(s t|F|) Re_l Re_m
    fp = fermi_derivative(E, occ.beta, mu).sum(axis=1)
    drude_w = np.einsum("k,kl,km->lm", fp, re, re)
    drude = scale * drude_w[None] / (gamma - 1j * grid.omegas)[:, None, None]
    # Regular: s != s' pairs, product Im_l Im_m identical for both orderings
    x_list, w_list = [], []
    for s, sp in [(0, 1), (1, 0)]:
        dd, degenerate = divided_difference(E[:, s], E[:, sp], occ.beta, mu, eps_deg)
        keep = ~degenerate & regular_pt
        x_list.append((E[keep, sp] - E[keep, s]) / hb)
        w_list.append((dd[keep, None, None] * im[keep, :, None] * im[keep, None, :]).reshape(-1, d * d))
    regular = scale * parallel_resolvent_sum(np.concatenate(x_list), np.concatenate(w_list),
                                             grid.omegas, gamma).reshape(-1, d, d)
    meta = {"model": "graphene", "a": params.a, "t": params.t, "L": L, "gamma": gamma,
            **occ.as_dict(), "mu_resolved": mu, "eps_deg": eps_deg,
            "dirac_points_on_grid": int(np.sum(~regular_pt)), "constants": constants.as_dict()}
    return ConductivityResult(grid.omegas, drude + regular, "graphene_closed_form", meta,
                              {"drude": drude, "regular": regular})
