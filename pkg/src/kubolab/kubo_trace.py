"""General finite-volume Kubo formula evaluated in the Hamiltonian eigenbasis.

sigma_lm(w) = -(e^2 / hbar^2) Tr~{ (d_l H) (L_H - i w + Gamma)^{-1} d_m Phi(H) },
with the Liouvillian L_H = (i/hbar)[H, .] diagonal in the eigenbasis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (REDUCED, ConductivityResult, FrequencyGrid, NonPositiveGamma,
                   PhysicalConstants)
from .fermi import OccupationSpec, ZeroTemperatureUnsupported, divided_difference
from .kernels import parallel_resolvent_sum
from .models import FiniteModel

__all__ = [
    "DegenerateToleranceMisuse",
    "EigenDecomposition",
    "DissipationSpec",
    "default_eps_deg",
    "eigendecompose",
    "apply_liouvillian_resolvent",
    "gradient_fermi",
    "conductivity_trace",
]


class DegenerateToleranceMisuse(UserWarning):
    """eps_deg is at least as large as a genuine level spacing."""


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    energies: np.ndarray
    vectors: np.ndarray

    def residual(self, H) -> float:
        H = np.asarray(H)
        return float(np.max(np.abs(H @ self.vectors - self.vectors * self.energies)))

    def to_eigenbasis(self, M) -> np.ndarray:
        """U^dagger M U, broadcasting over leading axes."""
        U = self.vectors
        return U.conj().T @ M @ U

    def from_eigenbasis(self, M) -> np.ndarray:
        U = self.vectors
        return U @ M @ U.conj().T


@dataclass(frozen=True)
class DissipationSpec:
    gamma: float

    def __post_init__(self):
        if not (isinstance(self.gamma, (int, float)) and math.isfinite(self.gamma) and self.gamma > 0):
            raise NonPositiveGamma(f"Gamma must be finite and > 0, got {self.gamma!r}")

    @classmethod
    def coerce(cls, gamma) -> "DissipationSpec":
        return gamma if isinstance(gamma, DissipationSpec) else cls(float(gamma))


def default_eps_deg(energies) -> float:
    E = np.asarray(energies, dtype=float)
    radius = float(np.max(np.abs(E))) if E.size else 0.0
    return 1e-8 * max(1.0, radius)


def eigendecompose(H) -> EigenDecomposition:
    E, U = np.linalg.eigh(np.asarray(H, dtype=complex))
    return EigenDecomposition(E, U)


def _check_eps(energies, eps_deg: float) -> None:
    E = np.sort(np.asarray(energies, dtype=float))
    if E.size < 2:
        return
    gaps = np.diff(E)
    noise = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(E))))
    real_gaps = gaps[gaps > noise]
    if real_gaps.size and eps_deg >= real_gaps.min():
        warnings.warn(f"eps_deg={eps_deg:g} is not below the smallest level spacing "
                      f"{real_gaps.min():g}; distinct levels are being treated as degenerate",
                      DegenerateToleranceMisuse, stacklevel=3)


def apply_liouvillian_resolvent(M, energies, omega: float, gamma: float,
                                hbar: float = 1.0) -> np.ndarray:
    """(L_H - i omega + Gamma)^{-1} M for M given in the eigenbasis of H.

    Entrywise M_ab / ((i/hbar)(E_a - E_b) - i omega + Gamma).
    """
    gamma = DissipationSpec.coerce(gamma).gamma
    E = np.asarray(energies, dtype=float)
    denom = 1j * (E[:, None] - E[None, :]) / hbar - 1j * omega + gamma
    return np.asarray(M) / denom


def _resolve(model: FiniteModel, occ: OccupationSpec, eigen, eps_deg):
    if not occ.finite_temperature:
        raise ZeroTemperatureUnsupported("the Kubo formula needs finite beta")
    eigen = eigen if eigen is not None else eigendecompose(model.H)
    E = eigen.energies
    mu = occ.resolve_mu(E, model.volume)
    if eps_deg is None:
        eps_deg = default_eps_deg(E)
    else:
        _check_eps(E, eps_deg)
    return eigen, mu, float(eps_deg)


def gradient_fermi(model: FiniteModel, occ: OccupationSpec, eigen: Optional[EigenDecomposition] = None,
                   eps_deg: Optional[float] = None, basis: str = "site") -> np.ndarray:
    """d_m Phi(H) for every direction m, shape (d, n, n).

    In the eigenbasis the entries are DeltaPhi_ab <a|d_m H|b>. ``basis``
    selects the representation of the returned matrices ("site" or "eigen").
    """
    eigen, mu, eps_deg = _resolve(model, occ, eigen, eps_deg)
    E = eigen.energies
    dd, _ = divided_difference(E[:, None], E[None, :], occ.beta, mu, eps_deg)
    D = eigen.to_eigenbasis(model.dH)
    G = dd[None] * D
    if basis == "eigen":
        return G
    if basis != "site":
        raise ValueError("basis must be 'site' or 'eigen'")
    return eigen.from_eigenbasis(G)


def conductivity_trace(model: FiniteModel, occ: OccupationSpec, gamma, omegas,
                       constants: PhysicalConstants = REDUCED, eps_deg: Optional[float] = None,
                       eigen: Optional[EigenDecomposition] = None) -> ConductivityResult:
    """Kubo conductivity tensor of a finite model by eigenbasis summation.

    Parameters
    ----------
    model : FiniteModel
    occ : OccupationSpec
        Finite beta required.
    gamma : float or DissipationSpec
        Scattering rate, strictly positive.
    omegas : FrequencyGrid or sequence of float
    constants : PhysicalConstants
    eps_deg : float, optional
        Degeneracy threshold for the divided difference. Defaults to
        1e-8 max(1, spectral radius).
    """
    gamma = DissipationSpec.coerce(gamma).gamma
    grid = FrequencyGrid.coerce(omegas)
    eigen, mu, eps_deg = _resolve(model, occ, eigen, eps_deg)
    E = eigen.energies
    d = model.dim
    hb, e = constants.hbar, constants.e_charge
    D = eigen.to_eigenbasis(model.dH)  # (d, n, n)
    dd, _ = divided_difference(E[:, None], E[None, :], occ.beta, mu, eps_deg)
    # w[a, b, l, m] = D^l_ab DeltaPhi_ab D^m_ba
    Dt = np.transpose(D, (0, 2, 1))
    w = np.einsum("lab,mab->ablm", D, Dt) * dd[:, :, None, None]
    x = (E[None, :] - E[:, None]) / hb
    w = w.reshape(-1, d * d)
    x = x.reshape(-1)
    keep = np.any(w != 0, axis=1)
    total = parallel_resolvent_sum(x[keep], w[keep], grid.omegas, gamma)
    sigma = -(e ** 2) / (hb ** 2 * model.volume) * total.reshape(-1, d, d)
    meta = {
        "model": model.name,
        "dim_hilbert": model.dim_hilbert,
        "volume": model.volume,
        "gamma": gamma,
        **occ.as_dict(),
        "mu_resolved": mu,
        "eps_deg": eps_deg,
        "constants": constants.as_dict(),
    }
    if model.translation is not None:
        meta["L"] = model.translation.L
    return ConductivityResult(grid.omegas, sigma, "trace", meta)
