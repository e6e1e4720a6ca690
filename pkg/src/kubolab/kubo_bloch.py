"""Brillouin-zone resolved conductivity for Bloch models.

Finite-L sums over the discretized zone, the Drude/interband split, the
L-doubling convergence loop and the three effective-mass tensor forms.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (REDUCED, ConductivityResult, FrequencyGrid, KuboError, NoConvergence,
                   PhysicalConstants, _check_resolution, k_grid, worker_count)
from .fermi import OccupationSpec, ZeroTemperatureUnsupported, divided_difference, fermi_derivative, fermi_dirac
from .kernels import parallel_resolvent_sum
from .kubo_trace import DissipationSpec
from .models import BlochModel

__all__ = [
    "NearBandCrossing",
    "SimplicityViolated",
    "BandData",
    "EffectiveMassTensor",
    "band_data",
    "conductivity_bloch",
    "drude_part",
    "regular_part",
    "effective_mass",
    "EFFECTIVE_MASS_FORMS",
]

EFFECTIVE_MASS_FORMS = ("matrix_element", "band_velocity", "band_curvature")
_K_CHUNK = 4096


class NearBandCrossing(UserWarning):
    """Minimum interband gap on the grid is tiny compared with the bandwidth."""


class SimplicityViolated(KuboError):
    """A band-resolved form was requested for a model with degenerate bands."""


@dataclass(frozen=True, eq=False)
class BandData:
    """Eigen data on a k-grid.

    Attributes
    ----------
    L : int
    ks : (K, d) k-points in lexicographic grid order
    energies : (K, N) ascending per k
    vectors : (K, N, N) eigenvectors as columns
    velocity : (K, d, N, N) matrices chi^dagger (dH/dk_l) chi
    """

    L: int
    ks: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    velocity: np.ndarray

    @property
    def n_k(self) -> int:
        return self.ks.shape[0]

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]


def _bands_chunk(model: BlochModel, ks: np.ndarray):
    H = model.h_batch(ks)
    E, U = np.linalg.eigh(H)
    dH = model.dh_batch(ks)
    Uh = np.conj(np.swapaxes(U, -1, -2))
    V = Uh[:, None] @ dH @ U[:, None]
    return E, U, V


def band_data(model: BlochModel, L: int) -> BandData:
    """Diagonalise H(k) on the L^d grid; chunks are fixed, merged in grid order."""
    L = _check_resolution(L)
    ks = k_grid(model.lattice, L)
    chunks = [ks[s:s + _K_CHUNK] for s in range(0, ks.shape[0], _K_CHUNK)]
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _bands_chunk(model, c), chunks))
    else:
        parts = [_bands_chunk(model, c) for c in chunks]
    E = np.concatenate([p[0] for p in parts])
    U = np.concatenate([p[1] for p in parts])
    V = np.concatenate([p[2] for p in parts])
    return BandData(L, ks, E, U, V)


def _default_eps(E) -> float:
    return 1e-8 * max(1.0, float(np.max(np.abs(E))) if E.size else 0.0)


def _warn_crossings(E: np.ndarray) -> Optional[float]:
    if E.shape[1] < 2:
        return None
    width = float(E.max() - E.min())
    gap = float(np.min(np.diff(E, axis=1)))
    if width > 0 and gap < 1e-3 * width:
        warnings.warn(f"minimum interband gap {gap:.3g} on the grid is below 1e-3 of the "
                      f"bandwidth {width:.3g}", NearBandCrossing, stacklevel=3)
    return gap


def _finite_L(model: BlochModel, occ: OccupationSpec, gamma: float, omegas: np.ndarray, L: int,
              constants: PhysicalConstants, eps_deg: Optional[float], bands: Optional[BandData]):
    bands = bands if bands is not None and bands.L == L else band_data(model, L)
    E = bands.energies
    d = model.dim
    volume = bands.n_k * model.cell_volume
    mu = occ.resolve_mu(E, volume, max_density=model.n_bands / model.cell_volume
                        if occ.density is not None else None)
    eps = _default_eps(E) if eps_deg is None else float(eps_deg)
    min_gap = _warn_crossings(E)
    # pairs (n, n') per k: w = V^l_{nn'} V^m_{n'n} DeltaPhi, x = (E_n' - E_n)/hbar
    En = E[:, :, None]
    Enp = E[:, None, :]
    dd, degenerate = divided_difference(En, Enp, occ.beta, mu, eps)
    V = bands.velocity
    Vt = np.swapaxes(V, -1, -2)
    w = np.einsum("klab,kmab->kablm", V, Vt) * dd[..., None, None]
    x = np.broadcast_to((Enp - En) / constants.hbar, dd.shape)
    w = w.reshape(-1, d * d)
    x = x.reshape(-1)
    deg = degenerate.reshape(-1)
    nonzero = np.any(w != 0, axis=1)
    scale = -(constants.e_charge ** 2) / (constants.hbar ** 2 * volume)
    drude = scale * parallel_resolvent_sum(x[deg & nonzero], w[deg & nonzero], omegas, gamma)
    regular = scale * parallel_resolvent_sum(x[~deg & nonzero], w[~deg & nonzero], omegas, gamma)
    shape = (omegas.size, d, d)
    drude, regular = drude.reshape(shape), regular.reshape(shape)
    info = {"L": L, "n_k": bands.n_k, "mu_resolved": mu, "eps_deg": eps, "min_interband_gap": min_gap}
    return drude + regular, {"drude": drude, "regular": regular}, info


def _max_rel_change(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def _converge(evaluate: Callable[[int], tuple], L0: int, rtol: float, max_refinements: int):
    L = _check_resolution(L0)
    prev = evaluate(L)
    history = [L]
    for _ in range(max_refinements):
        L *= 2
        cur = evaluate(L)
        history.append(L)
        change = _max_rel_change(cur[0], prev[0])
        if change < rtol:
            return cur, history, change
        prev = cur
    raise NoConvergence(f"grid doubling up to L={L} did not reach rtol={rtol:g}")


def _default_L0(dim: int) -> int:
    return 32 if dim == 1 else 8


def conductivity_bloch(model: BlochModel, occ: OccupationSpec, gamma, omegas, L: Optional[int] = None,
                       constants: PhysicalConstants = REDUCED, eps_deg: Optional[float] = None,
                       rtol: float = 1e-6, max_refinements: int = 6,
                       bands: Optional[BandData] = None) -> ConductivityResult:
    """Conductivity of a Bloch model on the discretised Brillouin zone.

    Parameters
    ----------
    L : int or None
        Grid resolution. ``None`` doubles L from a small start until two
        successive grids agree to ``rtol`` (``NoConvergence`` otherwise).
    bands : BandData, optional
        Precomputed band data for the same model and L.

    Returns
    -------
    ConductivityResult
        ``parts`` holds the ``drude`` and ``regular`` components; their sum is
        ``sigma``.
    """
    gamma = DissipationSpec.coerce(gamma).gamma
    if not occ.finite_temperature:
        raise ZeroTemperatureUnsupported("the Kubo formula needs finite beta")
    grid = FrequencyGrid.coerce(omegas)

    def evaluate(Lv):
        return _finite_L(model, occ, gamma, grid.omegas, Lv, constants, eps_deg, bands)

    meta = {"model": model.name, "n_bands": model.n_bands, "gamma": gamma, **occ.as_dict(),
            "constants": constants.as_dict()}
    if L is None:
        (sigma, parts, info), history, change = _converge(evaluate, _default_L0(model.dim),
                                                          rtol, max_refinements)
        meta.update(info, refinements=history, rtol=rtol, last_change=change)
    else:
        sigma, parts, info = evaluate(L)
        meta.update(info)
    meta.update(model.info)
    return ConductivityResult(grid.omegas, sigma, "bloch", meta, parts)


def drude_part(model: BlochModel, occ: OccupationSpec, gamma, omegas, L: Optional[int] = None,
               **kwargs) -> ConductivityResult:
    """Intraband (and degenerate-pair) contribution, proportional to 1/(Gamma - i omega)."""
    return conductivity_bloch(model, occ, gamma, omegas, L, **kwargs).component("drude")


def regular_part(model: BlochModel, occ: OccupationSpec, gamma, omegas, L: Optional[int] = None,
                 **kwargs) -> ConductivityResult:
    """Interband contribution (pairs separated by more than eps_deg)."""
    return conductivity_bloch(model, occ, gamma, omegas, L, **kwargs).component("regular")


@dataclass(frozen=True, eq=False)
class EffectiveMassTensor:
    inv_m: np.ndarray
    form: str
    density: float
    metadata: dict

    @property
    def symmetric(self) -> bool:
        return bool(np.max(np.abs(self.inv_m - self.inv_m.T)) <= 1e-9 * max(1.0, np.max(np.abs(self.inv_m))))


def _fd_weights():
    first = {2: -1 / 12, 1: 8 / 12, -1: -8 / 12, -2: 1 / 12}
    second = {2: -1 / 12, 1: 16 / 12, 0: -30 / 12, -1: 16 / 12, -2: -1 / 12}
    return first, second


def _band_hessian(E_grid: np.ndarray, lattice, L: int) -> np.ndarray:
    """Hessian d^2 E / dk_l dk_m from fourth-order central differences on the grid.

    ``E_grid`` has shape (L,)*d + (N,). Differences are taken in integer grid
    coordinates u (k = B u / L) and mapped with M = L B^{-1}.
    """
    d = lattice.dim
    first, second = _fd_weights()
    Hu = np.zeros(E_grid.shape + (d, d))
    for i in range(d):
        acc = sum(c * np.roll(E_grid, -s, axis=i) for s, c in second.items())
        Hu[..., i, i] = acc
        for j in range(i + 1, d):
            di = sum(c * np.roll(E_grid, -s, axis=i) for s, c in first.items())
            dij = sum(c * np.roll(di, -s, axis=j) for s, c in first.items())
            Hu[..., i, j] = Hu[..., j, i] = dij
    M = L * np.linalg.inv(lattice.B)
    return np.einsum("il,...ij,jm->...lm", M, Hu, M)


def effective_mass(model: BlochModel, occ: OccupationSpec, L: Optional[int] = None,
                   form: str = "matrix_element", constants: PhysicalConstants = REDUCED,
                   eps_deg: Optional[float] = None, rtol: float = 1e-8,
                   max_refinements: int = 6) -> EffectiveMassTensor:
    """Inverse effective-mass tensor (1/m_eff)_lm in one of three equivalent forms.

    ``matrix_element`` uses velocity matrix elements over degenerate pairs,
    ``band_velocity`` the band gradients, ``band_curvature`` the band Hessian
    weighted by the occupation. The last two need simple bands.
    """
    if form not in EFFECTIVE_MASS_FORMS:
        raise ValueError(f"form must be one of {EFFECTIVE_MASS_FORMS}")
    if not occ.finite_temperature:
        raise ZeroTemperatureUnsupported("effective mass needs finite beta")

    def evaluate(Lv):
        bands = band_data(model, Lv)
        E = bands.energies
        volume = bands.n_k * model.cell_volume
        mu = occ.resolve_mu(E, volume)
        eps = _default_eps(E) if eps_deg is None else float(eps_deg)
        density = float(np.sum(fermi_dirac(E, occ.beta, mu))) / volume
        if density <= 0:
            raise KuboError("effective mass is undefined at zero density")
        hb2 = constants.hbar ** 2
        if form != "matrix_element" and E.shape[1] > 1:
            gap = float(np.min(np.diff(E, axis=1)))
            if gap <= 10 * eps:
                raise SimplicityViolated(f"bands touch on the grid (min gap {gap:.3g})")
        V = bands.velocity
        if form == "matrix_element":
            _, degenerate = divided_difference(E[:, :, None], E[:, None, :], occ.beta, mu, eps)
            fp = fermi_derivative(E, occ.beta, mu)[:, :, None] * degenerate
            Vt = np.swapaxes(V, -1, -2)
            inv_m = -np.einsum("kab,klab,kmab->lm", fp, V, Vt).real / (hb2 * density * volume)
        elif form == "band_velocity":
            v = np.real(np.diagonal(V, axis1=-2, axis2=-1))  # (K, d, N)
            fp = fermi_derivative(E, occ.beta, mu)
            inv_m = -np.einsum("kn,kln,kmn->lm", fp, v, v) / (hb2 * density * volume)
        else:
            shape = (Lv,) * model.dim + (E.shape[1],)
            hess = _band_hessian(E.reshape(shape), model.lattice, Lv).reshape(E.shape + (model.dim,) * 2)
            f = fermi_dirac(E, occ.beta, mu)
            inv_m = np.einsum("kn,knlm->lm", f, hess) / (hb2 * density * volume)
        info = {"L": Lv, "mu_resolved": mu, "eps_deg": eps}
        return inv_m, density, info

    if L is None:
        (inv_m, density, info), history, _ = _converge(evaluate, _default_L0(model.dim) * 2,
                                                       rtol, max_refinements)
        info["refinements"] = history
    else:
        inv_m, density, info = evaluate(L)
    return EffectiveMassTensor(np.asarray(inv_m, dtype=float), form, density,
                               dict(info, model=model.name, **occ.as_dict()))
