"""Equilibrium occupations and the density -> chemical potential solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import KuboError

__all__ = [
    "ZERO_TEMPERATURE",
    "OccupationSpec",
    "ZeroTemperatureUnsupported",
    "DensityOutOfRange",
    "fermi_dirac",
    "fermi_derivative",
    "divided_difference",
    "solve_mu",
    "density_of",
    "maxwellian",
]

#: Sentinel for T = 0 (beta = +inf).
ZERO_TEMPERATURE = math.inf

_BRACKET_PAD = 50.0
_MAX_BISECTIONS = 200


class ZeroTemperatureUnsupported(KuboError):
    pass


class DensityOutOfRange(KuboError):
    pass


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError(f"beta must be > 0 (or inf), got {beta}")
    return beta


@dataclass(frozen=True)
class OccupationSpec:
    """Temperature plus exactly one of chemical potential or particle density."""

    beta: float
    mu: Optional[float] = None
    density: Optional[float] = None

    def __post_init__(self):
        _check_beta(self.beta)
        if (self.mu is None) == (self.density is None):
            raise ValueError("give exactly one of mu or density")
        if self.density is not None and not self.density > 0:
            raise DensityOutOfRange(f"density must be > 0, got {self.density}")

    @property
    def finite_temperature(self) -> bool:
        return math.isfinite(self.beta)

    def resolve_mu(self, energies, volume: float, max_density: Optional[float] = None) -> float:
        """Chemical potential for this spec given a sampled spectrum.

        ``volume`` is the total volume represented by ``energies``
        (L^d |cell| for a k-grid sample).
        """
        if self.mu is not None:
            return float(self.mu)
        if max_density is not None and not self.density < max_density:
            raise DensityOutOfRange(
                f"density {self.density} must be below {max_density} for this model")
        return solve_mu(energies, self.density, self.beta, volume)

    def as_dict(self) -> dict:
        return {"beta": self.beta, "mu": self.mu, "density": self.density}


def fermi_dirac(E, beta: float, mu: float):
    """Fermi-Dirac occupation 1 / (exp(beta (E - mu)) + 1), overflow safe.

    ``beta = inf`` gives the zero-temperature step with value 1/2 at E = mu.
    """
    beta = _check_beta(beta)
    E = np.asarray(E, dtype=float)
    if math.isinf(beta):
        out = np.where(E < mu, 1.0, np.where(E > mu, 0.0, 0.5))
        return out if out.ndim else float(out)
    x = beta * (E - mu)
    # exp(-|x|) never overflows; pick the branch by sign.
    with np.errstate(under="ignore"):
        ex = np.exp(-np.abs(x))
    out = np.where(x > 0, ex / (1.0 + ex), 1.0 / (1.0 + ex))
    return out if out.ndim else float(out)


def fermi_derivative(E, beta: float, mu: float):
    """dPhi/dE = -beta Phi (1 - Phi); always <= 0."""
    beta = _check_beta(beta)
    if math.isinf(beta):
        raise ZeroTemperatureUnsupported("dPhi/dE is singular at T = 0")
    E = np.asarray(E, dtype=float)
    x = beta * (E - mu)
    with np.errstate(under="ignore"):
        ex = np.exp(-np.abs(x))
        # Phi (1 - Phi) = e^{-|x|} / (1 + e^{-|x|})^2, symmetric in x.
        out = -beta * ex / (1.0 + ex) ** 2
    return out if out.ndim else float(out)


def divided_difference(Ea, Eb, beta: float, mu: float, eps_deg: float):
    """(Phi(Eb) - Phi(Ea)) / (Eb - Ea), or dPhi/dE at Ea when |Eb - Ea| <= eps_deg.

    Broadcasts ``Ea`` against ``Eb``. The second return value is the boolean
    mask of pairs that took the derivative branch.
    """
    Ea = np.asarray(Ea, dtype=float)
    Eb = np.asarray(Eb, dtype=float)
    diff = Eb - Ea
    degenerate = np.abs(diff) <= eps_deg
    fa = fermi_dirac(Ea, beta, mu)
    fb = fermi_dirac(Eb, beta, mu)
    safe = np.where(degenerate, 1.0, diff)
    dd = np.where(degenerate, fermi_derivative(np.broadcast_to(Ea, diff.shape), beta, mu),
                  (fb - fa) / safe)
    return dd, degenerate


def density_of(energies, beta: float, mu: float, volume: float) -> float:
    return float(np.sum(fermi_dirac(np.asarray(energies, dtype=float).ravel(), beta, mu)) / volume)


def solve_mu(energies, target_density: float, beta: float, volume: float = 1.0,
             rtol: float = 1e-10) -> float:
    """Chemical potential reproducing ``target_density`` on a sampled spectrum.

    Bisection on the monotone counting function
    ``sum(Phi(E; beta, mu)) / volume`` bracketed by
    ``[min E - 50/beta, max E + 50/beta]``.

    Raises
    ------
    DensityOutOfRange
        Target not strictly inside the attainable range (0, n_states / volume).
    NoConvergence
        Tolerance not met within 200 bisection steps.
    """
    from .core import NoConvergence

    E = np.sort(np.asarray(energies, dtype=float).ravel())
    if E.size == 0:
        raise DensityOutOfRange("empty spectrum")
    beta = _check_beta(beta)
    max_density = E.size / volume
    if not (0.0 < target_density < max_density):
        raise DensityOutOfRange(
            f"density {target_density} outside attainable range (0, {max_density})")
    if math.isinf(beta):
        # Step occupations: place mu between the filled and the next level.
        n_fill = target_density * volume
        k = int(round(n_fill))
        if abs(n_fill - k) > rtol * max(n_fill, 1.0) or k == 0 or k == E.size:
            raise DensityOutOfRange("T = 0 density must fill an integer number of levels")
        return 0.5 * (E[k - 1] + E[k])
    pad = _BRACKET_PAD / beta
    lo, hi = E[0] - pad, E[-1] + pad
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        n_mid = density_of(E, beta, mid, volume)
        if abs(n_mid - target_density) <= rtol * target_density:
            return mid
        if n_mid < target_density:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0):
            break
    mid = 0.5 * (lo + hi)
    if abs(density_of(E, beta, mid, volume) - target_density) <= rtol * target_density:
        return mid
    raise NoConvergence("chemical potential bisection did not converge")


def maxwellian(p, beta: float, density: float, mass: float = 1.0):
    """Maxwell-Boltzmann phase-space density N (beta / 2 pi m)^{d/2} exp(-beta |p|^2 / 2m).

    ``p`` has shape (..., d); the last axis is the momentum vector.
    """
    beta = _check_beta(beta)
    if math.isinf(beta):
        raise ZeroTemperatureUnsupported("the Maxwellian needs finite temperature")
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    d = p.shape[-1]
    p2 = np.sum(p * p, axis=-1)
    out = density * (beta / (2 * np.pi * mass)) ** (d / 2) * np.exp(-beta * p2 / (2 * mass))
    return out if np.ndim(out) else float(out)
