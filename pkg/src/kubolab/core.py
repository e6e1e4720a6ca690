"""Shared numeric scaffolding: units, lattices, k-grids, frequency grids, results.

Everything here is immutable after construction. Reduced units
(hbar = e = m = 1) are the default, but every formula in the package carries
the constants explicitly so SI values can be injected.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "KuboError",
    "SingularLattice",
    "InvalidResolution",
    "InvalidFrequencyGrid",
    "NonPositiveGamma",
    "NoConvergence",
    "PhysicalConstants",
    "Lattice",
    "FrequencyGrid",
    "ConductivityResult",
    "reciprocal_of",
    "k_grid",
    "k_grid_indices",
    "parse_sweep",
    "worker_count",
    "METHODS",
]

METHODS = ("trace", "bloch", "graphene_closed_form", "dynamics_quantum",
           "dynamics_classical")

_COND_LIMIT = 1e12


class KuboError(Exception):
    """Base class for all errors raised by kubolab."""


class SingularLattice(KuboError):
    pass


class InvalidResolution(KuboError):
    pass


class InvalidFrequencyGrid(KuboError):
    pass


class NonPositiveGamma(KuboError):
    pass


class NoConvergence(KuboError):
    pass


@dataclass(frozen=True)
class PhysicalConstants:
    """Unit system: hbar (action), e_charge (charge, e > 0) and particle mass."""

    hbar: float = 1.0
    e_charge: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "e_charge", "mass"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    def as_dict(self) -> dict:
        return {"hbar": self.hbar, "e_charge": self.e_charge, "mass": self.mass}


REDUCED = PhysicalConstants()


@dataclass(frozen=True, eq=False)
class Lattice:
    """Bravais lattice. Columns of ``A`` are the primitive vectors, ``B = 2 pi A^-T``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A.setflags(write=False)
        self.B.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.A)))

    @property
    def bz_volume(self) -> float:
        return float(abs(np.linalg.det(self.B)))

    def cartesian(self, integer_coords) -> np.ndarray:
        """Map integer lattice coordinates (..., d) to Cartesian vectors."""
        return np.asarray(integer_coords, dtype=float) @ self.A.T


def reciprocal_of(A) -> Lattice:
    """Build a :class:`Lattice` from real-space primitive vectors (columns of A).

    Raises
    ------
    SingularLattice
        If A is (numerically) singular.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SingularLattice(f"lattice matrix must be square, got shape {A.shape}")
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    det = float(np.linalg.det(A)) if A.size else 0.0
    if scale == 0.0 or abs(det) <= 1e-12 * scale ** A.shape[0]:
        raise SingularLattice(f"|det A| = {abs(det):.3g} is too small")
    if np.linalg.cond(A) > _COND_LIMIT:
        raise SingularLattice("lattice matrix is ill-conditioned")
    B = 2.0 * np.pi * np.linalg.inv(A).T
    return Lattice(A=A, B=B)


def _check_resolution(L) -> int:
    if isinstance(L, bool) or int(L) != L:
        raise InvalidResolution(f"grid size must be an integer, got {L!r}")
    L = int(L)
    if L < 2 or L % 2:
        raise InvalidResolution(f"grid size must be even and >= 2, got {L}")
    return L


def k_grid_indices(dim: int, L: int) -> np.ndarray:
    """Integer indices n in {-L/2, ..., L/2-1}^d, lexicographic order, shape (L^d, d)."""
    L = _check_resolution(L)
    axis = range(-L // 2, L // 2)
    return np.array(list(itertools.product(axis, repeat=dim)), dtype=np.int64).reshape(-1, dim)


def k_grid(lattice: Lattice, L: int) -> np.ndarray:
    """Discretized Brillouin zone {B n / L}; returns an (L^d, d) array.

    Ordering is lexicographic in the integer index n and never changes.
    """
    n = k_grid_indices(lattice.dim, L)
    return (n @ lattice.B.T) / L


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    omegas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise InvalidFrequencyGrid("frequencies must be finite")
        if w.size > 1 and not np.all(np.diff(w) > 0):
            raise InvalidFrequencyGrid("frequencies must be strictly increasing")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    def __len__(self):
        return self.omegas.size

    def __iter__(self):
        return iter(self.omegas)

    @classmethod
    def coerce(cls, omegas) -> "FrequencyGrid":
        if isinstance(omegas, FrequencyGrid):
            return omegas
        return cls(np.atleast_1d(np.asarray(omegas, dtype=float)))


def parse_sweep(text: str) -> FrequencyGrid:
    """Parse ``min:max:count`` (endpoints inclusive) or a comma separated list."""
    text = text.strip()
    if not text:
        return FrequencyGrid(np.zeros(0))
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidFrequencyGrid(f"expected min:max:count, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise InvalidFrequencyGrid("count must be >= 1")
        if count == 1:
            if lo != hi:
                raise InvalidFrequencyGrid("count 1 requires min == max")
            return FrequencyGrid(np.array([lo]))
        return FrequencyGrid(np.linspace(lo, hi, count))
    return FrequencyGrid(np.array([float(v) for v in text.split(",")]))


@dataclass(frozen=True, eq=False)
class ConductivityResult:
    """Conductivity tensor sigma[w, l, m] on a frequency grid, plus provenance.

    ``parts`` optionally holds named components (e.g. ``drude``, ``regular``)
    with the same shape as ``sigma``.
    """

    omegas: np.ndarray
    sigma: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        sigma = np.asarray(self.sigma, dtype=complex)
        if sigma.ndim != 3 or sigma.shape[0] != np.size(self.omegas) or sigma.shape[1] != sigma.shape[2]:
            raise ValueError(f"sigma must have shape (n_omega, d, d), got {sigma.shape}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "omegas", np.asarray(self.omegas, dtype=float))

    @property
    def dim(self) -> int:
        return self.sigma.shape[1]

    def at(self, omega: float) -> np.ndarray:
        idx = np.flatnonzero(self.omegas == omega)
        if idx.size == 0:
            raise KeyError(omega)
        return self.sigma[idx[0]]

    def component(self, name: str) -> "ConductivityResult":
        return ConductivityResult(self.omegas, self.parts[name], self.method,
                                  dict(self.metadata, part=name))


def worker_count() -> int:
    """Worker cap from KUBO_THREADS (default: hardware parallelism)."""
    raw = os.environ.get("KUBO_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def jsonable(value: Any) -> Any:
    """Convert numpy containers/scalars to plain JSON types (recursively)."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def as_vector(values: Sequence[float] | float, dim: int, name: str = "vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if v.shape != (dim,):
        raise ValueError(f"{name} must have {dim} components, got shape {v.shape}")
    return v
