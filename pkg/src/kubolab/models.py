"""Hamiltonian representations and the shipped model zoo.

Two views of a model are used throughout:

* :class:`FiniteModel` -- a Hamiltonian on a finite Hilbert space together
  with the derivation data (``dH[l]`` and, when available, the displacement
  matrices ``D[l]`` with ``grad_l A = i D[l] * A`` entrywise).
* :class:`BlochModel` -- a family ``k -> H(k)`` with analytic ``dH/dk``.

Torus models use the hopping-displacement convention: the derivation of an
operator multiplies its ``(R, R')`` entry by ``i (R' - R)`` with the
minimal-image cell displacement. A displacement component of exactly L/2
is split equally between the two images, which zeroes it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import (REDUCED, KuboError, Lattice, PhysicalConstants, as_vector,
                   k_grid_indices, reciprocal_of)
from .fermi import OccupationSpec, fermi_dirac

__all__ = [
    "NonHermitianInput",
    "ParseError",
    "EmptyBasis",
    "TranslationInfo",
    "FiniteModel",
    "BlochModel",
    "TightBinding",
    "build_free_gas",
    "free_gas_cutoff",
    "build_chain",
    "ring",
    "dimerized_chain",
    "build_planewave_bloch",
    "load_tight_binding",
    "equilibrium_current",
]

HERMITIAN_TOL = 1e-12
CONVENTIONS = ("cell", "atomic")


class NonHermitianInput(KuboError):
    pass


class EmptyBasis(KuboError):
    pass


class ParseError(KuboError):
    def __init__(self, message: str, *, line: Optional[int] = None, field: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


def _check_hermitian(H: np.ndarray, what: str = "Hamiltonian") -> None:
    scale = max(1.0, float(np.max(np.abs(H))) if H.size else 0.0)
    if H.size and np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL * scale:
        raise NonHermitianInput(f"{what} is not Hermitian")


@dataclass(frozen=True)
class TranslationInfo:
    """Cell structure of a torus model: L^d cells of n_orb orbitals each.

    Basis index = cell_index * n_orb + orbital, cells in lexicographic order of
    their integer coordinates in {-L/2, ..., L/2 - 1}^d.
    """

    lattice: Lattice
    L: int
    n_orb: int

    @property
    def n_cells(self) -> int:
        return self.L ** self.lattice.dim

    def cells(self) -> np.ndarray:
        return k_grid_indices(self.lattice.dim, self.L)

    def cell_index(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.int64)
        shifted = np.mod(m + self.L // 2, self.L)
        idx = np.zeros(shifted.shape[:-1], dtype=np.int64)
        for i in range(shifted.shape[-1]):
            idx = idx * self.L + shifted[..., i]
        return idx

    def minimal_image(self, m) -> np.ndarray:
        """Wrap integer displacements into [-L/2, L/2); tie components (L/2) become 0."""
        m = np.asarray(m, dtype=np.int64)
        w = np.mod(m + self.L // 2, self.L) - self.L // 2
        return np.where(w == -self.L // 2, 0, w)


@dataclass(frozen=True, eq=False)
class BlochModel:
    """Bloch Hamiltonian family over the Brillouin zone of ``lattice``.

    ``h_batch`` maps (K, d) k-points to (K, N, N) matrices and ``dh_batch``
    to (K, d, N, N) derivative matrices.
    """

    lattice: Lattice
    n_bands: int
    h_batch: Callable[[np.ndarray], np.ndarray]
    dh_batch: Callable[[np.ndarray], np.ndarray]
    name: str = "bloch"
    real_hamiltonian: bool = False
    periodic_in_k: bool = True
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def cell_volume(self) -> float:
        return self.lattice.cell_volume

    def h_of_k(self, k) -> np.ndarray:
        k = as_vector(k, self.dim, "k")
        return self.h_batch(k[None, :])[0]

    def dh_dk(self, k, l: Optional[int] = None) -> np.ndarray:
        k = as_vector(k, self.dim, "k")
        out = self.dh_batch(k[None, :])[0]
        return out if l is None else out[l]


@dataclass(frozen=True, eq=False)
class FiniteModel:
    """Hermitian Hamiltonian on a finite Hilbert space with derivation data.

    Attributes
    ----------
    H : (n, n) complex array
    dH : (d, n, n) complex array, ``dH[l] = d_l H``
    volume : float
        Volume |Omega| of the represented region (trace-density normaliser).
    displacements : (d, n, n) real array or None
        ``D[l]`` with ``d_l A = i D[l] * A`` entrywise. ``None`` for models
        (e.g. the free gas in its Fourier basis) with no finite position data.
    translation : TranslationInfo or None
        Present for periodic lattice models built on a torus.
    bloch : BlochModel or None
        Companion Bloch family for torus models.
    """

    H: np.ndarray
    dH: np.ndarray
    volume: float
    displacements: Optional[np.ndarray] = None
    periodic: bool = False
    translation: Optional[TranslationInfo] = None
    bloch: Optional[BlochModel] = None
    name: str = "finite"

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        dH = np.asarray(self.dH, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        if dH.ndim != 3 or dH.shape[1:] != H.shape:
            raise ValueError("dH must have shape (d, n, n)")
        _check_hermitian(H)
        if not self.volume > 0:
            raise ValueError("volume must be > 0")
        for arr in (H, dH):
            arr.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "dH", dH)
        if self.displacements is not None:
            D = np.asarray(self.displacements, dtype=float)
            if D.shape != dH.shape:
                raise ValueError("displacements must have the same shape as dH")
            D.setflags(write=False)
            object.__setattr__(self, "displacements", D)

    @property
    def dim(self) -> int:
        return self.dH.shape[0]

    @property
    def dim_hilbert(self) -> int:
        return self.H.shape[0]

    @property
    def real_hamiltonian(self) -> bool:
        return bool(np.all(self.H.imag == 0))

    @classmethod
    def from_positions(cls, H, positions, volume: Optional[float] = None, name: str = "finite"):
        """Non-periodic model with explicit basis-state positions (n, d)."""
        H = np.asarray(H, dtype=complex)
        X = np.asarray(positions, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != H.shape[0]:
            raise ValueError("need one position per basis state")
        D = np.stack([X[None, :, l] - X[:, None, l] for l in range(X.shape[1])])
        if volume is None:
            extent = np.ptp(X, axis=0)
            volume = float(np.prod(np.where(extent > 0, extent, 1.0)))
        return cls(H=H, dH=1j * D * H[None], volume=volume, displacements=D,
                   periodic=False, name=name)


class TightBinding:
    """Periodic tight-binding model ``H_{0R}`` blocks on a Bravais lattice.

    ``hoppings`` maps integer cell displacements R (tuples) to N x N blocks
    with entry [a, b] = <0, a| H |R, b>. Hermiticity ``H_{-R} = H_R^dagger``
    is validated.
    """

    def __init__(self, lattice: Lattice, n_orb: int, hoppings: Mapping, *,
                 labels: Optional[Sequence[str]] = None, taus=None, name: str = "tight-binding"):
        self.lattice = lattice
        self.n_orb = int(n_orb)
        if self.n_orb < 1:
            raise ValueError("need at least one orbital")
        d = lattice.dim
        blocks: dict[tuple, np.ndarray] = {}
        for R, block in hoppings.items():
            key = tuple(int(r) for r in np.atleast_1d(R))
            if len(key) != d:
                raise ValueError(f"displacement {R!r} is not {d}-dimensional")
            b = np.array(block, dtype=complex)
            if b.ndim == 0:
                b = b.reshape(1, 1)
            if b.shape != (self.n_orb, self.n_orb):
                raise ValueError(f"hopping block for R={key} must be {self.n_orb}x{self.n_orb}")
            blocks[key] = blocks.get(key, 0) + b
        self.hoppings = {R: b for R, b in sorted(blocks.items()) if np.any(b != 0)}
        for R, b in self.hoppings.items():
            partner = self.hoppings.get(tuple(-r for r in R), np.zeros_like(b))
            scale = max(1.0, float(np.max(np.abs(b))))
            if np.max(np.abs(partner - b.conj().T)) > HERMITIAN_TOL * scale:
                raise NonHermitianInput(f"H_(-R) != H_R^dagger for R = {R}")
        self.labels = list(labels) if labels is not None else [str(i) for i in range(self.n_orb)]
        self.taus = (np.zeros((self.n_orb, d)) if taus is None
                     else np.asarray(taus, dtype=float).reshape(self.n_orb, d))
        self.name = name

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def real_hoppings(self) -> bool:
        return all(np.all(b.imag == 0) for b in self.hoppings.values())

    def _arrays(self):
        Rs = np.array(list(self.hoppings.keys()), dtype=np.int64).reshape(-1, self.dim)
        blocks = (np.array(list(self.hoppings.values())) if self.hoppings
                  else np.zeros((0, self.n_orb, self.n_orb), dtype=complex))
        return Rs, self.lattice.cartesian(Rs), blocks

    def _displacements(self, Rcart: np.ndarray, convention: str) -> np.ndarray:
        """Hopping displacement per (R, a, b): shape (nR, N, N, d)."""
        if convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        disp = np.broadcast_to(Rcart[:, None, None, :],
                               (Rcart.shape[0], self.n_orb, self.n_orb, self.dim)).copy()
        if convention == "atomic":
            disp += self.taus[None, None, :, :] - self.taus[None, :, None, :]
        return disp

    def bloch(self, convention: str = "cell") -> BlochModel:
        """H(k) = sum_R H_{0R} exp(i k.R).

        ``convention="atomic"`` uses the orbital positions, i.e. phases
        exp(i k.(R + tau_b - tau_a)); spectra are unchanged, velocity matrix
        elements between orbitals at different positions are not.
        """
        _, Rcart, blocks = self._arrays()
        disp = self._displacements(Rcart, convention)
        N = self.n_orb

        def h_batch(ks):
            ks = np.atleast_2d(np.asarray(ks, dtype=float))
            if blocks.shape[0] == 0:
                return np.zeros((ks.shape[0], N, N), dtype=complex)
            phase = np.exp(1j * np.einsum("kl,rabl->krab", ks, disp))
            return np.einsum("krab,rab->kab", phase, blocks)

        def dh_batch(ks):
            ks = np.atleast_2d(np.asarray(ks, dtype=float))
            if blocks.shape[0] == 0:
                return np.zeros((ks.shape[0], self.dim, N, N), dtype=complex)
            phase = np.exp(1j * np.einsum("kl,rabl->krab", ks, disp))
            return np.einsum("krab,rabl,rab->klab", 1j * phase, disp, blocks)

        return BlochModel(lattice=self.lattice, n_bands=N, h_batch=h_batch, dh_batch=dh_batch,
                          name=self.name, real_hamiltonian=self.real_hoppings,
                          info={"convention": convention})

    def finite(self, L: int, convention: str = "cell") -> FiniteModel:
        """Torus restriction to L^d cells (Hilbert dimension N L^d)."""
        if convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        info = TranslationInfo(self.lattice, int(L), self.n_orb)
        k_grid_indices(self.dim, L)  # validates L
        cells = info.cells()
        n_cells, N = cells.shape[0], self.n_orb
        dim = n_cells * N
        H = np.zeros((dim, dim), dtype=complex)
        rows_cell = info.cell_index(cells)
        for R, block in self.hoppings.items():
            cols_cell = info.cell_index(cells + np.asarray(R))
            for a in range(N):
                for b in range(N):
                    if block[a, b] != 0:
                        np.add.at(H, (rows_cell * N + a, cols_cell * N + b), block[a, b])
        # minimal-image cell displacement between every pair of basis states
        cell_of = np.repeat(cells, N, axis=0)
        diff = cell_of[None, :, :] - cell_of[:, None, :]
        mi = info.minimal_image(diff)
        D = np.moveaxis(mi @ self.lattice.A.T, -1, 0).astype(float)
        if convention == "atomic":
            tau = np.tile(self.taus, (n_cells, 1))
            D += np.moveaxis(tau[None, :, :] - tau[:, None, :], -1, 0)
        return FiniteModel(H=H, dH=1j * D * H[None], volume=n_cells * self.lattice.cell_volume,
                           displacements=D, periodic=True, translation=info,
                           bloch=self.bloch(convention), name=f"{self.name}[L={L}]")

    def to_json_dict(self) -> dict:
        hops = []
        for R, b in self.hoppings.items():
            for i in range(self.n_orb):
                for j in range(self.n_orb):
                    if b[i, j] != 0:
                        hops.append({"R": list(R), "from": i, "to": j,
                                     "value": [float(b[i, j].real), float(b[i, j].imag)]})
        return {
            "dim": self.dim,
            "lattice_A": [list(map(float, row)) for row in self.lattice.A.T],
            "orbitals": [{"label": lab, "tau": list(map(float, tau))}
                         for lab, tau in zip(self.labels, self.taus)],
            "hoppings": hops,
        }


def build_chain(n_cells: int, hoppings: Mapping, n_orbitals: int = 1, a: float = 1.0,
                name: str = "chain"):
    """1D periodic chain; returns the torus FiniteModel and its BlochModel.

    ``hoppings`` maps an integer cell displacement to an N x N block (or a
    scalar when N = 1).
    """
    tb = TightBinding(reciprocal_of([[a]]), n_orbitals, {(int(R),): v for R, v in hoppings.items()},
                      name=name)
    fm = tb.finite(n_cells)
    return fm, fm.bloch


def ring(n_cells: int, t: float = 1.0, phi: float = 0.0, a: float = 1.0):
    """One-orbital ring with H_{0,+a} = t exp(i phi); H(k) = 2 t cos(k a + phi)."""
    hop = t * np.exp(1j * phi) if phi else t
    return build_chain(n_cells, {1: hop, -1: np.conj(hop)}, 1, a, name="ring")


def dimerized_chain(n_cells: int, t1: float = 1.0, t2: float = 0.5, a: float = 1.0):
    """Two-orbital chain, H(k) = [[0, t1 + t2 e^{-ika}], [c.c., 0]]."""
    hops = {0: [[0.0, t1], [t1, 0.0]], -1: [[0.0, t2], [0.0, 0.0]], 1: [[0.0, 0.0], [t2, 0.0]]}
    return build_chain(n_cells, hops, 2, a, name="dimerized-chain")


def free_gas_cutoff(L: float, beta: float, mu: float, constants: PhysicalConstants = REDUCED,
                    tail: float = 40.0) -> int:
    """Smallest Fourier index cutoff keeping every state with beta (E - mu) < tail."""
    e_max = max(mu, 0.0) + tail / beta
    k_max = math.sqrt(2 * constants.mass * e_max) / constants.hbar
    return max(1, int(math.ceil(k_max * L / (2 * math.pi))))


def build_free_gas(L: float, d: int = 1, cutoff: int = 1,
                   constants: PhysicalConstants = REDUCED) -> FiniteModel:
    """Free particles on a torus of side L, in the Fourier basis |n_i| <= cutoff."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if not L > 0:
        raise ValueError("box size must be > 0")
    n = np.array(np.meshgrid(*([np.arange(-cutoff, cutoff + 1)] * d), indexing="ij"))
    n = n.reshape(d, -1).T
    k = 2 * np.pi * n / L
    hb, m = constants.hbar, constants.mass
    energies = hb ** 2 * np.sum(k * k, axis=1) / (2 * m)
    H = np.diag(energies).astype(complex)
    dH = np.stack([np.diag(hb ** 2 * k[:, l] / m) for l in range(d)]).astype(complex)
    return FiniteModel(H=H, dH=dH, volume=float(L) ** d, periodic=True,
                       name=f"free-gas[L={L},d={d},cutoff={cutoff}]")


def build_planewave_bloch(lattice: Lattice, V_fourier: Optional[Mapping] = None,
                          cutoff: float = 0.0,
                          constants: PhysicalConstants = REDUCED) -> BlochModel:
    """Continuum Bloch Hamiltonian (hbar^2/2m)|k + G|^2 + V in a truncated plane-wave basis.

    ``V_fourier`` maps integer reciprocal coordinates m (G = B m) to Fourier
    coefficients; the basis is every G with |G| <= cutoff.
    """
    d = lattice.dim
    V = {}
    for key, val in (V_fourier or {}).items():
        V[tuple(int(x) for x in np.atleast_1d(key))] = complex(val)
    for key, val in V.items():
        partner = V.get(tuple(-x for x in key), 0.0)
        if abs(partner - np.conj(val)) > HERMITIAN_TOL * max(1.0, abs(val)):
            raise NonHermitianInput(f"V_(-G) != conj(V_G) for G index {key}")
    bmin = float(np.min(np.linalg.norm(lattice.B, axis=0)))
    span = int(math.ceil(cutoff / bmin)) + 1 if cutoff >= 0 else 0
    axis = np.arange(-span, span + 1)
    cand = np.array(np.meshgrid(*([axis] * d), indexing="ij")).reshape(d, -1).T
    G = cand @ lattice.B.T
    norms = np.linalg.norm(G, axis=1)
    keep = norms <= cutoff * (1 + 1e-12) + 1e-14
    if not np.any(keep):
        raise EmptyBasis(f"no reciprocal vector within cutoff {cutoff}")
    cand, G, norms = cand[keep], G[keep], norms[keep]
    order = np.lexsort(tuple(cand[:, i] for i in reversed(range(d))) + (np.round(norms, 12),))
    cand, G = cand[order], G[order]
    N = G.shape[0]
    Vmat = np.zeros((N, N), dtype=complex)
    for i in range(N):
        for j in range(N):
            Vmat[i, j] = V.get(tuple(int(x) for x in cand[i] - cand[j]), 0.0)
    hb2m = constants.hbar ** 2 / (2 * constants.mass)
    hb_m = constants.hbar ** 2 / constants.mass

    def h_batch(ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=float))
        q = ks[:, None, :] + G[None, :, :]
        kin = hb2m * np.sum(q * q, axis=-1)
        out = np.broadcast_to(Vmat, (ks.shape[0], N, N)).copy()
        idx = np.arange(N)
        out[:, idx, idx] += kin
        return out

    def dh_batch(ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=float))
        q = ks[:, None, :] + G[None, :, :]
        out = np.zeros((ks.shape[0], d, N, N), dtype=complex)
        idx = np.arange(N)
        out[:, :, idx, idx] = hb_m * np.moveaxis(q, -1, 1)
        return out

    return BlochModel(lattice=lattice, n_bands=N, h_batch=h_batch, dh_batch=dh_batch,
                      name="planewave", real_hamiltonian=bool(all(np.imag(v) == 0 for v in V.values())),
                      periodic_in_k=False, info={"G_indices": cand.tolist(), "cutoff": cutoff})


def _field(obj, key, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing required field {key!r}", field=path + key)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"field {key!r} has wrong type {type(value).__name__}", field=path + key)
    return value


def load_tight_binding(source) -> TightBinding:
    """Load a tight-binding model from a JSON file path, JSON text or parsed dict.

    Schema: ``{dim, lattice_A (row-major, rows are primitive vectors),
    orbitals: [{label, tau}], hoppings: [{R, from, to, value: [re, im]}]}``.
    Every hopping must have its conjugate partner listed explicitly.
    """
    if isinstance(source, dict):
        data = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read model file: {exc}") from exc
        else:
            text = source
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    d = _field(data, "dim", "", int)
    if d < 1:
        raise ParseError("dim must be >= 1", field="dim")
    rows = _field(data, "lattice_A", "", list)
    try:
        A_rows = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError("lattice_A must be numeric", field="lattice_A") from exc
    if A_rows.shape != (d, d):
        raise ParseError(f"lattice_A must be {d}x{d}", field="lattice_A")
    lattice = reciprocal_of(A_rows.T)
    orbitals = _field(data, "orbitals", "", list)
    if not orbitals:
        raise ParseError("need at least one orbital", field="orbitals")
    labels, taus = [], []
    for i, orb in enumerate(orbitals):
        labels.append(str(_field(orb, "label", f"orbitals[{i}].")))
        tau = _field(orb, "tau", f"orbitals[{i}].", list)
        if len(tau) != d:
            raise ParseError(f"tau must have {d} components", field=f"orbitals[{i}].tau")
        taus.append([float(x) for x in tau])
    N = len(orbitals)
    hops: dict[tuple, np.ndarray] = {}
    seen = set()
    for i, hop in enumerate(_field(data, "hoppings", "", list)):
        p = f"hoppings[{i}]."
        R = _field(hop, "R", p, list)
        if len(R) != d or not all(isinstance(r, int) for r in R):
            raise ParseError(f"R must be {d} integers", field=p + "R")
        a = _field(hop, "from", p, int)
        b = _field(hop, "to", p, int)
        if not (0 <= a < N and 0 <= b < N):
            raise ParseError("orbital index out of range", field=p + ("from" if not 0 <= a < N else "to"))
        val = _field(hop, "value", p, list)
        if len(val) != 2:
            raise ParseError("value must be [re, im]", field=p + "value")
        key = (tuple(R), a, b)
        if key in seen:
            raise ParseError("duplicate hopping entry", field=p[:-1])
        seen.add(key)
        block = hops.setdefault(tuple(R), np.zeros((N, N), dtype=complex))
        block[a, b] = complex(float(val[0]), float(val[1]))
    # explicit conjugate partners (also catches R = 0 non-Hermitian on-site blocks)
    for (R, a, b) in seen:
        h = hops[R][a, b]
        partner_key = (tuple(-r for r in R), b, a)
        if partner_key not in seen or abs(hops[partner_key[0]][b, a] - np.conj(h)) > HERMITIAN_TOL * max(1.0, abs(h)):
            raise NonHermitianInput(f"hopping R={list(R)} from={a} to={b} lacks its conjugate partner")
    return TightBinding(lattice, N, hops, labels=labels, taus=taus,
                        name=str(data.get("name", "tight-binding")))


def equilibrium_current(model: FiniteModel, occ: OccupationSpec,
                        constants: PhysicalConstants = REDUCED) -> np.ndarray:
    """J_eq = -(e/hbar) Tr{(d_l H) Phi(H)} / |Omega| for each direction l."""
    if not np.any(model.dH):
        return np.zeros(model.dim)
    E, U = np.linalg.eigh(model.H)
    mu = occ.resolve_mu(E, model.volume)
    f = fermi_dirac(E, occ.beta, mu)
    # Tr(dH Phi) = sum_a f_a <a|dH|a>
    diag = np.einsum("ia,lij,ja->la", U.conj(), model.dH, U)
    tr = diag @ f
    return -(constants.e_charge / constants.hbar) * tr.real / model.volume
