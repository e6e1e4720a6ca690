"""Stochastic time-domain verifiers for the Poisson-reset dissipation model.

Quantum: the density matrix starts from Phi(H) at every scattering time and
evolves under d rho/dt = -L_H rho + (e/hbar) E(t).grad rho until the next
reset; the long-time average of the current density is estimated from a
finite number of intervals with a ratio-estimator standard error.

Classical: the Drude phase-space model, whose per-interval current integral
is known in closed form.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import REDUCED, KuboError, NonPositiveGamma, PhysicalConstants, worker_count
from .fermi import OccupationSpec, fermi_dirac
from .kernels import rk4_liouville
from .models import FiniteModel

__all__ = [
    "DimensionTooLarge",
    "StepSizeTooCoarse",
    "ScatteringProcess",
    "DriveSpec",
    "DynamicsResult",
    "LiouvilleRep",
    "draw_intervals",
    "liouville_rep",
    "expected_current_dc",
    "expected_current_linear",
    "simulate_quantum_dc",
    "simulate_quantum_ac",
    "simulate_classical",
    "linearity_residual",
    "MAX_HILBERT_DIM",
    "MAX_LIOUVILLE_DIM",
]

MAX_HILBERT_DIM = 512
MAX_LIOUVILLE_DIM = 4096
_INTERVAL_CHUNK = 1024
_DRAW_CHUNK = 1 << 16


class DimensionTooLarge(KuboError):
    pass


class StepSizeTooCoarse(KuboError):
    pass


@dataclass(frozen=True)
class ScatteringProcess:
    """Poisson scattering with rate ``gamma``; intervals keyed by (seed, stream, index)."""

    gamma: float
    seed: int = 0
    n_events: int = 10_000
    burn_in: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise NonPositiveGamma(f"Gamma must be finite and > 0, got {self.gamma!r}")
        if self.n_events < 1 or self.burn_in < 0:
            raise ValueError("need n_events >= 1 and burn_in >= 0")
        if not (0 <= self.seed < 2 ** 64 and 0 <= self.stream < 2 ** 64):
            raise ValueError("seed and stream must fit in 64 bits")

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "seed": self.seed, "n_events": self.n_events,
                "burn_in": self.burn_in, "stream": self.stream}


@dataclass(frozen=True)
class DriveSpec:
    """Applied field E(t; theta) = exp(-i (omega t + theta)) E(omega) / (2 pi).

    ``dc=True`` means a constant real field ``amplitude`` (omega must be 0).
    ``phase_average=False`` uses the single phase theta = 0 (experimental).
    """

    amplitude: tuple
    omega: float = 0.0
    theta_nodes: int = 8
    dc: bool = False
    phase_average: bool = True

    def __post_init__(self):
        amp = tuple(float(a) for a in np.atleast_1d(self.amplitude))
        object.__setattr__(self, "amplitude", amp)
        if not all(math.isfinite(a) for a in amp):
            raise ValueError("field amplitude must be finite")
        if self.theta_nodes < 4:
            raise ValueError("theta_nodes must be >= 4")
        if self.dc and self.omega != 0:
            raise ValueError("a DC drive needs omega = 0")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.amplitude, dtype=float)

    def as_dict(self) -> dict:
        return {"amplitude": list(self.amplitude), "omega": self.omega,
                "theta_nodes": self.theta_nodes, "dc": self.dc,
                "phase_average": self.phase_average}


@dataclass(frozen=True, eq=False)
class DynamicsResult:
    """Monte Carlo estimate of a time-averaged current with its standard error.

    For complex estimates ``stderr`` carries the real-part error in its real
    component and the imaginary-part error in its imaginary component.
    """

    current: np.ndarray
    stderr: np.ndarray
    n_events: int
    total_time: float
    metadata: dict = field(default_factory=dict)
    samples: Optional[np.ndarray] = None
    taus: Optional[np.ndarray] = None


def _raw(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64),
                          counter=np.array([start // 4, 0, 0, 0], dtype=np.uint64))
    skip = start % 4
    return bg.random_raw(skip + count)[skip:]


def draw_intervals(process: ScatteringProcess, start: int = 0, count: Optional[int] = None) -> np.ndarray:
    """Exponential(gamma) waiting times for indices start .. start+count-1.

    Value i depends only on (seed, stream, i), so any chunking of the index
    range reproduces the same sequence. Default range is all burn-in plus
    counted events.
    """
    if count is None:
        count = process.n_events + process.burn_in - start
    out = np.empty(count)
    for s in range(0, count, _DRAW_CHUNK):
        n = min(_DRAW_CHUNK, count - s)
        raw = _raw(process.seed, process.stream, start + s, n)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53  # in (0, 1]
        out[s:s + n] = -np.log(u) / process.gamma
    return out


@dataclass(frozen=True, eq=False)
class LiouvilleRep:
    """Linear coordinates c for density matrices of one model.

    The field-free flow is c' = -i K c with K Hermitian; a field E adds
    i (e/hbar) (E . delta) c (``delta`` has shape (d, n)). The current
    density is J_l = jmat[l] . c.

    ``basis="generic"`` uses all matrix units (n = dim^2). For torus models
    ``basis="translation"`` uses the translation-invariant coordinates
    c[(d, a, b)] = rho[(0, a), (d, b)] (n = L^D N^2).
    """

    K: np.ndarray
    delta: np.ndarray
    jmat: np.ndarray
    c_eq: np.ndarray
    basis: str
    hilbert_dim: int
    mu: float

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def generator(self, E, constants: PhysicalConstants = REDUCED) -> np.ndarray:
        """Hermitian K_E with c' = -i K_E c under a constant real field."""
        return self.K - (constants.e_charge / constants.hbar) * np.diag(np.asarray(E) @ self.delta)


def liouville_rep(model: FiniteModel, occ: OccupationSpec, constants: PhysicalConstants = REDUCED,
                  basis: Optional[str] = None) -> LiouvilleRep:
    if model.displacements is None:
        raise KuboError("dynamics needs a model with position or hopping-displacement data")
    if model.dim_hilbert > MAX_HILBERT_DIM:
        raise DimensionTooLarge(f"Hilbert dimension {model.dim_hilbert} > {MAX_HILBERT_DIM}")
    if basis is None:
        basis = "translation" if model.translation is not None else "generic"
    hb, e = constants.hbar, constants.e_charge
    E, U = np.linalg.eigh(model.H)
    mu = occ.resolve_mu(E, model.volume)
    rho_eq = (U * fermi_dirac(E, occ.beta, mu)) @ U.conj().T
    H, dH, D = model.H, model.dH, model.displacements
    if basis == "generic":
        n = model.dim_hilbert
        if n * n > MAX_LIOUVILLE_DIM:
            raise DimensionTooLarge(f"Liouville dimension {n * n} > {MAX_LIOUVILLE_DIM}")
        I = np.eye(n)
        K = (np.kron(H, I) - np.kron(I, H.T)) / hb
        delta = D.reshape(D.shape[0], -1)
        jmat = -(e / hb) / model.volume * np.transpose(dH, (0, 2, 1)).reshape(dH.shape[0], -1)
        c_eq = rho_eq.reshape(-1)
    elif basis == "translation":
        info = model.translation
        if info is None:
            raise KuboError("translation basis needs a torus model")
        N, nc = info.n_orb, info.n_cells
        n = nc * N * N
        if n > MAX_LIOUVILLE_DIM:
            raise DimensionTooLarge(f"Liouville dimension {n} > {MAX_LIOUVILLE_DIM}")
        cells = info.cells()
        r0 = int(info.cell_index(np.zeros(info.lattice.dim, dtype=np.int64))) * N

        def row_blocks(M):
            return M[r0:r0 + N].reshape(N, nc, N).transpose(1, 0, 2)  # [m, a, b]

        h = row_blocks(H)
        nz = [m for m in range(nc) if np.any(h[m] != 0)]
        # diff[d, m] = index of cell(d) - cell(m)
        diff = info.cell_index(cells[:, None, :] - cells[None, :, :])
        K = np.zeros((n, n), dtype=complex)
        IN = np.eye(N)
        NN = N * N
        left = {m: np.kron(h[m], IN) / hb for m in nz}
        right = {m: np.kron(IN, h[m].T) / hb for m in nz}
        for d in range(nc):
            rows = slice(d * NN, (d + 1) * NN)
            for m in nz:
                src = diff[d, m]  # c[d - m] for the H rho term
                K[rows, src * NN:(src + 1) * NN] += left[m]
                src = diff[d, m]  # c[d - m'] with m' = m for the rho H term
                K[rows, src * NN:(src + 1) * NN] -= right[m]
        delta = np.stack([row_blocks(D[l]).reshape(-1) for l in range(D.shape[0])])
        c_eq = row_blocks(rho_eq).reshape(-1)
        # J_l = -(e/hbar)/|cell| sum dH[(0 b'), (-d, a')] c[(d, a', b')]
        neg = info.cell_index(-cells)
        jm = np.empty((dH.shape[0], nc, N, N), dtype=complex)
        for l in range(dH.shape[0]):
            blocks = row_blocks(dH[l])  # [m, b, a] = dH[(0 b), (m a)]
            jm[l] = np.transpose(blocks[neg], (0, 2, 1))
        jmat = -(e / hb) / info.lattice.cell_volume * jm.reshape(dH.shape[0], -1)
    else:
        raise ValueError("basis must be 'generic' or 'translation'")
    return LiouvilleRep(K=K, delta=np.asarray(delta, dtype=float), jmat=jmat, c_eq=c_eq,
                        basis=basis, hilbert_dim=model.dim_hilbert, mu=mu)


def _phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z for purely imaginary z = -i x, stable near 0."""
    x = -z.imag
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    val = (-2.0 * np.sin(xs / 2) ** 2 - 1j * np.sin(xs)) / (-1j * xs)
    return np.where(small, 1.0 + z / 2, val)


def _dc_modes(rep: LiouvilleRep, E, constants):
    lam, W = np.linalg.eigh(rep.generator(E, constants))
    amp = (rep.jmat @ W) * (W.conj().T @ rep.c_eq)[None, :]  # (d, n)
    return lam, amp


def expected_current_dc(model: FiniteModel, occ: OccupationSpec, gamma: float, E,
                        constants: PhysicalConstants = REDUCED, rep: Optional[LiouvilleRep] = None) -> np.ndarray:
    """Exact Poisson-average current Gamma Re sum_k a_k / (Gamma + i lambda_k) at field E.

    This is the infinite-interval limit of ``simulate_quantum_dc`` (all orders
    in E, same field convention).
    """
    rep = rep if rep is not None else liouville_rep(model, occ, constants)
    lam, amp = _dc_modes(rep, np.asarray(E, dtype=float), constants)
    return (gamma * amp / (gamma + 1j * lam)[None, :]).sum(axis=1).real


def expected_current_linear(model: FiniteModel, occ: OccupationSpec, gamma: float, omega: float, E,
                            constants: PhysicalConstants = REDUCED,
                            rep: Optional[LiouvilleRep] = None) -> np.ndarray:
    """Linear-order Poisson-average amplitude jmat (iK - i omega + Gamma)^{-1} b.

    ``b = i (e/hbar) (E . delta) c_eq`` is the field term acting on the
    equilibrium coordinates. This is the limit the AC simulator estimates,
    in the same derivation convention.
    """
    rep = rep if rep is not None else liouville_rep(model, occ, constants)
    E = np.asarray(E, dtype=float)
    b = 1j * (constants.e_charge / constants.hbar) * (E @ rep.delta) * rep.c_eq
    M = 1j * rep.K + (gamma - 1j * omega) * np.eye(rep.n)
    return rep.jmat @ np.linalg.solve(M, b)


def _ratio_estimate(samples: np.ndarray, taus: np.ndarray):
    """Ratio estimator sum(X)/sum(tau) and its delta-method standard error."""
    total = float(np.sum(taus))
    est = samples.sum(axis=0) / total
    n = taus.size
    mean_tau = total / n
    if n < 2:
        return est, np.full_like(est, np.nan)
    resid = samples - est[None, :] * taus[:, None]

    def se(part):
        return np.sqrt(np.sum(part ** 2, axis=0) / (n * (n - 1))) / mean_tau

    if np.iscomplexobj(resid):
        return est, se(resid.real) + 1j * se(resid.imag)
    return est, se(resid)


def simulate_quantum_dc(model: FiniteModel, occ: OccupationSpec, process: ScatteringProcess, E,
                        constants: PhysicalConstants = REDUCED, keep_samples: bool = False,
                        rep: Optional[LiouvilleRep] = None) -> DynamicsResult:
    """Time-averaged current under a constant field, sampled over Poisson intervals.

    Within an interval the flow is c(s) = exp(-i K_E s) c_eq with K_E
    Hermitian, so each interval integral is evaluated exactly from one
    eigendecomposition.
    """
    E = np.asarray(E, dtype=float).reshape(-1)
    if E.size != model.dim:
        raise ValueError(f"field must have {model.dim} components")
    rep = rep if rep is not None else liouville_rep(model, occ, constants)
    lam, amp = _dc_modes(rep, E, constants)
    taus_all = draw_intervals(process)
    taus = taus_all[process.burn_in:]
    samples = np.empty((taus.size, model.dim))
    for s in range(0, taus.size, _INTERVAL_CHUNK):
        tau = taus[s:s + _INTERVAL_CHUNK]
        z = -1j * lam[None, :] * tau[:, None]
        samples[s:s + _INTERVAL_CHUNK] = ((_phi1(z) * tau[:, None]) @ amp.T).real
    est, se = _ratio_estimate(samples, taus)
    meta = {"model": model.name, "field": E.tolist(), **occ.as_dict(), "mu_resolved": rep.mu,
            **process.as_dict(), "basis": rep.basis, "liouville_dim": rep.n,
            "constants": constants.as_dict()}
    return DynamicsResult(est, se, taus.size, float(taus.sum()), meta,
                          samples if keep_samples else None, taus if keep_samples else None)


def _max_step(rep: LiouvilleRep, model: FiniteModel, omega: float, constants) -> float:
    norm_h = float(np.max(np.abs(np.linalg.eigvalsh(model.H)))) if model.dim_hilbert else 0.0
    bounds = []
    if norm_h > 0:
        bounds.append(constants.hbar / (20.0 * norm_h))
    if omega != 0:
        bounds.append(2 * math.pi / (40.0 * abs(omega)))
    return min(bounds) if bounds else 0.1


def _rk4_trajectory(A: np.ndarray, c0: np.ndarray, h: float, nsteps: int) -> np.ndarray:
    c = c0.copy()
    for _ in range(nsteps):
        k1 = A @ c
        k2 = A @ (c + 0.5 * h * k1)
        k3 = A @ (c + 0.5 * h * k2)
        k4 = A @ (c + h * k3)
        c = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


def _validate_step(rep: LiouvilleRep, h: float, horizon: float) -> float:
    """Drift of the equilibrium state (energy and state) after ``horizon`` at E = 0."""
    nsteps = max(1, int(math.ceil(horizon / h)))
    A = -1j * rep.K
    c = _rk4_trajectory(A, rep.c_eq, horizon / nsteps, nsteps)
    scale = max(1.0, float(np.linalg.norm(rep.c_eq)))
    return float(np.linalg.norm(c - rep.c_eq)) / scale


def simulate_quantum_ac(model: FiniteModel, occ: OccupationSpec, process: ScatteringProcess,
                        drive: DriveSpec, constants: PhysicalConstants = REDUCED,
                        max_step: Optional[float] = None, keep_samples: bool = False,
                        rep: Optional[LiouvilleRep] = None) -> DynamicsResult:
    """Phase-averaged complex current amplitude at the drive frequency.

    For each interval and each phase node theta_j = -pi + 2 pi j / M the
    coordinates are integrated with fixed-step RK4 together with
    Q = int exp(i (omega t + theta_j)) J dt. The estimate is
    (2 pi / M) sum Q / sum tau, i.e. the trapezoid phase average of the time
    average, and approximates sigma(omega) E(omega) at small field.
    """
    if drive.dc:
        return simulate_quantum_dc(model, occ, process, drive.vector, constants, keep_samples, rep)
    E = drive.vector
    if E.size != model.dim:
        raise ValueError(f"field must have {model.dim} components")
    rep = rep if rep is not None else liouville_rep(model, occ, constants)
    omega = float(drive.omega)
    h_max = _max_step(rep, model, omega, constants)
    if max_step is not None:
        h_max = float(max_step)
    # RK4 is stable on the imaginary axis only for h |lambda| < 2 sqrt 2; the
    # field-free Liouvillian spectrum spans +-(E_max - E_min)/hbar.
    E_h = np.linalg.eigvalsh(model.H)
    span = float(E_h[-1] - E_h[0]) / constants.hbar if E_h.size else 0.0
    if h_max * span >= 2 * math.sqrt(2):
        raise StepSizeTooCoarse(f"step {h_max:.3g} is outside the RK4 stability region "
                                f"(h * spectral span = {h_max * span:.3g})")
    drift = _validate_step(rep, h_max, 10.0 / process.gamma)
    if not drift <= 1e-8:
        raise StepSizeTooCoarse(f"equilibrium drift {drift:.3g} over 10/Gamma with step {h_max:.3g}")
    M = drive.theta_nodes if drive.phase_average else 1
    thetas = (-math.pi + 2 * math.pi * np.arange(M) / M) if drive.phase_average else np.zeros(1)
    weight = 2 * math.pi / M
    A0 = -1j * rep.K
    a1 = 1j * (constants.e_charge / constants.hbar) * (E @ rep.delta) / (2 * math.pi)
    taus_all = draw_intervals(process)
    starts_all = np.concatenate([[0.0], np.cumsum(taus_all)[:-1]])
    taus = taus_all[process.burn_in:]
    starts = starts_all[process.burn_in:]
    nsteps = np.maximum(1, np.ceil(taus / h_max)).astype(np.int64)
    hs = taus / nsteps

    def job(s):
        sl = slice(s, s + _INTERVAL_CHUNK)
        k = taus[sl].size
        t0 = np.repeat(starts[sl], M)
        th = np.tile(thetas, k)
        Q = rk4_liouville(A0, a1, rep.jmat, rep.c_eq, t0, th, np.repeat(hs[sl], M),
                          np.repeat(nsteps[sl], M), omega)
        return weight * Q.reshape(k, M, -1).sum(axis=1)

    chunks = list(range(0, taus.size, _INTERVAL_CHUNK))
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(s) for s in chunks]
    samples = np.concatenate(parts)
    est, se = _ratio_estimate(samples, taus)
    meta = {"model": model.name, **drive.as_dict(), **occ.as_dict(), "mu_resolved": rep.mu,
            **process.as_dict(), "basis": rep.basis, "liouville_dim": rep.n, "max_step": h_max,
            "equilibrium_drift": drift, "constants": constants.as_dict()}
    return DynamicsResult(est, se, taus.size, float(taus.sum()), meta,
                          samples if keep_samples else None, taus if keep_samples else None)


def linearity_residual(model: FiniteModel, occ: OccupationSpec, process: ScatteringProcess, E,
                       constants: PhysicalConstants = REDUCED) -> dict:
    """Second difference |J(2E) - 2 J(E) + J(0)| at E and E/2 on common intervals.

    Returns the two residual norms, their ratio (about 4 for a quadratic
    leading nonlinearity, 8 when even orders vanish by symmetry) and the
    fitted coefficients C = residual / |E|^2.
    """
    rep = liouville_rep(model, occ, constants)
    E = np.asarray(E, dtype=float)

    def resid(field):
        j = [simulate_quantum_dc(model, occ, process, s * field, constants, rep=rep).current
             for s in (0.0, 1.0, 2.0)]
        return float(np.linalg.norm(j[2] - 2 * j[1] + j[0]))

    r_full, r_half = resid(E), resid(E / 2)
    norm = float(np.linalg.norm(E))
    return {"residual": r_full, "residual_half": r_half,
            "ratio": r_full / r_half if r_half > 0 else math.inf,
            "C": r_full / norm ** 2, "C_half": r_half / (norm / 2) ** 2}


def _phi2(z: np.ndarray) -> np.ndarray:
    """(e^z - 1 - z)/z^2, with a series near 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    val = (np.expm1(zs.real) * np.cos(zs.imag) + (np.cos(zs.imag) - 1) + 1j * np.exp(zs.real) * np.sin(zs.imag) - zs) / zs ** 2
    series = 0.5 + z / 6 + z * z / 24 + z ** 3 / 120
    return np.where(small, series, val)


def simulate_classical(process: ScatteringProcess, beta: float, density: float, mass: float,
                       drive: DriveSpec, constants: PhysicalConstants = REDUCED,
                       keep_samples: bool = False) -> DynamicsResult:
    """Classical Drude Monte Carlo with field E(t) = exp(-i omega t) E(omega).

    Within an interval the current is (e^2 N / m) int_{t_n}^t E, so the
    weighted integral int exp(i omega t) J dt over an interval of length tau
    equals (e^2 N / m) E tau^2 phi2(i omega tau), independent of t_n.
    ``metadata["analytic"]`` holds e^2 N E / (m (Gamma - i omega)).
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    if not density > 0 or not mass > 0:
        raise ValueError("density and mass must be > 0")
    E = drive.vector
    omega = 0.0 if drive.dc else float(drive.omega)
    taus_all = draw_intervals(process)
    taus = taus_all[process.burn_in:]
    pref = constants.e_charge ** 2 * density / mass
    per = taus ** 2 * _phi2(1j * omega * taus)
    samples = pref * per[:, None] * E[None, :]
    if drive.dc:
        samples = samples.real
    est, se = _ratio_estimate(samples, taus)
    analytic = pref * E / (process.gamma - 1j * omega)
    meta = {"beta": beta, "density": density, "mass": mass, **drive.as_dict(), **process.as_dict(),
            "analytic": analytic.tolist() if not drive.dc else analytic.real.tolist(),
            "constants": constants.as_dict()}
    return DynamicsResult(est, se, taus.size, float(taus.sum()), meta,
                          samples if keep_samples else None, taus if keep_samples else None)
