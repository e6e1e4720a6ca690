"""Pure numpy implementations of the hot loops (fallback backend)."""

from __future__ import annotations

import numpy as np

_CHUNK = 4096


def resolvent_sum(x, w, omegas, gamma: float) -> np.ndarray:
    """out[i, j] = sum_p w[p, j] / (gamma + i (x[p] - omegas[i])).

    Parameters
    ----------
    x : (P,) float
        Transition frequencies.
    w : (P, m) complex
        Weights per transition.
    omegas : (n,) float
    gamma : float
    """
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(w, dtype=complex)
    omegas = np.ascontiguousarray(omegas, dtype=float)
    out = np.zeros((omegas.size, w.shape[1]), dtype=complex)
    for start in range(0, x.size, _CHUNK):
        xs = x[start:start + _CHUNK]
        denom = gamma + 1j * (xs[None, :] - omegas[:, None])
        out += (1.0 / denom) @ w[start:start + _CHUNK]
    return out


def rk4_liouville(A0, a1, jmat, c0, t0, theta, h, nsteps, omega: float) -> np.ndarray:
    """Fixed-step RK4 for c' = A0 c + u(t) a1 * c with u(t) = exp(-i (omega t + theta)).

    Alongside the state, integrates Q' = conj(u(t)) jmat @ c. Each row b starts
    from ``c0`` at time ``t0[b]`` and takes ``nsteps[b]`` steps of size ``h[b]``.
    Returns Q with shape (B, d).
    """
    A0 = np.ascontiguousarray(A0, dtype=complex)
    a1 = np.ascontiguousarray(a1, dtype=complex)
    jmat = np.ascontiguousarray(jmat, dtype=complex)
    c0 = np.ascontiguousarray(c0, dtype=complex)
    t0 = np.asarray(t0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    h = np.asarray(h, dtype=float)
    nsteps = np.asarray(nsteps, dtype=np.int64)
    B = t0.size
    order = np.argsort(-nsteps, kind="stable")
    ns, t0s, ths, hs = nsteps[order], t0[order], theta[order], h[order]
    C = np.broadcast_to(c0, (B, c0.size)).copy()
    Q = np.zeros((B, jmat.shape[0]), dtype=complex)
    AT = A0.T
    jT = jmat.T
    max_steps = int(ns[0]) if B else 0
    active = B
    for s in range(max_steps):
        while active and ns[active - 1] <= s:
            active -= 1
        c = C[:active]
        hh = hs[:active, None]
        t = t0s[:active] + s * hs[:active]
        u0 = np.exp(-1j * (omega * t + ths[:active]))[:, None]
        um = np.exp(-1j * (omega * (t + 0.5 * hs[:active]) + ths[:active]))[:, None]
        u1 = np.exp(-1j * (omega * (t + hs[:active]) + ths[:active]))[:, None]
        k1 = c @ AT + u0 * a1 * c
        q1 = np.conj(u0) * (c @ jT)
        y = c + 0.5 * hh * k1
        k2 = y @ AT + um * a1 * y
        q2 = np.conj(um) * (y @ jT)
        y = c + 0.5 * hh * k2
        k3 = y @ AT + um * a1 * y
        q3 = np.conj(um) * (y @ jT)
        y = c + hh * k3
        k4 = y @ AT + u1 * a1 * y
        q4 = np.conj(u1) * (y @ jT)
        C[:active] = c + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        Q[:active] += (hh / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
    out = np.empty_like(Q)
    out[order] = Q
    return out
