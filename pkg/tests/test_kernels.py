import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from kubolab import _pykernels, kernels

try:
    from kubolab import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


def _problem(seed, P=5000, m=4, n=7):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=P), rng.normal(size=(P, m)) + 1j * rng.normal(size=(P, m)),
            np.linspace(-2, 2, n), 0.3)


@pytest.mark.parametrize("impl", BACKENDS)
def test_resolvent_sum_direct(impl):
    x, w, om, g = _problem(0, P=300)
    ref = np.array([[np.sum(w[:, j] / (g + 1j * (x - o))) for j in range(w.shape[1])] for o in om])
    assert np.allclose(impl.resolvent_sum(x, w, om, g), ref, rtol=1e-12, atol=1e-12)


def test_backends_agree():
    if _ckernels is None:
        pytest.skip("compiled backend not available")
    x, w, om, g = _problem(1)
    a = _pykernels.resolvent_sum(x, w, om, g)
    b = _ckernels.resolvent_sum(x, w, om, g)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
    rng = np.random.default_rng(2)
    n = 6
    H = rng.normal(size=(n, n))
    A0 = -1j * (H + H.T)
    a1 = 1j * rng.normal(size=n)
    J = rng.normal(size=(2, n)) + 0j
    c0 = rng.normal(size=n) + 1j * rng.normal(size=n)
    t0 = rng.uniform(0, 5, 9)
    th = rng.uniform(-3, 3, 9)
    ns = rng.integers(1, 40, 9)
    h = rng.uniform(0.01, 0.05, 9)
    qa = _pykernels.rk4_liouville(A0, a1, J, c0, t0, th, h, ns, 0.7)
    qb = _ckernels.rk4_liouville(A0, a1, J, c0, t0, th, h, ns, 0.7)
    assert np.max(np.abs(qa - qb)) <= 1e-12 * np.max(np.abs(qa))


@pytest.mark.parametrize("impl", BACKENDS)
def test_rk4_matches_ode_solver(impl):
    rng = np.random.default_rng(3)
    n = 4
    H = rng.normal(size=(n, n))
    A0 = -1j * (H + H.T)
    a1 = 0.3j * rng.normal(size=n)
    J = rng.normal(size=(1, n)) + 0j
    c0 = rng.normal(size=n) + 0j
    omega, theta, t0, T = 1.3, 0.4, 0.7, 2.0

    def rhs(t, y):
        c, u = y[:n], np.exp(-1j * (omega * t + theta))
        return np.concatenate([A0 @ c + u * a1 * c, np.conj(u) * (J @ c)])

    sol = integrate.solve_ivp(rhs, (t0, t0 + T), np.concatenate([c0, [0j]]), rtol=1e-12, atol=1e-14)
    got = impl.rk4_liouville(A0, a1, J, c0, [t0], [theta], [T / 2000], [2000], omega)
    assert abs(got[0, 0] - sol.y[n, -1]) <= 1e-9


def test_parallel_sum_chunk_invariant(monkeypatch):
    x, w, om, g = _problem(4, P=200_000, m=1, n=3)
    monkeypatch.setenv("KUBO_THREADS", "1")
    a = kernels.parallel_resolvent_sum(x, w, om, g)
    monkeypatch.setenv("KUBO_THREADS", "4")
    b = kernels.parallel_resolvent_sum(x, w, om, g)
    assert a.tobytes() == b.tobytes()
    assert np.allclose(a, _pykernels.resolvent_sum(x, w, om, g), rtol=1e-10)


def test_pure_python_switch():
    code = "import kubolab.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, KUBO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "python"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={k: v for k, v in os.environ.items() if k != "KUBO_PURE_PYTHON"})
    assert out.stdout.strip() == ("cython" if _ckernels is not None else "python")
