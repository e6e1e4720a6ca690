"""Backend selection for the hot loops.

The compiled extension is used when importable; setting KUBO_PURE_PYTHON=1
forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("KUBO_PURE_PYTHON", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

resolvent_sum = _impl.resolvent_sum
rk4_liouville = _impl.rk4_liouville

__all__ = ["BACKEND", "resolvent_sum", "rk4_liouville", "parallel_resolvent_sum"]

_PAIR_CHUNK = 1 << 16


def parallel_resolvent_sum(x, w, omegas, gamma: float):
    """``resolvent_sum`` over fixed-size chunks, merged in chunk order.

    Chunk boundaries do not depend on the worker count, so the result is
    bit-identical for any KUBO_THREADS setting.
    """
    import numpy as np
    from concurrent.futures import ThreadPoolExecutor

    from .core import worker_count

    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=complex)
    omegas = np.asarray(omegas, dtype=float)
    bounds = [(s, min(s + _PAIR_CHUNK, x.size)) for s in range(0, x.size, _PAIR_CHUNK)]
    total = np.zeros((omegas.size, w.shape[1]), dtype=complex)
    if not bounds:
        return total

    def job(b):
        return resolvent_sum(x[b[0]:b[1]], w[b[0]:b[1]], omegas, gamma)

    workers = min(worker_count(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    for part in parts:
        total += part
    return total
