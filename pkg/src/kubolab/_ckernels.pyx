# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; same signatures as ``_pykernels``.

Inner loops use split real/imaginary arithmetic to avoid the checked
complex multiply of C99.
"""

import numpy as np
from libc.math cimport cos, sin


def resolvent_sum(x, w, omegas, double gamma):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    wc = np.ascontiguousarray(w, dtype=np.complex128)
    cdef const double[:, ::1] wr = np.ascontiguousarray(wc.real)
    cdef const double[:, ::1] wi = np.ascontiguousarray(wc.imag)
    cdef const double[::1] ov = np.ascontiguousarray(omegas, dtype=np.float64)
    cdef Py_ssize_t P = xv.shape[0], m = wr.shape[1], n = ov.shape[0]
    acc_r = np.zeros((n, m))
    acc_i = np.zeros((n, m))
    cdef double[:, ::1] rr = acc_r
    cdef double[:, ::1] ri = acc_i
    cdef Py_ssize_t p, i, j
    cdef double im, den, inv_r, inv_i, g2 = gamma * gamma
    with nogil:
        for p in range(P):
            for i in range(n):
                im = xv[p] - ov[i]
                den = 1.0 / (g2 + im * im)
                inv_r = gamma * den
                inv_i = -im * den
                for j in range(m):
                    rr[i, j] += wr[p, j] * inv_r - wi[p, j] * inv_i
                    ri[i, j] += wr[p, j] * inv_i + wi[p, j] * inv_r
    return acc_r + 1j * acc_i


cdef inline void _rhs(const double[:, ::1] Ar, const double[:, ::1] Ai,
                      const double[::1] br, const double[::1] bi,
                      double ur, double ui,
                      const double[::1] yr, const double[::1] yi,
                      double[::1] kr, double[::1] ki) noexcept nogil:
    # k = A y + u (b * y)
    cdef Py_ssize_t n = Ar.shape[0], i, j
    cdef double sr, si, fr, fi
    for i in range(n):
        fr = ur * br[i] - ui * bi[i]
        fi = ur * bi[i] + ui * br[i]
        sr = fr * yr[i] - fi * yi[i]
        si = fr * yi[i] + fi * yr[i]
        for j in range(n):
            sr = sr + Ar[i, j] * yr[j] - Ai[i, j] * yi[j]
            si = si + Ar[i, j] * yi[j] + Ai[i, j] * yr[j]
        kr[i] = sr
        ki[i] = si


cdef inline void _cur(const double[:, ::1] Jr, const double[:, ::1] Ji,
                      const double[::1] yr, const double[::1] yi,
                      double ur, double ui, double wgt,
                      double[::1] qr, double[::1] qi) noexcept nogil:
    # q += wgt * conj(u) * (J y)
    cdef Py_ssize_t d = Jr.shape[0], n = Jr.shape[1], l, j
    cdef double sr, si
    for l in range(d):
        sr = 0.0
        si = 0.0
        for j in range(n):
            sr = sr + Jr[l, j] * yr[j] - Ji[l, j] * yi[j]
            si = si + Jr[l, j] * yi[j] + Ji[l, j] * yr[j]
        qr[l] += wgt * (ur * sr + ui * si)
        qi[l] += wgt * (ur * si - ui * sr)


def rk4_liouville(A0, a1, jmat, c0, t0, theta, h, nsteps, double omega):
    A = np.ascontiguousarray(A0, dtype=np.complex128)
    b = np.ascontiguousarray(a1, dtype=np.complex128)
    J = np.ascontiguousarray(jmat, dtype=np.complex128)
    c_init = np.ascontiguousarray(c0, dtype=np.complex128)
    cdef const double[:, ::1] Ar = np.ascontiguousarray(A.real)
    cdef const double[:, ::1] Ai = np.ascontiguousarray(A.imag)
    cdef const double[::1] br = np.ascontiguousarray(b.real)
    cdef const double[::1] bi = np.ascontiguousarray(b.imag)
    cdef const double[:, ::1] Jr = np.ascontiguousarray(J.real)
    cdef const double[:, ::1] Ji = np.ascontiguousarray(J.imag)
    cdef const double[::1] c0r = np.ascontiguousarray(c_init.real)
    cdef const double[::1] c0i = np.ascontiguousarray(c_init.imag)
    cdef const double[::1] tv = np.ascontiguousarray(t0, dtype=np.float64)
    cdef const double[::1] thv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const long long[::1] nv = np.ascontiguousarray(nsteps, dtype=np.int64)
    cdef Py_ssize_t B = tv.shape[0], n = Ar.shape[0], d = Jr.shape[0]
    out_r = np.zeros((B, d))
    out_i = np.zeros((B, d))
    cdef double[:, ::1] Qr = out_r
    cdef double[:, ::1] Qi = out_i
    work = np.empty((12, n))
    cdef double[:, ::1] wk = work
    cdef double[::1] cr = wk[0], ci = wk[1], yr = wk[2], yi = wk[3]
    cdef double[::1] k1r = wk[4], k1i = wk[5], k2r = wk[6], k2i = wk[7]
    cdef double[::1] k3r = wk[8], k3i = wk[9], k4r = wk[10], k4i = wk[11]
    qbuf = np.empty((2, d))
    cdef double[:, ::1] qb = qbuf
    cdef double[::1] qr = qb[0], qi = qb[1]
    cdef Py_ssize_t row, s, i, l
    cdef double t, hh, ph, u0r, u0i, umr, umi, u1r, u1i
    with nogil:
        for row in range(B):
            hh = hv[row]
            for i in range(n):
                cr[i] = c0r[i]
                ci[i] = c0i[i]
            for l in range(d):
                qr[l] = 0.0
                qi[l] = 0.0
            for s in range(nv[row]):
                t = tv[row] + s * hh
                ph = omega * t + thv[row]
                u0r = cos(ph)
                u0i = -sin(ph)
                ph = omega * (t + 0.5 * hh) + thv[row]
                umr = cos(ph)
                umi = -sin(ph)
                ph = omega * (t + hh) + thv[row]
                u1r = cos(ph)
                u1i = -sin(ph)
                _rhs(Ar, Ai, br, bi, u0r, u0i, cr, ci, k1r, k1i)
                _cur(Jr, Ji, cr, ci, u0r, u0i, hh / 6.0, qr, qi)
                for i in range(n):
                    yr[i] = cr[i] + 0.5 * hh * k1r[i]
                    yi[i] = ci[i] + 0.5 * hh * k1i[i]
                _rhs(Ar, Ai, br, bi, umr, umi, yr, yi, k2r, k2i)
                _cur(Jr, Ji, yr, yi, umr, umi, hh / 3.0, qr, qi)
                for i in range(n):
                    yr[i] = cr[i] + 0.5 * hh * k2r[i]
                    yi[i] = ci[i] + 0.5 * hh * k2i[i]
                _rhs(Ar, Ai, br, bi, umr, umi, yr, yi, k3r, k3i)
                _cur(Jr, Ji, yr, yi, umr, umi, hh / 3.0, qr, qi)
                for i in range(n):
                    yr[i] = cr[i] + hh * k3r[i]
                    yi[i] = ci[i] + hh * k3i[i]
                _rhs(Ar, Ai, br, bi, u1r, u1i, yr, yi, k4r, k4i)
                _cur(Jr, Ji, yr, yi, u1r, u1i, hh / 6.0, qr, qi)
                for i in range(n):
                    cr[i] = cr[i] + (hh / 6.0) * (k1r[i] + 2.0 * k2r[i] + 2.0 * k3r[i] + k4r[i])
                    ci[i] = ci[i] + (hh / 6.0) * (k1i[i] + 2.0 * k2i[i] + 2.0 * k3i[i] + k4i[i])
            for l in range(d):
                Qr[row, l] = qr[l]
                Qi[row, l] = qi[l]
    return out_r + 1j * out_i
