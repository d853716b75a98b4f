# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: incomplete gamma, the Duhamel kernel and ray sampling.

Signatures mirror ``_core_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, lgamma, tgamma, floor, M_PI, pow

cnp.import_array()

cdef double EPS = 1e-16
cdef double TINY = 1e-300
cdef int MAX_ITER = 500


cdef inline void _pq(double a, double x, double lga, double* p, double* q) nogil:
    cdef double ap, term, total, b, c, d, h, an, delta, pref
    cdef int i
    if x <= 0.0:
        p[0] = 0.0
        q[0] = 1.0
        return
    pref = exp(-x + a * log(x) - lga)
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for i in range(MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if fabs(term) < fabs(total) * EPS:
                break
        p[0] = total * pref
        q[0] = 1.0 - p[0]
    else:
        b = x + 1.0 - a
        c = 1.0 / TINY
        d = 1.0 / b
        h = d
        for i in range(1, MAX_ITER):
            an = -i * (i - a)
            b += 2.0
            d = an * d + b
            if fabs(d) < TINY:
                d = TINY
            c = b + an / c
            if fabs(c) < TINY:
                c = TINY
            d = 1.0 / d
            delta = d * c
            h *= delta
            if fabs(delta - 1.0) < EPS:
                break
        q[0] = pref * h
        p[0] = 1.0 - q[0]


cdef inline double _series_sum(double a, double x) nogil:
    cdef double ap = a, term = 1.0 / a, total = 1.0 / a
    cdef int i
    for i in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if fabs(term) <= fabs(total) * EPS:
            break
    return total


def gammainc_pq(double a, x):
    """Regularized incomplete gamma functions P(a, x) and Q(a, x)."""
    if a <= 0.0:
        raise ValueError("shape parameter must be positive")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("argument must be nonnegative")
    cdef double[::1] xf = np.ascontiguousarray(xa.ravel())
    cdef Py_ssize_t n = xf.shape[0], i
    p = np.empty(n)
    q = np.empty(n)
    cdef double[::1] pv = p, qv = q
    cdef double lga = lgamma(a)
    with nogil:
        for i in range(n):
            _pq(a, xf[i], lga, &pv[i], &qv[i])
    return p.reshape(xa.shape), q.reshape(xa.shape)


cdef inline double _sig(int j, int h, int k, double[:, ::1] pts, Py_ssize_t i) nogil:
    cdef double s = 0.0
    if j == h:
        s += pts[i, k]
    if j == k:
        s += pts[i, h]
    if h == k:
        s += pts[i, j]
    return s


cdef inline double _lin(int j, int h, int k, double[:, ::1] pts, Py_ssize_t i) nogil:
    cdef double s = 0.0
    if j == k:
        s += pts[i, h]
    if j == h:
        s += pts[i, k]
    return s


def kernel_parts(int j, int h, int k, pts, double t):
    """Evaluate F1, F2, leading term and Psi(x/sqrt t) at each row of ``pts``."""
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=float)
    cdef Py_ssize_t n = P.shape[0], i, m
    cdef int d = P.shape[1]
    f1 = np.empty(n)
    f2 = np.empty(n)
    lead = np.empty(n)
    psi = np.empty(n)
    cdef double[::1] F1 = f1, F2 = f2, LD = lead, PS = psi
    cdef double a1 = (d + 2) / 2.0, a2 = (d + 4) / 2.0
    cdef double g1 = tgamma(a1), g2 = tgamma(a2)
    cdef double l1 = lgamma(a1), l2 = lgamma(a2)
    cdef double pid = pow(M_PI, -d / 2.0)
    cdef double c1 = 4.0 * pow(4.0 * M_PI, d / 2.0) * pow(t, (d + 2) / 2.0)
    cdef double r2, r, z, sig, cube, lin, p1, q1, p2, q2, nan = float("nan")
    with nogil:
        for i in range(n):
            r2 = 0.0
            for m in range(d):
                r2 += P[i, m] * P[i, m]
            lin = _lin(j, h, k, P, i)
            z = r2 / (4.0 * t)
            F1[i] = -lin * exp(-z) / c1
            if z < a1 + 1.0:
                # Gamma(a) P(a, z) / r^{2a} = e^{-z} S(a, z) / (4t)^a keeps small r finite
                F2[i] = pid * exp(-z) * (_sig(j, h, k, P, i) * _series_sum(a1, z) / pow(4.0 * t, a1)
                                         - 2.0 * P[i, j] * P[i, h] * P[i, k] * _series_sum(a2, z) / pow(4.0 * t, a2))
            if r2 == 0.0:
                F2[i] = 0.0
                LD[i] = nan
                PS[i] = nan
                continue
            r = sqrt(r2)
            sig = _sig(j, h, k, P, i)
            cube = P[i, j] * P[i, h] * P[i, k]
            _pq(a1, z, l1, &p1, &q1)
            _pq(a2, z, l2, &p2, &q2)
            if z >= a1 + 1.0:
                F2[i] = pid * (sig / pow(r, d + 2) * g1 * p1 - 2.0 * cube / pow(r, d + 4) * g2 * p2)
            LD[i] = pid * g1 * (sig / pow(r, d + 2) - (d + 2) * cube / pow(r, d + 4))
            PS[i] = pow(r, d + 1) * F1[i] + pid * (-sig / r * g1 * q1 + 2.0 * cube / (r * r2) * g2 * q2)
    return f1, f2, lead, psi


def psi_values(int j, int h, int k, ys):
    """Psi_{j;h,k}(y), the Gaussian-tail correction of the kernel."""
    cdef double[:, ::1] Y = np.ascontiguousarray(ys, dtype=float)
    cdef Py_ssize_t n = Y.shape[0], i, m
    cdef int d = Y.shape[1]
    out = np.empty(n)
    cdef double[::1] O = out
    cdef double a1 = (d + 2) / 2.0, a2 = (d + 4) / 2.0
    cdef double g1 = tgamma(a1), g2 = tgamma(a2)
    cdef double l1 = lgamma(a1), l2 = lgamma(a2)
    cdef double pid = pow(M_PI, -d / 2.0)
    cdef double c1 = pow(2.0, -d - 2) * pid
    cdef double r2, r, z, p1, q1, p2, q2
    cdef bint bad = False
    with nogil:
        for i in range(n):
            r2 = 0.0
            for m in range(d):
                r2 += Y[i, m] * Y[i, m]
            if r2 == 0.0:
                bad = True
                break
            r = sqrt(r2)
            z = r2 / 4.0
            _pq(a1, z, l1, &p1, &q1)
            _pq(a2, z, l2, &p2, &q2)
            O[i] = (-c1 * _lin(j, h, k, Y, i) * pow(r, d + 1) * exp(-z)
                    + pid * (-_sig(j, h, k, Y, i) / r * g1 * q1
                             + 2.0 * Y[i, j] * Y[i, h] * Y[i, k] / (r * r2) * g2 * q2))
    if bad:
        raise ValueError("Psi is evaluated at nonzero points only")
    return out


def bilinear_sample(field, double origin, double dx, pts):
    """Bilinear interpolation of a 2-D array sampled at ``origin + i*dx``."""
    cdef double[:, ::1] Fv = np.ascontiguousarray(field, dtype=float)
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=float)
    cdef Py_ssize_t n = P.shape[0], q, i, m
    cdef Py_ssize_t n0 = Fv.shape[0], n1 = Fv.shape[1]
    out = np.empty(n)
    cdef double[::1] O = out
    cdef double s, u, fs, fu
    cdef bint bad = False
    with nogil:
        for q in range(n):
            s = (P[q, 0] - origin) / dx
            u = (P[q, 1] - origin) / dx
            i = <Py_ssize_t>floor(s)
            m = <Py_ssize_t>floor(u)
            if i < 0 or m < 0 or i >= n0 - 1 or m >= n1 - 1:
                bad = True
                break
            fs = s - i
            fu = u - m
            O[q] = ((1 - fs) * (1 - fu) * Fv[i, m] + fs * (1 - fu) * Fv[i + 1, m]
                    + (1 - fs) * fu * Fv[i, m + 1] + fs * fu * Fv[i + 1, m + 1])
    if bad:
        raise ValueError("sample point outside the interpolation grid")
    return out
