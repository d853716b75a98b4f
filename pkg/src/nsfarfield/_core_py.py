"""Pure numpy implementation of the hot kernels.

Used when the compiled extension ``nsfarfield._core`` is unavailable or when
``NS_FARFIELD_PURE_PYTHON=1`` is set. Every function here has a twin with the
same signature in ``_core.pyx``; the test-suite runs both.
"""
import math

import numpy as np

EPS = 1e-16
TINY = 1e-300
MAX_ITER = 500


def gammainc_pq(a, x):
    """Regularized incomplete gamma functions P(a, x) and Q(a, x).

    Series for ``x < a + 1``, Lentz continued fraction otherwise; the
    complementary function is obtained as ``1 - other`` in each regime.
    """
    a = float(a)
    if a <= 0.0:
        raise ValueError("shape parameter must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    flat = x.ravel()
    p = np.zeros_like(flat)
    q = np.ones_like(flat)
    lga = math.lgamma(a)

    ser = (flat > 0) & (flat < a + 1.0)
    if ser.any():
        xs = flat[ser]
        term = np.full_like(xs, 1.0 / a)
        total = term.copy()
        ap = a
        for _ in range(MAX_ITER):
            ap += 1.0
            term *= xs / ap
            total += term
            if np.all(np.abs(term) < np.abs(total) * EPS):
                break
        ps = total * np.exp(-xs + a * np.log(xs) - lga)
        p[ser] = ps
        q[ser] = 1.0 - ps

    cf = flat >= a + 1.0
    if cf.any():
        xs = flat[cf]
        b = xs + 1.0 - a
        c = np.full_like(xs, 1.0 / TINY)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, MAX_ITER):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d[np.abs(d) < TINY] = TINY
            c = b + an / c
            c[np.abs(c) < TINY] = TINY
            d = 1.0 / d
            delta = d * c
            h *= delta
            if np.all(np.abs(delta - 1.0) < EPS):
                break
        qs = np.exp(-xs + a * np.log(xs) - lga) * h
        q[cf] = qs
        p[cf] = 1.0 - qs

    return p.reshape(x.shape), q.reshape(x.shape)


def _series_sum(a, x):
    """sum_n x^n / (a (a+1) ... (a+n)), so that Gamma(a) P(a, x) = x^a e^{-x} * sum."""
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    ap = a
    for _ in range(MAX_ITER):
        ap += 1.0
        term = term * x / ap
        total += term
        if np.all(np.abs(term) <= np.abs(total) * EPS):
            break
    return total


def _sigma(j, h, k, pts):
    out = np.zeros(pts.shape[0])
    if j == h:
        out += pts[:, k]
    if j == k:
        out += pts[:, h]
    if h == k:
        out += pts[:, j]
    return out


def kernel_parts(j, h, k, pts, t):
    """Evaluate F1, F2, the homogeneous leading term and Psi(x/sqrt t).

    ``pts`` has shape (N, d); indices are zero-based. Points at the origin
    get F1 = F2 = 0 and NaN for the (singular) leading term and Psi.
    """
    pts = np.ascontiguousarray(pts, dtype=float)
    d = pts.shape[1]
    r2 = np.einsum("ij,ij->i", pts, pts)
    zero = r2 == 0.0
    rs = np.where(zero, 1.0, np.sqrt(r2))
    z = r2 / (4.0 * t)

    lin = np.zeros(pts.shape[0])
    if j == k:
        lin += pts[:, h]
    if j == h:
        lin += pts[:, k]
    f1 = -lin * np.exp(-z) / (4.0 * (4.0 * math.pi) ** (d / 2) * t ** ((d + 2) / 2))

    sig = _sigma(j, h, k, pts)
    cube = pts[:, j] * pts[:, h] * pts[:, k]
    a1 = (d + 2) / 2.0
    a2 = (d + 4) / 2.0
    p1, q1 = gammainc_pq(a1, z)
    p2, q2 = gammainc_pq(a2, z)
    g1 = math.gamma(a1)
    g2 = math.gamma(a2)
    pid = math.pi ** (-d / 2)
    f2 = pid * (sig / rs ** (d + 2) * g1 * p1 - 2.0 * cube / rs ** (d + 4) * g2 * p2)
    # near the origin use Gamma(a) P(a, z) / r^{2a} = e^{-z} S(a, z) / (4t)^a,
    # which avoids negative powers of a tiny r
    near = z < a1 + 1.0
    if near.any():
        zn = z[near]
        f2[near] = pid * np.exp(-zn) * (sig[near] * _series_sum(a1, zn) / (4.0 * t) ** a1
                                        - 2.0 * cube[near] * _series_sum(a2, zn) / (4.0 * t) ** a2)

    gamma_d = pid * g1
    lead = gamma_d * (sig / rs ** (d + 2) - (d + 2) * cube / rs ** (d + 4))
    # Psi(x/sqrt t) expressed through x: homogeneous degree-0 factors are
    # identical in x and y.
    psi1 = rs ** (d + 1) * f1
    psi2 = pid * (-sig / rs * g1 * q1 + 2.0 * cube / rs ** 3 * g2 * q2)
    psi = psi1 + psi2
    lead[zero] = np.nan
    psi[zero] = np.nan
    return f1, f2, lead, psi


def psi_values(j, h, k, ys):
    """Psi_{j;h,k}(y), the Gaussian-tail correction of the kernel."""
    ys = np.ascontiguousarray(ys, dtype=float)
    d = ys.shape[1]
    r2 = np.einsum("ij,ij->i", ys, ys)
    if np.any(r2 == 0.0):
        raise ValueError("Psi is evaluated at nonzero points only")
    r = np.sqrt(r2)
    z = r2 / 4.0
    lin = np.zeros(ys.shape[0])
    if j == k:
        lin += ys[:, h]
    if j == h:
        lin += ys[:, k]
    pid = math.pi ** (-d / 2)
    psi1 = -(2.0 ** (-d - 2)) * pid * lin * r ** (d + 1) * np.exp(-z)
    a1 = (d + 2) / 2.0
    a2 = (d + 4) / 2.0
    _, q1 = gammainc_pq(a1, z)
    _, q2 = gammainc_pq(a2, z)
    sig = _sigma(j, h, k, ys)
    cube = ys[:, j] * ys[:, h] * ys[:, k]
    psi2 = pid * (-sig / r * math.gamma(a1) * q1 + 2.0 * cube / r ** 3 * math.gamma(a2) * q2)
    return psi1 + psi2


def bilinear_sample(field, origin, dx, pts):
    """Bilinear interpolation of a 2-D array sampled at ``origin + i*dx``.

    Points outside the grid raise; axis 0 of ``field`` runs along x1.
    """
    field = np.asarray(field, dtype=float)
    pts = np.asarray(pts, dtype=float)
    n0, n1 = field.shape
    s = (pts[:, 0] - origin) / dx
    u = (pts[:, 1] - origin) / dx
    i = np.floor(s).astype(np.intp)
    m = np.floor(u).astype(np.intp)
    if np.any((i < 0) | (m < 0) | (i >= n0 - 1) | (m >= n1 - 1)):
        raise ValueError("sample point outside the interpolation grid")
    fs = s - i
    fu = u - m
    return ((1 - fs) * (1 - fu) * field[i, m] + fs * (1 - fu) * field[i + 1, m]
            + (1 - fs) * fu * field[i, m + 1] + fs * fu * field[i + 1, m + 1])
