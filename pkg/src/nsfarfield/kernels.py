"""The kernel of e^{t Delta} P div and its large-|x| asymptotics.

``F_{j;h,k}(x, t)`` is split as ``F1 + F2`` where ``F1`` is the closed-form
first-derivative part and ``F2 = int_t^inf d_j d_h d_k g_s ds`` is expressed
through lower incomplete gamma functions. For ``x != 0``::

    F = leading(x) + |x|^{-(d+1)} Psi(x / sqrt(t))

with ``leading`` homogeneous of degree -(d+1) and ``Psi`` a Gaussian tail.

Indices in the public API are 1-based, as in ``KernelIndex(1, 1, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core
from .fields import GridSpec, ResolutionError
from .freespace import linear_convolve


@dataclass(frozen=True)
class KernelIndex:
    j: int
    h: int
    k: int

    def zero_based(self, d: int) -> tuple:
        for v in (self.j, self.h, self.k):
            if not 1 <= v <= d:
                raise ValueError(f"index {v} out of range for d={d}")
        return self.j - 1, self.h - 1, self.k - 1

    def swapped(self) -> "KernelIndex":
        return KernelIndex(self.j, self.k, self.h)


@dataclass(frozen=True)
class KernelValue:
    total: float
    part1: float
    part2: float
    leading: float
    psi: float


def all_indices(d: int) -> list:
    r = range(1, d + 1)
    return [KernelIndex(j, h, k) for j in r for h in r for k in r]


def gamma_const(d: int) -> float:
    """gamma_d = pi^{-d/2} Gamma((d+2)/2)."""
    if d < 2:
        raise ValueError("gamma_d is defined for d >= 2")
    return math.pi ** (-d / 2) * math.gamma((d + 2) / 2)


def _as_points(x):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = arr.reshape(1, -1) if single else arr.reshape(-1, arr.shape[-1])
    return pts, single, arr.shape[:-1]


def _shape_out(vals, single, lead_shape):
    return float(vals[0]) if single else vals.reshape(lead_shape)


def _check_t(t):
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")


def gaussian(x, t: float):
    """Heat kernel (4 pi t)^{-d/2} exp(-|x|^2 / 4t)."""
    _check_t(t)
    pts, single, shp = _as_points(x)
    d = pts.shape[1]
    vals = (4 * math.pi * t) ** (-d / 2) * np.exp(-np.sum(pts ** 2, axis=1) / (4 * t))
    return _shape_out(vals, single, shp)


def half_gamma_moment(m: float, upper: float) -> float:
    """int_0^upper lam^m exp(-lam^2) dlam = Gamma((m+1)/2) P((m+1)/2, upper^2) / 2."""
    a = (m + 1) / 2.0
    p, _ = core.gammainc_pq(a, np.array([upper * upper]))
    return 0.5 * math.gamma(a) * float(p[0])


def _parts(idx: KernelIndex, x, t):
    _check_t(t)
    pts, single, shp = _as_points(x)
    j, h, k = idx.zero_based(pts.shape[1])
    out = core.kernel_parts(j, h, k, pts, float(t))
    return out, single, shp


def eval_F1(idx: KernelIndex, x, t: float):
    (f1, _, _, _), single, shp = _parts(idx, x, t)
    return _shape_out(f1, single, shp)


def eval_F2(idx: KernelIndex, x, t: float):
    (_, f2, _, _), single, shp = _parts(idx, x, t)
    return _shape_out(f2, single, shp)


def eval_F(idx: KernelIndex, x, t: float):
    (f1, f2, _, _), single, shp = _parts(idx, x, t)
    return _shape_out(f1 + f2, single, shp)


def leading_term(idx: KernelIndex, x):
    """Homogeneous part gamma_d (sigma/|x|^{d+2} - (d+2) x_j x_h x_k / |x|^{d+4})."""
    pts, single, shp = _as_points(x)
    if np.any(np.sum(pts ** 2, axis=1) == 0):
        raise ValueError("leading term is singular at x = 0")
    (_, _, lead, _), _, _ = _parts(idx, pts, 1.0)
    return _shape_out(lead, single, shp)


def eval_Psi(idx: KernelIndex, y):
    pts, single, shp = _as_points(y)
    j, h, k = idx.zero_based(pts.shape[1])
    vals = core.psi_values(j, h, k, pts)
    return _shape_out(vals, single, shp)


def evaluate(idx: KernelIndex, x, t: float) -> KernelValue:
    """All pieces of the kernel at a single point."""
    (f1, f2, lead, psi), _, _ = _parts(idx, np.asarray(x, dtype=float).reshape(1, -1), t)
    return KernelValue(float(f1[0] + f2[0]), float(f1[0]), float(f2[0]),
                       float(lead[0]), float(psi[0]))


def decomposition_residual(idx: KernelIndex, x, t: float) -> np.ndarray:
    """|F - leading - |x|^{-(d+1)} Psi(x/sqrt t)| at nonzero points."""
    pts, _, _ = _as_points(x)
    d = pts.shape[1]
    (f1, f2, _, _), _, _ = _parts(idx, pts, t)
    lead = leading_term(idx, pts)
    psi = eval_Psi(idx, pts / math.sqrt(t))
    r = np.sqrt(np.sum(pts ** 2, axis=1))
    return np.abs(f1 + f2 - lead - r ** (-(d + 1)) * psi)


def sample_on_grid(idx: KernelIndex, t: float, grid: GridSpec) -> np.ndarray:
    vals = eval_F(idx, grid.points(), t)
    return np.asarray(vals).reshape(grid.shape)


def check_gshift(idx: KernelIndex, t: float, grid: GridSpec, window: float | None = None) -> float:
    """Max-norm of ``F(., t) * g - F(., t + 1)`` over the interior window.

    The convolution is linear (zero padded); the window defaults to
    ``|x|_inf <= L/2`` so that truncation of F at the box edge stays out.
    """
    _check_t(t)
    if grid.L < 8.0 * math.sqrt(t + 1.0):
        raise ResolutionError(f"extent L={grid.L} < 8 sqrt(t+1) = {8 * math.sqrt(t + 1):.3f}")
    if grid.dx > math.sqrt(t) / 4.0:
        raise ResolutionError(f"dx={grid.dx} does not resolve sqrt(t)={math.sqrt(t):.3f}")
    f_t = sample_on_grid(idx, t, grid)
    g = np.asarray(gaussian(grid.points(), 1.0)).reshape(grid.shape)
    conv = linear_convolve(f_t, g, grid.dx)
    target = sample_on_grid(idx, t + 1.0, grid)
    w = grid.L / 2.0 if window is None else window
    inside = np.ones(grid.shape, dtype=bool)
    for c in grid.mesh():
        inside &= np.abs(c) <= w
    return float(np.max(np.abs(conv - target)[inside]))


def l1_norm(idx: KernelIndex, t: float, d: int = 2, per_octave: int = 256,
            n_theta: int = 2048, r_min: float = 1e-4, r_cut: float = 200.0) -> float:
    """||F_{j;h,k}(., t)||_{L^1(R^2)} by polar quadrature.

    Radial trapezoid in log r on the fixed nodes 2^{i/per_octave}, angular
    trapezoid, plus the exact tail ``(1/r_cut) int |leading(omega)| domega``
    beyond ``r_cut`` (where Psi is negligible for moderate t). The angular
    integrand has kinks where F changes sign, so the angular sum is
    Richardson-extrapolated against the even-node subset.
    """
    if d != 2:
        raise NotImplementedError("polar L1 quadrature is implemented for d = 2")
    _check_t(t)
    if r_cut < 40.0 * math.sqrt(t):
        raise ResolutionError("r_cut too small for the Gaussian tail at this t")
    i_lo = math.floor(per_octave * math.log2(r_min))
    i_hi = math.ceil(per_octave * math.log2(r_cut))
    s = np.arange(i_lo, i_hi + 1) * (math.log(2.0) / per_octave)
    r = np.exp(s)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    om = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts = (r[:, None, None] * om[None, :, :]).reshape(-1, 2)
    vals = np.abs(np.asarray(eval_F(idx, pts, t))).reshape(r.size, n_theta)
    w = np.full(r.size, math.log(2.0) / per_octave)
    w[0] *= 0.5
    w[-1] *= 0.5
    if n_theta % 2:
        raise ValueError("n_theta must be even")
    h_theta = 2.0 * np.pi / n_theta
    radial = np.sum(vals * (r ** 2 * w)[:, None], axis=0)
    radial += np.abs(np.asarray(leading_term(idx, om))) / r[-1]
    fine = h_theta * np.sum(radial)
    coarse = 2.0 * h_theta * np.sum(radial[::2])
    return float((4.0 * fine - coarse) / 3.0)


def l1_norm_scaling(t_list, idx: KernelIndex = KernelIndex(1, 1, 1), **kw) -> list:
    """Pairs (t, ||F(., t)||_1 * sqrt(t)); constant across t by self-similarity."""
    out = []
    for t in t_list:
        out.append((float(t), l1_norm(idx, t, **kw) * math.sqrt(t)))
    return out


def divergence_residual(h: int, k: int, t: float, grid: GridSpec, step: float = 1e-3) -> dict:
    """Check sum_j d_j F_{j;h,k}(., t) = 0 two ways.

    ``symbol``: contraction of the Fourier symbol with xi_j on the grid's
    frequency lattice. ``physical``: sixth-order central differences of the
    closed-form kernel at every grid point, relative to max |grad F|.
    """
    _check_t(t)
    d = grid.d
    ks = np.meshgrid(*([2 * np.pi * np.fft.fftfreq(grid.n, grid.dx)] * d), indexing="ij")
    k2 = sum(kk * kk for kk in ks)
    safe = np.where(k2 == 0, 1.0, k2)
    hh, kk_ = h - 1, k - 1
    div_sym = np.zeros(grid.shape, dtype=complex)
    scale = 0.0
    for j in range(d):
        sym = 1j * np.exp(-t * k2) * (0.5 * (ks[hh] * (j == kk_) + ks[kk_] * (j == hh))
                                      - ks[j] * ks[hh] * ks[kk_] / safe)
        sym[k2 == 0] = 0.0
        div_sym += 1j * ks[j] * sym
        scale = max(scale, float(np.max(np.abs(ks[j] * sym))))
    symbol_res = float(np.max(np.abs(div_sym))) / scale

    pts = grid.points()
    coeffs = {1: 45.0 / 60, 2: -9.0 / 60, 3: 1.0 / 60}
    div = np.zeros(pts.shape[0])
    gscale = 0.0
    for j in range(d):
        idx = KernelIndex(j + 1, h, k)
        deriv = np.zeros(pts.shape[0])
        for m, c in coeffs.items():
            shift = np.zeros(d)
            shift[j] = m * step
            deriv += c * (np.asarray(eval_F(idx, pts + shift, t)) - np.asarray(eval_F(idx, pts - shift, t)))
        deriv /= step
        div += deriv
        gscale = max(gscale, float(np.max(np.abs(deriv))))
    physical_res = float(np.max(np.abs(div))) / gscale
    return {"symbol": symbol_res, "physical": physical_res}
