"""Free-space (non-periodic) convolutions on a uniform grid.

Everything here works on a grid padded by ``grid.pad`` along each axis so
that convolutions are linear rather than circular. The inverse Laplacian uses
a truncated Green's function whose Fourier transform is known in closed
form, which gives spectrally accurate free-space Poisson solves for smooth,
localized sources.
"""
from __future__ import annotations

import math
import os
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import special

from .fields import GridSpec


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by ``NS_FARFIELD_THREADS``."""
    cap = os.environ.get("NS_FARFIELD_THREADS")
    ncpu = os.cpu_count() or 1
    if cap:
        try:
            return max(1, min(int(cap), ncpu))
        except ValueError:
            pass
    return ncpu


def rfftn(a, axes):
    return sfft.rfftn(a, axes=axes, workers=fft_workers())


def irfftn(a, s, axes):
    return sfft.irfftn(a, s=s, axes=axes, workers=fft_workers())


def wavevectors(m: int, d: int, dx: float) -> list:
    """Angular wavenumbers for an rfftn layout of an m**d grid, broadcastable."""
    full = 2.0 * np.pi * np.fft.fftfreq(m, dx)
    half = 2.0 * np.pi * np.fft.rfftfreq(m, dx)
    ks = []
    for axis in range(d):
        kk = half if axis == d - 1 else full
        shape = [1] * d
        shape[axis] = kk.size
        ks.append(kk.reshape(shape))
    return ks


def embed(arr: np.ndarray, m: int, d: int) -> np.ndarray:
    """Zero-pad the trailing d axes of ``arr`` to length m (data at the low corner)."""
    n = arr.shape[-1]
    out = np.zeros(arr.shape[:-d] + (m,) * d)
    out[(Ellipsis,) + (slice(0, n),) * d] = arr
    return out


def crop(arr: np.ndarray, n: int, d: int) -> np.ndarray:
    return arr[(Ellipsis,) + (slice(0, n),) * d]


def linear_convolve(f: np.ndarray, kernel: np.ndarray, dx: float) -> np.ndarray:
    """Discrete linear convolution ``sum_y f(y) kernel(x - y) dx^d``.

    Both arrays share the same vertex-centred n**d grid; the kernel's origin
    sits at index n//2 along every axis. Values of either array outside the
    grid are taken as zero.
    """
    d = f.ndim
    n = f.shape[0]
    m = 2 * n
    axes = tuple(range(d))
    spec = rfftn(embed(f, m, d), axes) * rfftn(embed(kernel, m, d), axes)
    full = irfftn(spec, (m,) * d, axes)
    sl = tuple(slice(n // 2, n // 2 + n) for _ in range(d))
    return full[sl] * dx ** d


def truncated_green_hat(kmag: np.ndarray, d: int, R: float) -> np.ndarray:
    """Fourier transform of the -Laplacian Green's function cut off at radius R."""
    out = np.empty_like(kmag)
    nz = kmag > 0
    k = kmag[nz]
    if d == 2:
        out[nz] = (1.0 - special.j0(R * k)) / k ** 2 - R * math.log(R) * special.j1(R * k) / k
        out[~nz] = R * R / 4.0 - R * R * math.log(R) / 2.0
    elif d == 3:
        out[nz] = 2.0 * (np.sin(R * k / 2.0) / k) ** 2
        out[~nz] = R * R / 2.0
    else:
        raise ValueError("only d = 2, 3 supported")
    return out


@lru_cache(maxsize=4)
def green_multiplier(grid: GridSpec) -> np.ndarray:
    """rfftn-layout multiplier on the padded grid realising ``(-Delta)^{-1}``.

    The kernel is assembled on an oversampled grid large enough that the
    periodic images of the truncated Green's function never reach the
    separations that occur between two points of the unpadded grid, then
    cropped back to the padded grid.
    """
    d, n, dx = grid.d, grid.n, grid.dx
    m = grid.pad * n
    width = n * dx
    radius = math.sqrt(d) * width
    over = max(1, math.ceil((1.0 + math.sqrt(d)) / grid.pad - 1e-12))
    p = over * m
    ks = wavevectors(p, d, dx)
    kmag = np.sqrt(sum(k * k for k in ks))
    ghat = truncated_green_hat(kmag, d, radius)
    del kmag
    axes = tuple(range(d))
    kern = irfftn(ghat, (p,) * d, axes)
    del ghat
    if over > 1:
        idx = np.r_[0: m // 2, p - m // 2: p]
        kern = kern[np.ix_(*([idx] * d))]
    return rfftn(kern, axes)


@lru_cache(maxsize=8)
def padded_k2(m: int, d: int, dx: float) -> np.ndarray:
    ks = wavevectors(m, d, dx)
    return sum(k * k for k in ks)


def heat_padded(arr: np.ndarray, t: float, grid: GridSpec) -> np.ndarray:
    """Apply e^{t Delta} to the trailing grid axes with zero padding."""
    if t < 0:
        raise ValueError("heat semigroup requires t >= 0")
    if t == 0:
        return np.array(arr, dtype=float, copy=True)
    d, n = grid.d, grid.n
    m = grid.pad * n
    axes = tuple(range(arr.ndim - d, arr.ndim))
    spec = rfftn(embed(arr, m, d), axes)
    spec *= np.exp(-t * padded_k2(m, d, grid.dx))
    return crop(irfftn(spec, (m,) * d, axes), n, d)
