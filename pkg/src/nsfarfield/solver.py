"""Mild-solution Navier-Stokes integrator on R^d (viscosity 1).

The velocity lives on the vertex-centred n**d grid of a ``GridSpec``. The
linear part is integrated exactly in Fourier space; the nonlinear term
``P div(u (x) u)`` is assembled free-space: products are formed on the grid,
zero-padded, differentiated spectrally and the pressure is obtained with the
truncated-Green multiplier, so periodic images never feed back into the
analysis window. Time stepping is exponential RK2 (Cox-Matthews ETD2RK).
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .fields import GridSpec, VectorField
from .freespace import (crop, embed, green_multiplier, heat_padded, irfftn, padded_k2,
                        rfftn, wavevectors)


class CFLError(RuntimeError):
    """Advective CFL number exceeded; the run is aborted."""


class SupportError(ValueError):
    """Initial datum extends past the far-field window margin."""


# -- initial data ----------------------------------------------------------

SUPPORT_TOL = 1e-13  # relative level below which |a| counts as zero (above FFT roundoff)
FAMILIES = ("anisotropic", "radial", "tilted", "square", "halfspace", "oddmean", "zero")


@dataclass(frozen=True)
class InitialDataSpec:
    """Stream-function family for a = curl-perp(psi), scaled by ``amplitude``.

    ``target_sup`` (if set) rescales so that sup |a|(1+|x|) equals it; this
    is how small large-time data are produced.
    """

    family: str = "anisotropic"
    amplitude: float = 1.0
    target_sup: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown datum family {self.family!r}; choose from {FAMILIES}")


def stream_function(family: str, x1, x2):
    if family == "anisotropic":
        return np.exp(-x1 ** 2 - 2 * x2 ** 2)
    if family == "radial":
        return np.exp(-x1 ** 2 - x2 ** 2)
    if family == "tilted":
        return np.exp(-(x1 - 0.3) ** 2 - x2 ** 2 - 0.5 * x1 * x2)
    if family == "square":
        return np.exp(-x1 ** 2 - x2 ** 2) * (1.0 + x1 ** 2 * x2 ** 2)
    if family == "halfspace":
        return x2 * np.exp(-x1 ** 2 - 1.5 * x2 ** 2)
    if family == "oddmean":
        return x1 * np.exp(-x1 ** 2 - 2 * x2 ** 2)
    if family == "zero":
        return np.zeros_like(x1)
    raise ValueError(family)


def spectral_gradient(f: np.ndarray, grid: GridSpec) -> list:
    axes = tuple(range(grid.d))
    fh = rfftn(f, axes)
    ks = wavevectors(grid.n, grid.d, grid.dx)
    return [irfftn(1j * k * fh, grid.shape, axes) for k in ks]


def make_initial_data(spec: InitialDataSpec, grid: GridSpec) -> VectorField:
    """Divergence-free datum a = (-d2 psi, d1 psi[, 0]) with spectral derivatives."""
    mesh = grid.mesh()
    psi = spec.amplitude * stream_function(spec.family, mesh[0], mesh[1])
    if grid.d == 3:
        # planar swirl localised in x3; (-d2 psi, d1 psi, 0) stays divergence-free
        psi = psi * np.exp(-mesh[2] ** 2)
    comps = np.zeros((grid.d,) + grid.shape)
    if spec.family != "zero":
        g = spectral_gradient(psi, grid)
        comps[0] = -g[1]
        comps[1] = g[0]
    r = grid.radius()
    if spec.target_sup is not None and spec.family != "zero":
        comps *= spec.target_sup / float(np.max(np.sqrt(np.sum(comps ** 2, axis=0)) * (1 + r)))
    # support is judged on local differences of psi, free of spectral leakage
    local = np.sqrt(sum(gg ** 2 for gg in np.gradient(psi, grid.dx)))
    peak = float(local.max())
    tail = 0.0
    if peak > 0:
        outside = local <= SUPPORT_TOL * peak
        extent = float(r[~outside].max())
        if extent > grid.L / 4:
            raise SupportError(f"datum extends to |x| = {extent:.2f} > L/4 = {grid.L / 4:.2f}")
        mag = np.sqrt(np.sum(comps ** 2, axis=0))
        tail = float(mag[r > grid.L / 4].max() / mag.max())
    f = VectorField(grid, comps, 0.0, {"family": spec.family, "spectral_tail": tail})
    E = energy_matrix(f)
    f.meta["invariants"] = {"int_a1a2": float(E[0, 1]), "int_a1sq_minus_a2sq": float(E[0, 0] - E[1, 1])}
    return f


# -- linear operators -------------------------------------------------------

def energy_matrix(u: VectorField) -> np.ndarray:
    """E_hk = sum u_h u_k dx^d."""
    c = u.components.reshape(u.grid.d, -1)
    return (c @ c.T) * u.grid.cell_volume


def heat_semigroup(a: VectorField, t: float) -> VectorField:
    """Free-space e^{t Delta} a (zero-padded linear convolution)."""
    if t < 0:
        raise ValueError("heat semigroup requires t >= 0")
    return VectorField(a.grid, heat_padded(a.components, t, a.grid), a.time + t, dict(a.meta))


def _dealias_mask(m: int, d: int, dx: float) -> np.ndarray:
    cutoff = (2.0 / 3.0) * math.pi / dx
    mask = True
    for k in wavevectors(m, d, dx):
        mask = mask & (np.abs(k) <= cutoff * (1 + 1e-12))
    return mask


def _gradient_potential(f: VectorField):
    """Fourier data of f and of phi = Delta^{-1} div f on the grid (mean untouched)."""
    g = f.grid
    axes = tuple(range(1, g.d + 1))
    fh = rfftn(f.components, axes)
    ks = wavevectors(g.n, g.d, g.dx)
    k2 = padded_k2(g.n, g.d, g.dx)
    safe = np.where(k2 == 0, 1.0, k2)
    div = sum(1j * ks[j] * fh[j] for j in range(g.d))
    phi_hat = np.where(k2 == 0, 0.0, -div / safe)
    return fh, ks, phi_hat


def leray_project(f: VectorField) -> VectorField:
    """Spectral Leray projection f - grad Delta^{-1} div f on the grid.

    An exact orthogonal projector on the grid's Fourier modes, so it is
    idempotent to roundoff; the zero mode (mean) is left unchanged. Fields
    are assumed negligible at the box edge, as for the compact data used here.
    """
    g = f.grid
    fh, ks, phi_hat = _gradient_potential(f)
    out = fh - np.stack([1j * ks[j] * phi_hat for j in range(g.d)])
    comps = irfftn(out, g.shape, tuple(range(1, g.d + 1)))
    return VectorField(g, comps, f.time, dict(f.meta))


def gradient_part(f: VectorField) -> VectorField:
    """grad Delta^{-1} div f, the complement of ``leray_project``."""
    g = f.grid
    _, ks, phi_hat = _gradient_potential(f)
    grad = np.stack([1j * ks[j] * phi_hat for j in range(g.d)])
    return VectorField(g, irfftn(grad, g.shape, tuple(range(1, g.d + 1))), f.time)


def spectral_divergence(u: VectorField, window: float | None = None) -> float:
    """max |div u| / max_j |d_j u_j|, spectral derivatives on the grid.

    ``window`` restricts the maximum to |x| <= window; the free-space tail of
    a flow is cut at the box edge and the seam pollutes the full-box value.
    """
    g = u.grid
    axes = tuple(range(1, g.d + 1))
    grid_axes = tuple(range(g.d))
    uh = rfftn(u.components, axes)
    ks = wavevectors(g.n, g.d, g.dx)
    parts = [irfftn(1j * ks[j] * uh[j], g.shape, grid_axes) for j in range(g.d)]
    scale = max(float(np.max(np.abs(p))) for p in parts)
    div = sum(parts)
    if window is not None:
        div = div[g.radius() <= window]
    return float(np.max(np.abs(div))) / scale if scale > 0 else 0.0


# -- nonlinear term and pressure --------------------------------------------

def _stress_pairs(d: int) -> list:
    return [(h, k) for h in range(d) for k in range(h, d)]


class _Nonlinear:
    """Evaluates N = P div(u (x) u) and the pressure from grid velocities."""

    def __init__(self, grid: GridSpec, dealias: bool = True):
        self.grid = grid
        self.m = grid.pad * grid.n
        self.ks = wavevectors(self.m, grid.d, grid.dx)
        self.mask = _dealias_mask(self.m, grid.d, grid.dx) if dealias else 1.0
        self.green = green_multiplier(grid)
        self.axes = tuple(range(grid.d))
        self.pairs = _stress_pairs(grid.d)

    def stress_hat(self, u: np.ndarray) -> dict:
        d, m = self.grid.d, self.m
        return {hk: rfftn(embed(u[hk[0]] * u[hk[1]], m, d), self.axes) * self.mask
                for hk in self.pairs}

    def pressure_hat(self, S: dict) -> np.ndarray:
        # -Delta p = d_h d_k (u_h u_k)
        ks = self.ks
        src = 0.0
        for (h, k), s in S.items():
            w = 1.0 if h == k else 2.0
            src = src - w * ks[h] * ks[k] * s
        return self.green * src

    def __call__(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        S = self.stress_hat(u)
        p_hat = self.pressure_hat(S)
        out = np.empty((g.d,) + g.shape)
        for j in range(g.d):
            acc = 1j * self.ks[j] * p_hat
            for h in range(g.d):
                acc = acc + 1j * self.ks[h] * S[(min(j, h), max(j, h))]
            out[j] = crop(irfftn(acc, (self.m,) * g.d, self.axes), g.n, g.d)
        return out


def pressure_from_stress(u: VectorField, dealias: bool = False) -> np.ndarray:
    """Free-space pressure with p -> 0 at infinity (p0 = 0).

    A diagnostic of a given field, so the products are not truncated by
    default; pass ``dealias=True`` to get the pressure the integrator sees.
    """
    g = u.grid
    nl = _Nonlinear(g, dealias)
    p_hat = nl.pressure_hat(nl.stress_hat(u.components))
    return crop(irfftn(p_hat, (nl.m,) * g.d, nl.axes), g.n, g.d)


def recover_pressure(u: VectorField) -> np.ndarray:
    """Pressure of a divergence-free velocity, normalised so that p0 = 0."""
    if not np.any(u.components):
        return np.zeros(u.grid.shape)
    return pressure_from_stress(u)


# -- time integration -------------------------------------------------------

def _phi_functions(z: np.ndarray):
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24, (em1 - zs) / (zs * zs))
    return np.exp(z), phi1, phi2


@dataclass
class SimulationRecord:
    """Snapshots at the requested times plus per-step energy series."""

    grid: GridSpec
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    heat: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    K: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    step_energy: list = field(default_factory=list)
    step_K: list = field(default_factory=list)
    datum: VectorField | None = None
    meta: dict = field(default_factory=dict)

    def index(self, t: float) -> int:
        for i, s in enumerate(self.times):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return i
        raise KeyError(f"time {t} not recorded; have {self.times}")

    def field_at(self, t: float) -> VectorField:
        return self.fields[self.index(t)]

    def heat_at(self, t: float) -> VectorField:
        return self.heat[self.index(t)]

    def K_at(self, t: float) -> np.ndarray:
        return self.K[self.index(t)]

    def energy_at(self, t: float) -> np.ndarray:
        return self.energy[self.index(t)]


def solve_mild(a: VectorField, t_end: float, dt: float, record_at=None, nonlinear: bool = True,
               cfl_max: float = 0.5, progress=None) -> SimulationRecord:
    """Integrate from datum ``a`` to ``t_end``, recording at ``record_at`` (and t_end).

    Step sizes are shrunk uniformly between consecutive record times so each
    record time is hit exactly; no step exceeds ``dt``.
    """
    if not t_end > 0 or not dt > 0:
        raise ValueError("t_end and dt must be positive")
    g = a.grid
    targets = sorted({float(t) for t in (record_at or []) if 0 <= t <= t_end} | {float(t_end)})
    k2 = padded_k2(g.n, g.d, g.dx)
    nl = _Nonlinear(g) if nonlinear else None
    rec = SimulationRecord(grid=g, datum=a, meta={"dt": dt, "nonlinear": nonlinear})

    def forcing(uphys):
        # right-hand side contribution -N, transformed onto the state grid
        return -rfftn(nl(uphys), tuple(range(1, g.d + 1)))

    uh = rfftn(a.components, tuple(range(1, g.d + 1)))
    u = a.components.copy()
    t = 0.0
    E = energy_matrix(a)
    Kc = np.zeros_like(E)
    rec.step_times.append(0.0)
    rec.step_energy.append(E)
    rec.step_K.append(Kc.copy())
    phi_cache = {}

    def snapshot():
        rec.times.append(t)
        rec.fields.append(VectorField(g, u.copy(), t))
        rec.heat.append(heat_semigroup(a, t))
        rec.energy.append(E.copy())
        rec.K.append(Kc.copy())

    for target in targets:
        if target == 0.0:
            snapshot()
            continue
        nsteps = max(1, math.ceil((target - t) / dt - 1e-9))
        h = (target - t) / nsteps
        key = round(h, 15)
        if key not in phi_cache:
            phi_cache = {key: _phi_functions(-h * k2)}
        ez, p1, p2 = phi_cache[key]
        for _ in range(nsteps):
            umax = float(np.max(np.abs(u)))
            if umax * h / g.dx > cfl_max:
                raise CFLError(f"CFL {umax * h / g.dx:.3f} > {cfl_max} at t={t:.6g} "
                               f"(|u|_max={umax:.4g}, dt={h:.4g}, dx={g.dx:.4g})")
            if nonlinear:
                f0 = forcing(u)
                ah = ez * uh + h * p1 * f0
                ua = irfftn(ah, g.shape, tuple(range(1, g.d + 1)))
                f1 = forcing(ua)
                uh = ah + h * p2 * (f1 - f0)
            else:
                uh = ez * uh
            u = irfftn(uh, g.shape, tuple(range(1, g.d + 1)))
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(f"non-finite velocity at t={t + h:.6g}")
            t_new = rec.step_times[-1] + h
            flat = u.reshape(g.d, -1)
            E_new = (flat @ flat.T) * g.cell_volume
            Kc = Kc + 0.5 * h * (E + E_new)
            E = E_new
            t = t_new
            rec.step_times.append(t)
            rec.step_energy.append(E)
            rec.step_K.append(Kc.copy())
            if progress is not None:
                progress(t)
        t = target
        snapshot()
    return rec


def energy_matrices(record: SimulationRecord):
    """(times, E series, K series) at every step; K by cumulative trapezoid."""
    if not record.step_times:
        raise ValueError("empty record")
    return (np.array(record.step_times), np.array(record.step_energy), np.array(record.step_K))


# -- export -----------------------------------------------------------------

SNAPSHOT_MAGIC = b"NSFFSNAP"
_HEADER = struct.Struct("<8sqqdd")


def write_snapshot(path, u: VectorField, extra: dict | None = None) -> None:
    """Binary snapshot (header: magic, d, n, L, time; then LE float64 row-major
    components) plus a sidecar ``<path>.json`` with metadata."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, g.d, g.n, float(g.L), float(u.time)))
        fh.write(np.ascontiguousarray(u.components, dtype="<f8").tobytes())
    meta = {"d": g.d, "n": g.n, "L": g.L, "pad": g.pad, "time": u.time,
            "layout": "components[d][i1]..[id], x_i = -L + i*2L/n", "dtype": "<f8"}
    meta.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_snapshot(path, pad: int = 2) -> VectorField:
    with open(path, "rb") as fh:
        magic, d, n, L, time = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a snapshot file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridSpec(d=int(d), n=int(n), L=float(L), pad=pad)
    return VectorField(grid, data.reshape((grid.d,) + grid.shape).copy(), float(time))


def energy_csv(record: SimulationRecord) -> str:
    times, E, K = energy_matrices(record)
    d = record.grid.d
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pairs = _stress_pairs(d)
    w.writerow(["t"] + [f"E{h + 1}{k + 1}" for h, k in pairs] + [f"K{h + 1}{k + 1}" for h, k in pairs])
    for i, t in enumerate(times):
        w.writerow([repr(float(t))] + [repr(float(E[i, h, k])) for h, k in pairs]
                   + [repr(float(K[i, h, k])) for h, k in pairs])
    return buf.getvalue()


def temporal_order(a: VectorField, t_end: float, dt: float, levels: int = 4) -> dict:
    """Observed order from successive halvings of dt (max-norm differences at t_end)."""
    finals = [solve_mild(a, t_end, dt / 2 ** i).fields[-1].components for i in range(levels)]
    diffs = [float(np.max(np.abs(finals[i] - finals[i + 1]))) for i in range(levels - 1)]
    orders = [math.log2(diffs[i] / diffs[i + 1]) for i in range(levels - 2)]
    return {"dt": [dt / 2 ** i for i in range(levels)], "differences": diffs, "orders": orders,
            "order": min(orders)}


def padding_invariance(spec: InitialDataSpec, grid: GridSpec, t_end: float, dt: float) -> float:
    """Relative max difference at t_end between padding factors pad and 2 pad."""
    out = []
    for pad in (grid.pad, 2 * grid.pad):
        g = GridSpec(d=grid.d, n=grid.n, L=grid.L, pad=pad)
        out.append(solve_mild(make_initial_data(spec, g), t_end, dt).fields[-1].components)
    return float(np.max(np.abs(out[0] - out[1])) / max(float(np.max(np.abs(out[0]))), 1e-300))
