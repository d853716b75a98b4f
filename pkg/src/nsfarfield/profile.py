"""Algebra of the far-field potential profile driven by an energy matrix.

For a d x d matrix K (the time-integrated energy matrix) the profile is the
gradient of

    Pi(x) = gamma_d * (tr K / (d |x|^d) - x.K.x / |x|^{d+2}),

homogeneous of degree -d. Its gradient equals P(x)/|x|^{d+4} with P a vector
of homogeneous cubics, and P vanishes identically exactly when K is a
multiple of the identity.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .kernels import gamma_const


class ContractError(ValueError):
    """An input violates a documented precondition."""


def sigma(j: int, h: int, k: int, x) -> float:
    """delta_jh x_k + delta_jk x_h + delta_hk x_j with 1-based indices."""
    x = np.asarray(x, dtype=float)
    s = 0.0
    if j == h:
        s = s + x[..., k - 1]
    if j == k:
        s = s + x[..., h - 1]
    if h == k:
        s = s + x[..., j - 1]
    return s


def _matrix(K, d=None) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ContractError(f"energy matrix must be square, got shape {K.shape}")
    if d is not None and K.shape[0] != d:
        raise ContractError(f"energy matrix is {K.shape[0]}x{K.shape[0]}, expected d={d}")
    return K


def _require_symmetric(K, tol=1e-12):
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > tol * scale:
        raise ContractError("energy matrix must be symmetric")


def _points(x):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    return (arr.reshape(1, -1) if single else arr), single


def _nonzero(pts):
    r2 = np.sum(pts ** 2, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("the profile is singular at x = 0")
    return r2


@dataclass(frozen=True)
class AsymptoticProfile:
    """Potential profile for a fixed matrix K in dimension d."""

    K: np.ndarray
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "K", _matrix(self.K, self.dim))

    @property
    def gamma_d(self) -> float:
        return gamma_const(self.dim)

    def Pi(self, x):
        return eval_Pi(self, x)

    def grad_Pi(self, x):
        return eval_gradPi(self, x)


def eval_Pi(profile: AsymptoticProfile, x):
    """Scalar potential; x may be a point or an (..., d) array."""
    pts, single = _points(x)
    r2 = _nonzero(pts)
    d = profile.dim
    K = profile.K
    quad = np.einsum("...i,ij,...j->...", pts, K, pts)
    val = profile.gamma_d * (np.trace(K) / (d * r2 ** (d / 2)) - quad / r2 ** ((d + 2) / 2))
    return float(val[0]) if single else val


def eval_P(K, x):
    """Vector of cubics gamma_d sum_hk ((d+2) x_j x_h x_k - |x|^2 sigma_jhk(x)) K_hk."""
    K = _matrix(K)
    d = K.shape[0]
    pts, single = _points(x)
    quad = np.einsum("...i,ij,...j->...", pts, K, pts)
    r2 = np.sum(pts ** 2, axis=-1)
    lin = pts @ K.T + pts @ K + np.trace(K) * pts
    val = gamma_const(d) * ((d + 2) * pts * quad[..., None] - r2[..., None] * lin)
    return val[0] if single else val


def eval_gradPi(profile: AsymptoticProfile, x):
    pts, single = _points(x)
    r2 = _nonzero(pts)
    d = profile.dim
    val = eval_P(profile.K, pts) / (r2 ** ((d + 4) / 2))[..., None]
    return val[0] if single else val


def eval_Q(K, x, j: int):
    """Q_j = sum_hk (|x|^2 sigma_jhk - (d+2) x_j x_h x_k) K_hk  (= -P_j / gamma_d)."""
    K = _matrix(K)
    _require_symmetric(K)
    d = K.shape[0]
    pts, single = _points(x)
    val = -eval_P(K, pts)[..., j - 1] / gamma_const(d)
    return float(val[0]) if single else val


def pressure_profile(E, x):
    """p - p0 predicted from the instantaneous energy matrix E (no p0)."""
    E = _matrix(E)
    return -eval_Pi(AsymptoticProfile(E, E.shape[0]), x)


# -- exact polynomial representation --------------------------------------

def q_coefficients(K, j: int) -> dict:
    """Monomial coefficients of Q_j as {exponent tuple: coefficient}."""
    K = _matrix(K)
    d = K.shape[0]
    coef = defaultdict(float)

    def mono(*idx):
        e = [0] * d
        for i in idx:
            e[i] += 1
        return tuple(e)

    jj = j - 1
    for h in range(d):
        for k in range(d):
            c = K[h, k]
            if c == 0:
                continue
            lin = []
            if jj == h:
                lin.append(k)
            if jj == k:
                lin.append(h)
            if h == k:
                lin.append(jj)
            for l in range(d):
                for m in lin:
                    coef[mono(l, l, m)] += c
            coef[mono(jj, h, k)] -= (d + 2) * c
    return dict(coef)


def differentiate(coef: dict, axis: int) -> dict:
    """Partial derivative of a monomial-coefficient polynomial (0-based axis)."""
    out = defaultdict(float)
    for e, c in coef.items():
        if e[axis] == 0:
            continue
        ne = list(e)
        ne[axis] -= 1
        out[tuple(ne)] += c * e[axis]
    return dict(out)


def poly_is_zero(coef: dict, tol: float) -> bool:
    return all(abs(c) <= tol for c in coef.values())


def is_isotropic(K, tol: float = 1e-9) -> bool:
    """True when K is tr(K)/d times the identity, relative to max(1, |K|_max)."""
    K = _matrix(K)
    _require_symmetric(K)
    d = K.shape[0]
    dev = K - np.trace(K) / d * np.eye(d)
    scale = max(1.0, float(np.max(np.abs(K))))
    return bool(np.max(np.abs(dev)) <= max(tol * scale, 1e-12))


# -- exceptional directions -----------------------------------------------

@dataclass
class DirectionSet:
    """Zeros of Q_j on the unit circle (angles in radians, sorted in [0, 2 pi))."""

    j: int
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    all_directions: bool = False

    @property
    def degrees(self) -> np.ndarray:
        return np.degrees(self.angles)

    def __len__(self):
        return len(self.angles)

    def angular_distance(self, theta) -> np.ndarray:
        """Smallest angular distance (radians) from theta to the set."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.all_directions:
            return np.zeros_like(theta)
        if len(self.angles) == 0:
            return np.full_like(theta, np.inf)
        diff = np.abs(theta[:, None] - self.angles[None, :]) % (2 * np.pi)
        return np.min(np.minimum(diff, 2 * np.pi - diff), axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle_deg", "residual"])
        if self.all_directions:
            w.writerow(["all", 0.0])
        for a, r in zip(self.degrees, self.residuals):
            w.writerow([f"{a:.12f}", f"{r:.3e}"])
        return buf.getvalue()


def real_cubic_roots(c0: float, c1: float, c2: float, c3: float, tol: float = 0.0) -> list:
    """Real roots of c0 + c1 t + c2 t^2 + c3 t^3, degenerate degrees included.

    Three-real-root case uses the trigonometric (Viete) form, one-root case
    Cardano; roots are Newton-polished on the original polynomial.
    """
    scale = max(abs(c0), abs(c1), abs(c2), abs(c3))
    if scale == 0:
        raise ValueError("zero polynomial")
    if abs(c3) <= tol * scale:
        if abs(c2) <= tol * scale:
            if abs(c1) <= tol * scale:
                return []
            return [-c0 / c1]
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        # stable quadratic formula
        q = -0.5 * (c1 + math.copysign(sq, c1)) if c1 != 0 else -0.5 * sq
        roots = []
        if q != 0:
            roots.append(c0 / q)
        roots.append(q / c2)
        if disc == 0:
            roots = [-c1 / (2 * c2)]
        return sorted(roots)

    a, b, c = c2 / c3, c1 / c3, c0 / c3
    p = b - a * a / 3.0
    q = 2 * a ** 3 / 27.0 - a * b / 3.0 + c
    shift = -a / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        sq = math.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        roots = [float(u + v) + shift]
    elif p == 0:
        roots = [shift]
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = min(1.0, max(-1.0, arg))
        phi = math.acos(arg) / 3.0
        roots = [m * math.cos(phi - 2 * math.pi * i / 3.0) + shift for i in range(3)]

    def f(t):
        return ((c3 * t + c2) * t + c1) * t + c0

    def fp(t):
        return (3 * c3 * t + 2 * c2) * t + c1

    out = []
    for t in roots:
        for _ in range(4):
            dfv = fp(t)
            if dfv == 0:
                break
            step = f(t) / dfv
            t -= step
            if abs(step) <= 1e-16 * max(1.0, abs(t)):
                break
        out.append(t)
    return sorted(out)


def _bisect_angle(fn, theta, width=1e-6, tol=1e-14):
    lo, hi = theta - width, theta + width
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        return theta
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = fn(mid)
        if fm == 0:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def exceptional_directions_2d(K, j: int, tol: float = 1e-12) -> DirectionSet:
    """Angles where Q_j(cos t, sin t) = 0 for a 2 x 2 symmetric K."""
    K = _matrix(K, 2)
    _require_symmetric(K)
    coef = q_coefficients(K, j)
    c = [coef.get((3 - i, i), 0.0) for i in range(4)]  # x1^3, x1^2 x2, x1 x2^2, x2^3
    scale = max(1.0, float(np.max(np.abs(K))))
    if max(abs(v) for v in c) <= tol * scale:
        return DirectionSet(j=j, all_directions=True)

    if abs(K[0, 1]) <= tol * scale:
        # Q_1 = (K11 - K22) x1 (3 x2^2 - x1^2), Q_2 = (K11 - K22) x2 (x2^2 - 3 x1^2)
        base = np.array([90.0, 270.0, 30.0, 150.0, 210.0, 330.0]) if j == 1 else \
            np.array([0.0, 180.0, 60.0, 120.0, 240.0, 300.0])
        angles = np.sort(np.radians(base))
    else:
        cands = []
        if abs(c[3]) <= tol * scale:
            cands += [math.pi / 2, 3 * math.pi / 2]
        for tau in real_cubic_roots(c[0], c[1], c[2], c[3], tol=tol):
            th = math.atan(tau)
            cands += [th % (2 * math.pi), (th + math.pi) % (2 * math.pi)]

        def q_theta(th):
            return float(eval_Q(K, np.array([math.cos(th), math.sin(th)]), j))

        polished = sorted(_bisect_angle(q_theta, th) % (2 * math.pi) for th in cands)
        angles = []
        for th in polished:
            if not angles or abs(th - angles[-1]) > 1e-9:
                angles.append(th)
        if len(angles) > 1 and (angles[0] + 2 * math.pi - angles[-1]) <= 1e-9:
            angles.pop()
        angles = np.array(angles)
    om = np.stack([np.cos(angles), np.sin(angles)], axis=1) if len(angles) else np.zeros((0, 2))
    res = np.abs(eval_Q(K, om, j)) if len(angles) else np.zeros(0)
    return DirectionSet(j=j, angles=angles, residuals=np.atleast_1d(res))


def on_exceptional_set(K, j: int, omega, tol: float = 1e-10) -> np.ndarray:
    """Membership test |Q_j(omega)| <= tol (any d, omega on the sphere)."""
    K = _matrix(K)
    val = np.abs(eval_Q(K, omega, j))
    scale = max(1.0, float(np.max(np.abs(K))))
    return val <= tol * scale


def cns_equivalence_check(K, samples: int = 20, rng=None, tol: float = 1e-9) -> dict:
    """Evaluate the four equivalent characterisations of a vanishing profile.

    (1) K isotropic; (2) every Q_j vanishes on ``samples`` random points;
    (3) some Q_j vanishes there; (4) some d_j Q_j vanishes identically
    (checked on the exact derivative coefficients).
    """
    K = _matrix(K)
    _require_symmetric(K)
    d = K.shape[0]
    rng = np.random.default_rng(rng)
    pts = rng.normal(size=(samples, d))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    scale = max(1.0, float(np.max(np.abs(K))))
    thr = tol * scale * (d + 2) * 4
    q_zero = [bool(np.all(np.abs(eval_Q(K, pts, j)) <= thr)) for j in range(1, d + 1)]
    dq_zero = [poly_is_zero(differentiate(q_coefficients(K, j), j - 1), thr) for j in range(1, d + 1)]
    a1 = is_isotropic(K, tol)
    a2 = all(q_zero)
    a3 = any(q_zero)
    a4 = any(dq_zero)
    return {
        "isotropic": a1,
        "all_Q_zero": a2,
        "some_Q_zero": a3,
        "some_dQ_zero": a4,
        "equivalent": a1 == a2 == a3 == a4,
    }
