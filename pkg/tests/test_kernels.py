import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nsfarfield.fields import GridSpec, ResolutionError
from nsfarfield.freespace import linear_convolve
from nsfarfield.kernels import (KernelIndex, all_indices, check_gshift, decomposition_residual,
                                divergence_residual, eval_F, eval_F1, eval_F2, eval_Psi, evaluate,
                                gamma_const, gaussian, half_gamma_moment, l1_norm, l1_norm_scaling,
                                leading_term, sample_on_grid)

I111 = KernelIndex(1, 1, 1)

# ||F_{1;1,1}(., 1)||_{L^1(R^2)} from an independent polar quadrature
# (scipy.integrate.quad in r and theta with sign-change breakpoints,
# scipy.special.gammainc, leading-term tail beyond r = 200).
L1_ORACLE = 0.48371533672803285


def third_derivative_gaussian(idx, x, s):
    """d_j d_h d_k g_s(x) in closed form (independent of the gamma-function path)."""
    j, h, k = idx.zero_based(len(x))
    x = np.asarray(x, dtype=float)
    sig = (x[k] if j == h else 0) + (x[h] if j == k else 0) + (x[j] if h == k else 0)
    g = (4 * math.pi * s) ** (-len(x) / 2) * math.exp(-x @ x / (4 * s))
    return g * (sig / (4 * s * s) - x[j] * x[h] * x[k] / (8 * s ** 3))


# -- gaussian ----------------------------------------------------------------

def test_gaussian_values():
    assert gaussian(np.zeros(2), 1.0) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert gaussian(np.array([2.0, 0.0]), 1.0) == pytest.approx(math.exp(-1) / (4 * math.pi), rel=1e-15)
    assert gaussian(np.array([2.0, 0.0]), 1.0) == pytest.approx(0.0292749, abs=1e-7)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_gaussian_rejects_nonpositive_time(t):
    with pytest.raises(ValueError):
        gaussian(np.zeros(2), t)


def test_gaussian_semigroup_by_padded_convolution():
    grid = GridSpec(n=256, L=12.0)
    pts = grid.points()
    gs = np.asarray(gaussian(pts, 0.5)).reshape(grid.shape)
    gt = np.asarray(gaussian(pts, 1.5)).reshape(grid.shape)
    want = np.asarray(gaussian(pts, 2.0)).reshape(grid.shape)
    got = linear_convolve(gs, gt, grid.dx)
    assert np.max(np.abs(got - want)) <= 1e-8


# -- F1, F2 ------------------------------------------------------------------

def test_F1_closed_form_value():
    assert eval_F1(I111, np.array([1.0, 0.0]), 1.0) == pytest.approx(-math.exp(-0.25) / (8 * math.pi), rel=1e-14)
    assert eval_F1(I111, np.array([1.0, 0.0]), 1.0) == pytest.approx(-0.0309875, abs=1e-7)


def test_kernel_vanishes_at_origin():
    for idx in all_indices(2):
        assert eval_F1(idx, np.zeros(2), 0.3) == 0.0
        assert eval_F(idx, np.zeros(2), 0.3) == 0.0


def test_half_gamma_moment_limit():
    big = half_gamma_moment(3, 40.0)
    quad = integrate.quad(lambda lam: lam ** 3 * math.exp(-lam * lam), 0, np.inf)[0]
    assert big == pytest.approx(0.5, abs=1e-12)
    assert abs(big - quad) <= 1e-10
    assert half_gamma_moment(2, 1.3) == pytest.approx(
        integrate.quad(lambda lam: lam ** 2 * math.exp(-lam * lam), 0, 1.3)[0], abs=1e-12)


def test_F2_against_time_integral_of_third_derivatives():
    x = np.array([1.0, 0.5])
    for idx in (I111, KernelIndex(1, 2, 2), KernelIndex(2, 1, 2)):
        want = integrate.quad(lambda s: third_derivative_gaussian(idx, x, s), 0.5, np.inf,
                              epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        assert abs(eval_F2(idx, x, 0.5) - want) <= 1e-10


def test_third_derivative_oracle_by_finite_differences():
    # the closed form used as oracle above, spot-checked by central differences
    x = np.array([1.0, 0.5])
    h = 1e-3

    def g(y):
        return gaussian(y, 0.5)

    e1 = np.array([h, 0.0])
    fd = (g(x + 1.5 * e1) - 3 * g(x + 0.5 * e1) + 3 * g(x - 0.5 * e1) - g(x - 1.5 * e1)) / h ** 3
    assert fd == pytest.approx(third_derivative_gaussian(I111, x, 0.5), rel=1e-5)


def test_F2_tends_to_leading_term():
    x = np.array([40.0, 0.0])
    assert eval_F2(I111, x, 1.0) == pytest.approx(leading_term(I111, x), rel=1e-12)


# -- leading term and Psi ---------------------------------------------------------

def test_leading_term_values():
    assert leading_term(I111, np.array([1.0, 0.0])) == pytest.approx(-1 / math.pi, rel=1e-14)
    assert leading_term(KernelIndex(1, 2, 2), np.array([0.0, 1.0])) == 0.0


def test_leading_term_singular_at_origin():
    with pytest.raises(ValueError):
        leading_term(I111, np.zeros(2))


@pytest.mark.parametrize("lam", [2.0, 5.0])
def test_leading_term_homogeneity(lam, rng):
    x = rng.normal(size=(20, 2))
    for idx in all_indices(2):
        np.testing.assert_allclose(leading_term(idx, lam * x), lam ** -3 * leading_term(idx, x), rtol=1e-12)


def test_decomposition_identity_sample():
    radii = np.logspace(-1, 1, 10)
    times = np.logspace(-1, 1, 10)
    worst = 0.0
    for idx in all_indices(2):
        for t in times:
            th = np.linspace(0.1, 2 * np.pi, 10)
            pts = radii[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
            worst = max(worst, float(np.max(decomposition_residual(idx, pts, t))))
    assert worst <= 1e-8


def test_decomposition_identity_three_dimensions(rng):
    pts = rng.normal(scale=2.0, size=(200, 3))
    for idx in all_indices(3):
        assert np.max(decomposition_residual(idx, pts, 0.8)) <= 1e-8


def test_psi_gaussian_decay():
    near = abs(eval_Psi(I111, np.array([1.0, 0.0])))
    # |Psi(y)| <= C |y|^4 exp(-|y|^2/4): the normalised envelope must not grow
    radii = np.array([4.0, 6.0, 8.0, 10.0, 12.0, 14.0])
    vals = np.abs(eval_Psi(I111, np.stack([radii, np.zeros_like(radii)], axis=1)))
    env = vals * np.exp(radii ** 2 / 4) / radii ** 4
    assert np.all(np.diff(env) < 0)
    assert abs(eval_Psi(I111, np.array([9.0, 0.0]))) <= 1e-6 * near


def test_evaluate_bundles_parts():
    v = evaluate(KernelIndex(1, 1, 2), np.array([0.7, -0.4]), 0.6)
    assert v.total == v.part1 + v.part2
    r = math.hypot(0.7, 0.4)
    assert v.total == pytest.approx(v.leading + r ** -3 * v.psi, abs=1e-10)


def test_gamma_const():
    assert gamma_const(2) == pytest.approx(1 / math.pi, rel=1e-15)
    assert gamma_const(3) == pytest.approx(0.75 / math.pi, rel=1e-15)
    assert all(gamma_const(d) > 0 for d in range(2, 11))
    with pytest.raises(ValueError):
        gamma_const(1)


# -- properties --------------------------------------------------------------

coord = st.floats(min_value=-6, max_value=6, allow_nan=False)
times = st.floats(min_value=0.05, max_value=5.0)


@settings(max_examples=200, deadline=None)
@given(x1=coord, x2=coord, t=times, j=st.integers(1, 2), h=st.integers(1, 2), k=st.integers(1, 2))
def test_index_symmetry(x1, x2, t, j, h, k):
    x = np.array([x1, x2])
    a, b = KernelIndex(j, h, k), KernelIndex(j, k, h)
    assert eval_F1(a, x, t) == eval_F1(b, x, t)
    assert eval_F2(a, x, t) == pytest.approx(eval_F2(b, x, t), rel=1e-13, abs=1e-300)
    if x1 * x1 + x2 * x2 > 1e-6:
        assert leading_term(a, x) == pytest.approx(leading_term(b, x), rel=1e-13, abs=1e-300)
        assert eval_Psi(a, x) == pytest.approx(eval_Psi(b, x), rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(x1=coord, x2=coord, t=times)
def test_F1_is_odd(x1, x2, t):
    x = np.array([x1, x2])
    for idx in all_indices(2):
        assert eval_F1(idx, -x, t) == -eval_F1(idx, x, t)


@settings(max_examples=100, deadline=None)
@given(x1=coord, x2=coord, t=times, lam=st.sampled_from([2.0, 3.0]))
def test_parabolic_self_similarity(x1, x2, t, lam):
    x = np.array([x1, x2])
    for idx in all_indices(2):
        lhs = eval_F(idx, lam * x, lam * lam * t)
        rhs = lam ** -3 * eval_F(idx, x, t)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-15)


# -- grid checks ----------------------------------------------------------------

@pytest.mark.parametrize("t", [0.25, 1.0])
def test_gaussian_shift(t):
    grid = GridSpec(n=512, L=16.0)
    assert check_gshift(I111, t, grid) <= 1e-6


def test_gshift_rejects_small_box():
    with pytest.raises(ResolutionError):
        check_gshift(I111, 4.0, GridSpec(n=64, L=8.0))


def test_gshift_rejects_coarse_grid():
    with pytest.raises(ResolutionError):
        check_gshift(I111, 0.01, GridSpec(n=64, L=16.0))


def test_convolution_with_discrete_impulse_is_identity():
    grid = GridSpec(n=128, L=8.0)
    f = sample_on_grid(I111, 0.5, grid)
    delta = np.zeros(grid.shape)
    delta[grid.origin_index()] = 1.0 / grid.cell_volume
    out = linear_convolve(f, delta, grid.dx)
    assert np.max(np.abs(out - f)) <= 1e-15 * np.max(np.abs(f)) * 10


def test_divergence_free_in_output_index():
    grid = GridSpec(n=256, L=8.0)
    for h, k in [(1, 1), (1, 2), (2, 2)]:
        res = divergence_residual(h, k, 1.0, grid)
        assert res["symbol"] <= 1e-8
        assert res["physical"] <= 1e-8


def test_l1_norm_matches_quadrature_oracle():
    val = l1_norm(I111, 1.0)
    assert val > 0 and math.isfinite(val)
    assert val == pytest.approx(L1_ORACLE, rel=1e-6)


def test_l1_scaling_pairs_shape():
    pairs = l1_norm_scaling([1.0], per_octave=64, n_theta=512)
    assert pairs[0][0] == 1.0
    assert pairs[0][1] == pytest.approx(L1_ORACLE, rel=1e-4)
