import math

import numpy as np
import pytest

from nsfarfield.fields import GridSpec, VectorField
from nsfarfield.kernels import gaussian
from nsfarfield.profile import is_isotropic
from nsfarfield.solver import (
    CFLError, InitialDataSpec, SupportError, energy_csv, energy_matrices, energy_matrix,
    gradient_part, heat_semigroup, leray_project, make_initial_data, read_snapshot,
    recover_pressure, solve_mild, spectral_divergence, spectral_gradient, write_snapshot,
)

GRID = GridSpec(n=256, L=32.0)


@pytest.fixture(scope="module")
def aniso():
    return make_initial_data(InitialDataSpec("anisotropic"), GRID)


@pytest.fixture(scope="module")
def short_run(aniso):
    return solve_mild(aniso, 0.0625, 1 / 128, record_at=[0.0, 0.01, 0.03125])


def gaussian_field(grid, t=1.0):
    return np.asarray(gaussian(grid.points(), t)).reshape(grid.shape)


# -- initial data -------------------------------------------------------------

def test_anisotropic_moments(aniso):
    E = energy_matrix(aniso)
    assert E[0, 0] == pytest.approx(math.pi / math.sqrt(2), abs=1e-8)
    assert E[1, 1] == pytest.approx(math.pi / (2 * math.sqrt(2)), abs=1e-8)
    assert abs(E[0, 1]) < 1e-8
    inv = aniso.meta["invariants"]
    assert inv["int_a1sq_minus_a2sq"] == pytest.approx(math.pi / (2 * math.sqrt(2)), abs=1e-8)


def test_radial_moments_isotropic():
    E = energy_matrix(make_initial_data(InitialDataSpec("radial"), GRID))
    assert E[0, 0] == pytest.approx(E[1, 1], rel=1e-12)
    assert abs(E[0, 1]) < 1e-12


def test_tilted_datum_is_non_orthogonal():
    a = make_initial_data(InitialDataSpec("tilted"), GRID)
    assert abs(a.meta["invariants"]["int_a1a2"]) > 1e-3


@pytest.mark.parametrize("family", ["anisotropic", "radial", "tilted", "square", "halfspace", "oddmean"])
def test_data_are_divergence_free(family):
    a = make_initial_data(InitialDataSpec(family), GRID)
    assert spectral_divergence(a) < 1e-12


def test_zero_datum():
    a = make_initial_data(InitialDataSpec("zero"), GRID)
    assert not np.any(a.components)
    assert np.all(energy_matrix(a) == 0)


def test_support_too_wide_is_rejected():
    with pytest.raises(SupportError):
        make_initial_data(InitialDataSpec("anisotropic"), GridSpec(n=128, L=16.0))


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        InitialDataSpec("vortex-sheet")


def test_target_sup_rescales():
    a = make_initial_data(InitialDataSpec("anisotropic", target_sup=0.1), GRID)
    weighted = a.magnitude() * (1 + GRID.radius())
    assert float(weighted.max()) == pytest.approx(0.1, rel=1e-12)


# -- heat semigroup -------------------------------------------------------------

def test_heat_semigroup_on_gaussian():
    G = gaussian_field(GRID)
    f = VectorField(GRID, np.stack([G, -G]))
    out = heat_semigroup(f, 0.75)
    target = gaussian_field(GRID, 1.75)
    assert np.max(np.abs(out.components[0] - target)) <= 1e-8
    assert np.max(np.abs(out.components[1] + target)) <= 1e-8


def test_heat_semigroup_identity_and_mass(aniso):
    assert np.array_equal(heat_semigroup(aniso, 0.0).components, aniso.components)
    G = gaussian_field(GRID, 0.5)
    f = VectorField(GRID, np.stack([G, 2 * G]))
    out = heat_semigroup(f, 2.0)
    dv = GRID.cell_volume
    np.testing.assert_allclose(out.components.sum(axis=(1, 2)) * dv,
                               f.components.sum(axis=(1, 2)) * dv, rtol=0, atol=1e-10)
    with pytest.raises(ValueError):
        heat_semigroup(f, -1.0)


def test_heat_sup_decay_rate():
    g = GridSpec(n=256, L=128.0)
    a = make_initial_data(InitialDataSpec("anisotropic"), g)
    ts = np.geomspace(4, 64, 9)
    sup = [float(np.max(np.abs(heat_semigroup(a, t).components))) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(sup), 1)[0]
    assert abs(slope + (g.d + 1) / 2) <= 0.2


# -- Leray projection ---------------------------------------------------------------

def test_leray_fixes_divergence_free():
    # the radial datum has no content near the Nyquist row, where rfft derivatives lose exactness
    a = make_initial_data(InitialDataSpec("radial"), GRID)
    out = leray_project(a)
    assert np.max(np.abs(out.components - a.components)) <= 1e-12 * np.max(np.abs(a.components))


def test_leray_kills_gradients():
    X1, X2 = GRID.mesh()
    phi = np.exp(-X1 ** 2 - 0.5 * X2 ** 2)
    grad = VectorField(GRID, np.stack([-2 * X1 * phi, -X2 * phi]))
    out = leray_project(grad)
    assert np.max(np.abs(out.components)) <= 1e-10 * np.max(np.abs(grad.components))


def test_leray_identities(rng):
    X1, X2 = GRID.mesh()
    comps = np.stack([np.exp(-(X1 - c) ** 2 - (X2 + b) ** 2 / 2) * w
                      for c, b, w in rng.normal(size=(2, 3))])
    f = VectorField(GRID, comps)
    P = leray_project(f)
    scale = np.max(np.abs(comps))
    assert spectral_divergence(P) <= 1e-10
    assert np.max(np.abs(leray_project(P).components - P.components)) <= 1e-12 * scale
    assert np.max(np.abs(P.components + gradient_part(f).components - comps)) <= 1e-10 * scale


# -- time stepping ----------------------------------------------------------------

def test_zero_datum_stays_zero():
    a = VectorField.zeros(GRID)
    rec = solve_mild(a, 0.02, 0.01)
    assert all(not np.any(u.components) for u in rec.fields)
    _, E, K = energy_matrices(rec)
    assert not np.any(E) and not np.any(K)


def test_linear_mode_is_heat_flow(aniso):
    rec = solve_mild(aniso, 0.25, 1 / 16, nonlinear=False)
    ref = heat_semigroup(aniso, 0.25)
    assert np.max(np.abs(rec.fields[-1].components - ref.components)) <= 1e-9


def test_record_times_hit_exactly(short_run):
    assert short_run.times == [0.0, 0.01, 0.03125, 0.0625]
    assert short_run.step_times[-1] == pytest.approx(0.0625, abs=1e-15)
    assert np.max(np.diff(short_run.step_times)) <= 1 / 128 + 1e-15


def test_divergence_stays_small(short_run):
    for u in short_run.fields:
        assert spectral_divergence(u, window=GRID.r_max) <= 1e-6


def test_energy_decreases(short_run):
    norms = [np.sqrt(np.trace(E)) for E in short_run.step_energy]
    assert np.all(np.diff(norms) <= 1e-14)


def test_k_symmetric_monotone(short_run):
    _, E, K = energy_matrices(short_run)
    assert np.all(K[0] == 0)
    for i in range(1, len(K)):
        np.testing.assert_array_equal(K[i], K[i].T)
        assert np.min(np.linalg.eigvalsh(K[i] - K[i - 1])) >= -1e-12
    # dK/dt = E by construction of the trapezoid rule
    times = np.array(short_run.step_times)
    dK = np.diff(K, axis=0) / np.diff(times)[:, None, None]
    np.testing.assert_allclose(dK, 0.5 * (E[1:] + E[:-1]), rtol=1e-12, atol=1e-14)


def test_k_linearization_small_t(aniso):
    # E'(0) = -2 int grad a_h . grad a_k is large for this datum (E11'/E11 = -14), so
    # K = t E(0) holds to 5% only up to t ~ 0.007; the second-order expansion is tight
    rec = solve_mild(aniso, 0.01, 1 / 1024, record_at=[0.005])
    E0 = rec.step_energy[0]
    grads = [spectral_gradient(c, GRID) for c in aniso.components]
    dE = -2 * GRID.cell_volume * np.array([[sum(np.sum(grads[h][i] * grads[k][i]) for i in range(2))
                                             for k in range(2)] for h in range(2)])
    assert dE[0, 0] / E0[0, 0] == pytest.approx(-14.0, rel=1e-9)

    def rel(t, K):
        return np.linalg.norm(K) / np.linalg.norm(t * E0)

    K5 = rec.K_at(0.005)
    assert rel(0.005, K5 - 0.005 * E0) <= 0.05
    K10 = rec.K_at(0.01)
    assert rel(0.01, K10 - 0.01 * E0 - 0.5e-4 * dE) <= 0.01


def test_initial_energy_recorded(short_run):
    E0 = short_run.energy_at(0.0)
    assert E0[0, 0] == pytest.approx(math.pi / math.sqrt(2), abs=1e-8)
    assert E0[1, 1] == pytest.approx(math.pi / (2 * math.sqrt(2)), abs=1e-8)


def test_radial_symmetry_inherited():
    # n=256 leaves a 5e-10 dealiasing residue in the products; n=512 resolves it
    grid = GridSpec(n=512, L=32.0)
    a = make_initial_data(InitialDataSpec("radial"), grid)
    rec = solve_mild(a, 0.0625, 1 / 64)
    u = rec.fields[-1].components
    scale = np.max(np.abs(u))
    # the periodic seam at |x|_inf = L breaks the mirror pairing; compare in the window
    win = np.max(np.abs(np.stack(grid.mesh())), axis=0) <= grid.r_max

    def flip(arr, axis):
        # x -> -x on the vertex-centred grid maps index i to n - i (mod n)
        return np.roll(np.flip(arr, axis=axis), 1, axis=axis)

    # a swirl is a pseudovector under x1 -> -x1: u1 even, u2 odd
    np.testing.assert_allclose(flip(u[0], 0)[win], u[0][win], atol=1e-10 * scale)
    np.testing.assert_allclose(flip(u[1], 0)[win], -u[1][win], atol=1e-10 * scale)
    # quarter turn R(x1, x2) = (-x2, x1): invariance means R^{-1} u(Rx) = u(x)
    at_rx = np.stack([flip(c, 0).T for c in u])
    turned = np.stack([at_rx[1], -at_rx[0]])
    rot = u
    np.testing.assert_allclose(turned[:, win], rot[:, win], atol=1e-10 * scale)
    for E in rec.step_energy:
        assert is_isotropic(E, tol=1e-8)


def test_cfl_violation_aborts(aniso):
    with pytest.raises(CFLError):
        solve_mild(aniso, 0.5, 0.5)


def test_nonpositive_times_rejected(aniso):
    with pytest.raises(ValueError):
        solve_mild(aniso, 0.0, 0.1)
    with pytest.raises(ValueError):
        solve_mild(aniso, 0.1, 0.0)


def test_three_dimensional_smoke():
    g = GridSpec(d=3, n=32, L=32.0)
    a = make_initial_data(InitialDataSpec("radial"), g)
    rec = solve_mild(a, 0.02, 0.01)
    assert rec.fields[-1].components.shape == (3, 32, 32, 32)
    assert np.all(np.isfinite(rec.fields[-1].components))


# -- pressure ------------------------------------------------------------------

def test_pressure_of_zero_field():
    assert not np.any(recover_pressure(VectorField.zeros(GRID)))


def test_pressure_of_circular_vortex():
    # u = 2 e^{-r^2}(x2, -x1): swirl balance dp/dr = u_theta^2 / r gives p = -e^{-2 r^2}
    a = make_initial_data(InitialDataSpec("radial"), GRID)
    p = recover_pressure(a)
    assert np.max(np.abs(p + np.exp(-2 * GRID.radius() ** 2))) <= 1e-6


def test_far_field_pressure_sign(short_run):
    # with E11 > E22 the pressure along the x1 axis is positive far out
    u = short_run.field_at(0.0625)
    p = recover_pressure(u)
    i0 = GRID.n // 2
    far = GRID.axis >= 8
    assert np.all(p[far, i0][GRID.axis[far] <= 16] > 0)


# -- export ------------------------------------------------------------------------

def test_snapshot_round_trip(tmp_path, short_run):
    u = short_run.field_at(0.03125)
    path = tmp_path / "u.bin"
    write_snapshot(path, u, {"family": "anisotropic"})
    back = read_snapshot(path)
    assert back.time == u.time
    assert back.grid == u.grid
    np.testing.assert_array_equal(back.components, u.components)
    assert (tmp_path / "u.bin.json").exists()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        read_snapshot(bad)


def test_energy_csv(short_run):
    lines = energy_csv(short_run).splitlines()
    assert lines[0] == "t,E11,E12,E22,K11,K12,K22"
    assert len(lines) == len(short_run.step_times) + 1
