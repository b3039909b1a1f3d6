import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiephase.errors import ConfigError, NumericError
from tiephase.optics import Grid
from tiephase.photons import IntensityFrame
from tiephase.tie import (DerivativeMap, QuantumCorrection, TieOptions, axial_derivative,
                          k_opt_from_stacks, noise_artifact_spectrum, predicted_noise_reduction,
                          quantum_subtract, radial_power_spectrum, solve_tie)


def dense_laplacian(grid):
    """Periodic spectral Laplacian as an explicit matrix on the flattened image."""
    n = grid.nx * grid.ny
    fx = np.fft.fft(np.eye(grid.nx), axis=0)
    fy = np.fft.fft(np.eye(grid.ny), axis=0)
    F = np.kron(fy, fx)
    qx = np.fft.fftfreq(grid.nx, grid.pitch)
    qy = np.fft.fftfreq(grid.ny, grid.pitch)
    q2 = (qy[:, None] ** 2 + qx[None, :] ** 2).ravel()
    L = np.linalg.inv(F) @ np.diag(-4 * np.pi**2 * q2) @ F
    assert L.shape == (n, n)
    return L.real


def test_single_mode_closed_form():
    g = Grid(32, 16, 2.0, 0.8)
    x, y = g.coords()
    q0 = 3 / (32 * 2.0)
    A, I0, dz = 0.7, 250.0, 40.0
    didz = DerivativeMap(g, np.broadcast_to(A * np.cos(2 * np.pi * q0 * x), g.shape))
    phi = solve_tie(didz, TieOptions(dz=dz, k_wave=g.k, illum_mean=I0))
    want = g.k * A / (4 * np.pi**2 * I0 * q0**2) * np.cos(2 * np.pi * q0 * x)
    np.testing.assert_allclose(phi.values, np.broadcast_to(want, g.shape), atol=1e-8)


def test_dense_solve_agrees():
    g = Grid(8, 8, 1.5, 0.7)
    rng = np.random.default_rng(4)
    d = rng.normal(size=g.shape)
    I0 = 12.0
    L = dense_laplacian(g)
    # -k dI/dz = I0 lap(phi); the minimum-norm solution is the zero-mean one
    rhs = -g.k * (d - d.mean()).ravel() / I0
    want, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    phi = solve_tie(DerivativeMap(g, d), TieOptions(dz=1.0, k_wave=g.k, illum_mean=I0))
    np.testing.assert_allclose(phi.values.ravel(), want - want.mean(), atol=1e-8)


def test_solution_satisfies_pde():
    g = Grid(16, 16, 1.0, 0.5)
    d = np.random.default_rng(2).normal(size=g.shape)
    d -= d.mean()
    phi = solve_tie(DerivativeMap(g, d), TieOptions(dz=1.0, k_wave=g.k, illum_mean=3.0))
    lap = (dense_laplacian(g) @ phi.values.ravel()).reshape(g.shape)
    np.testing.assert_allclose(-g.k * d, 3.0 * lap, atol=1e-9)


def test_map_normalisation_matches_scalar_for_constant_map():
    g = Grid(16, 16, 1.0, 0.5)
    d = DerivativeMap(g, np.random.default_rng(3).normal(size=g.shape))
    a = solve_tie(d, TieOptions(dz=1.0, k_wave=g.k, illum_mean=5.0))
    b = solve_tie(d, TieOptions(dz=1.0, k_wave=g.k, illum_mean=np.full(g.shape, 5.0)))
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_regularisation_damps_low_frequencies():
    g = Grid(32, 32, 1.0, 0.5)
    d = DerivativeMap(g, np.random.default_rng(5).normal(size=g.shape))
    plain = solve_tie(d, TieOptions(dz=1.0, k_wave=g.k, illum_mean=1.0))
    reg = solve_tie(d, TieOptions(dz=1.0, k_wave=g.k, illum_mean=1.0, regularization_eps=1.0))
    assert reg.values.std() < plain.values.std()


def test_mirror_mode_solves_smooth_input():
    g = Grid(16, 16, 1.0, 0.5)
    x, y = g.coords()
    d = DerivativeMap(g, np.cos(2 * np.pi * x / 32.0) * np.ones(g.shape))
    phi = solve_tie(d, TieOptions(dz=1.0, k_wave=g.k, illum_mean=1.0, mirror=True))
    assert phi.values.shape == g.shape
    assert abs(phi.values.mean()) < 1e-12


def test_solver_errors():
    g = Grid(8, 8, 1.0, 0.5)
    bad = np.zeros(g.shape)
    bad[0, 0] = np.nan
    with pytest.raises(NumericError):
        solve_tie(DerivativeMap(g, bad), TieOptions(dz=1.0, k_wave=1.0, illum_mean=1.0))
    with pytest.raises(NumericError):
        solve_tie(DerivativeMap(g, np.zeros(g.shape)), TieOptions(dz=1.0, k_wave=1.0, illum_mean=0.0))
    with pytest.raises(ConfigError):
        TieOptions(dz=0.0, k_wave=1.0)
    with pytest.raises(ConfigError):
        TieOptions(dz=1.0, k_wave=1.0, use_uniform_approx=False)


def test_axial_derivative():
    g = Grid(8, 8, 1.0, 0.5)
    a = IntensityFrame(g, np.full(g.shape, 7.0))
    b = IntensityFrame(g, np.full(g.shape, 3.0))
    np.testing.assert_allclose(axial_derivative(a, b, 2.0).values, 1.0)


def test_quantum_subtract_and_zero_gain():
    g = Grid(8, 8, 1.0, 0.5)
    rng = np.random.default_rng(0)
    s = IntensityFrame(g, rng.normal(size=g.shape))
    i = IntensityFrame(g, rng.normal(size=g.shape))
    m = np.full(g.shape, 0.1)
    np.testing.assert_array_equal(quantum_subtract(s, i, m, QuantumCorrection(0.0)).counts, s.counts)
    out = quantum_subtract(s, i, m, QuantumCorrection(0.5))
    np.testing.assert_allclose(out.counts, s.counts - 0.5 * (i.counts - 0.1))
    with pytest.raises(ConfigError):
        QuantumCorrection(1.5)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_k_opt_recovers_linear_gain(k, seed):
    rng = np.random.default_rng(seed)
    i = rng.normal(size=(20, 6, 6))
    s = k * i + 3.0
    assert k_opt_from_stacks(s, i) == pytest.approx(k, abs=1e-12)
    np.testing.assert_allclose(k_opt_from_stacks(s, i, per_pixel=True), k, atol=1e-12)


def test_predicted_noise_reduction_values():
    assert predicted_noise_reduction(0.57, 0.0) == pytest.approx(1 - 0.57**2)
    assert predicted_noise_reduction(1.0, 0.0) == 0.0
    assert predicted_noise_reduction(0.0, 0.3) == 1.0
    with pytest.raises(ConfigError):
        predicted_noise_reduction(1.2, 0.0)


def test_noise_spectrum_shape():
    g = Grid(32, 32, 5.0, 0.81)
    spec = noise_artifact_spectrum(10.0, TieOptions(dz=100.0, k_wave=g.k, illum_mean=1000.0), g)
    assert spec[0, 0] == 0.0
    # amplitude falls as 1/q^2
    assert spec[0, 2] == pytest.approx(spec[0, 1] / 4)


def test_radial_spectrum_of_white_noise_is_flat():
    g = Grid(64, 64, 1.0, 0.5)
    w = np.random.default_rng(6).normal(size=g.shape)
    q, p = radial_power_spectrum(w, g)
    assert q[0] > 0
    assert np.mean(p) == pytest.approx(1.0, rel=0.1)
