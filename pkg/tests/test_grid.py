"""Grid, quadrature, complex Hessian, and convolution tests."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmaflow import (
    DEFAULT_KERNEL,
    ScalarField,
    TorusGrid,
    complex_hessian,
    convolve_radial,
    hessian_eigenvalues,
    integrate,
    load_field,
    load_trajectory,
    random_admissible_field,
    save_field,
    save_trajectory,
)
from pmaflow.grid import HessianData, field_to_csv


def band_limited(grid, rng, max_mode=5, n_modes=6):
    coords = grid.meshgrid()
    vals = np.zeros(grid.shape)
    for _ in range(n_modes):
        ks = rng.integers(-max_mode, max_mode + 1, size=grid.real_dim)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.1, 1.0)
        arg = sum(2 * np.pi * k * c / grid.period for k, c in zip(ks, coords))
        vals += amp * np.cos(arg + phase)
    return ScalarField(grid, vals)


# ---------------------------------------------------------------------------
# integrate


def test_integrate_constant_unit_volume(grid32):
    assert integrate(grid32.constant_field(1.0)) == pytest.approx(1.0, abs=1e-15)


def test_integrate_mean_zero_mode(grid32):
    x, _ = grid32.meshgrid()
    f = grid32.scalar_field(np.sin(2 * np.pi * x))
    assert integrate(f) == pytest.approx(0.0, abs=1e-14)


def test_integrate_matches_riemann_sum_oracle(grid32):
    rng = np.random.default_rng(0)
    f = band_limited(grid32, rng)
    # independent plain Riemann sum over the periodic lattice
    oracle = 0.0
    for v in f.values.ravel():
        oracle += v * grid32.cell_volume
    assert integrate(f) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


def test_integrate_rejects_non_finite(grid32):
    vals = np.zeros(grid32.shape)
    vals[0, 0] = np.nan
    with pytest.raises(ValueError):
        integrate(ScalarField(grid32, vals))


def test_quadrature_exact_below_nyquist(grid32):
    # any single mode below N/2 integrates to exactly zero
    x, y = grid32.meshgrid()
    for k in (1, 5, 15):
        f = grid32.scalar_field(np.cos(2 * np.pi * k * x) + np.sin(2 * np.pi * k * y))
        assert abs(integrate(f)) < 1e-12


# ---------------------------------------------------------------------------
# complex Hessian


def test_hessian_of_constant_is_zero(grid32):
    h = complex_hessian(grid32.constant_field(3.7))
    assert np.abs(h.matrices).max() < 1e-12


def test_hessian_cosine_eigenfunction(grid64):
    x, _ = grid64.meshgrid()
    f = grid64.scalar_field(np.cos(2 * np.pi * x))
    h = complex_hessian(f)
    expected = -np.pi**2 * np.cos(2 * np.pi * x)
    assert np.abs(h.matrices[..., 0, 0].real - expected).max() < 1e-10


def _fd4_second(values, grid, a, b):
    h = grid.spacing

    def d1(v, axis):
        return (-np.roll(v, -2, axis) + 8 * np.roll(v, -1, axis)
                - 8 * np.roll(v, 1, axis) + np.roll(v, 2, axis)) / (12 * h)

    if a == b:
        return (-np.roll(values, -2, a) + 16 * np.roll(values, -1, a)
                - 30 * values + 16 * np.roll(values, 1, a)
                - np.roll(values, 2, a)) / (12 * h**2)
    return d1(d1(values, a), b)


@pytest.mark.parametrize("n_complex,N", [(1, 32), (2, 8)])
def test_hessian_matches_fd4_oracle(n_complex, N):
    rng = np.random.default_rng(1)
    errs = []
    for size in (N, 2 * N):
        grid = TorusGrid(n_complex, size)
        rng_local = np.random.default_rng(1)
        f = band_limited(grid, rng_local, max_mode=2, n_modes=3)
        h = complex_hessian(f)
        n = grid.n_complex
        err = 0.0
        for i in range(n):
            for j in range(i, n):
                re = 0.25 * (_fd4_second(f.values, grid, 2 * i, 2 * j)
                             + _fd4_second(f.values, grid, 2 * i + 1, 2 * j + 1))
                im = 0.25 * (_fd4_second(f.values, grid, 2 * i, 2 * j + 1)
                             - _fd4_second(f.values, grid, 2 * i + 1, 2 * j))
                oracle = re + 1j * im
                err = max(err, float(np.abs(h.matrices[..., i, j] - oracle).max()))
        errs.append(err)
    order = np.log2(errs[0] / errs[1])
    assert order >= 3.5


def test_spectral_vs_finite_difference_order():
    errs = []
    for N in (32, 64):
        spec = TorusGrid(1, N, derivative_mode="spectral")
        fd = TorusGrid(1, N, derivative_mode="finite_difference_2nd")
        x, _ = spec.meshgrid()
        vals = np.cos(2 * np.pi * x) + 0.3 * np.sin(4 * np.pi * x)
        h_spec = complex_hessian(spec.scalar_field(vals)).matrices
        h_fd = complex_hessian(fd.scalar_field(vals)).matrices
        errs.append(float(np.abs(h_spec - h_fd).max()))
    order = np.log2(errs[0] / errs[1])
    assert order >= 1.9


# ---------------------------------------------------------------------------
# eigenvalues


def test_eigenvalues_of_zero_hessian(grid32):
    h = complex_hessian(grid32.constant_field(0.0))
    eigs = hessian_eigenvalues(h)
    assert np.allclose(eigs, 1.0, atol=1e-12)


def test_eigenvalues_constant_diagonal_sorted(grid2d):
    a, b = 0.7, -0.2
    mats = np.zeros(grid2d.shape + (2, 2), dtype=complex)
    mats[..., 0, 0] = a
    mats[..., 1, 1] = b
    eigs = hessian_eigenvalues(HessianData(grid2d, mats))
    assert np.allclose(eigs[..., 0], 1 + b, atol=1e-14)
    assert np.allclose(eigs[..., 1], 1 + a, atol=1e-14)


def test_eigenvalues_match_eigvalsh_oracle(grid2d):
    rng = np.random.default_rng(2)
    f = band_limited(grid2d, rng, max_mode=2, n_modes=4)
    h = complex_hessian(f)
    eigs = hessian_eigenvalues(h)
    eye = np.eye(2)
    oracle = np.linalg.eigvalsh(h.matrices + eye)
    assert np.abs(eigs - oracle).max() < 1e-10


def test_eigenvalue_trace_identity(grid2d):
    rng = np.random.default_rng(3)
    f = band_limited(grid2d, rng, max_mode=2, n_modes=4)
    h = complex_hessian(f)
    eigs = hessian_eigenvalues(h)
    trace = 2.0 + np.trace(h.matrices, axis1=-2, axis2=-1).real
    assert np.abs(eigs.sum(axis=-1) - trace).max() < 1e-10


def test_eigenvalues_ascending(grid2d):
    rng = np.random.default_rng(4)
    f = band_limited(grid2d, rng, max_mode=2, n_modes=4)
    eigs = hessian_eigenvalues(complex_hessian(f))
    assert np.all(np.diff(eigs, axis=-1) >= 0.0)


# ---------------------------------------------------------------------------
# radial convolution


def test_convolve_preserves_constants(grid64):
    out = convolve_radial(grid64.constant_field(2.5), 0.1)
    assert np.abs(out.values - 2.5).max() < 1e-12


def test_convolve_cosine_matches_double_loop_oracle():
    grid = TorusGrid(1, 32)
    x, _ = grid.meshgrid()
    f = grid.scalar_field(np.cos(2 * np.pi * x))
    s = 0.2
    out = convolve_radial(f, s)

    from pmaflow.grid import _kernel_on_grid_normalized
    kern = _kernel_on_grid_normalized(grid, s, DEFAULT_KERNEL)
    N = grid.points_per_axis
    oracle = np.zeros_like(f.values)
    for i in range(N):
        for j in range(N):
            shifted = np.roll(np.roll(f.values, i, axis=0), j, axis=1)
            oracle += kern[i, j] * shifted * grid.cell_volume
    assert np.abs(out.values - oracle).max() < 1e-10
    # single mode only rescales by the kernel Fourier coefficient
    factor = out.values.ravel()[np.argmax(np.abs(f.values))] / 1.0
    assert np.abs(out.values - factor * f.values).max() < 1e-10


def test_convolve_identity_limit():
    grid = TorusGrid(1, 256)
    x, _ = grid.meshgrid()
    f = grid.scalar_field(np.cos(2 * np.pi * x))
    err = [np.abs(convolve_radial(f, s).values - f.values).max()
           for s in (grid.period / 64, grid.period / 128)]
    assert err[1] < err[0]


def test_convolve_mass_preserving(grid64):
    rng = np.random.default_rng(5)
    f = band_limited(grid64, rng)
    out = convolve_radial(f, 0.15)
    assert integrate(out) == pytest.approx(integrate(f), abs=1e-12)


def test_convolve_positivity(grid64):
    rng = np.random.default_rng(6)
    f = band_limited(grid64, rng)
    f = ScalarField(grid64, f.values - f.values.min())
    out = convolve_radial(f, 0.11)
    assert out.values.min() >= -1e-12


def test_convolve_rejects_wrapping_kernel(grid64):
    with pytest.raises(ValueError):
        convolve_radial(grid64.constant_field(0.0), 0.5)


def test_kernel_normalization_and_moment():
    # closed forms for rho(r) = c (1-r^2)^3: c = 4/pi, K = 1/5 in d = 2
    assert float(DEFAULT_KERNEL.density(0.0, 2)) == pytest.approx(4.0 / np.pi, rel=1e-10)
    assert DEFAULT_KERNEL.second_moment(2) == pytest.approx(0.2, rel=1e-10)
    # d = 4: c = 20/pi^2, K = 1/3
    assert float(DEFAULT_KERNEL.density(0.0, 4)) == pytest.approx(20.0 / np.pi**2, rel=1e-10)
    assert DEFAULT_KERNEL.second_moment(4) == pytest.approx(1.0 / 3.0, rel=1e-10)


# ---------------------------------------------------------------------------
# hypothesis properties


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-5, 5), seed=st.integers(0, 10**6))
def test_integrate_is_linear_in_shifts(c, seed):
    grid = TorusGrid(1, 16)
    f = band_limited(grid, np.random.default_rng(seed), max_mode=3, n_modes=2)
    lhs = integrate(f.shifted(c))
    rhs = integrate(f) + c * grid.volume
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_admissible_generator_respects_margin(seed):
    grid = TorusGrid(1, 32)
    rng = np.random.default_rng(seed)
    f = random_admissible_field(grid, rng, margin=0.2)
    from pmaflow import min_admissibility_eigenvalue
    assert min_admissibility_eigenvalue(f) >= 0.2 - 1e-9


# ---------------------------------------------------------------------------
# serialization


def test_field_binary_roundtrip(tmp_path, grid32):
    rng = np.random.default_rng(7)
    f = band_limited(grid32, rng)
    path = tmp_path / "field.bin"
    save_field(f, path)
    g = load_field(path)
    assert g.grid == grid32
    assert np.array_equal(g.values, f.values)


def test_trajectory_binary_roundtrip(tmp_path, trivial_flow):
    traj = trivial_flow[0]
    path = tmp_path / "traj.bin"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.values, traj.values)
    assert back.dt == traj.dt


def test_field_csv_export(tmp_path):
    grid = TorusGrid(1, 4)
    f = grid.scalar_field(np.arange(16.0).reshape(4, 4))
    path = tmp_path / "field.csv"
    field_to_csv(f, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "i0,i1,value"
    assert len(rows) == 17
