import numpy as np
import pytest

from stochdyn.analytic import two_atom_solution, two_level_coherence
from stochdyn.master_equation import IonHeatingModel, SingleRealModel, TimeGrid
from stochdyn.operators import basis, ket_to_dm, pauli, z_total
from stochdyn.oracle import (
    UnitarityError,
    ensemble_average,
    propagate_commuting,
    propagate_general,
)
from stochdyn.processes import (
    ExponentialKernel,
    GaussianProcessSpec,
    ProcessPath,
    WhiteKernel,
    sample_path,
)

PLUS = ket_to_dm([1.0, 1.0])


def test_commuting_trivial_cases():
    grid = np.linspace(0.0, 1.0, 5)
    still = ProcessPath(grid, np.zeros(5), np.zeros(5))
    states = propagate_commuting(pauli("Z"), still, PLUS)
    assert np.all(states == PLUS)
    quarter = ProcessPath(np.array([0.0, 1.0]), np.zeros(2), np.array([0.0, np.pi / 2]))
    assert propagate_commuting(pauli("Z"), quarter, PLUS)[-1, 0, 1] == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(ValueError):
        propagate_commuting(np.array([[0, 1], [0, 0]]), still, PLUS)


def test_general_zero_hamiltonian_is_identity():
    model = SingleRealModel(pauli("X"), GaussianProcessSpec(ExponentialKernel(1.0, 1.0)))
    grid = np.linspace(0.0, 1.0, 11)
    path = ProcessPath(grid, np.zeros(11), np.zeros(11))
    u = propagate_general(model, [path])
    np.testing.assert_array_equal(u[-1], np.eye(2))


def test_general_matches_commuting():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = 0.5 * (a + a.conj().T)
    spec = GaussianProcessSpec(ExponentialKernel(0.8, 0.5))
    model = SingleRealModel(h, spec)
    grid = np.linspace(0.0, 2.0, 2001)
    path = sample_path(spec, grid, seed=5)
    rho0 = ket_to_dm([1.0, 0.5j, -0.3])
    exact = propagate_commuting(h, path, rho0)
    general = propagate_general(model, [path], rho0)
    np.testing.assert_allclose(general, exact, atol=1e-8)


def test_ion_single_realization_energy_nonnegative():
    model = IonHeatingModel.from_dimensionless(1.0, 10.0, n_fock=5)
    grid = np.linspace(0.0, 5.0, 501)
    path = sample_path(GaussianProcessSpec(model.kernel), grid, seed=2)
    states = propagate_general(model, [path], ket_to_dm(basis(5, 0)))
    n = np.real(np.einsum("tii,i->t", states, np.arange(5)))
    assert np.all(n >= -1e-14)
    np.testing.assert_allclose(np.trace(states, axis1=1, axis2=2), 1.0, atol=1e-10)


def test_unitarity_guard():
    model = SingleRealModel(pauli("X"), GaussianProcessSpec(ExponentialKernel(1.0, 1.0)))
    grid = np.array([0.0, 1.0])
    path = ProcessPath(grid, np.array([1e9, 1e9]), np.array([0.0, 1e9]))
    with pytest.raises(UnitarityError):
        propagate_general(model, [path])


def test_too_few_trajectories():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(WhiteKernel(1.0)))
    with pytest.raises(ValueError):
        ensemble_average(model, PLUS, TimeGrid(0.0, 1.0, 10), 99)


def test_zero_variance_ensemble():
    model = SingleRealModel(pauli("X"), GaussianProcessSpec(ExponentialKernel(0.0, 1.0), mean=0.7))
    grid = TimeGrid(0.0, 2.0, 20)
    ens = ensemble_average(model, ket_to_dm([1.0, 0.0]), grid, 200, seed=1)
    assert np.all(ens.stderr_re == 0) and np.all(ens.stderr_im == 0)
    t = grid.times
    np.testing.assert_allclose(ens.states[:, 0, 0], np.cos(0.7 * t) ** 2, atol=1e-12)


def test_single_real_diagonals_exact_per_trajectory():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(1.0, 0.5)))
    rho0 = ket_to_dm([0.6, 0.8])
    ens = ensemble_average(model, rho0, TimeGrid(0.0, 2.0, 20), 300, seed=3)
    assert np.all(ens.stderr_re[:, 0, 0] == 0)
    np.testing.assert_allclose(ens.states[:, 0, 0], rho0[0, 0], atol=1e-15)


def test_reproducible_across_workers():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(0.5, 1.0)))
    grid = TimeGrid(0.0, 2.0, 20)
    a = ensemble_average(model, PLUS, grid, 1500, seed=9, workers=1)
    b = ensemble_average(model, PLUS, grid, 1500, seed=9, workers=3)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.stderr_re, b.stderr_re) and np.array_equal(a.stderr_im, b.stderr_im)


def test_general_ensemble_reproducible_across_workers():
    model = IonHeatingModel.from_dimensionless(1.0, 10.0, n_fock=4)
    grid = TimeGrid(0.0, 2.0, 10)
    a = ensemble_average(model, ket_to_dm(basis(4, 0)), grid, 600, seed=4, workers=1)
    b = ensemble_average(model, ket_to_dm(basis(4, 0)), grid, 600, seed=4, workers=2)
    assert np.array_equal(a.states, b.states)


def test_bell_ensemble_matches_formula():
    gamma = 1.0
    grid = TimeGrid(0.0, 4.0, 40)
    model = SingleRealModel(z_total(), GaussianProcessSpec(WhiteKernel(gamma / 8)))
    ens = ensemble_average(model, ket_to_dm(basis(4, 0) + basis(4, 3)), grid, 10000, seed=0)
    ref = np.array([two_atom_solution(gamma, t).matrix[0, 3] for t in grid.times])
    z = np.abs(ens.states[1:, 0, 3].real - ref[1:]) / ens.stderr_re[1:, 0, 3]
    assert np.all(z < 3)


def test_two_level_inverse_sqrt_convergence():
    var, T = 0.25, 1.0
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(var, T)))
    grid = TimeGrid(0.0, 5.0, 50)
    ref = np.array([two_level_coherence(0.5, var, T, t) for t in grid.times])
    devs = []
    for n in (1000, 10000, 100000):
        ens = ensemble_average(model, PLUS, grid, n, seed=0)
        devs.append(np.max(np.abs(ens.states[:, 0, 1] - ref)))
    for small, big in zip(devs, devs[1:]):
        ratio = small / big
        assert np.sqrt(10) / 2 <= ratio <= 2 * np.sqrt(10)
