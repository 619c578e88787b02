import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdyn.acceptance import random_hermitian, random_state
from stochdyn.analytic import ion_cosine_coefficient, ion_sine_coefficient, two_level_coherence
from stochdyn.master_equation import (
    IonHeatingModel,
    MultiComplexModel,
    SingleRealModel,
    TimeGrid,
    TimeIndependentModel,
    alpha_beta,
    evolve,
    generator_ion,
    generator_multi_complex,
    generator_single_real,
    generator_time_independent,
    ion_as_multi_complex,
    ion_coefficients,
)
from stochdyn.operators import basis, commutator, ket_to_dm, pauli, z_total
from stochdyn.processes import ExponentialKernel, GaussianProcessSpec, ModulatedCorrelation, WhiteKernel


def _dc(h, rho):
    return commutator(h, commutator(h, rho))


def test_single_real_two_level_form():
    var, T, t = 0.3, 0.8, 1.7
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(var, T)))
    rho = random_state(np.random.default_rng(0), 2)
    d = 4 * var * T * (1 - math.exp(-t / T))
    np.testing.assert_allclose(generator_single_real(model, t, 0.0).apply(rho),
                               -0.25 * d * _dc(pauli("Z"), rho), atol=1e-15)


def test_single_real_white_collective():
    gamma = 1.3
    model = SingleRealModel(z_total(), GaussianProcessSpec(WhiteKernel(gamma / 8)))
    rho = random_state(np.random.default_rng(1), 4)
    np.testing.assert_allclose(generator_single_real(model, 0.4, 0.0).apply(rho),
                               -gamma / 16 * _dc(z_total(), rho), atol=1e-15)


def test_single_real_mean_term():
    h = pauli("X")
    model = SingleRealModel(h, GaussianProcessSpec(ExponentialKernel(0.0, 1.0), mean=0.6))
    rho = random_state(np.random.default_rng(2), 2)
    np.testing.assert_allclose(generator_single_real(model, 1.0, 0.0).apply(rho),
                               -0.6j * commutator(h, rho), atol=1e-15)


def test_zero_generators():
    rho = random_state(np.random.default_rng(3), 2)
    zero = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(0.0, 1.0)))
    assert np.all(generator_single_real(zero, 2.0, 0.0).apply(rho) == 0)
    ti = TimeIndependentModel((pauli("Z"),), np.zeros((1, 1)))
    assert np.all(generator_time_independent(ti, 2.0, 0.0).apply(rho) == 0)
    ion = IonHeatingModel(1.0, 0.0, ExponentialKernel(1.0, 1.0), 4)
    assert np.all(generator_ion(ion, 2.0).apply(random_state(np.random.default_rng(3), 4)) == 0)


def test_time_before_start_rejected():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(1.0, 1.0)))
    with pytest.raises(ValueError):
        generator_single_real(model, 0.0, 1.0)


def test_model_validation():
    with pytest.raises(ValueError):
        SingleRealModel(np.array([[0, 1], [0, 0]]), GaussianProcessSpec(WhiteKernel(1.0)))
    with pytest.raises(ValueError):
        TimeIndependentModel((pauli("Z"),), np.array([[-1.0]]))
    with pytest.raises(ValueError):
        MultiComplexModel((pauli("Z"), pauli("X")), cross_kernels={(0, 0): ExponentialKernel(1.0, 1.0)})


def test_time_independent_scalar_form():
    rng = np.random.default_rng(4)
    h = random_hermitian(rng, 3)
    var, t = 0.7, 1.9
    rho = random_state(rng, 3)
    model = TimeIndependentModel((h,), np.array([[var]]), valence="real")
    expected = var * t * (2 * h @ rho @ h - h @ h @ rho - rho @ h @ h)
    np.testing.assert_allclose(generator_time_independent(model, t, 0.0).apply(rho), expected, atol=1e-13)


def test_time_independent_matches_static_kernel():
    rng = np.random.default_rng(5)
    h = random_hermitian(rng, 3)
    var = 0.4
    rho = random_state(rng, 3)
    static = SingleRealModel(h, GaussianProcessSpec(ExponentialKernel(var, math.inf)))
    ti = TimeIndependentModel((h,), np.array([[var]]), valence="real")
    for t in rng.uniform(0, 3, size=5):
        np.testing.assert_allclose(generator_time_independent(ti, t, 0.0).apply(rho),
                                   generator_single_real(static, t, 0.0).apply(rho), atol=1e-13)


def test_multi_complex_reduces_to_single_real():
    rng = np.random.default_rng(6)
    for _ in range(20):
        d = int(rng.integers(2, 6))
        h = random_hermitian(rng, d)
        var, T, t = rng.uniform(0.1, 2), rng.uniform(0.2, 3), rng.uniform(0, 4)
        single = SingleRealModel(2 * h, GaussianProcessSpec(ExponentialKernel(var, T)))
        multi = MultiComplexModel((h,), (GaussianProcessSpec(ExponentialKernel(2 * var, T), valence="circular_complex"),))
        rho = random_state(rng, d)
        np.testing.assert_allclose(generator_multi_complex(multi, t, 0.0).apply(rho),
                                   generator_single_real(single, t, 0.0).apply(rho), atol=1e-12)


def test_multi_complex_alpha_beta_form():
    rng = np.random.default_rng(7)
    d = 3
    ops = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(2)]
    k = ExponentialKernel(1.0, 0.7)
    cross = {(0, 0): ModulatedCorrelation(k, 1.0, 0.5), (1, 1): ModulatedCorrelation(k, 0.6, -0.3),
             (0, 1): ModulatedCorrelation(k, 0.2 + 0.1j, 0.4), (1, 0): ModulatedCorrelation(k, 0.2 - 0.1j, 0.4)}
    model = MultiComplexModel(tuple(ops), cross_kernels=cross)
    t = 1.3
    alpha, beta = alpha_beta(model, t, 0.0)
    rho = random_state(rng, d)
    expected = np.zeros((d, d), dtype=complex)
    for k_ in range(2):
        for l in range(2):
            hk, hl = ops[k_], ops[l]
            hld = hl.conj().T
            hkd = hk.conj().T
            h_eff = -1j * alpha[k_, l] * commutator(hk, hld)
            expected += -1j * commutator(h_eff, rho)
            expected += beta[k_, l] * (hk @ rho @ hld + hld @ rho @ hk - hld @ hk @ rho - rho @ hld @ hk)
            expected += np.conj(beta[k_, l]) * (hkd @ rho @ hl + hl @ rho @ hkd - hl @ hkd @ rho - rho @ hl @ hkd)
    # the six-term bracket: beta on (h_k rho h_l^dag + ...) and its conjugate partner
    got = generator_multi_complex(model, t, 0.0).apply(rho)
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_alpha_antisymmetry():
    k = ExponentialKernel(0.8, 1.1)
    cross = {(a, b): ModulatedCorrelation(k, s, 0.7) for (a, b), s in
             {(0, 0): 1.0, (1, 1): 0.5, (0, 1): 0.3 + 0.2j, (1, 0): 0.3 - 0.2j}.items()}
    model = MultiComplexModel((pauli("X"), pauli("Z")), cross_kernels=cross)
    alpha, beta = alpha_beta(model, 2.1, 0.0)
    np.testing.assert_allclose(alpha, -alpha.conj().T, atol=1e-15)
    np.testing.assert_allclose(beta, beta.conj().T, atol=1e-15)


def test_ion_coefficients_match_closed_forms():
    w, T, tau1 = 1.3, 0.9, 7.0
    model = IonHeatingModel.from_dimensionless(w * T, w * tau1, omega0=w)
    for t in (0.1, 1.0, 4.0):
        c, s = ion_coefficients(model, t)
        assert c == pytest.approx(ion_cosine_coefficient(w, T, tau1, t), rel=1e-12)
        assert s == pytest.approx(ion_sine_coefficient(w, T, tau1, t), rel=1e-12)


def test_ion_effective_hamiltonian_is_identity():
    model = IonHeatingModel.from_dimensionless(1.0, 10.0)
    h = generator_ion(model, 2.3).h_eff
    assert np.max(np.abs(h - np.trace(h) / model.dim * np.eye(model.dim))) <= 1e-12


def test_ion_matches_multi_complex_mapping():
    rng = np.random.default_rng(8)
    model = IonHeatingModel.from_dimensionless(0.7, 5.0, n_fock=6)
    multi = ion_as_multi_complex(model)
    for t in (0.3, 1.7, 6.0):
        gi = generator_ion(model, t)
        gm = generator_multi_complex(multi, t, 0.0)
        # the dissipator parts agree term by term
        rho = random_state(rng, 6)
        diss_i = sum(term.apply(rho) for term in gi.terms)
        diss_m = sum(term.apply(rho) for term in gm.terms)
        np.testing.assert_allclose(diss_i, diss_m, atol=1e-12)
        # the Hamiltonian parts differ only on the truncated top level
        low = np.zeros((6, 6), dtype=complex)
        low[:5, :5] = random_state(rng, 5)
        np.testing.assert_allclose(gi.apply(low)[:4, :4], gm.apply(low)[:4, :4], atol=1e-12)


def _trace_and_hermiticity(gen, rho):
    out = gen.apply(rho)
    return abs(np.trace(out)), np.max(np.abs(out - out.conj().T)), np.max(np.abs(out))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["single", "multi", "ion", "static"]))
def test_generator_output_traceless_hermitian(seed, kind):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    t = float(rng.uniform(0, 3))
    if kind == "single":
        gen = generator_single_real(SingleRealModel(random_hermitian(rng, d), GaussianProcessSpec(
            ExponentialKernel(rng.uniform(0, 2), rng.uniform(0.1, 2)), mean=rng.normal())), t, 0.0)
    elif kind == "multi":
        ops = tuple(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(2))
        specs = tuple(GaussianProcessSpec(ExponentialKernel(rng.uniform(0, 2), rng.uniform(0.1, 2)),
                                          valence="circular_complex") for _ in range(2))
        gen = generator_multi_complex(MultiComplexModel(ops, specs), t, 0.0)
    elif kind == "ion":
        gen = generator_ion(IonHeatingModel.from_dimensionless(rng.uniform(0.1, 3), rng.uniform(2, 50), d), t)
    else:
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        ops = tuple(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(2))
        gen = generator_time_independent(TimeIndependentModel(ops, a @ a.conj().T), t, 0.0)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a + a.conj().T
    tr, herm, scale = _trace_and_hermiticity(gen, rho)
    assert tr <= 1e-12 * max(scale, 1.0)
    assert herm <= 1e-12 * max(scale, 1.0)


def test_superoperator_matches_apply():
    rng = np.random.default_rng(9)
    gen = generator_ion(IonHeatingModel.from_dimensionless(1.0, 4.0, 4), 1.1)
    rho = random_state(rng, 4)
    np.testing.assert_allclose((gen.superoperator() @ rho.reshape(-1)).reshape(4, 4), gen.apply(rho), atol=1e-13)


def test_evolve_zero_generator_is_exact():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(0.0, 1.0)))
    rho0 = ket_to_dm([1, 1j])
    res = evolve(model, rho0, TimeGrid(0.0, 3.0, 30))
    assert np.all(res.states == rho0)


def test_evolve_two_level_and_invariants():
    var, T = 0.25, 1.0
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(var, T)))
    res = evolve(model, ket_to_dm([1, 1]), TimeGrid(0.0, 5.0, 100))
    ref = np.array([two_level_coherence(0.5, var, T, t) for t in res.times])
    np.testing.assert_allclose(res.element(0, 1), ref, rtol=1e-7)
    inv = res.invariant_summary()
    assert inv["max_trace_error"] <= 1e-9 and inv["max_hermiticity_error"] <= 1e-10
    assert inv["min_eigenvalue"] >= -1e-8
    mags = np.abs(res.element(0, 1))
    assert np.all(np.diff(mags) <= 0)


def test_population_conservation_in_eigenbasis():
    rng = np.random.default_rng(10)
    h = random_hermitian(rng, 4)
    model = SingleRealModel(h, GaussianProcessSpec(ExponentialKernel(0.6, 0.5), mean=0.3))
    rho0 = random_state(rng, 4)
    res = evolve(model, rho0, TimeGrid(0.0, 3.0, 30))
    _, v = np.linalg.eigh(h)
    pops = np.real(np.einsum("ik,tij,jk->tk", v.conj(), res.states, v))
    assert np.max(np.abs(pops - pops[0])) <= 1e-9


def test_dfs_stationarity_degenerate_subspace():
    h = np.diag([1.0, 1.0, -0.5])
    model = SingleRealModel(h, GaussianProcessSpec(ExponentialKernel(1.0, 0.5)))
    rho0 = np.zeros((3, 3), dtype=complex)
    rho0[:2, :2] = random_state(np.random.default_rng(11), 2)
    res = evolve(model, rho0, TimeGrid(0.0, 10.0, 50))
    assert np.max(np.abs(res.states - rho0)) <= 1e-9


def test_bell_state_decay():
    gamma = 2.0
    model = SingleRealModel(z_total(), GaussianProcessSpec(WhiteKernel(gamma / 8)))
    rho0 = ket_to_dm(basis(4, 0) + basis(4, 3))
    res = evolve(model, rho0, TimeGrid(0.0, 2.0, 40))
    np.testing.assert_allclose(res.element(0, 3), 0.5 * np.exp(-gamma * res.times), atol=1e-7)
    np.testing.assert_allclose(res.populations()[:, [0, 3]], 0.5, atol=1e-12)


def test_rk4_order():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(0.25, 1.0)))
    rho0 = ket_to_dm([1, 1])
    grid = TimeGrid(0.0, 5.0, 10)
    ref = two_level_coherence(0.5, 0.25, 1.0, 5.0)
    e = [abs(evolve(model, rho0, grid, substeps=s).states[-1, 0, 1] - ref) for s in (2, 4, 8)]
    for a, b in zip(e, e[1:]):
        assert 3.7 <= math.log2(a / b) <= 4.3


def test_evolve_dimension_mismatch():
    model = SingleRealModel(pauli("Z"), GaussianProcessSpec(WhiteKernel(1.0)))
    with pytest.raises(ValueError):
        evolve(model, np.eye(3) / 3, TimeGrid(0.0, 1.0, 10))


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    g = TimeGrid(0.0, 2.0, 4)
    np.testing.assert_allclose(g.times, [0, 0.5, 1, 1.5, 2])
    assert g.refine(3).n_steps == 12


def test_ion_energy_and_short_time():
    model = IonHeatingModel.from_dimensionless(1.0, 10.0, n_fock=5)
    res = evolve(model, ket_to_dm(basis(5, 0)), TimeGrid(0.0, 0.05, 10))
    dep = 1 - res.fidelity(0)[-1]
    assert dep == pytest.approx(model.coupling * 0.05**2, rel=0.05)
    n = np.real(np.einsum("tii,i->t", res.states, np.arange(5)))
    assert np.all(n >= 0)

