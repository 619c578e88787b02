import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdyn.operators import (
    DensityMatrix,
    HilbertKind,
    HilbertSpaceSpec,
    NotHermitianError,
    NotPositiveError,
    TraceError,
    basis,
    commutator,
    concurrence,
    fock_ladder,
    ket_to_dm,
    pauli,
    tensor,
    validate_density,
    z_total,
)


def test_commutator_examples():
    x = pauli("X")
    assert np.all(commutator(x, x) == 0)
    rho = np.diag([0.3, 0.7])
    assert np.all(commutator(pauli("Z"), rho) == 0)
    a, ad = fock_ladder(5)
    np.testing.assert_allclose(commutator(a, ad), np.diag([1, 1, 1, 1, -4]), rtol=0, atol=1e-15)


def test_commutator_dimension_mismatch():
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


def test_pauli():
    np.testing.assert_array_equal(pauli("Z"), np.diag([1, -1]))
    np.testing.assert_array_equal(pauli("X") @ pauli("X"), np.eye(2))
    for axis in "XYZ":
        p = pauli(axis)
        assert np.allclose(p, p.conj().T)
        assert np.allclose(p @ p.conj().T, np.eye(2))
        assert np.trace(p) == 0
    np.testing.assert_array_equal(z_total(), np.diag([2, 0, 0, -2]))
    with pytest.raises(ValueError):
        pauli("W")


def test_fock_ladder():
    a, ad = fock_ladder(2)
    np.testing.assert_array_equal(a, [[0, 1], [0, 0]])
    a, ad = fock_ladder(5)
    np.testing.assert_array_equal(ad, a.conj().T)
    # sqrt(k)^2 is k only to one ulp in floating point
    np.testing.assert_allclose(np.diag(ad @ a), np.arange(5), rtol=2.5e-16, atol=0)
    assert np.all(np.diag(ad @ a).imag == 0)
    np.testing.assert_allclose(a @ basis(5, 2), np.sqrt(2) * basis(5, 1))
    with pytest.raises(ValueError):
        fock_ladder(1)


def test_tensor():
    np.testing.assert_array_equal(tensor(np.eye(2), np.eye(2)), np.eye(4))
    zi = tensor(pauli("Z"), np.eye(2))
    assert zi[0, 0] == 1 and zi[3, 3] == -1
    psi = (tensor(basis(2, 0), basis(2, 1)) + tensor(basis(2, 1), basis(2, 0))) / np.sqrt(2)
    np.testing.assert_allclose(z_total() @ psi, 0 * psi)


def test_tensor_associative():
    rng = np.random.default_rng(0)
    a, b, c = (rng.integers(-5, 6, size=(2, 2)) for _ in range(3))
    left = tensor(tensor(a, b), c)
    assert left.shape == (8, 8)
    np.testing.assert_array_equal(left, tensor(a, tensor(b, c)))
    a, b, c = (rng.normal(size=(2, 3)) for _ in range(3))
    np.testing.assert_allclose(tensor(tensor(a, b), c), tensor(a, tensor(b, c)), rtol=1e-15)


def test_validate_density():
    assert isinstance(validate_density(np.eye(3) / 3), DensityMatrix)
    with pytest.raises(TraceError):
        validate_density(np.diag([0.6, 0.5]))
    with pytest.raises(NotPositiveError):
        validate_density([[0.5, 0.6], [0.6, 0.5]])
    with pytest.raises(NotHermitianError):
        validate_density([[0.5, 0.1], [0.0, 0.5]])


def test_density_matrix_is_read_only():
    rho = validate_density(np.eye(2) / 2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_hilbert_space_spec():
    assert HilbertSpaceSpec.qubit().dim == 2
    assert HilbertSpaceSpec.fock(5).kind is HilbertKind.FOCK_TRUNCATED
    with pytest.raises(ValueError):
        HilbertSpaceSpec(HilbertKind.TWO_QUBIT, 3)


def test_concurrence_examples():
    phi = ket_to_dm(basis(4, 0) + basis(4, 3))
    assert concurrence(phi) == pytest.approx(1.0, abs=1e-12)
    mixed = np.diag([0.5, 0, 0, 0.5])
    assert concurrence(mixed) == pytest.approx(0.0, abs=1e-12)
    x = mixed.astype(complex)
    x[0, 3] = x[3, 0] = 0.25
    assert concurrence(x) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        concurrence(np.eye(2) / 2)


def _random_unitary(rng):
    q, r = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return q * (np.diag(r) / abs(np.diag(r)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_concurrence_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    u = np.kron(_random_unitary(rng), _random_unitary(rng))
    assert concurrence(u @ rho @ u.conj().T) == pytest.approx(concurrence(rho), abs=1e-9)
