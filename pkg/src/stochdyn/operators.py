"""Dense operator algebra and density-matrix primitives.

Everything here works on small dense ``numpy`` arrays (Hilbert dimensions up
to a few tens). Returned arrays are fresh copies; `DensityMatrix` stores a
read-only view so a validated state cannot be mutated behind its back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import reduce

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


class InvalidDensityMatrix(ValueError):
    """Base class for the three ways a matrix can fail to be a state."""


class NotHermitianError(InvalidDensityMatrix):
    pass


class TraceError(InvalidDensityMatrix):
    pass


class NotPositiveError(InvalidDensityMatrix):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D complex array."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _square(a, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b) -> np.ndarray:
    """Return ``ab - ba`` for two square matrices of equal dimension."""
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b + b @ a


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis: str) -> np.ndarray:
    """Pauli matrix for ``axis`` in ``{"X", "Y", "Z"}`` (``"I"`` also accepted)."""
    try:
        return _PAULI[axis.upper()].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def fock_ladder(n_fock: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated annihilation and creation operators on ``n_fock`` levels.

    The truncation breaks ``[a, a^dag] = 1`` in the top level: the last
    diagonal entry of the commutator is ``1 - n_fock``.
    """
    n_fock = int(n_fock)
    if n_fock < 2:
        raise ValueError(f"n_fock must be >= 2, got {n_fock}")
    lower = np.diag(np.sqrt(np.arange(1, n_fock)), k=1).astype(complex)
    return lower, lower.conj().T.copy()


def tensor(*ops) -> np.ndarray:
    """Kronecker product of one or more matrices (or state vectors), left to right."""
    if not ops:
        raise ValueError("tensor needs at least one operand")
    arrs = [np.asarray(o, dtype=complex) for o in ops]
    if all(a.ndim == 1 for a in arrs):
        return reduce(np.kron, arrs)
    return reduce(np.kron, (as_matrix(a) for a in arrs))


def basis(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def ket_to_dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("zero state vector")
    psi = psi / nrm
    return np.outer(psi, psi.conj())


def z_total() -> np.ndarray:
    """Collective ``Z x I + I x Z`` for two qubits."""
    return tensor(pauli("Z"), pauli("I")) + tensor(pauli("I"), pauli("Z"))


def eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigen-decomposition (ascending eigenvalues)."""
    m = _square(a, "matrix")
    m = 0.5 * (m + m.conj().T)
    return np.linalg.eigh(m)


class HilbertKind(str, Enum):
    QUBIT = "qubit"
    TWO_QUBIT = "two_qubit"
    FOCK_TRUNCATED = "fock_truncated"


@dataclass(frozen=True)
class HilbertSpaceSpec:
    kind: HilbertKind
    dim: int

    def __post_init__(self):
        kind = HilbertKind(self.kind)
        object.__setattr__(self, "kind", kind)
        expected = {HilbertKind.QUBIT: 2, HilbertKind.TWO_QUBIT: 4}.get(kind)
        if expected is not None and self.dim != expected:
            raise ValueError(f"{kind.value} space has dimension {expected}, got {self.dim}")
        if kind is HilbertKind.FOCK_TRUNCATED and self.dim < 2:
            raise ValueError(f"Fock truncation must keep at least 2 levels, got {self.dim}")

    @classmethod
    def qubit(cls) -> HilbertSpaceSpec:
        return cls(HilbertKind.QUBIT, 2)

    @classmethod
    def two_qubit(cls) -> HilbertSpaceSpec:
        return cls(HilbertKind.TWO_QUBIT, 4)

    @classmethod
    def fock(cls, n_fock: int) -> HilbertSpaceSpec:
        return cls(HilbertKind.FOCK_TRUNCATED, int(n_fock))


@dataclass(frozen=True)
class DensityMatrix:
    """A validated quantum state. Build it through `validate_density`."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def density_violations(m) -> dict[str, float]:
    """Raw invariant measures: Hermiticity error, trace error, min eigenvalue."""
    m = _square(m, "density matrix")
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    tr = float(abs(np.trace(m) - 1.0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
    return {"hermiticity": herm, "trace": tr, "min_eigenvalue": min_eig}


def validate_density(
    m,
    tol: float | None = None,
    *,
    herm_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    pos_tol: float = POSITIVITY_TOL,
) -> DensityMatrix:
    """Check Hermiticity, unit trace and positivity, in that order.

    A single ``tol`` overrides all three tolerances. Each failed invariant
    raises its own `InvalidDensityMatrix` subclass.
    """
    if isinstance(m, DensityMatrix):
        m = m.matrix
    if tol is not None:
        herm_tol = trace_tol = pos_tol = tol
    v = density_violations(m)
    if v["hermiticity"] > herm_tol:
        raise NotHermitianError(f"max |M - M^dag| = {v['hermiticity']:.3e} > {herm_tol:.1e}")
    if v["trace"] > trace_tol:
        raise TraceError(f"|Tr M - 1| = {v['trace']:.3e} > {trace_tol:.1e}")
    if v["min_eigenvalue"] < -pos_tol:
        raise NotPositiveError(f"smallest eigenvalue {v['min_eigenvalue']:.3e} < -{pos_tol:.1e}")
    return DensityMatrix(np.asarray(m, dtype=complex))


_YY = np.kron(_PAULI["Y"], _PAULI["Y"])


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state.

    Uses the Hermitian form: the square roots of the eigenvalues of
    ``rho (Y x Y) rho* (Y x Y)`` equal the singular values of
    ``sqrt(rho) sqrt(rho~)``, i.e. the eigenvalue square roots of
    ``sqrt(rho) rho~ sqrt(rho)``.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else _square(rho, "rho")
    if m.shape != (4, 4):
        raise ValueError(f"concurrence needs a 4x4 state, got {m.shape}")
    w, v = eigh(m)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    flipped = _YY @ m.conj() @ _YY
    r = sqrt_rho @ flipped @ sqrt_rho
    lam = np.sqrt(np.clip(eigh(r)[0], 0.0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))
