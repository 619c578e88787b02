"""Closed-form reference solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operators import DensityMatrix, eigh, validate_density
from .processes import GaussianProcessSpec, variance_of_integral


@dataclass(frozen=True)
class DephasingSolution:
    """Statistics of ``v(t) = int a dt'`` and the eigenvalues of the coupling operator.

    ``eigenvalues`` are dimensionless weights multiplying ``a(t)``.
    """

    eigenvalues: np.ndarray
    mean_v: Callable[[float], float]
    var_v: Callable[[float], float]

    @classmethod
    def from_process(cls, eigenvalues: Sequence[float], spec: GaussianProcessSpec, t0: float = 0.0):
        def mean_v(t):
            return variance_of_integral(spec.kernel, spec.mean, t, t0)[0]

        def var_v(t):
            return variance_of_integral(spec.kernel, spec.mean, t, t0)[1]

        return cls(np.asarray(eigenvalues, dtype=float), mean_v, var_v)


def dephasing_factors(eigenvalues, mean_v: float, var_v: float) -> np.ndarray:
    """Element-wise multipliers ``exp(-i dE mean_v - dE^2 var_v / 2)``."""
    e = np.asarray(eigenvalues, dtype=float)
    de = e[:, None] - e[None, :]
    return np.exp(-1j * de * mean_v - 0.5 * de**2 * var_v)


def exact_single_process(rho0, sol: DephasingSolution, t: float, *, validate: bool = True):
    """Exact ensemble average for ``H = a(t) h``; ``rho0`` in the ``h`` eigenbasis.

    Populations are untouched and each coherence picks up the Gaussian
    characteristic function of ``v(t)``.
    """
    m = np.asarray(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    if m.shape != (sol.eigenvalues.size,) * 2:
        raise ValueError(f"{sol.eigenvalues.size} eigenvalues for a {m.shape} state")
    out = m * dephasing_factors(sol.eigenvalues, sol.mean_v(t), sol.var_v(t))
    return validate_density(out) if validate else out


def exact_single_process_in_basis(rho0, h, spec: GaussianProcessSpec, t: float, t0: float = 0.0) -> np.ndarray:
    """Same as `exact_single_process` for ``rho0`` in the computational basis."""
    e, v = eigh(h)
    rho_e = v.conj().T @ np.asarray(rho0, dtype=complex) @ v
    sol = DephasingSolution.from_process(e, spec, t0)
    return v @ exact_single_process(rho_e, sol, t, validate=False) @ v.conj().T


def two_level_coherence(rho01_0: complex, variance: float, corr_time: float, t: float, t0: float = 0.0) -> complex:
    """Coherence of a qubit under ``omega(t) Z`` with exponential field correlation."""
    x = (t - t0) / corr_time
    return rho01_0 * np.exp(-4.0 * variance * corr_time**2 * (x + np.expm1(-x)))


def two_atom_solution(gamma: float, t: float, t0: float = 0.0) -> DensityMatrix:
    """Averaged state of two atoms started in ``(|00> + |11>)/sqrt 2``."""
    if t < t0:
        raise ValueError(f"need t >= t0, got t={t} < t0={t0}")
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[3, 3] = 0.5
    m[0, 3] = m[3, 0] = 0.5 * np.exp(-gamma * (t - t0))
    return DensityMatrix(m)


def ion_short_time_depopulation(coupling: float, t: float) -> float:
    """Lowest-order ground-state depopulation ``coupling * t^2``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return coupling * t * t


def ion_heating_time(omega0: float, T: float, field_coupling: float) -> float:
    """Heating time ``tau1`` with ``1/tau1 = 2 coupling T / (1 + omega0^2 T^2)``.

    ``field_coupling`` is ``e^2 E0^2 / (2 M hbar omega0)``.
    """
    for name, val in (("omega0", omega0), ("T", T), ("field_coupling", field_coupling)):
        if not val > 0:
            raise ValueError(f"{name} must be > 0, got {val}")
    return (1.0 + (omega0 * T) ** 2) / (2.0 * field_coupling * T)


def ion_coupling_from_heating_time(omega0: float, T: float, tau1: float) -> float:
    """Inverse of `ion_heating_time` in its coupling argument."""
    for name, val in (("omega0", omega0), ("T", T), ("tau1", tau1)):
        if not val > 0:
            raise ValueError(f"{name} must be > 0, got {val}")
    return (1.0 + (omega0 * T) ** 2) / (2.0 * T * tau1)


def ion_cosine_coefficient(omega0: float, T: float, tau1: float, t: float) -> float:
    """``C(t)`` for an exponential field correlation and ``t0 = 0``."""
    w = omega0 * T
    return (np.exp(-t / T) * (w * np.sin(omega0 * t) - np.cos(omega0 * t)) + 1.0) / (2.0 * tau1)


def ion_sine_coefficient(omega0: float, T: float, tau1: float, t: float) -> float:
    """``S(t)`` for an exponential field correlation and ``t0 = 0``."""
    w = omega0 * T
    return -(np.exp(-t / T) * (np.sin(omega0 * t) + w * np.cos(omega0 * t)) - w) / (2.0 * tau1)
