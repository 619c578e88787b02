"""Second-order time-local master equations and their RK4 integration.

Every generator is returned in one evaluated normal form,

    d rho / dt = -i [H_eff, rho] + sum_j c_j (2 R_j rho L_j - L_j R_j rho - rho L_j R_j),

with hbar absorbed into the operators (Hamiltonians are ``hbar * a(t) * h``).
The four model classes below each have their own closed-form coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .operators import (
    HERMITIAN_TOL,
    POSITIVITY_TOL,
    TRACE_TOL,
    DensityMatrix,
    as_matrix,
    concurrence,
    dagger,
    density_violations,
    fock_ladder,
)
from .processes import (
    ZERO_CORRELATION,
    CorrelationKernel,
    ExponentialKernel,
    GaussianProcessSpec,
    ModulatedCorrelation,
)


class InvariantViolation(RuntimeError):
    """A propagated state left the physical set by far more than round-off."""


# ---------------------------------------------------------------- models


def _hermitian(h, name="h", tol=1e-12) -> np.ndarray:
    h = as_matrix(h, name)
    if h.shape[0] != h.shape[1]:
        raise ValueError(f"{name} must be square")
    err = np.max(np.abs(h - h.conj().T))
    if err > tol:
        raise ValueError(f"{name} is not Hermitian (max deviation {err:.2e})")
    return h


@dataclass(frozen=True)
class SingleRealModel:
    """``H(t) = a(t) h`` with ``h`` Hermitian and ``a`` a real Gaussian process."""

    h: np.ndarray
    process: GaussianProcessSpec

    def __post_init__(self):
        object.__setattr__(self, "h", _hermitian(self.h))
        if self.process.valence != "real":
            raise ValueError("SingleRealModel needs a real process")

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    @property
    def time_scale(self) -> float:
        return self.process.kernel.time_scale


@dataclass(frozen=True)
class TimeIndependentModel:
    """Random but static couplings: ``H = sum_n a_n h_n (+ h.c.)``.

    ``valence="circular_complex"``: ``H = sum_n a_n h_n + a_n* h_n^dag`` with
    ``covariance[k, l] = E[a_k a_l*]``.
    ``valence="real"``: ``H = sum_n a_n h_n`` with Hermitian ``h_n`` and a real
    covariance matrix.
    """

    operators: tuple
    covariance: np.ndarray
    valence: str = "circular_complex"

    def __post_init__(self):
        ops = tuple(as_matrix(o, "h_n") for o in self.operators)
        if not ops:
            raise ValueError("need at least one operator")
        if len({o.shape for o in ops}) != 1 or ops[0].shape[0] != ops[0].shape[1]:
            raise ValueError("operators must be square and of equal dimension")
        cov = np.atleast_2d(np.array(self.covariance, dtype=complex))
        if cov.shape != (len(ops), len(ops)):
            raise ValueError(f"covariance must be {len(ops)}x{len(ops)}, got {cov.shape}")
        if np.max(np.abs(cov - cov.conj().T)) > 1e-12:
            raise ValueError("covariance is not Hermitian")
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
            raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
        if self.valence not in ("real", "circular_complex"):
            raise ValueError(f"unknown valence {self.valence!r}")
        if self.valence == "real":
            ops = tuple(_hermitian(o, "h_n") for o in ops)
            if np.max(np.abs(cov.imag)) > 0:
                raise ValueError("real couplings need a real covariance")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    time_scale = math.inf


Correlation = Union[CorrelationKernel, ModulatedCorrelation]


def _correlation_integral(corr: Correlation, t: float, t0: float) -> complex:
    if isinstance(corr, ModulatedCorrelation):
        return corr.integral(t, t0)
    return complex(corr.time_integral(t, t0))


@dataclass(frozen=True)
class MultiComplexModel:
    """``H(t) = sum_n a_n(t) h_n + a_n*(t) h_n^dag`` with zero-mean complex processes.

    ``processes`` gives one circular spec per operator; when ``cross_kernels``
    is None the processes are independent and the diagonal correlations come
    from the specs. ``cross_kernels[(k, l)]`` is ``E[a_k(t) a_l*(t')]`` and must
    then cover every pair. ``pseudo_kernels[(k, l)]`` is ``E[a_k(t) a_l(t')]``;
    missing pairs are zero (circular statistics).
    """

    operators: tuple
    processes: tuple | None = None
    cross_kernels: dict | None = None
    pseudo_kernels: dict = field(default_factory=dict)

    def __post_init__(self):
        ops = tuple(as_matrix(o, "h_n") for o in self.operators)
        n = len(ops)
        if n == 0:
            raise ValueError("need at least one operator")
        if len({o.shape for o in ops}) != 1 or ops[0].shape[0] != ops[0].shape[1]:
            raise ValueError("operators must be square and of equal dimension")
        object.__setattr__(self, "operators", ops)
        if self.cross_kernels is None:
            if self.processes is None or len(self.processes) != n:
                raise ValueError("give one process spec per operator, or explicit cross_kernels")
            for p in self.processes:
                if p.valence != "circular_complex":
                    raise ValueError("multi-process model needs circular complex processes")
            cross = {(k, l): (self.processes[k].kernel if k == l else ZERO_CORRELATION)
                     for k in range(n) for l in range(n)}
            object.__setattr__(self, "cross_kernels", cross)
        else:
            missing = [(k, l) for k in range(n) for l in range(n) if (k, l) not in self.cross_kernels]
            if missing:
                raise ValueError(f"missing cross-kernel(s) for pairs {missing}")
        object.__setattr__(self, "pseudo_kernels", dict(self.pseudo_kernels))

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def time_scale(self) -> float:
        scales = [getattr(getattr(c, "kernel", c), "time_scale", math.inf)
                  for c in self.cross_kernels.values()]
        omegas = [abs(c.omega) for c in list(self.cross_kernels.values()) + list(self.pseudo_kernels.values())
                  if isinstance(c, ModulatedCorrelation) and c.omega]
        return min(scales + [1.0 / w for w in omegas] + [math.inf])


@dataclass(frozen=True)
class IonHeatingModel:
    """Trapped ion in a fluctuating field, interaction picture, ``n_fock`` levels.

    ``coupling`` is ``e^2 E0^2 / (2 M hbar omega0)`` (units 1/s^2) and
    ``kernel`` the field correlation normalized to ``kernel(t, t) = 1``.
    """

    omega0: float
    coupling: float
    kernel: CorrelationKernel
    n_fock: int = 5

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if not self.coupling >= 0:
            raise ValueError(f"coupling must be >= 0, got {self.coupling}")
        if int(self.n_fock) < 2:
            raise ValueError(f"n_fock must be >= 2, got {self.n_fock}")

    @classmethod
    def from_dimensionless(cls, omega0_T: float, omega0_tau1: float, n_fock: int = 5, omega0: float = 1.0):
        """Build from ``omega0 * T`` and ``omega0 * tau1`` (exponential field correlation)."""
        from .analytic import ion_coupling_from_heating_time

        T = omega0_T / omega0
        tau1 = omega0_tau1 / omega0
        return cls(omega0, ion_coupling_from_heating_time(omega0, T, tau1), ExponentialKernel(1.0, T), n_fock)

    @property
    def dim(self) -> int:
        return int(self.n_fock)

    @property
    def time_scale(self) -> float:
        return min(self.kernel.time_scale, 1.0 / self.omega0)

    def ladder(self):
        return fock_ladder(self.n_fock)


Model = Union[SingleRealModel, TimeIndependentModel, MultiComplexModel, IonHeatingModel]


# ---------------------------------------------------------------- generator


@dataclass(frozen=True)
class DissipatorTerm:
    coefficient: complex
    left: np.ndarray
    right: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        lr = self.left @ self.right
        return self.coefficient * (2.0 * self.right @ rho @ self.left - lr @ rho - rho @ lr)


@dataclass(frozen=True)
class GeneratorEvaluation:
    """The superoperator of the master equation at one instant."""

    h_eff: np.ndarray
    terms: tuple = ()

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = -1j * (self.h_eff @ rho - rho @ self.h_eff)
        for term in self.terms:
            if term.coefficient != 0:
                out = out + term.apply(rho)
        return out

    __call__ = apply

    @property
    def dim(self) -> int:
        return self.h_eff.shape[0]

    def superoperator(self) -> np.ndarray:
        """Matrix acting on row-major ``vec(rho)``."""
        d = self.dim
        basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
        return np.stack([self.apply(b).ravel() for b in basis], axis=1)

    def rate_bound(self) -> float:
        """Upper bound on the operator norm of the superoperator."""
        bound = 2.0 * np.linalg.norm(self.h_eff, 2)
        for t in self.terms:
            bound += 4.0 * abs(t.coefficient) * np.linalg.norm(t.left, 2) * np.linalg.norm(t.right, 2)
        return float(bound)


def _check_time(t, t0):
    if t < t0:
        raise ValueError(f"need t >= t0, got t={t} < t0={t0}")


def generator_single_real(model: SingleRealModel, t: float, t0: float) -> GeneratorEvaluation:
    """``-i mean(t) [h, rho] + D(t) [h, [h, rho]]`` with ``D(t) = -int K(t, t') dt'``."""
    _check_time(t, t0)
    spec = model.process
    mean = float(spec.mean_at(t))
    d_coef = -spec.kernel.time_integral(t, t0)
    h = model.h
    return GeneratorEvaluation(mean * h, (DissipatorTerm(-d_coef, h, h),))


def generator_time_independent(model: TimeIndependentModel, t: float, t0: float) -> GeneratorEvaluation:
    _check_time(t, t0)
    tau = t - t0
    ops = model.operators
    cov = model.covariance
    n = len(ops)
    terms = []
    if model.valence == "real":
        for k in range(n):
            for l in range(n):
                terms.append(DissipatorTerm(tau * cov[k, l], ops[k], ops[l]))
    else:
        for k in range(n):
            for l in range(n):
                terms.append(DissipatorTerm(tau * cov[k, l], ops[k], dagger(ops[l])))
                terms.append(DissipatorTerm(tau * np.conj(cov[k, l]), dagger(ops[k]), ops[l]))
    return GeneratorEvaluation(np.zeros_like(ops[0]), tuple(terms))


def channel_integrals(model: MultiComplexModel, t: float, t0: float):
    """Channel operators ``G`` and ``M[i, j] = int E[c_i(t) c_j(t')] dt'``.

    The Hamiltonian is ``sum_i c_i(t) G_i`` with ``c = (a_1, a_1*, a_2, ...)``
    and ``G = (h_1, h_1^dag, h_2, ...)``.
    """
    ops = model.operators
    n = len(ops)
    chans = []
    for h in ops:
        chans += [h, dagger(h)]
    m = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        for l in range(n):
            x = _correlation_integral(model.cross_kernels[(k, l)], t, t0)
            pk = model.pseudo_kernels.get((k, l))
            p = 0.0 if pk is None else _correlation_integral(pk, t, t0)
            m[2 * k, 2 * l + 1] = x
            m[2 * k + 1, 2 * l] = np.conj(x)
            m[2 * k, 2 * l] = p
            m[2 * k + 1, 2 * l + 1] = np.conj(p)
    return chans, m


def alpha_beta(model: MultiComplexModel, t: float, t0: float):
    """The commutator (alpha) and dissipator (beta) coefficient matrices of the circular form."""
    n = len(model.operators)
    x = np.array([[_correlation_integral(model.cross_kernels[(k, l)], t, t0) for l in range(n)]
                  for k in range(n)])
    # int E[a_l*(t) a_k(t')] dt' is the conjugate of the (l, k) integral
    y = np.conj(x).T
    return 0.5 * (x - y), 0.5 * (x + y)


def generator_multi_complex(model: MultiComplexModel, t: float, t0: float) -> GeneratorEvaluation:
    """Second-order generator ``-sum_ij M_ij [G_i, [G_j, rho]]`` in normal form.

    For circular processes this is exactly the Lindblad form with
    ``H_eff = -i sum alpha_kl [h_k, h_l^dag]`` and ``beta_kl`` on the six-term
    bracket; pseudo-correlations add the squeezing-type terms.
    """
    _check_time(t, t0)
    chans, m = channel_integrals(model, t, t0)
    d = model.dim
    h_eff = np.zeros((d, d), dtype=complex)
    terms = []
    for i, gi in enumerate(chans):
        for j, gj in enumerate(chans):
            if m[i, j] != 0:
                h_eff += -0.5j * m[i, j] * (gi @ gj - gj @ gi)
            c = 0.5 * (m[i, j] + m[j, i])
            if c != 0:
                terms.append(DissipatorTerm(c, gi, gj))
    return GeneratorEvaluation(h_eff, tuple(terms))


def ion_coefficients(model: IonHeatingModel, t: float, t0: float = 0.0) -> tuple[float, float]:
    """The cosine and sine transform coefficients ``C(t)``, ``S(t)``."""
    _check_time(t, t0)
    c, s = model.kernel.modulated_integrals(model.omega0, t, t0)
    return model.coupling * c, model.coupling * s


def generator_ion(model: IonHeatingModel, t: float, t0: float = 0.0) -> GeneratorEvaluation:
    big_c, big_s = ion_coefficients(model, t, t0)
    a, ad = model.ladder()
    phase = np.exp(2j * model.omega0 * t)
    terms = (
        DissipatorTerm(big_c, ad, a),
        DissipatorTerm(big_c, a, ad),
        DissipatorTerm(phase * (big_c - 1j * big_s), ad, ad),
        DissipatorTerm(np.conj(phase) * (big_c + 1j * big_s), a, a),
    )
    return GeneratorEvaluation(-big_s * np.eye(model.dim, dtype=complex), terms)


def ion_as_multi_complex(model: IonHeatingModel) -> MultiComplexModel:
    """The ion Hamiltonian ``i(u a^dag - u* a)`` as ``u h + u* h^dag`` with ``h = i a^dag``.

    ``u = i sqrt(coupling) E(t) exp(i omega0 t)`` is not circular, so the
    pseudo-correlation ``E[u(t) u(t')]`` is supplied explicitly.
    """
    _, ad = model.ladder()
    cross = {(0, 0): ModulatedCorrelation(model.kernel, model.coupling, model.omega0)}
    pseudo = {(0, 0): ModulatedCorrelation(model.kernel, -model.coupling, model.omega0, pseudo=True)}
    return MultiComplexModel((1j * ad,), cross_kernels=cross, pseudo_kernels=pseudo)


def generator(model: Model, t: float, t0: float) -> GeneratorEvaluation:
    if isinstance(model, SingleRealModel):
        return generator_single_real(model, t, t0)
    if isinstance(model, TimeIndependentModel):
        return generator_time_independent(model, t, t0)
    if isinstance(model, MultiComplexModel):
        return generator_multi_complex(model, t, t0)
    if isinstance(model, IonHeatingModel):
        return generator_ion(model, t, t0)
    raise TypeError(f"unsupported model {type(model).__name__}")


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError(f"t_end must exceed t0, got {self.t0}..{self.t_end}")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_end, int(self.n_steps) + 1)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / int(self.n_steps)

    def refine(self, factor: int) -> TimeGrid:
        return TimeGrid(self.t0, self.t_end, int(self.n_steps) * int(factor))


@dataclass
class TrajectoryResult:
    """Density matrices on a time grid, with derived observables."""

    times: np.ndarray
    states: np.ndarray

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    def state(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.states[k])

    def element(self, k: int, l: int) -> np.ndarray:
        return self.states[:, k, l]

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))

    def fidelity(self, level: int = 0) -> np.ndarray:
        return np.real(self.states[:, level, level])

    def coherence_magnitudes(self) -> dict[tuple[int, int], np.ndarray]:
        d = self.dim
        return {(k, l): np.abs(self.states[:, k, l]) for k in range(d) for l in range(k + 1, d)}

    def concurrences(self) -> np.ndarray:
        if self.dim != 4:
            raise ValueError("concurrence needs two-qubit states")
        return np.array([concurrence(0.5 * (s + s.conj().T)) for s in self.states])

    def invariant_summary(self) -> dict[str, float]:
        v = [density_violations(s) for s in self.states]
        return {
            "max_trace_error": max(x["trace"] for x in v),
            "max_hermiticity_error": max(x["hermiticity"] for x in v),
            "min_eigenvalue": min(x["min_eigenvalue"] for x in v),
        }


# ---------------------------------------------------------------- integration


def default_substeps(model: Model, grid: TimeGrid) -> int:
    """RK4 steps per grid interval.

    The step is capped at ``time_scale / 50`` and at ``0.05 / rate`` where
    ``rate`` bounds the generator norm over the run.
    """
    t0, t1 = grid.t0, grid.t_end
    rate = max(generator(model, t, t0).rate_bound() for t in np.linspace(t0, t1, 9))
    h = grid.t_end - grid.t0
    if math.isfinite(model.time_scale):
        h = min(h, model.time_scale / 50.0)
    if rate > 0:
        h = min(h, 0.05 / rate)
    return max(1, math.ceil(grid.dt / h - 1e-9))


def _check_state(rho: np.ndarray, t: float, slack: float = 100.0) -> None:
    v = density_violations(rho)
    if v["trace"] > slack * TRACE_TOL or v["hermiticity"] > slack * HERMITIAN_TOL \
            or v["min_eigenvalue"] < -slack * POSITIVITY_TOL:
        raise InvariantViolation(
            f"state left the physical set at t={t:.6g}: trace error {v['trace']:.2e}, "
            f"Hermiticity error {v['hermiticity']:.2e}, min eigenvalue {v['min_eigenvalue']:.2e}"
        )


def evolve(model: Model, rho0, grid: TimeGrid, *, substeps: int | None = None,
           check: bool = True) -> TrajectoryResult:
    """Integrate the master equation with classic fixed-step RK4.

    No trace renormalization is applied. With ``check`` on, a state that
    violates an invariant by more than 100x its tolerance aborts the run.
    """
    rho = np.array(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"initial state is {rho.shape}, model acts on dimension {model.dim}")
    if substeps is None:
        substeps = default_substeps(model, grid)
    times = grid.times
    t0 = grid.t0
    h = grid.dt / substeps
    out = np.empty((times.size, model.dim, model.dim), dtype=complex)
    out[0] = rho
    gen_prev = generator(model, t0, t0)
    for k in range(times.size - 1):
        for s in range(substeps):
            t = times[k] + s * h
            g1 = gen_prev
            g2 = generator(model, t + 0.5 * h, t0)
            g3 = generator(model, t + h, t0)
            k1 = g1.apply(rho)
            k2 = g2.apply(rho + 0.5 * h * k1)
            k3 = g2.apply(rho + 0.5 * h * k2)
            k4 = g3.apply(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            gen_prev = g3
        out[k + 1] = rho
        if check:
            _check_state(rho, times[k + 1])
    return TrajectoryResult(times, out)
