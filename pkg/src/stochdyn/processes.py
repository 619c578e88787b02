"""Gaussian random processes: correlation kernels and exact path sampling.

Kernels are stationary, ``K(t, s) = c(|t - s|)``. Each kernel knows the closed
forms of the integrals the master equation needs:

* ``time_integral(t, t0)``  = int_{t0}^{t} K(t, t') dt'
* ``modulated_integrals``   = the same integral weighted by cos/sin of
  ``omega0 (t - t')``
* ``integral_variance``     = Var[ int_{t0}^{t} a(t') dt' ]

Sampling is per trajectory. Every trajectory draws from its own counter-based
Philox stream keyed by ``(seed, index)``, so a batch of paths does not depend
on how the batch is split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.integrate import trapezoid

MeanFn = Union[float, Callable[[float], float]]


class PointwiseUndefinedError(ValueError):
    """A white-noise process has no pointwise samples or values."""


def _check_interval(t: float, t0: float) -> float:
    if t < t0:
        raise ValueError(f"need t >= t0, got t={t} < t0={t0}")
    return float(t - t0)


class CorrelationKernel:
    """Stationary two-time correlation ``K(t, s) = c(|t - s|)``."""

    #: characteristic correlation time, ``inf`` if none
    time_scale: float = math.inf

    def lag(self, tau):
        raise NotImplementedError

    def __call__(self, t, s):
        return self.lag(np.abs(np.asarray(t, dtype=float) - np.asarray(s, dtype=float)))

    def time_integral(self, t: float, t0: float) -> float:
        raise NotImplementedError

    def modulated_integrals(self, omega0: float, t: float, t0: float) -> tuple[float, float]:
        raise NotImplementedError

    def integral_variance(self, t: float, t0: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(CorrelationKernel):
    """``variance * exp(-|t - s| / corr_time)``; ``corr_time=inf`` is a static variable."""

    variance: float
    corr_time: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")
        if not self.corr_time > 0:
            raise ValueError(f"corr_time must be > 0, got {self.corr_time}")

    @property
    def time_scale(self) -> float:
        return float(self.corr_time)

    def lag(self, tau):
        tau = np.asarray(tau, dtype=float)
        if math.isinf(self.corr_time):
            return self.variance * np.ones_like(tau)
        return self.variance * np.exp(-tau / self.corr_time)

    def time_integral(self, t, t0):
        tau = _check_interval(t, t0)
        T = self.corr_time
        if math.isinf(T):
            return self.variance * tau
        return self.variance * T * -math.expm1(-tau / T)

    def modulated_integrals(self, omega0, t, t0):
        tau = _check_interval(t, t0)
        # int_0^tau exp(-lam s) ds with lam = 1/T - i omega0
        lam = (0.0 if math.isinf(self.corr_time) else 1.0 / self.corr_time) - 1j * omega0
        z = lam * tau
        if abs(z) < 1e-8:
            val = tau * (1.0 - z / 2.0 + z * z / 6.0)
        else:
            val = (1.0 - np.exp(-z)) / lam
        val *= self.variance
        return float(val.real), float(val.imag)

    def integral_variance(self, t, t0):
        tau = _check_interval(t, t0)
        T = self.corr_time
        if math.isinf(T):
            return self.variance * tau * tau
        x = tau / T
        if x < 1e-4:
            # series of x + e^{-x} - 1, avoids cancellation
            core = x * x / 2.0 - x**3 / 6.0 + x**4 / 24.0
        else:
            core = x + math.expm1(-x)
        return 2.0 * self.variance * T * T * core


@dataclass(frozen=True)
class WhiteKernel(CorrelationKernel):
    """``strength * delta(t - s)``.

    The delta sits at the end of every integration interval, so only half its
    mass is counted by `time_integral`.
    """

    strength: float

    def __post_init__(self):
        if not self.strength >= 0:
            raise ValueError(f"strength must be >= 0, got {self.strength}")

    def lag(self, tau):
        raise PointwiseUndefinedError("a white-noise kernel has no pointwise values")

    def time_integral(self, t, t0):
        _check_interval(t, t0)
        return 0.5 * self.strength

    def modulated_integrals(self, omega0, t, t0):
        _check_interval(t, t0)
        return 0.5 * self.strength, 0.0

    def integral_variance(self, t, t0):
        return self.strength * _check_interval(t, t0)


class TabulatedKernel(CorrelationKernel):
    """Piecewise-linear ``c(tau)`` from a table of lags starting at 0.

    Beyond the last tabulated lag the correlation is taken as zero. The
    table must define a positive-definite Gram matrix on its own lag grid.
    """

    def __init__(self, lags: Sequence[float], values: Sequence[float]):
        lags = np.asarray(lags, dtype=float)
        values = np.asarray(values, dtype=float)
        if lags.ndim != 1 or lags.shape != values.shape or lags.size < 2:
            raise ValueError("lags and values must be 1-D of equal length >= 2")
        if lags[0] != 0.0 or np.any(np.diff(lags) <= 0):
            raise ValueError("lags must start at 0 and be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel values must be finite")
        self.lags = lags
        self.values = values
        gram = self.lag(np.abs(lags[:, None] - lags[None, :]))
        eig = np.linalg.eigvalsh(gram)
        scale = max(float(np.max(np.abs(eig))), np.finfo(float).tiny)
        if eig[0] < -1e-8 * scale:
            raise ValueError(
                f"tabulated kernel is not positive definite (min Gram eigenvalue {eig[0]:.3e})"
            )

    def __repr__(self):
        return f"TabulatedKernel(n={self.lags.size}, max_lag={self.lags[-1]})"

    @property
    def time_scale(self) -> float:
        return float(self.lags[-1])

    def lag(self, tau):
        return np.interp(np.asarray(tau, dtype=float), self.lags, self.values, right=0.0)

    def _nodes(self, tau: float) -> np.ndarray:
        inside = self.lags[self.lags < tau]
        return np.append(inside, tau)

    def time_integral(self, t, t0):
        tau = _check_interval(t, t0)
        s = self._nodes(tau)
        return float(trapezoid(self.lag(s), s))

    def modulated_integrals(self, omega0, t, t0):
        tau = _check_interval(t, t0)
        s = self._nodes(tau)
        c = self.lag(s)
        return float(trapezoid(c * np.cos(omega0 * s), s)), float(trapezoid(c * np.sin(omega0 * s), s))

    def integral_variance(self, t, t0):
        tau = _check_interval(t, t0)
        s = self._nodes(tau)
        return float(2.0 * trapezoid((tau - s) * self.lag(s), s))


# Module-level spellings of the kernel methods.

def kernel_eval(kernel: CorrelationKernel, t: float, s: float) -> float:
    return float(kernel(t, s))


def kernel_time_integral(kernel: CorrelationKernel, t: float, t0: float) -> float:
    return kernel.time_integral(t, t0)


def kernel_modulated_integrals(kernel: CorrelationKernel, omega0: float, t: float, t0: float):
    return kernel.modulated_integrals(omega0, t, t0)


def mean_value(mean_fn: MeanFn, t: float) -> float:
    return float(mean_fn(t)) if callable(mean_fn) else float(mean_fn)


def mean_integral(mean_fn: MeanFn, t: float, t0: float) -> float:
    tau = _check_interval(t, t0)
    if callable(mean_fn):
        return float(integrate.quad(mean_fn, t0, t, limit=200)[0]) if tau > 0 else 0.0
    return float(mean_fn) * tau


def variance_of_integral(kernel: CorrelationKernel, mean_fn: MeanFn, t: float, t0: float):
    """Mean and variance of ``v(t) = int_{t0}^{t} a(t') dt'``."""
    return mean_integral(mean_fn, t, t0), kernel.integral_variance(t, t0)


@dataclass(frozen=True)
class GaussianProcessSpec:
    kernel: CorrelationKernel
    mean: MeanFn = 0.0
    valence: str = "real"

    def __post_init__(self):
        if self.valence not in ("real", "circular_complex"):
            raise ValueError(f"valence must be 'real' or 'circular_complex', got {self.valence!r}")
        if self.valence == "circular_complex" and (callable(self.mean) or self.mean != 0):
            raise ValueError("a circular complex process must have zero mean")

    @property
    def is_white(self) -> bool:
        return isinstance(self.kernel, WhiteKernel)

    def mean_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if callable(self.mean):
            return np.array([self.mean(x) for x in np.ravel(t)], dtype=float).reshape(t.shape)
        return np.full(t.shape, float(self.mean))


class ProcessPath:
    """One sampled realization on a time grid.

    ``running_integral[k]`` is ``int_{t_0}^{t_k} a dt'`` of the same
    realization. White-noise paths carry no pointwise values.
    """

    def __init__(self, grid, values, running_integral):
        self.grid = np.asarray(grid, dtype=float)
        self._values = None if values is None else np.asarray(values)
        self.running_integral = np.asarray(running_integral)
        if self.running_integral.shape != self.grid.shape:
            raise ValueError("running_integral and grid lengths differ")
        if self._values is not None and self._values.shape != self.grid.shape:
            raise ValueError("values and grid lengths differ")
        if self.running_integral.size and self.running_integral[0] != 0:
            raise ValueError("running_integral must start at 0")

    @property
    def has_values(self) -> bool:
        return self._values is not None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            raise PointwiseUndefinedError("white-noise path has no pointwise values; use running_integral")
        return self._values


def check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(g) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return g


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent counter-based stream for trajectory ``index`` of run ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def trajectory_rngs(seed: int, indices) -> list[np.random.Generator]:
    return [trajectory_rng(seed, i) for i in indices]


def _single_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else trajectory_rng(seed, 0)


def _cumtrapz(values: np.ndarray, dt: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    out[..., 1:] = np.cumsum(0.5 * dt * (values[..., 1:] + values[..., :-1]), axis=-1)
    return out


def _ou_from_normals(z: np.ndarray, grid: np.ndarray, sigma: float, T: float) -> np.ndarray:
    """Exact stationary zero-mean OU recursion driven by standard normals ``z``."""
    a = np.empty_like(z)
    a[..., 0] = sigma * z[..., 0]
    if math.isinf(T):
        a[..., 1:] = a[..., :1]
        return a
    decay = np.exp(-np.diff(grid) / T)
    kick = sigma * np.sqrt(-np.expm1(-2.0 * np.diff(grid) / T))
    for k in range(grid.size - 1):
        a[..., k + 1] = a[..., k] * decay[k] + kick[k] * z[..., k + 1]
    return a


def _real_batch(spec: GaussianProcessSpec, grid: np.ndarray, z: np.ndarray):
    """Values and running integrals for a real process from normals ``z[..., M+1]``."""
    dt = np.diff(grid)
    kernel = spec.kernel
    mean = spec.mean_at(grid)
    if isinstance(kernel, WhiteKernel):
        mean_incr = 0.5 * dt * (mean[1:] + mean[:-1])
        incr = mean_incr + math.sqrt(kernel.strength) * np.sqrt(dt) * z[..., 1:]
        v = np.zeros(z.shape)
        v[..., 1:] = np.cumsum(incr, axis=-1)
        return None, v
    if isinstance(kernel, ExponentialKernel):
        a = mean + _ou_from_normals(z, grid, math.sqrt(kernel.variance), kernel.corr_time)
        return a, _cumtrapz(a, dt)
    raise ValueError(f"sampling not supported for {type(kernel).__name__}")


def sample_real_batch(spec: GaussianProcessSpec, grid, rngs):
    """Batched `sample_path`, one generator per path: arrays of shape ``(len(rngs), len(grid))``."""
    grid = check_grid(grid)
    z = np.stack([r.standard_normal(grid.size) for r in rngs])
    return _real_batch(spec, grid, z)


def sample_circular_batch(spec: GaussianProcessSpec, grid, rngs):
    """Batched circular complex sampler: independent real and imaginary parts."""
    grid = check_grid(grid)
    if spec.valence != "circular_complex":
        raise ValueError("spec must be circular_complex")
    z = np.stack([r.standard_normal((2, grid.size)) for r in rngs])
    half = _half_kernel(spec.kernel)
    part = GaussianProcessSpec(half)
    a, v = _real_batch(part, grid, z)
    if a is None:
        return None, v[:, 0] + 1j * v[:, 1]
    return a[:, 0] + 1j * a[:, 1], v[:, 0] + 1j * v[:, 1]


def _half_kernel(kernel: CorrelationKernel) -> CorrelationKernel:
    if isinstance(kernel, ExponentialKernel):
        return ExponentialKernel(kernel.variance / 2.0, kernel.corr_time)
    if isinstance(kernel, WhiteKernel):
        return WhiteKernel(kernel.strength / 2.0)
    raise ValueError(f"sampling not supported for {type(kernel).__name__}")


def sample_path(spec: GaussianProcessSpec, grid, seed=0) -> ProcessPath:
    """Sample one realization of a real Gaussian process.

    Exponential kernels use the exact Ornstein-Uhlenbeck transition between
    grid points and a trapezoid running integral. White kernels are sampled
    through exact Brownian increments of the integral only.

    ``seed`` is an integer (trajectory 0 of that seed) or a ``Generator``.
    """
    if spec.valence != "real":
        raise ValueError("use sample_complex_path for circular complex processes")
    grid = check_grid(grid)
    a, v = sample_real_batch(spec, grid, [_single_rng(seed)])
    return ProcessPath(grid, None if a is None else a[0], v[0])


def modulate(values: np.ndarray, grid: np.ndarray, omega0: float, amplitude: float) -> np.ndarray:
    """``i * amplitude * E(t) * exp(i omega0 t)`` for real field samples ``E``."""
    return 1j * amplitude * values * np.exp(1j * omega0 * grid)


def sample_complex_path(spec: GaussianProcessSpec, grid, seed=0, *, carrier=None) -> ProcessPath:
    """Sample a complex Gaussian path.

    Without ``carrier`` the spec must be circular complex and the path is
    built from two independent real processes of half the variance. With
    ``carrier=(omega0, amplitude)`` the spec describes a real field ``E(t)``
    and the returned path is ``i * amplitude * E(t) * exp(i omega0 t)``.
    """
    grid = check_grid(grid)
    if carrier is None:
        a, v = sample_circular_batch(spec, grid, [_single_rng(seed)])
        return ProcessPath(grid, None if a is None else a[0], v[0])
    if spec.valence != "real" or spec.is_white:
        raise ValueError("a modulated path needs a real, pointwise-sampled field spec")
    omega0, amplitude = carrier
    field, _ = sample_real_batch(spec, grid, [_single_rng(seed)])
    u = modulate(field[0], grid, omega0, amplitude)
    return ProcessPath(grid, u, _cumtrapz(u, np.diff(grid)))


@dataclass(frozen=True)
class ModulatedCorrelation:
    """Complex two-time correlation built on a real stationary kernel.

    ``pseudo=False``: ``scale * K(t, s) * exp(i omega (t - s))``
    ``pseudo=True``:  ``scale * K(t, s) * exp(i omega (t + s))``

    The first form is a correlation ``E[a(t) a*(s)]`` of a carrier-modulated
    process; the second its pseudo-correlation ``E[a(t) a(s)]``.
    """

    kernel: CorrelationKernel
    scale: complex = 1.0
    omega: float = 0.0
    pseudo: bool = False

    def __call__(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        phase = t + s if self.pseudo else t - s
        return self.scale * self.kernel(t, s) * np.exp(1j * self.omega * phase)

    def integral(self, t: float, t0: float) -> complex:
        """``int_{t0}^{t} dt'`` of the correlation at ``(t, t')``."""
        c, s = self.kernel.modulated_integrals(self.omega, t, t0)
        if self.pseudo:
            return complex(self.scale * np.exp(2j * self.omega * t) * (c - 1j * s))
        return complex(self.scale * (c + 1j * s))


ZERO_CORRELATION = ModulatedCorrelation(WhiteKernel(0.0), scale=0.0)
