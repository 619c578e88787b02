"""Monte-Carlo ground truth: sample Hamiltonian realizations and average.

Commuting models (``H(t) = a(t) h``) are propagated exactly through the
running integral ``v(t)``. Everything else is stepped with midpoint
exponentials ``exp(-i H(t_mid) dt)`` on a fine grid. Only the eigenvectors of
``rho0`` with non-zero weight are propagated, which is the same as
``U rho0 U^dag`` but cheaper than carrying full propagators.

Trajectory ``i`` (1-based) of a run draws from ``trajectory_rng(seed, i)``.
Trajectories are processed in fixed-size blocks whose partial statistics are
merged in block order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .master_equation import (
    IonHeatingModel,
    Model,
    MultiComplexModel,
    SingleRealModel,
    TimeGrid,
    TimeIndependentModel,
    TrajectoryResult,
)
from .operators import DensityMatrix, dagger, eigh, validate_density
from .processes import (
    GaussianProcessSpec,
    ProcessPath,
    check_grid,
    sample_circular_batch,
    sample_real_batch,
    trajectory_rngs,
)

BLOCK_SIZE = 500
UNITARITY_TOL = 1e-10
# largest accepted ||H|| dt per step; beyond it the midpoint rule is meaningless
MAX_STEP_PHASE = 10.0


class UnitarityError(RuntimeError):
    """Propagation lost unitarity; the step grid is too coarse."""


def _dm(rho0) -> np.ndarray:
    return np.array(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)


# ---------------------------------------------------------------- commuting


def _phase_map(h: np.ndarray, rho0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """States ``exp(-i v h) rho0 exp(i v h)`` for an array of ``v`` (any leading shape)."""
    e, vec = eigh(h)
    rho_e = vec.conj().T @ rho0 @ vec
    de = e[:, None] - e[None, :]
    v = np.asarray(v)
    out_e = rho_e * np.exp(-1j * v[..., None, None] * de)
    diag = np.diagonal(out_e, axis1=-2, axis2=-1)
    if not np.array_equal(diag, np.broadcast_to(np.diagonal(rho_e), diag.shape)):
        raise AssertionError("phase map changed eigenbasis populations")
    return vec @ out_e @ vec.conj().T


def propagate_commuting(h, path: ProcessPath, rho0) -> np.ndarray:
    """Exact per-realization states for ``H(t) = a(t) h`` on the path grid."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or np.max(np.abs(h - h.conj().T)) > 1e-12:
        raise ValueError("h must be a square Hermitian matrix")
    return _phase_map(h, _dm(rho0), np.real_if_close(path.running_integral))


# ---------------------------------------------------------------- general


def hamiltonian_channels(model: Model) -> list[np.ndarray]:
    """Fixed operators ``G_j`` with ``H(t) = sum_j c_j(t) G_j``."""
    if isinstance(model, SingleRealModel):
        return [model.h]
    if isinstance(model, TimeIndependentModel):
        if model.valence == "real":
            return list(model.operators)
        return [g for h in model.operators for g in (h, dagger(h))]
    if isinstance(model, MultiComplexModel):
        return [g for h in model.operators for g in (h, dagger(h))]
    if isinstance(model, IonHeatingModel):
        a, ad = model.ladder()
        return [ad, a]
    raise TypeError(f"unsupported model {type(model).__name__}")


def channel_coefficients(model: Model, t, values: np.ndarray) -> np.ndarray:
    """Coefficients ``c_j`` from process samples.

    ``values`` has shape ``(..., n_processes, n_times)``; for the ion the
    single process is the real field ``E(t)``. Returns ``(..., J, n_times)``.
    """
    if isinstance(model, IonHeatingModel):
        amp = -math.sqrt(model.coupling) * values[..., 0, :]
        carrier = np.exp(1j * model.omega0 * np.asarray(t))
        return np.stack([amp * carrier, amp * np.conj(carrier)], axis=-2)
    if isinstance(model, SingleRealModel) or (
            isinstance(model, TimeIndependentModel) and model.valence == "real"):
        return values.astype(complex)
    # a_n h_n + a_n* h_n^dag
    out = np.empty(values.shape[:-2] + (2 * values.shape[-2], values.shape[-1]), dtype=complex)
    out[..., 0::2, :] = values
    out[..., 1::2, :] = np.conj(values)
    return out


def _expm_action(chans, coef: np.ndarray, dt: float, phi: np.ndarray) -> np.ndarray:
    """``exp(-i dt sum_j coef[:, j] G_j) @ phi`` for a batch.

    Scaling plus a Taylor series run to machine precision; applying the
    scaled exponential ``s`` times is the vector form of scaling-and-squaring.
    """
    norms = np.array([np.linalg.norm(g, 2) for g in chans])
    bound = float(np.max(np.abs(coef) @ norms)) * dt
    if bound > MAX_STEP_PHASE:
        raise UnitarityError(f"step too coarse: ||H|| dt = {bound:.3g} > {MAX_STEP_PHASE}")
    s = max(1, math.ceil(bound / 0.5))
    h = -1j * dt / s

    def apply_x(y):
        acc = np.zeros_like(y)
        for j, g in enumerate(chans):
            acc += coef[:, j, None, None] * (g @ y)
        return h * acc

    for _ in range(s):
        term = phi
        out = phi.copy()
        for k in range(1, 40):
            term = apply_x(term) / k
            out += term
            if np.max(np.abs(term)) < 1e-18:
                break
        phi = out
    return phi


def _propagate_columns(model, t_fine: np.ndarray, values: np.ndarray, phi0: np.ndarray,
                       record: np.ndarray) -> np.ndarray:
    """Midpoint-exponential stepping of state columns; returns them at ``record`` indices."""
    chans = hamiltonian_channels(model)
    t_mid = 0.5 * (t_fine[1:] + t_fine[:-1])
    v_mid = 0.5 * (values[..., 1:] + values[..., :-1])
    coef = channel_coefficients(model, t_mid, v_mid)
    b = values.shape[0]
    phi = np.broadcast_to(phi0, (b,) + phi0.shape).copy()
    gram0 = phi0.conj().T @ phi0
    out = np.empty((b, record.size) + phi0.shape, dtype=complex)
    rec = {int(k): i for i, k in enumerate(record)}
    if 0 in rec:
        out[:, rec[0]] = phi
    for k in range(t_fine.size - 1):
        phi = _expm_action(chans, coef[:, :, k], t_fine[k + 1] - t_fine[k], phi)
        if k + 1 in rec:
            out[:, rec[k + 1]] = phi
            drift = np.max(np.abs(dagger(phi) @ phi - gram0))
            if drift > UNITARITY_TOL:
                raise UnitarityError(f"unitarity drift {drift:.2e} at t={t_fine[k + 1]:.6g}")
    return out


def _columns(rho0: np.ndarray) -> np.ndarray:
    w, v = eigh(rho0)
    keep = w > 1e-14
    return v[:, keep] * np.sqrt(w[keep])


def _path_values(paths) -> np.ndarray:
    if isinstance(paths, ProcessPath):
        paths = [paths]
    grid = paths[0].grid
    for p in paths:
        if not np.array_equal(p.grid, grid):
            raise ValueError("paths must share one grid")
    return grid, np.stack([p.values for p in paths])[None]


def propagate_general(model: Model, paths, rho0=None, record_stride: int = 1):
    """Step one realization with midpoint exponentials.

    ``paths`` holds one `ProcessPath` per process of the model on a common
    fine grid (for the ion, the real field ``E(t)``). With ``rho0`` the
    states at every ``record_stride``-th node are returned; without it, the
    propagators ``U(t)``.
    """
    grid, values = _path_values(paths)
    record = np.arange(0, grid.size, int(record_stride))
    if record[-1] != grid.size - 1:
        record = np.append(record, grid.size - 1)
    if rho0 is None:
        u = _propagate_columns(model, grid, values, np.eye(model.dim, dtype=complex), record)[0]
        return u
    phi = _propagate_columns(model, grid, values, _columns(_dm(rho0)), record)[0]
    return phi @ dagger(phi)


# ---------------------------------------------------------------- ensembles


@dataclass
class EnsembleResult(TrajectoryResult):
    """Trajectory-averaged states with element-wise standard errors."""

    stderr_re: np.ndarray = None
    stderr_im: np.ndarray = None
    n_trajectories: int = 0
    seed: int = 0

    def z_scores(self, states) -> tuple[np.ndarray, np.ndarray]:
        """``|other - mean| / stderr`` for real and imaginary parts (inf where stderr is 0)."""
        diff = np.asarray(states) - self.states
        with np.errstate(divide="ignore", invalid="ignore"):
            zr = np.abs(diff.real) / self.stderr_re
            zi = np.abs(diff.imag) / self.stderr_im
        return zr, zi


def oracle_agreement(states, ens: EnsembleResult, atol: float = 1e-12) -> dict[str, float]:
    """Element-wise comparison of a deterministic solution with an ensemble.

    Deviations below ``atol`` count as zero, so elements the ensemble holds
    exactly fixed (zero standard error) compare by round-off only.
    """
    diff = np.asarray(states) - ens.states
    z = []
    for d, se in ((diff.real, ens.stderr_re), (diff.imag, ens.stderr_im)):
        excess = np.clip(np.abs(d) - atol, 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = np.where(excess == 0, 0.0, excess / se)
        z.append(zz.ravel())
    z = np.concatenate(z)
    return {
        "max_z": float(np.max(z)),
        "frac_within_3se": float(np.mean(z <= 3.0)),
        "max_abs_dev": float(np.max(np.abs(diff))),
    }


def _fine_factor(model: Model, grid: TimeGrid, substep_divisor: float) -> int:
    scale = model.time_scale
    if isinstance(model, SingleRealModel) and model.process.is_white:
        return 1
    if isinstance(model, TimeIndependentModel) or not math.isfinite(scale):
        return 1
    return max(1, math.ceil(grid.dt * substep_divisor / scale - 1e-9))


def _sample_values(model: Model, t_fine: np.ndarray, rngs) -> np.ndarray:
    """Process samples of shape ``(B, n_processes, n_times)``."""
    if isinstance(model, IonHeatingModel):
        a, _ = sample_real_batch(GaussianProcessSpec(model.kernel), t_fine, rngs)
        return a[:, None, :]
    if isinstance(model, SingleRealModel):
        a, _ = sample_real_batch(model.process, t_fine, rngs)
        return a[:, None, :]
    if isinstance(model, TimeIndependentModel):
        n = len(model.operators)
        w, v = np.linalg.eigh(model.covariance)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        z = np.stack([r.standard_normal((2, n)) for r in rngs])
        if model.valence == "real":
            a = np.real(z[:, 0] @ root.T)
        else:
            a = ((z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)) @ root.T
        return np.repeat(a[:, :, None], t_fine.size, axis=2)
    if isinstance(model, MultiComplexModel):
        if model.processes is None or model.pseudo_kernels:
            raise NotImplementedError("oracle sampling needs independent circular processes")
        cols = []
        for spec in model.processes:
            a, _ = sample_circular_batch(spec, t_fine, rngs)
            if a is None:
                raise NotImplementedError("white-noise multi-process sampling is not supported")
            cols.append(a)
        return np.stack(cols, axis=1)
    raise TypeError(f"unsupported model {type(model).__name__}")


def _block_states(model, rho0, grid: TimeGrid, seed: int, indices, factor: int) -> np.ndarray:
    """Per-trajectory states ``(B, n_times, d, d)`` for one block."""
    rngs = trajectory_rngs(seed, indices)
    fine = grid.refine(factor).times
    record = np.arange(0, fine.size, factor)
    if isinstance(model, SingleRealModel):
        _, v = sample_real_batch(model.process, fine, rngs)
        return _phase_map(model.h, rho0, v[:, record])
    values = _sample_values(model, fine, rngs)
    phi = _propagate_columns(model, fine, values, _columns(rho0), record)
    return phi @ dagger(phi)


def _block_stats(args):
    model, rho0, grid, seed, indices, factor = args
    states = _block_states(model, rho0, grid, seed, indices, factor)
    herm = np.max(np.abs(states - dagger(states)))
    trace = np.max(np.abs(np.trace(states, axis1=-2, axis2=-1) - 1.0))
    if herm > 1e-10 or trace > 1e-10:
        raise AssertionError(f"trajectory state invalid: Hermiticity {herm:.1e}, trace {trace:.1e}")
    # shifting by the first trajectory keeps identical samples at exactly zero spread
    shift = states[0]
    dev = states - shift
    dmean = dev.mean(axis=0)
    m2_re = ((dev.real - dmean.real) ** 2).sum(axis=0)
    m2_im = ((dev.imag - dmean.imag) ** 2).sum(axis=0)
    return len(indices), shift + dmean, m2_re, m2_im


def ensemble_average(model: Model, rho0, grid: TimeGrid, n_traj: int, seed: int = 0, *,
                     workers: int = 1, substep_divisor: float = 100.0,
                     block_size: int = BLOCK_SIZE) -> EnsembleResult:
    """Average ``n_traj`` sampled realizations on ``grid``.

    The fine stepping grid has at most ``time_scale / substep_divisor``
    spacing. ``workers > 1`` spreads blocks over processes without changing
    the result.
    """
    if n_traj < 100:
        raise ValueError(f"n_traj must be >= 100, got {n_traj}")
    rho0 = _dm(rho0)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"initial state is {rho0.shape}, model acts on dimension {model.dim}")
    factor = _fine_factor(model, grid, substep_divisor)
    indices = np.arange(1, n_traj + 1)
    blocks = [(model, rho0, grid, seed, indices[i:i + block_size], factor)
              for i in range(0, n_traj, block_size)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(_block_stats, blocks))
    else:
        stats = [_block_stats(b) for b in blocks]

    n, mean, m2_re, m2_im = stats[0]
    for nb, mb, m2r, m2i in stats[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2_re = m2_re + m2r + delta.real**2 * (n * nb / tot)
        m2_im = m2_im + m2i + delta.imag**2 * (n * nb / tot)
        n = tot
    se_re = np.sqrt(m2_re / (n - 1) / n)
    se_im = np.sqrt(m2_im / (n - 1) / n)
    for k, s in enumerate(mean):
        validate_density(s, herm_tol=1e-10, trace_tol=1e-9, pos_tol=1e-6)
    return EnsembleResult(grid.times, mean, se_re, se_im, n_traj, seed)
