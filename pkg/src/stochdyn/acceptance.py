"""Acceptance criteria, shared by ``stochdyn self-test`` and the test suite.

Each criterion returns a `CriterionResult`; ``run_all`` prints one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import exact_single_process_in_basis, two_atom_solution, two_level_coherence
from .master_equation import (
    IonHeatingModel,
    MultiComplexModel,
    SingleRealModel,
    TimeGrid,
    evolve,
    generator_multi_complex,
    generator_single_real,
)
from .operators import basis, concurrence, ket_to_dm, pauli, tensor, z_total
from .oracle import ensemble_average, oracle_agreement
from .processes import (
    ExponentialKernel,
    GaussianProcessSpec,
    WhiteKernel,
    sample_circular_batch,
    sample_real_batch,
    trajectory_rngs,
)
from .scenarios import ion_short_time_errors, build, config_from_mapping, parse_config

CONFIG_DIR = Path(__file__).resolve().parent / "configs"

SELF_TEST_BUDGET = 300.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail} ({self.elapsed:.1f} s)"


def _timed(number: int, name: str, fn) -> CriterionResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


# ---------------------------------------------------------------- helpers


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def random_state(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ a.conj().T
    return m / np.trace(m).real


def two_level_model(variance: float = 0.25, corr_time: float = 1.0) -> SingleRealModel:
    return SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(variance, corr_time)))


def two_atom_model(gamma: float = 1.0) -> SingleRealModel:
    return SingleRealModel(z_total(), GaussianProcessSpec(WhiteKernel(gamma / 8.0)))


def bell_state() -> np.ndarray:
    return ket_to_dm(basis(4, 0) + basis(4, 3))


def dfs_state() -> np.ndarray:
    return ket_to_dm(tensor(basis(2, 0), basis(2, 1)) + tensor(basis(2, 1), basis(2, 0)))


# ---------------------------------------------------------------- criteria


def exact_coincidence(n_models: int = 20, seed: int = 20240611):
    """RK4 solution of the single-process equation against the exact average."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        d = int(rng.integers(2, 6))
        h = random_hermitian(rng, d)
        h /= max(1.0, np.linalg.norm(h, 2))
        mean = float(rng.normal()) if rng.random() < 0.5 else 0.0
        spec = GaussianProcessSpec(ExponentialKernel(float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.2, 2.0))), mean)
        rho0 = random_state(rng, d)
        grid = TimeGrid(0.0, float(rng.uniform(1.0, 4.0)), 99)
        res = evolve(SingleRealModel(h, spec), rho0, grid)
        for t, s in zip(grid.times, res.states):
            worst = max(worst, float(np.max(np.abs(s - exact_single_process_in_basis(rho0, h, spec, t)))))
    return worst <= 1e-6, f"max element error {worst:.2e} over {n_models} models (limit 1e-06)"


def two_level_decay():
    variance, T = 0.25, 1.0
    rho0 = ket_to_dm([1.0, 1.0])
    grid = TimeGrid(0.0, 5.0 * T, 50)
    res = evolve(two_level_model(variance, T), rho0, grid)
    rel = 0.0
    for x in (0.1, 1.0, 5.0):
        k = int(round(x * T / grid.dt))
        ref = two_level_coherence(rho0[0, 1], variance, T, grid.times[k])
        rel = max(rel, abs(res.states[k, 0, 1] - ref) / abs(ref))
    pop = float(np.max(np.abs(res.populations() - res.populations()[0])))
    ok = rel <= 1e-7 and pop <= 1e-9
    return ok, f"coherence rel error {rel:.2e} (limit 1e-07), population drift {pop:.2e} (limit 1e-09)"


def dfs_stationarity():
    rho0 = dfs_state()
    res = evolve(two_atom_model(1.0), rho0, TimeGrid(0.0, 10.0, 100))
    dev = float(np.max(np.abs(res.states - rho0)))
    return dev <= 1e-9, f"max |rho(t) - rho0| {dev:.2e} up to gamma t = 10 (limit 1e-09)"


_YY = np.kron(pauli("Y"), pauli("Y"))


def brute_concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence from the non-Hermitian product ``rho (YY) rho* (YY)``."""
    ev = np.linalg.eigvals(rho @ _YY @ rho.conj() @ _YY)
    lam = np.sort(np.sqrt(np.clip(ev.real, 0.0, None)))[::-1]
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


def bell_decay():
    gamma = 1.0
    grid = TimeGrid(0.0, 8.0 / gamma, 80)
    res = evolve(two_atom_model(gamma), bell_state(), grid)
    off = max(abs(res.states[k, 0, 3] - two_atom_solution(gamma, t).matrix[0, 3]) for k, t in enumerate(grid.times))
    conc = res.concurrences()
    law = np.maximum(0.0, np.exp(-gamma * grid.times))
    cerr = float(np.max(np.abs(conc - law)))
    brute = max(abs(concurrence(s) - brute_concurrence(s)) for s in res.states)
    ok = off <= 1e-7 and cerr <= 1e-6 and conc[-1] < 1e-3 and brute <= 1e-6
    return ok, (f"rho_00,11 error {off:.2e} (limit 1e-07), concurrence vs exp(-gamma t) {cerr:.2e} "
                f"(limit 1e-06), C(gamma t=8) {conc[-1]:.2e} (< 1e-03), Hermitian vs brute-force "
                f"concurrence {brute:.1e}")


def ion_short_time():
    cfg = config_from_mapping({"scenario": "ion_heating", "omega0_T": 1.0, "omega0_tau1": 10.0, "n_fock": 5})
    errs = ion_short_time_errors(cfg, (0.01, 0.02, 0.05))
    worst = max(errs)
    return worst <= 0.05, "relative errors " + ", ".join(f"{e:.2%}" for e in errs) + " at omega0 t = 0.01, 0.02, 0.05 (limit 5%)"


def _agreement(model, rho0, grid, n_traj, seed, workers):
    start = time.perf_counter()
    me = evolve(model, rho0, grid)
    ens = ensemble_average(model, rho0, grid, n_traj, seed, workers=workers)
    return oracle_agreement(me.states, ens), time.perf_counter() - start


def oracle_agreement_check(n_traj: int = 10000, seed: int = 0, workers: int = 1):
    parts = []
    ok = True
    cases = {
        "two-level": (two_level_model(), ket_to_dm([1.0, 1.0]), TimeGrid(0.0, 5.0, 100)),
        "Bell": (two_atom_model(1.0), bell_state(), TimeGrid(0.0, 8.0, 100)),
    }
    for name, (model, rho0, grid) in cases.items():
        a, elapsed = _agreement(model, rho0, grid, n_traj, seed, workers)
        good = a["max_z"] <= 4.0 and a["frac_within_3se"] >= 0.99 and elapsed <= 60.0
        ok &= good
        parts.append(f"{name} max z {a['max_z']:.2f}, within 3 SE {a['frac_within_3se']:.1%}, {elapsed:.1f} s")
    return ok, "; ".join(parts) + " (limits z <= 4, >= 99%, 60 s)"


def ion_trend_deviation(omega0_tau1: float, n_traj: int, seed: int, workers: int, omega0_T: float = 1.0,
                        t_end: float = 20.0, n_steps: int = 100):
    """Max ``|ME - MC|`` over elements and times, with the standard error at that element."""
    model = IonHeatingModel.from_dimensionless(omega0_T, omega0_tau1, n_fock=5)
    rho0 = ket_to_dm(basis(5, 0))
    grid = TimeGrid(0.0, t_end, n_steps)
    me = evolve(model, rho0, grid)
    ens = ensemble_average(model, rho0, grid, n_traj, seed, workers=workers)
    dev = np.abs(me.states - ens.states)
    k = np.unravel_index(np.argmax(dev), dev.shape)
    return float(dev[k]), float(np.hypot(ens.stderr_re[k], ens.stderr_im[k]))


def second_order_trend(n_traj: int = 10000, seed: int = 0, workers: int = 1):
    d10, s10 = ion_trend_deviation(10.0, n_traj, seed, workers)
    d100, s100 = ion_trend_deviation(100.0, n_traj, seed, workers)
    gap = d10 - d100
    need = 2.0 * math.hypot(s10, s100)
    return gap > need, (f"max deviation {d10:.3e} (SE {s10:.1e}) at omega0 tau1 = 10 vs {d100:.3e} "
                        f"(SE {s100:.1e}) at 100; gap {gap:.3e} vs 2 combined SE {need:.3e}")


# invariant suite pieces

def shipped_config_paths() -> list[Path]:
    return sorted(CONFIG_DIR.glob("*.yaml"))


def shipped_invariants():
    worst = {"trace": 0.0, "herm": 0.0, "min_eig": 0.0}
    for path in shipped_config_paths():
        cfg = parse_config(path)
        setup = build(cfg)
        inv = evolve(setup.model, setup.rho0, setup.grid).invariant_summary()
        worst["trace"] = max(worst["trace"], inv["max_trace_error"])
        worst["herm"] = max(worst["herm"], inv["max_hermiticity_error"])
        worst["min_eig"] = min(worst["min_eig"], inv["min_eigenvalue"])
    ok = worst["trace"] <= 1e-9 and worst["herm"] <= 1e-10 and worst["min_eig"] >= -1e-8
    return ok, (f"{len(shipped_config_paths())} configs: trace {worst['trace']:.1e}, "
                f"Hermiticity {worst['herm']:.1e}, min eigenvalue {worst['min_eig']:.1e}")


def rk4_order():
    """Error exponent from halving the step on the two-level problem."""
    rho0 = ket_to_dm([1.0, 1.0])
    grid = TimeGrid(0.0, 5.0, 10)
    ref = two_level_coherence(0.5, 0.25, 1.0, 5.0)
    e = [abs(evolve(two_level_model(), rho0, grid, substeps=s).states[-1, 0, 1] - ref) for s in (4, 8)]
    p = math.log2(e[0] / e[1])
    return 3.7 <= p <= 4.3, p


def sampler_moments(n: int = 100000, seed: int = 7):
    """OU lag-1 autocorrelation, Var[v(t)], and circular pseudo-correlation, each at 3 SE."""
    T, var = 1.0, 1.0
    grid = np.linspace(0.0, 2.0, 41)
    spec = GaussianProcessSpec(ExponentialKernel(var, T))
    a, v = sample_real_batch(spec, grid, trajectory_rngs(seed, range(1, n + 1)))
    zs = []
    prod = a[:, 10] * a[:, 11]
    zs.append((prod.mean() - var * math.exp(-(grid[11] - grid[10]) / T)) / (prod.std(ddof=1) / math.sqrt(n)))
    v2 = v[:, -1] ** 2
    zs.append((v2.mean() - spec.kernel.integral_variance(grid[-1], 0.0)) / (v2.std(ddof=1) / math.sqrt(n)))
    c, _ = sample_circular_batch(GaussianProcessSpec(ExponentialKernel(var, T), valence="circular_complex"),
                                 grid, trajectory_rngs(seed + 1, range(1, n + 1)))
    pseudo = c[:, 10] * c[:, 15]
    for part in (pseudo.real, pseudo.imag):
        zs.append(part.mean() / (part.std(ddof=1) / math.sqrt(n)))
    worst = float(np.max(np.abs(zs)))
    return worst <= 3.0, worst


def reduction_equivalence(n_cases: int = 10, seed: int = 99):
    """Multi-process generator with one Hermitian operator reduces to the single-process one.

    ``H = a h + a* h = 2 Re(a) h``; a circular ``a`` with correlation ``2 K``
    gives ``Re(a)`` correlation ``K``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(2, 6))
        h = random_hermitian(rng, d)
        var, T = float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.2, 3.0))
        single = SingleRealModel(2.0 * h, GaussianProcessSpec(ExponentialKernel(var, T)))
        multi = MultiComplexModel((h,), (GaussianProcessSpec(ExponentialKernel(2.0 * var, T),
                                                              valence="circular_complex"),))
        t = float(rng.uniform(0.0, 5.0))
        rho = random_state(rng, d)
        a = generator_single_real(single, t, 0.0).apply(rho)
        b = generator_multi_complex(multi, t, 0.0).apply(rho)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, worst


def invariant_suite():
    inv_ok, inv_detail = shipped_invariants()
    order_ok, p = rk4_order()
    mom_ok, z = sampler_moments()
    red_ok, red = reduction_equivalence()
    ok = inv_ok and order_ok and mom_ok and red_ok
    return ok, (f"{inv_detail}; RK4 order {p:.2f} (3.7..4.3); sampler max |z| {z:.2f} (<= 3); "
                f"multi -> single reduction {red:.1e} (<= 1e-12)")


CRITERIA = (
    (1, "exact coincidence, single real process", exact_coincidence),
    (2, "two-level coherence decay", two_level_decay),
    (3, "decoherence-free subspace stationarity", dfs_stationarity),
    (4, "Bell-state decay and disentanglement", bell_decay),
    (5, "ion short-time heating law", ion_short_time),
    (6, "oracle agreement, two-level and Bell", oracle_agreement_check),
    (7, "second-order validity trend, ion", second_order_trend),
    (8, "invariant suite", invariant_suite),
)


def run_criterion(number: int, **kwargs) -> CriterionResult:
    num, name, fn = CRITERIA[number - 1]
    return _timed(num, name, lambda: fn(**kwargs))


def run_all(verbose: bool = False) -> list[CriterionResult]:
    start = time.perf_counter()
    results = []
    for num, _, _ in CRITERIA:
        r = run_criterion(num)
        results.append(r)
        if verbose:
            print(r.line(), flush=True)
    total = time.perf_counter() - start
    budget = CriterionResult(8, "self-test runtime", total <= SELF_TEST_BUDGET,
                             f"{total:.1f} s (limit {SELF_TEST_BUDGET:.0f} s)", total)
    results.append(budget)
    if verbose:
        print(budget.line(), flush=True)
    return results
