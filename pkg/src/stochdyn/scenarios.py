"""Named scenarios, strict config parsing, CSV output and comparison reports.

A config file is a flat YAML mapping. ``scenario`` selects one of the
`SCENARIOS`; every other key must belong to that scenario or to the common
grid/oracle group, otherwise parsing fails. Times in configs and outputs are
in the scenario's natural unit:

    two_level      t / T
    two_atom_*     gamma * t
    ion_heating    omega0 * t
    custom         t
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .analytic import (
    exact_single_process_in_basis,
    ion_coupling_from_heating_time,
    ion_short_time_depopulation,
    two_atom_solution,
    two_level_coherence,
)
from .master_equation import (
    IonHeatingModel,
    Model,
    SingleRealModel,
    TimeGrid,
    TrajectoryResult,
    evolve,
)
from .operators import basis, ket_to_dm, pauli, tensor, z_total
from .oracle import EnsembleResult, ensemble_average, oracle_agreement
from .processes import ExponentialKernel, GaussianProcessSpec, WhiteKernel

SCENARIOS = ("two_level", "two_atom_dfs", "two_atom_bell", "ion_heating", "custom")

# tolerances used in the reports
TRACE_LIMIT = 1e-9
HERMITIAN_LIMIT = 1e-10
POSITIVITY_LIMIT = 1e-8
STATIONARY_LIMIT = 1e-9
TWO_LEVEL_REL = 1e-7
BELL_ABS = 1e-7
CONCURRENCE_ABS = 1e-6
CUSTOM_ABS = 1e-6
SHORT_TIME_REL = 0.05
ORACLE_MAX_Z = 4.0
ORACLE_FRAC_3SE = 0.99

TRUNCATION_LEVELS = (3, 5, 8, 12)


class ConfigError(ValueError):
    """Invalid configuration. ``errors`` lists one message per bad field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


# key -> (default, help). Defaults of None are scenario-dependent.
COMMON_KEYS: dict[str, tuple[Any, str]] = {
    "scenario": (None, f"one of {', '.join(SCENARIOS)}"),
    "t_end": (None, "final time in natural units (two_level 5, two_atom_dfs 10, two_atom_bell 8, ion 20, custom 5)"),
    "n_steps": (100, "number of uniform output intervals"),
    "oracle": (True, "run the Monte-Carlo oracle"),
    "n_traj": (10000, "oracle trajectories (>= 100)"),
    "seed": (0, "oracle seed"),
    "substep_divisor": (100.0, "oracle sub-step is at most time_scale / substep_divisor"),
    "out_dir": ("out", "output directory"),
}

SCENARIO_KEYS: dict[str, dict[str, tuple[Any, str]]] = {
    "two_level": {
        "variance": (0.25, "field variance omega0_bar^2 (1/T^2 units)"),
        "corr_time": (1.0, "correlation time T"),
    },
    "two_atom_dfs": {"gamma": (1.0, "decay rate gamma; white kernel strength gamma/8")},
    "two_atom_bell": {"gamma": (1.0, "decay rate gamma; white kernel strength gamma/8")},
    "ion_heating": {
        "omega0_T": (1.0, "omega0 * T"),
        "omega0_tau1": (10.0, "omega0 * tau1 (heating time)"),
        "n_fock": (5, "Fock truncation, >= 3"),
        "omega0": (1.0, "trap frequency"),
    },
    "custom": {
        "h": (None, "Hermitian coupling operator: list of rows, entries real or [re, im]"),
        "psi0": (None, "initial state vector: real entries or [re, im] pairs"),
        "kernel": ("exponential", "exponential or white"),
        "variance": (1.0, "exponential kernel variance"),
        "corr_time": (1.0, "exponential kernel correlation time"),
        "strength": (1.0, "white kernel strength"),
        "mean": (0.0, "constant process mean"),
    },
}

DEFAULT_T_END = {"two_level": 5.0, "two_atom_dfs": 10.0, "two_atom_bell": 8.0, "ion_heating": 20.0, "custom": 5.0}


def config_help() -> str:
    """Every config key with its default, for ``--help``."""
    lines = ["common keys:"]
    for k, (d, h) in COMMON_KEYS.items():
        lines.append(f"  {k:<16} {h}" + ("" if d is None else f" [default: {d}]"))
    for name, keys in SCENARIO_KEYS.items():
        lines.append(f"{name} keys:")
        for k, (d, h) in keys.items():
            lines.append(f"  {k:<16} {h}" + ("" if d is None else f" [default: {d}]"))
    return "\n".join(lines)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    t_end: float
    n_steps: int = 100
    oracle: bool = True
    n_traj: int = 10000
    seed: int = 0
    substep_divisor: float = 100.0
    out_dir: str = "out"
    params: dict = field(default_factory=dict)

    def __getattr__(self, name):
        # physical parameters read like plain attributes
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def with_params(self, **changes) -> ScenarioConfig:
        return ScenarioConfig(**{f.name: getattr(self, f.name) for f in fields(self) if f.name != "params"},
                              params={**self.params, **changes})


def _number(errors, key, value, *, integer=False, positive=True, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{key}: expected a number, got {value!r}")
        return None
    if integer and value != int(value):
        errors.append(f"{key}: expected an integer, got {value!r}")
        return None
    if not math.isfinite(value):
        errors.append(f"{key}: must be finite, got {value!r}")
        return None
    if positive and not value > 0:
        errors.append(f"{key}: must be > 0, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        errors.append(f"{key}: must be >= {minimum}, got {value!r}")
        return None
    return int(value) if integer else float(value)


def _complex_entry(x):
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, bool):
        raise TypeError
    return complex(float(x))


def _complex_array(errors, key, value, ndim):
    try:
        arr = np.array(
            [[_complex_entry(x) for x in row] for row in value] if ndim == 2 else [_complex_entry(x) for x in value],
            dtype=complex,
        )
    except (TypeError, ValueError):
        errors.append(f"{key}: expected {'a list of rows' if ndim == 2 else 'a list'} of numbers or [re, im] pairs")
        return None
    if arr.ndim != ndim or arr.size == 0:
        errors.append(f"{key}: wrong shape {arr.shape}")
        return None
    return arr


def config_from_mapping(raw: Any) -> ScenarioConfig:
    """Validate a parsed mapping; raise `ConfigError` listing every problem."""
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping of key: value pairs"])
    errors: list[str] = []
    scenario = raw.get("scenario")
    if scenario is None:
        raise ConfigError(["scenario: missing (one of " + ", ".join(SCENARIOS) + ")"])
    if scenario not in SCENARIOS:
        raise ConfigError([f"scenario: unknown {scenario!r} (one of {', '.join(SCENARIOS)})"])
    allowed = {**COMMON_KEYS, **SCENARIO_KEYS[scenario]}
    for k in raw:
        if k not in allowed:
            errors.append(f"{k}: unknown key for scenario {scenario}")

    def get(key):
        return raw.get(key, allowed[key][0])

    t_end = _number(errors, "t_end", raw.get("t_end", DEFAULT_T_END[scenario]))
    n_steps = _number(errors, "n_steps", get("n_steps"), integer=True)
    oracle = get("oracle")
    if not isinstance(oracle, bool):
        errors.append(f"oracle: expected true or false, got {oracle!r}")
    n_traj = _number(errors, "n_traj", get("n_traj"), integer=True, minimum=100)
    seed = _number(errors, "seed", get("seed"), integer=True, positive=False, minimum=0)
    divisor = _number(errors, "substep_divisor", get("substep_divisor"))
    out_dir = get("out_dir")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append(f"out_dir: expected a path string, got {out_dir!r}")

    params: dict[str, Any] = {}
    if scenario == "two_level":
        params["variance"] = _number(errors, "variance", get("variance"), positive=False, minimum=0.0)
        params["corr_time"] = _number(errors, "corr_time", get("corr_time"))
    elif scenario in ("two_atom_dfs", "two_atom_bell"):
        params["gamma"] = _number(errors, "gamma", get("gamma"), positive=False, minimum=0.0)
    elif scenario == "ion_heating":
        params["omega0_T"] = _number(errors, "omega0_T", get("omega0_T"))
        params["omega0_tau1"] = _number(errors, "omega0_tau1", get("omega0_tau1"))
        params["n_fock"] = _number(errors, "n_fock", get("n_fock"), integer=True, minimum=3)
        params["omega0"] = _number(errors, "omega0", get("omega0"))
        if None not in (params["omega0_T"], params["omega0_tau1"], params["omega0"]):
            w = params["omega0"]
            params["coupling"] = ion_coupling_from_heating_time(w, params["omega0_T"] / w, params["omega0_tau1"] / w)
    else:
        for key in ("h", "psi0"):
            if key not in raw:
                errors.append(f"{key}: required for scenario custom")
        h = _complex_array(errors, "h", raw["h"], 2) if "h" in raw else None
        psi = _complex_array(errors, "psi0", raw["psi0"], 1) if "psi0" in raw else None
        if h is not None:
            if h.shape[0] != h.shape[1]:
                errors.append(f"h: must be square, got {h.shape}")
                h = None
            elif np.max(np.abs(h - h.conj().T)) > 1e-12:
                errors.append("h: must be Hermitian")
                h = None
        if h is not None and psi is not None and psi.size != h.shape[0]:
            errors.append(f"psi0: length {psi.size} does not match h dimension {h.shape[0]}")
        if psi is not None and np.linalg.norm(psi) == 0:
            errors.append("psi0: zero vector")
        kernel = get("kernel")
        if kernel not in ("exponential", "white"):
            errors.append(f"kernel: expected exponential or white, got {kernel!r}")
        params.update(h=h, psi0=psi, kernel=kernel)
        params["variance"] = _number(errors, "variance", get("variance"), positive=False, minimum=0.0)
        params["corr_time"] = _number(errors, "corr_time", get("corr_time"))
        params["strength"] = _number(errors, "strength", get("strength"), positive=False, minimum=0.0)
        params["mean"] = _number(errors, "mean", get("mean"), positive=False)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(scenario, t_end, n_steps, oracle, n_traj, seed, divisor, out_dir, params)


def parse_config(path) -> ScenarioConfig:
    """Read and validate a YAML config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
    return config_from_mapping(raw)


# ---------------------------------------------------------------- building


@dataclass(frozen=True)
class Setup:
    model: Model
    rho0: np.ndarray
    grid: TimeGrid
    time_unit: float  # physical time per natural unit


def _bell_phi_plus() -> np.ndarray:
    return ket_to_dm(basis(4, 0) + basis(4, 3))


def build(config: ScenarioConfig) -> Setup:
    """Model, initial state and physical time grid for a config."""
    s = config.scenario
    if s == "two_level":
        unit = config.corr_time
        model = SingleRealModel(pauli("Z"), GaussianProcessSpec(ExponentialKernel(config.variance, config.corr_time)))
        rho0 = ket_to_dm([1.0, 1.0])
    elif s in ("two_atom_dfs", "two_atom_bell"):
        unit = 1.0 / config.gamma if config.gamma > 0 else 1.0
        model = SingleRealModel(z_total(), GaussianProcessSpec(WhiteKernel(config.gamma / 8.0)))
        if s == "two_atom_dfs":
            rho0 = ket_to_dm(tensor(basis(2, 0), basis(2, 1)) + tensor(basis(2, 1), basis(2, 0)))
        else:
            rho0 = _bell_phi_plus()
    elif s == "ion_heating":
        unit = 1.0 / config.omega0
        model = IonHeatingModel.from_dimensionless(config.omega0_T, config.omega0_tau1, config.n_fock, config.omega0)
        rho0 = ket_to_dm(basis(config.n_fock, 0))
    else:
        unit = 1.0
        kernel = ExponentialKernel(config.variance, config.corr_time) if config.kernel == "exponential" \
            else WhiteKernel(config.strength)
        model = SingleRealModel(config.h, GaussianProcessSpec(kernel, config.mean))
        rho0 = ket_to_dm(config.psi0)
    return Setup(model, rho0, TimeGrid(0.0, config.t_end * unit, config.n_steps), unit)


def analytic_states(config: ScenarioConfig, setup: Setup) -> np.ndarray | None:
    """Closed-form states on the grid where one exists."""
    times = setup.grid.times
    s = config.scenario
    if s == "two_level":
        out = np.repeat(setup.rho0[None], times.size, axis=0)
        coh = np.array([two_level_coherence(setup.rho0[0, 1], config.variance, config.corr_time, t) for t in times])
        out[:, 0, 1] = coh
        out[:, 1, 0] = coh.conj()
        return out
    if s == "two_atom_bell":
        return np.array([two_atom_solution(config.gamma, t).matrix for t in times])
    if s == "two_atom_dfs":
        return np.repeat(setup.rho0[None], times.size, axis=0)
    if s == "custom":
        model = setup.model
        return np.array([exact_single_process_in_basis(setup.rho0, model.h, model.process, t) for t in times])
    return None


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool
    informational: bool = False


@dataclass
class ComparisonReport:
    scenario: str
    times: np.ndarray  # natural units
    me_vs_analytic: np.ndarray | None
    me_vs_oracle: np.ndarray | None
    max_z: np.ndarray | None
    invariants: dict[str, float]
    stationary: bool
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"scenario: {self.scenario}\n")
        out.write(f"grid points: {self.times.size}\n")
        out.write(f"stationary: {'yes' if self.stationary else 'no'}\n")
        out.write("invariants:\n")
        for k, v in self.invariants.items():
            out.write(f"  {k}: {v:.6e}\n")
        out.write("checks:\n")
        for c in self.checks:
            status = "info" if c.informational else ("PASS" if c.passed else "FAIL")
            out.write(f"  [{status}] {c.name}: {c.value:.6e} (limit {c.limit:.3e})\n")
        out.write(f"overall: {'PASS' if self.passed else 'FAIL'}\n")
        out.write("per-time deviations:\n")
        cols = ["t"]
        if self.me_vs_analytic is not None:
            cols.append("me_vs_analytic")
        if self.me_vs_oracle is not None:
            cols += ["me_vs_oracle", "max_z"]
        out.write("  " + "  ".join(f"{c:>14}" for c in cols) + "\n")
        for k, t in enumerate(self.times):
            row = [t]
            if self.me_vs_analytic is not None:
                row.append(self.me_vs_analytic[k])
            if self.me_vs_oracle is not None:
                row += [self.me_vs_oracle[k], self.max_z[k]]
            out.write("  " + "  ".join(f"{x:14.6e}" for x in row) + "\n")
        return out.getvalue()


def _max_dev(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.max(np.abs(a - b), axis=(1, 2))


def _analytic_checks(config, setup, me: TrajectoryResult, exact) -> list[Check]:
    s = config.scenario
    checks = []
    if s == "two_level":
        c = me.element(0, 1)
        ref = exact[:, 0, 1]
        rel = np.max(np.abs(c - ref) / np.maximum(np.abs(ref), 1e-300))
        checks.append(Check("coherence relative error", rel, TWO_LEVEL_REL, rel <= TWO_LEVEL_REL))
        pop = np.max(np.abs(me.populations() - me.populations()[0]))
        checks.append(Check("population drift", pop, 1e-9, pop <= 1e-9))
    elif s == "two_atom_bell":
        err = np.max(np.abs(me.element(0, 3) - exact[:, 0, 3]))
        checks.append(Check("rho_00,11 absolute error", err, BELL_ABS, err <= BELL_ABS))
        conc = me.concurrences()
        ref = np.maximum(0.0, np.exp(-config.gamma * setup.grid.times))
        cerr = np.max(np.abs(conc - ref))
        checks.append(Check("concurrence vs exp(-gamma t)", cerr, CONCURRENCE_ABS, cerr <= CONCURRENCE_ABS))
    elif s == "two_atom_dfs":
        dev = float(np.max(_max_dev(me.states, exact)))
        checks.append(Check("max |rho(t) - rho0|", dev, STATIONARY_LIMIT, dev <= STATIONARY_LIMIT))
    elif s == "custom":
        dev = float(np.max(_max_dev(me.states, exact)))
        checks.append(Check("max |ME - exact|", dev, CUSTOM_ABS, dev <= CUSTOM_ABS))
    return checks


def ion_short_time_errors(config: ScenarioConfig, points=(0.01, 0.02, 0.05)) -> list[float]:
    """Relative error of ``1 - rho_00`` against the t^2 law at small ``omega0 t``."""
    model = IonHeatingModel.from_dimensionless(config.omega0_T, config.omega0_tau1, config.n_fock, config.omega0)
    rho0 = ket_to_dm(basis(config.n_fock, 0))
    errs = []
    for x in points:
        t = x / config.omega0
        res = evolve(model, rho0, TimeGrid(0.0, t, 10))
        dep = 1.0 - res.states[-1, 0, 0].real
        law = ion_short_time_depopulation(model.coupling, t)
        errs.append(abs(dep - law) / law)
    return errs


def compare(config: ScenarioConfig, setup: Setup, me: TrajectoryResult,
            ens: EnsembleResult | None) -> ComparisonReport:
    exact = analytic_states(config, setup)
    inv = me.invariant_summary()
    checks = [
        Check("max trace error", inv["max_trace_error"], TRACE_LIMIT, inv["max_trace_error"] <= TRACE_LIMIT),
        Check("max Hermiticity error", inv["max_hermiticity_error"], HERMITIAN_LIMIT,
              inv["max_hermiticity_error"] <= HERMITIAN_LIMIT),
        Check("min eigenvalue", inv["min_eigenvalue"], -POSITIVITY_LIMIT, inv["min_eigenvalue"] >= -POSITIVITY_LIMIT),
    ]
    dev_a = None
    if exact is not None:
        dev_a = _max_dev(me.states, exact)
        checks += _analytic_checks(config, setup, me, exact)
    if config.scenario == "ion_heating":
        err = max(ion_short_time_errors(config))
        checks.append(Check("short-time t^2 law relative error", err, SHORT_TIME_REL, err <= SHORT_TIME_REL))
    dev_o = zmax = None
    if ens is not None:
        dev_o = _max_dev(me.states, ens.states)
        zr, zi = ens.z_scores(me.states)
        zmax = np.max(np.maximum(zr, zi), axis=(1, 2))
        agree = oracle_agreement(me.states, ens)
        # the second-order equation is only exact for a single real process
        info = config.scenario == "ion_heating"
        checks.append(Check("oracle max z-score", agree["max_z"], ORACLE_MAX_Z,
                            agree["max_z"] <= ORACLE_MAX_Z, informational=info))
        checks.append(Check("oracle fraction within 3 SE", agree["frac_within_3se"], ORACLE_FRAC_3SE,
                            agree["frac_within_3se"] >= ORACLE_FRAC_3SE, informational=info))
        checks.append(Check("oracle max |ME - MC|", agree["max_abs_dev"], math.inf, True, informational=True))
    stationary = bool(np.max(_max_dev(me.states, setup.rho0[None])) <= STATIONARY_LIMIT)
    return ComparisonReport(config.scenario, setup.grid.times / setup.time_unit, dev_a, dev_o, zmax,
                            inv, stationary, checks)


# ---------------------------------------------------------------- output


def fmt(x: float) -> str:
    return f"{x:.17g}"


def timeseries_table(config: ScenarioConfig, setup: Setup, me: TrajectoryResult,
                     ens: EnsembleResult | None) -> tuple[list[str], np.ndarray]:
    d = me.dim
    pairs = [(k, l) for k in range(d) for l in range(k, d)]
    header = ["t"]
    cols = [setup.grid.times / setup.time_unit]
    for k, l in pairs:
        header += [f"re_rho_{k}_{l}", f"im_rho_{k}_{l}"]
        cols += [me.states[:, k, l].real, me.states[:, k, l].imag]
    if config.scenario == "ion_heating":
        header.append("fidelity")
        cols.append(me.fidelity(0))
    for (k, l), mag in me.coherence_magnitudes().items():
        header.append(f"abs_rho_{k}_{l}")
        cols.append(mag)
    if d == 4 and config.scenario != "custom":
        header.append("concurrence")
        cols.append(me.concurrences())
    if ens is not None:
        for k, l in pairs:
            header += [f"mc_re_rho_{k}_{l}", f"mc_im_rho_{k}_{l}", f"se_re_rho_{k}_{l}", f"se_im_rho_{k}_{l}"]
            cols += [ens.states[:, k, l].real, ens.states[:, k, l].imag,
                     ens.stderr_re[:, k, l], ens.stderr_im[:, k, l]]
    return header, np.column_stack(cols)


def write_csv(path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=",", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def _ensure_dir(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


@dataclass
class ScenarioRun:
    report: ComparisonReport
    me: TrajectoryResult
    ensemble: EnsembleResult | None
    csv_path: Path
    report_path: Path


def run_scenario(config: ScenarioConfig, *, out_dir=None, workers: int | None = 1,
                 oracle: bool | None = None) -> ScenarioRun:
    """Integrate, optionally sample the oracle, compare, and write outputs.

    Writes ``timeseries.csv`` and ``report.txt`` into ``out_dir`` (default
    ``config.out_dir``). Results depend only on the config, not on ``workers``.
    """
    out = _ensure_dir(Path(out_dir if out_dir is not None else config.out_dir))
    setup = build(config)
    me = evolve(setup.model, setup.rho0, setup.grid)
    use_oracle = config.oracle if oracle is None else oracle
    ens = None
    if use_oracle:
        ens = ensemble_average(setup.model, setup.rho0, setup.grid, config.n_traj, config.seed,
                               workers=workers, substep_divisor=config.substep_divisor)
    report = compare(config, setup, me, ens)
    header, rows = timeseries_table(config, setup, me, ens)
    csv_path = out / "timeseries.csv"
    report_path = out / "report.txt"
    write_csv(csv_path, header, rows)
    report_path.write_text(report.to_text(), encoding="utf-8")
    return ScenarioRun(report, me, ens, csv_path, report_path)


# ---------------------------------------------------------------- truncation


@dataclass
class TruncationStudy:
    levels: tuple[int, ...]
    times: np.ndarray  # omega0 t
    fidelity: dict[int, np.ndarray]

    def differences(self) -> dict[tuple[int, int], np.ndarray]:
        """``|rho_00(n_b) - rho_00(n_a)|`` over time for successive levels."""
        lv = self.levels
        return {(a, b): np.abs(self.fidelity[b] - self.fidelity[a]) for a, b in zip(lv, lv[1:])}

    def final_table(self) -> list[tuple[int, float, float]]:
        """Rows ``(n_fock, rho_00(t_end), |change from previous level|)``."""
        rows = []
        prev = None
        for n in self.levels:
            f = float(self.fidelity[n][-1])
            rows.append((n, f, math.nan if prev is None else abs(f - prev)))
            prev = f
        return rows

    def to_text(self) -> str:
        lines = [f"truncation study at omega0 t = {self.times[-1]:.6g}",
                 f"{'n_fock':>6}  {'rho_00(t_end)':>22}  {'change':>12}"]
        for n, f, d in self.final_table():
            lines.append(f"{n:>6}  {f:22.15e}  {d:12.4e}")
        return "\n".join(lines) + "\n"


def truncation_study(config: ScenarioConfig, levels=TRUNCATION_LEVELS, *, out_dir=None) -> TruncationStudy:
    """Integrate the ion equation at several Fock truncations.

    Invariant checks are off here: large truncations can leave the physical
    set at strong coupling, and showing that is the point of the study.
    """
    if config.scenario != "ion_heating":
        raise ConfigError([f"scenario: truncation study needs ion_heating, got {config.scenario}"])
    fid = {}
    times = None
    for n in levels:
        cfg = config.with_params(n_fock=n)
        setup = build(cfg)
        with np.errstate(all="ignore"):
            res = evolve(setup.model, setup.rho0, setup.grid, check=False)
        fid[n] = res.fidelity(0)
        times = setup.grid.times / setup.time_unit
    study = TruncationStudy(tuple(levels), times, fid)
    if out_dir is not None:
        out = _ensure_dir(Path(out_dir))
        header = ["t"] + [f"fidelity_n{n}" for n in levels] + [f"diff_n{a}_n{b}" for a, b in study.differences()]
        cols = [times] + [fid[n] for n in levels] + list(study.differences().values())
        write_csv(out / "truncation.csv", header, np.column_stack(cols))
        (out / "truncation.txt").write_text(study.to_text(), encoding="utf-8")
    return study
