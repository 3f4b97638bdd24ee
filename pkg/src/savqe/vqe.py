"""State-averaged VQE drivers: layered fUCCSD, (modified) ADAPT, state resolution."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.optimize

from savqe.ansatz import AnsatzProgram, SAObjective, build_layered, load_parameters
from savqe.exceptions import AlignmentError, BasisError, ConfigError
from savqe.hamiltonian import ActiveSpaceHamiltonian, hamiltonian_matrix
from savqe.pool import OperatorPool, signed_pool_gradient
from savqe.states import CsfReference, csf_matrix, orthonormality_deviation

__all__ = [
    "SolverConfig",
    "TraceEntry",
    "SolverReport",
    "solve_fuccsd",
    "solve_adapt",
    "resolve_states",
    "ErrorMetrics",
    "compute_error_metrics",
]

log = logging.getLogger(__name__)

HARTREE_TO_MEH = 1000.0


@dataclass
class SolverConfig:
    """Settings shared by the fUCCSD and ADAPT drivers.

    ``initialization`` is ``"zeros"``, ``"warm_start"`` (program read from
    ``warm_start_path``) or ``"explicit"`` (``initial_parameters``).
    ``gradient_mode`` picks the ADAPT selection score: ``"state_averaged"``
    uses ``|sum_I w_I dE_I|``, ``"max_state"`` uses ``max_I |dE_I|``.  The
    latter is a diagnostic: per-state slopes do not vanish at a state-averaged
    optimum, so with it the loop usually runs to ``adapt_max_macroiterations``.
    """

    n_states: int = 1
    weights: Sequence[float] | None = None
    gradient_tolerance: float = 1e-8
    max_iterations: int = 5000
    history_size: int = 20
    adapt_gradient_threshold: float = 1e-5
    adapt_selection_fraction: float = 0.90
    adapt_max_macroiterations: int = 300
    initialization: str = "zeros"
    initial_parameters: Sequence[float] | None = None
    warm_start_path: str | None = None
    seed: int = 0
    gradient_mode: str = "state_averaged"

    def __post_init__(self) -> None:
        if self.weights is None:
            self.weights = [1.0 / self.n_states] * self.n_states
        w = np.asarray(self.weights, dtype=float)
        if len(w) != self.n_states or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights {list(w)} must be {self.n_states} nonnegative values summing to 1")
        self.weights = [float(x) for x in w]
        if not 0.0 < self.adapt_selection_fraction <= 1.0:
            raise ConfigError("adapt_selection_fraction must lie in (0, 1]")
        if self.initialization not in ("zeros", "warm_start", "explicit"):
            raise ConfigError(f"unknown initialization {self.initialization!r}")
        if self.gradient_mode not in ("state_averaged", "max_state"):
            raise ConfigError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass
class TraceEntry:
    iteration: int
    sa_energy: float
    max_gradient: float
    operators_added: list[int]
    n_operators: int


@dataclass
class SolverReport:
    """Outcome of one driver call.

    ``wall_time`` is excluded from equality and from serialized output so that
    repeated runs emit identical files.
    """

    method: str
    converged: bool
    resolved_energies: list[float]
    sa_energy: float
    parameter_count: int
    macroiteration_trace: list[TraceEntry]
    final_parameters: list[float]
    generator_ids: list[int]
    subspace_hamiltonian: list[list[float]]
    rotation: list[list[float]] = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)

    @property
    def operators_added(self) -> int:
        return sum(len(t.operators_added) for t in self.macroiteration_trace)

    @property
    def n_macroiterations(self) -> int:
        return len(self.macroiteration_trace) - 1

    def program(self, pool: OperatorPool) -> AnsatzProgram:
        return AnsatzProgram(pool, self.generator_ids, self.final_parameters)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("wall_time")
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> SolverReport:
        data = dict(data)
        data["macroiteration_trace"] = [TraceEntry(**t) for t in data["macroiteration_trace"]]
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "sa_energy_hartree", "max_gradient_hartree", "n_operators"])
            for t in self.macroiteration_trace:
                writer.writerow([t.iteration, repr(t.sa_energy), repr(t.max_gradient), t.n_operators])


def _check_refs(refs: Sequence[CsfReference], config: SolverConfig, h: ActiveSpaceHamiltonian) -> None:
    if len(refs) != config.n_states:
        raise ConfigError(f"{len(refs)} references for n_states={config.n_states}")
    for r in refs:
        if r.n_orbitals != h.n_spatial_orbitals or (r.n_alpha, r.n_beta) != (h.n_alpha, h.n_beta):
            raise ConfigError(f"reference {r.label!r} does not match the Hamiltonian's active space")


def _minimize(objective: SAObjective, x0: np.ndarray, config: SolverConfig, callback=None):
    """L-BFGS-B on the full parameter vector; returns (x, energy, converged)."""
    if len(x0) == 0:
        return x0, objective.energy(x0), True
    res = scipy.optimize.minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "gtol": config.gradient_tolerance,
            "ftol": 0.0,
            "maxiter": config.max_iterations,
            "maxcor": config.history_size,
            "maxls": 50,
        },
    )
    x = res.x
    energy, grad = objective(x)
    gmax = float(np.max(np.abs(grad)))
    if gmax >= config.gradient_tolerance and gmax < POLISH_WINDOW:
        # the line search works on energies, which stop resolving changes
        # near 1e-16 relative; finish on the (more precise) gradient alone
        log.debug("L-BFGS-B stopped at |g|_inf=%.3e (%s); Newton polish", gmax, res.message)
        x, energy, gmax = _newton_polish(objective, x, config.gradient_tolerance)
    converged = gmax < config.gradient_tolerance
    if not converged:
        log.debug("inner optimization stopped at |g|_inf=%.3e: %s", gmax, res.message)
    return x, float(energy), converged


POLISH_WINDOW = 1e-4


def _newton_polish(objective: SAObjective, x: np.ndarray, gtol: float, max_steps: int = 6):
    """Newton steps on the gradient with a finite-difference Hessian.

    A step is kept only if it lowers the gradient infinity norm.  Returns
    ``(x, energy, |g|_inf)``.
    """
    energy, grad = objective(x)
    gmax = float(np.max(np.abs(grad)))
    step = 1e-5
    for _ in range(max_steps):
        if gmax < gtol:
            break
        n = len(x)
        hess = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            hess[:, k] = (objective(x + e)[1] - objective(x - e)[1]) / (2 * step)
        hess = 0.5 * (hess + hess.T)
        dx = -np.linalg.lstsq(hess, grad, rcond=1e-10)[0]
        e_new, g_new = objective(x + dx)
        g_new_max = float(np.max(np.abs(g_new)))
        if g_new_max >= gmax:
            break
        x, energy, grad, gmax = x + dx, e_new, g_new, g_new_max
    return x, energy, gmax


def resolve_states(
    h: ActiveSpaceHamiltonian,
    prog: AnsatzProgram,
    refs: Sequence[CsfReference],
    weights: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Multistate-contracted resolution of the SA states.

    Diagonalizes ``H_IJ = <Phi_I|U^dag H U|Phi_J>``.  Returns ascending
    energies, the subspace matrix and its eigenvectors (columns).  The
    weights do not enter; they are accepted for signature symmetry.
    """
    basis = h.sector_basis()
    block = csf_matrix(refs, basis)
    if orthonormality_deviation(block) > 1e-8:
        raise BasisError("reference CSFs are not orthonormal")
    objective = SAObjective(prog, h, refs, weights)
    psi = objective.states(prog.thetas)
    sub = psi.T @ (hamiltonian_matrix(h, basis) @ psi)
    sub = 0.5 * (sub + sub.T)
    energies, rotation = np.linalg.eigh(sub)
    return energies, sub, rotation


def _report(method, converged, h, prog, refs, config, trace, t0) -> SolverReport:
    energies, sub, rot = resolve_states(h, prog, refs, config.weights)
    sa = float(np.dot(config.weights, np.diag(sub)))
    return SolverReport(
        method=method,
        converged=bool(converged),
        resolved_energies=energies.tolist(),
        sa_energy=sa,
        parameter_count=prog.parameter_count,
        macroiteration_trace=trace,
        final_parameters=prog.thetas.tolist(),
        generator_ids=list(prog.generator_ids),
        subspace_hamiltonian=sub.tolist(),
        rotation=rot.tolist(),
        wall_time=time.perf_counter() - t0,
    )


def _initial_program(base: AnsatzProgram, config: SolverConfig) -> AnsatzProgram:
    if config.initialization == "zeros":
        return base
    if config.initialization == "explicit":
        x0 = np.asarray(config.initial_parameters, dtype=float)
        if x0.shape != (base.parameter_count,):
            raise ConfigError(f"{x0.size} initial parameters for {base.parameter_count} steps")
        return base.with_parameters(x0)
    loaded = load_parameters(config.warm_start_path, base.pool)
    if loaded.generator_ids != base.generator_ids:
        raise ConfigError("warm-start program has a different operator sequence")
    return base.with_parameters(loaded.thetas)


def solve_fuccsd(
    h: ActiveSpaceHamiltonian,
    pool: OperatorPool,
    refs: Sequence[CsfReference],
    n_layers: int,
    config: SolverConfig,
) -> SolverReport:
    """Minimize the SA energy of an fUCCSD(``n_layers``) program.

    The trace records the starting point and every quasi-Newton iteration
    (max_gradient is the parameter-gradient infinity norm).
    """
    t0 = time.perf_counter()
    _check_refs(refs, config, h)
    prog = _initial_program(build_layered(pool, n_layers), config)
    objective = SAObjective(prog, h, refs, config.weights)
    n_ops = prog.parameter_count
    e0, g0 = objective(prog.thetas)
    trace = [TraceEntry(0, e0, float(np.max(np.abs(g0), initial=0.0)), list(prog.generator_ids), n_ops)]

    def record(x):
        e, g = objective(x)
        trace.append(TraceEntry(len(trace), e, float(np.max(np.abs(g))), [], n_ops))

    x, _, converged = _minimize(objective, prog.thetas, config, record)
    prog = prog.with_parameters(x)
    return _report(f"fuccsd({n_layers})", converged, h, prog, refs, config, trace, t0)


def _select(scores: np.ndarray, fraction: float) -> list[int]:
    gmax = scores.max()
    chosen = np.flatnonzero(scores >= fraction * gmax)
    ordered = sorted(chosen.tolist(), key=lambda k: (-scores[k], k))
    return ordered[:1] if fraction >= 1.0 else ordered


def solve_adapt(
    h: ActiveSpaceHamiltonian,
    pool: OperatorPool,
    refs: Sequence[CsfReference],
    config: SolverConfig,
    initial_program: AnsatzProgram | None = None,
) -> SolverReport:
    """Grow and optimize an ADAPT program until the pool gradient falls below threshold.

    Each macroiteration scores every pool generator, appends those scoring at
    least ``adapt_selection_fraction`` times the maximum (only the single best
    one, lowest id on ties, when the fraction is 1), then re-optimizes all
    parameters starting from the previous optimum.  Trace entry ``n`` holds
    the state after ``n`` macroiterations.  Generators may be appended more
    than once.

    Args:
        initial_program: Optional seed program (e.g. the optimum from a
            neighbouring geometry); it is re-optimized before growth starts.
    """
    t0 = time.perf_counter()
    _check_refs(refs, config, h)
    basis = h.sector_basis()
    w = np.asarray(config.weights)
    hmat = hamiltonian_matrix(h, basis)
    gmats = pool.matrices(basis)
    prog = initial_program or AnsatzProgram(pool, (), ())
    if initial_program is not None and initial_program.pool is not pool:
        prog = AnsatzProgram(pool, prog.generator_ids, prog.thetas)
    if config.initialization == "warm_start":
        prog = load_parameters(config.warm_start_path, pool)
    elif config.initialization == "explicit" and config.initial_parameters is not None:
        prog = prog.with_parameters(config.initial_parameters)

    inner_ok = True
    if prog.parameter_count:
        x, _, inner_ok = _minimize(SAObjective(prog, h, refs, w), prog.thetas, config)
        prog = prog.with_parameters(x)

    method = "adapt(standard)" if config.adapt_selection_fraction >= 1.0 else f"adapt({config.adapt_selection_fraction:.2f})"
    trace: list[TraceEntry] = []
    added: list[int] = []
    converged = False
    for it in range(config.adapt_max_macroiterations + 1):
        objective = SAObjective(prog, h, refs, w)
        psi = objective.states(prog.thetas)
        energy = float(np.sum(w * np.sum(psi * (hmat @ psi), axis=0)))
        per_state = signed_pool_gradient(gmats, hmat, psi, w)
        if config.gradient_mode == "state_averaged":
            scores = np.abs(per_state @ w)
        else:
            scores = np.max(np.abs(per_state), axis=1)
        gmax = float(scores.max())
        trace.append(TraceEntry(it, energy, gmax, added, prog.parameter_count))
        log.info("%s iter %d: E_SA=%.12f max|g|=%.3e n_ops=%d", method, it, energy, gmax, prog.parameter_count)
        if gmax < config.adapt_gradient_threshold:
            converged = inner_ok
            if not inner_ok:
                log.warning("%s: pool gradient below threshold but the last re-optimization "
                            "did not reach the parameter-gradient tolerance", method)
            break
        if it == config.adapt_max_macroiterations:
            break
        added = _select(scores, config.adapt_selection_fraction)
        prog = prog.extended(added)
        x, _, inner_ok = _minimize(SAObjective(prog, h, refs, w), prog.thetas, config)
        prog = prog.with_parameters(x)
    return _report(method, converged, h, prog, refs, config, trace, t0)


@dataclass
class ErrorMetrics:
    """Deviations from the oracle, in millihartree."""

    per_state_mad: list[float]
    per_state_max: list[float]
    mad: float
    max_error: float
    operators_min: int
    operators_mean: float
    operators_max: int
    labels: list[str]


def compute_error_metrics(
    reports: Mapping[str, SolverReport],
    oracle_energies: Mapping[str, Sequence[float]],
) -> ErrorMetrics:
    """MAD and maximum absolute deviation per state and overall.

    ``reports`` and ``oracle_energies`` are keyed by geometry label; resolved
    energies are compared to the oracle roots in ascending order.

    Raises:
        AlignmentError: label sets or state counts differ.
    """
    if set(reports) != set(oracle_energies):
        raise AlignmentError(f"labels differ: {sorted(reports)} vs {sorted(oracle_energies)}")
    labels = list(reports)
    if not labels:
        raise AlignmentError("no geometries to compare")
    devs = []
    for label in labels:
        got = np.asarray(reports[label].resolved_energies)
        ref = np.asarray(oracle_energies[label])
        if ref.shape[0] < got.shape[0]:
            raise AlignmentError(f"{label}: {got.shape[0]} states but {ref.shape[0]} oracle roots")
        devs.append(np.abs(got - ref[: got.shape[0]]) * HARTREE_TO_MEH)
    if len({d.shape for d in devs}) != 1:
        raise AlignmentError("state counts differ between geometries")
    devs = np.array(devs)
    ops = [reports[label].parameter_count for label in labels]
    return ErrorMetrics(
        per_state_mad=devs.mean(axis=0).tolist(),
        per_state_max=devs.max(axis=0).tolist(),
        mad=float(devs.mean()),
        max_error=float(devs.max()),
        operators_min=int(min(ops)),
        operators_mean=float(np.mean(ops)),
        operators_max=int(max(ops)),
        labels=labels,
    )
