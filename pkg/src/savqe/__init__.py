"""Exact-statevector state-averaged VQE: fUCCSD(n), ADAPT variants and a CASCI oracle."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from savqe.ansatz import (
    AnsatzProgram,
    SAObjective,
    apply_program,
    build_layered,
    load_parameters,
    sa_energy_and_gradient,
    save_parameters,
)
from savqe.exceptions import (  # noqa: F401
    SavqeError,
    FcidumpFormatError,
    FcidumpIndexError,
    FcidumpConsistencyError,
    ShapeError,
    CouplingError,
    BasisError,
    PartitionError,
    DanglingGeneratorError,
    ConvergenceError,
    AlignmentError,
    ConfigError,
)
from savqe.hamiltonian import (
    ActiveSpaceHamiltonian,
    PauliHamiltonian,
    apply_hamiltonian,
    hamiltonian_matrix,
    parse_fcidump,
    read_fcidump,
    to_pauli,
    write_fcidump,
)
from savqe.oracle import CasciResult, casci_solve, csf_character, weyl_dimension
from savqe.pool import OperatorPool, SpinAdaptedGenerator, build_uccsd_pool, pool_gradient
from savqe.states import (
    CsfReference,
    Determinant,
    FockBasis,
    Statevector,
    apply_generator_exponential,
    build_csf,
    enumerate_csfs,
    expand_to_statevector,
    fock_basis,
    project_csf_weights,
)
from savqe.vqe import (
    SolverConfig,
    SolverReport,
    compute_error_metrics,
    resolve_states,
    solve_adapt,
    solve_fuccsd,
)

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a file shipped in ``savqe/data`` (e.g. ``"h4_1.10.fcidump"``)."""
    path = resources.files("savqe") / "data" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled data file {name!r}")
    return Path(str(path))
