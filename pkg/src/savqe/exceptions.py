"""Exception types raised by savqe."""

from __future__ import annotations


class SavqeError(Exception):
    """Base class for all savqe errors."""


class FcidumpFormatError(SavqeError, ValueError):
    """Malformed FCIDUMP header or record."""


class FcidumpIndexError(SavqeError, IndexError):
    """Orbital index outside ``[0, NORB]`` in an FCIDUMP record."""


class FcidumpConsistencyError(SavqeError, ValueError):
    """Two symmetry-equivalent FCIDUMP records disagree."""


class ShapeError(SavqeError, ValueError):
    """Vector or operator dimension does not match the basis."""


class CouplingError(SavqeError, ValueError):
    """Invalid genealogical spin-coupling path."""


class BasisError(SavqeError, ValueError):
    """A set of states that should be orthonormal is not."""


class PartitionError(SavqeError, ValueError):
    """Occupied/virtual orbital partition is inconsistent."""


class DanglingGeneratorError(SavqeError, KeyError):
    """Ansatz step references a generator id absent from the pool."""


class ConvergenceError(SavqeError, RuntimeError):
    """Iterative eigensolver failed to converge."""

    def __init__(self, message: str, residuals=None) -> None:
        super().__init__(message)
        self.residuals = residuals


class AlignmentError(SavqeError, ValueError):
    """Reports and oracle energies cannot be matched up."""


class ConfigError(SavqeError, ValueError):
    """Invalid solver or scan configuration."""
