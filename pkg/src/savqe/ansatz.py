"""Factorized ansatz programs and state-averaged energies with adjoint gradients.

A program with steps ``(k_1, t_1), ..., (k_K, t_K)`` prepares

    U(t) |Phi> = exp(t_K G_{k_K}) ... exp(t_1 G_{k_1}) |Phi>

so step 1 acts on the reference first.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from savqe.exceptions import BasisError, ConfigError, DanglingGeneratorError, ShapeError
from savqe.hamiltonian import ActiveSpaceHamiltonian, hamiltonian_matrix
from savqe.pool import OperatorPool
from savqe.states import CsfReference, FockBasis, Statevector, csf_matrix, orthonormality_deviation

__all__ = [
    "AnsatzProgram",
    "build_layered",
    "apply_program",
    "SAObjective",
    "sa_energy_and_gradient",
    "save_parameters",
    "load_parameters",
    "equal_weights",
]


@dataclass(frozen=True, eq=False)
class AnsatzProgram:
    """Ordered generator ids (into ``pool``) with their parameters."""

    pool: OperatorPool
    generator_ids: tuple[int, ...]
    thetas: np.ndarray
    provenance: str = "adaptive"
    n_layers: int | None = None

    def __post_init__(self) -> None:
        thetas = np.array(self.thetas, dtype=float).reshape(-1)
        if len(thetas) != len(self.generator_ids):
            raise ShapeError(f"{len(thetas)} parameters for {len(self.generator_ids)} steps")
        thetas.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "generator_ids", tuple(int(k) for k in self.generator_ids))

    @property
    def parameter_count(self) -> int:
        return len(self.generator_ids)

    @property
    def steps(self) -> list[tuple[int, float]]:
        return list(zip(self.generator_ids, self.thetas.tolist()))

    def with_parameters(self, thetas: Sequence[float]) -> AnsatzProgram:
        return AnsatzProgram(self.pool, self.generator_ids, thetas, self.provenance, self.n_layers)

    def extended(self, generator_ids: Sequence[int]) -> AnsatzProgram:
        """Append steps with zero parameters."""
        ids = self.generator_ids + tuple(generator_ids)
        thetas = np.concatenate([self.thetas, np.zeros(len(generator_ids))])
        return AnsatzProgram(self.pool, ids, thetas, "adaptive", None)

    def inverse(self) -> AnsatzProgram:
        """Reversed steps with negated parameters, so ``U_inv U = 1``."""
        return AnsatzProgram(self.pool, self.generator_ids[::-1], -self.thetas[::-1], self.provenance)

    def check(self) -> None:
        for k in self.generator_ids:
            if not 0 <= k < len(self.pool):
                raise DanglingGeneratorError(f"generator id {k} not in pool of size {len(self.pool)}")


def build_layered(pool: OperatorPool, n_layers: int) -> AnsatzProgram:
    """fUCCSD(n): ``n_layers`` copies of the pool in pool order, all parameters zero."""
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    ids = tuple(range(len(pool))) * n_layers
    return AnsatzProgram(pool, ids, np.zeros(len(ids)), "layered", n_layers)


def _propagate(prog: AnsatzProgram, basis: FockBasis, block: np.ndarray) -> np.ndarray:
    prog.check()
    for k, theta in zip(prog.generator_ids, prog.thetas):
        block = prog.pool[k].kernel(basis).apply(theta, block)
    return block


def apply_program(prog: AnsatzProgram, v0: Statevector) -> Statevector:
    """Return ``U(theta)|v0>``."""
    amps = v0.amplitudes
    if np.max(np.abs(amps.imag), initial=0.0) == 0.0:
        amps = amps.real
    return Statevector(_propagate(prog, v0.basis, amps), v0.basis)


def equal_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _check_weights(weights, n: int) -> np.ndarray:
    w = equal_weights(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError(f"weights {w} must be {n} nonnegative numbers summing to 1")
    return w


class SAObjective:
    """Weighted energy ``sum_I w_I <Phi_I|U^dag H U|Phi_I>`` over program parameters.

    The generator sequence is fixed at construction; calls vary the
    parameters only.  Gradients come from one reverse sweep.
    """

    def __init__(
        self,
        prog: AnsatzProgram,
        h: ActiveSpaceHamiltonian,
        refs: Sequence[CsfReference],
        weights: Sequence[float] | None = None,
        basis: FockBasis | None = None,
    ) -> None:
        prog.check()
        self.prog = prog
        self.basis = basis or h.sector_basis()
        self.weights = _check_weights(weights, len(refs))
        self.refs = csf_matrix(refs, self.basis)
        if orthonormality_deviation(self.refs) > 1e-8:
            raise BasisError("reference CSFs are not orthonormal")
        self.hmat = hamiltonian_matrix(h, self.basis)
        self.kernels = [prog.pool[k].kernel(self.basis) for k in prog.generator_ids]
        self.gmats = [prog.pool[k].matrix(self.basis) for k in prog.generator_ids]
        self.n_calls = 0

    def states(self, thetas: np.ndarray) -> np.ndarray:
        block = self.refs
        for kern, theta in zip(self.kernels, thetas):
            block = kern.apply(theta, block)
        return block

    def energy(self, thetas: np.ndarray) -> float:
        psi = self.states(thetas)
        return float(np.sum(self.weights * np.sum(psi * (self.hmat @ psi), axis=0)))

    def __call__(self, thetas: np.ndarray) -> tuple[float, np.ndarray]:
        """Return ``(energy, gradient)``."""
        self.n_calls += 1
        thetas = np.asarray(thetas, dtype=float)
        psi = self.states(thetas)
        lam = (self.hmat @ psi) * self.weights
        energy = float(np.sum(psi * lam))
        grad = np.empty(len(thetas))
        for k in range(len(thetas) - 1, -1, -1):
            grad[k] = 2.0 * np.sum(lam * (self.gmats[k] @ psi))
            both = self.kernels[k].apply(-thetas[k], np.hstack([psi, lam]))
            psi, lam = both[:, : psi.shape[1]], both[:, psi.shape[1] :]
        return energy, grad


def sa_energy_and_gradient(
    prog: AnsatzProgram,
    h: ActiveSpaceHamiltonian,
    refs: Sequence[CsfReference],
    weights: Sequence[float] | None = None,
    basis: FockBasis | None = None,
) -> tuple[float, np.ndarray]:
    """State-averaged energy and its analytic gradient at ``prog.thetas``.

    ``basis`` defaults to the Hamiltonian's particle-number sector; pass the
    full Jordan-Wigner basis to evaluate on all ``2**(2M)`` amplitudes.
    """
    return SAObjective(prog, h, refs, weights, basis)(prog.thetas)


def save_parameters(path: str | os.PathLike, prog: AnsatzProgram) -> None:
    """Write the program (ids and parameters) as JSON tagged with the pool hash."""
    data = {
        "pool_hash": prog.pool.fingerprint,
        "provenance": prog.provenance,
        "n_layers": prog.n_layers,
        "generator_ids": list(prog.generator_ids),
        "thetas": prog.thetas.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_parameters(path: str | os.PathLike, pool: OperatorPool) -> AnsatzProgram:
    with open(path) as fh:
        data = json.load(fh)
    if data["pool_hash"] != pool.fingerprint:
        raise ConfigError(f"{path}: parameters were saved for a different operator pool")
    return AnsatzProgram(pool, data["generator_ids"], data["thetas"], data["provenance"], data["n_layers"])
