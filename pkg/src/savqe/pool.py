"""Spin-adapted singles-and-doubles operator pool."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from savqe.exceptions import PartitionError
from savqe.hamiltonian import ActiveSpaceHamiltonian, hamiltonian_matrix
from savqe.states import ExponentialKernel, FockBasis, Statevector, excitation_operator

__all__ = ["SpinAdaptedGenerator", "OperatorPool", "build_uccsd_pool", "pool_gradient", "expected_pool_size"]

KINDS = ("single", "double_A", "double_B")

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SpinAdaptedGenerator:
    """Anti-Hermitian singlet generator ``G = T - T^dagger``.

    ``T`` is normalized so that it maps a closed-shell determinant with the
    occupied orbitals doubly filled and the virtuals empty onto a unit-norm
    state:

    * ``single`` (i, a): ``(E_ai) / sqrt(2)``
    * ``double_A`` (i, j, a, b): ``(E_ai E_bj + E_bi E_aj) / (2 norm)``, the
      pair-singlet coupling, with ``norm`` 1 for ``i<j, a<b``, ``sqrt(2)`` when
      exactly one pair coincides and 2 when both do.
    * ``double_B`` (i<j, a<b): ``(E_ai E_bj - E_bi E_aj) / (2 sqrt(3))``, the
      pair-triplet coupling.
    """

    id: int
    kind: str
    spatial_indices: tuple[int, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def excitation_matrix(self, basis: FockBasis) -> sp.csr_matrix:
        """Sparse ``T`` in ``basis``."""
        if self.kind == "single":
            i, a = self.spatial_indices
            return (excitation_operator(basis, a, i) / _SQRT2).tocsr()
        i, j, a, b = self.spatial_indices
        eai_ebj = excitation_operator(basis, a, i) @ excitation_operator(basis, b, j)
        ebi_eaj = excitation_operator(basis, b, i) @ excitation_operator(basis, a, j)
        if self.kind == "double_A":
            norm = 2.0 * (_SQRT2 if i == j else 1.0) * (_SQRT2 if a == b else 1.0)
            return ((eai_ebj + ebi_eaj) / norm).tocsr()
        return ((eai_ebj - ebi_eaj) / (2.0 * np.sqrt(3.0))).tocsr()

    def matrix(self, basis: FockBasis) -> sp.csr_matrix:
        """Sparse anti-symmetric ``G`` in ``basis`` (cached)."""
        key = ("G", basis.key)
        if key not in self._cache:
            t = self.excitation_matrix(basis)
            g = (t - t.T).tocsr()
            g.eliminate_zeros()
            g.sort_indices()
            self._cache[key] = g
        return self._cache[key]

    def kernel(self, basis: FockBasis) -> ExponentialKernel:
        key = ("K", basis.key)
        if key not in self._cache:
            self._cache[key] = ExponentialKernel(self.matrix(basis))
        return self._cache[key]

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "indices": list(self.spatial_indices)}


@dataclass(frozen=True, eq=False)
class OperatorPool:
    generators: tuple[SpinAdaptedGenerator, ...]
    occupied: tuple[int, ...]
    virtual: tuple[int, ...]
    n_spatial: int

    def __len__(self) -> int:
        return len(self.generators)

    def __getitem__(self, gid: int) -> SpinAdaptedGenerator:
        return self.generators[gid]

    def __iter__(self):
        return iter(self.generators)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_spatial": self.n_spatial,
                "occupied": list(self.occupied),
                "virtual": list(self.virtual),
                "generators": [g.to_dict() for g in self.generators],
            },
            indent=1,
        )

    @property
    def fingerprint(self) -> str:
        """SHA-256 of the pool dump; tags serialized parameter vectors."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def matrices(self, basis: FockBasis) -> list[sp.csr_matrix]:
        return [g.matrix(basis) for g in self.generators]


def expected_pool_size(n_occ: int, n_virt: int) -> int:
    o, v = n_occ, n_virt
    return o * v + o * v + o * (o - 1) // 2 * v + o * v * (v - 1) // 2 + 2 * (o * (o - 1) // 2) * (v * (v - 1) // 2)


def build_uccsd_pool(n_spatial: int, occupied: Iterable[int], virtual: Iterable[int]) -> OperatorPool:
    """Singlet singles (i, a) and doubles (i<=j, a<=b), occupied -> virtual.

    Ordering: singles by ascending ``(i, a)``, then doubles by ascending
    ``(i, j, a, b)`` with ``double_A`` before ``double_B``.  Generator ids are
    positions in that order.
    """
    occ = tuple(sorted(set(occupied)))
    virt = tuple(sorted(set(virtual)))
    if set(occ) & set(virt):
        raise PartitionError(f"occupied {occ} and virtual {virt} overlap")
    if set(occ) | set(virt) != set(range(n_spatial)):
        raise PartitionError(f"occupied {occ} + virtual {virt} do not cover {n_spatial} orbitals")
    specs: list[tuple[str, tuple[int, ...]]] = [("single", (i, a)) for i in occ for a in virt]
    for i, j in itertools.combinations_with_replacement(occ, 2):
        for a, b in itertools.combinations_with_replacement(virt, 2):
            specs.append(("double_A", (i, j, a, b)))
            if i < j and a < b:
                specs.append(("double_B", (i, j, a, b)))
    gens = tuple(SpinAdaptedGenerator(n, kind, idx) for n, (kind, idx) in enumerate(specs))
    return OperatorPool(gens, occ, virt, n_spatial)


def _as_block(states: Sequence[Statevector]) -> tuple[FockBasis, np.ndarray]:
    basis = states[0].basis
    block = np.column_stack([s.amplitudes for s in states])
    if not np.iscomplexobj(block) or np.max(np.abs(block.imag), initial=0.0) == 0.0:
        block = block.real
    return basis, block


def signed_pool_gradient(
    matrices: Sequence[sp.spmatrix], hmat: sp.spmatrix, block: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Per-state ``<psi_I|[H, G_k]|psi_I>`` as a ``(n_generators, n_states)`` array."""
    sigma = hmat @ block
    out = np.empty((len(matrices), block.shape[1]))
    for k, g in enumerate(matrices):
        out[k] = 2.0 * np.real(np.sum(sigma.conj() * (g @ block), axis=0))
    return out


def pool_gradient(
    pool: OperatorPool,
    h: ActiveSpaceHamiltonian,
    states: Sequence[Statevector],
    weights: Sequence[float] | None = None,
    mode: str = "state_averaged",
) -> np.ndarray:
    """Magnitude of the SA-energy slope for appending each pool generator.

    Component ``k`` is ``|sum_I w_I <psi_I|[H, G_k]|psi_I>|``, the derivative
    of the weighted energy with respect to ``theta`` for
    ``exp(theta G_k) U |Phi_I>`` at ``theta = 0``.  ``mode="max_state"``
    returns ``max_I |<psi_I|[H, G_k]|psi_I>|`` instead.
    """
    w = np.full(len(states), 1.0 / len(states)) if weights is None else np.asarray(weights, float)
    basis, block = _as_block(states)
    per_state = signed_pool_gradient(pool.matrices(basis), hamiltonian_matrix(h, basis), block, w)
    if mode == "state_averaged":
        return np.abs(per_state @ w)
    if mode == "max_state":
        return np.max(np.abs(per_state), axis=1)
    raise ValueError(f"unknown gradient mode {mode!r}")
