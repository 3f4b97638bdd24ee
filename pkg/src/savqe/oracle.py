"""Exact CASCI reference within a fixed active space."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from savqe.exceptions import BasisError, ConvergenceError
from savqe.hamiltonian import ActiveSpaceHamiltonian, hamiltonian_matrix
from savqe.states import (
    CsfReference,
    FockBasis,
    Statevector,
    csf_matrix,
    fock_basis,
    orthonormality_deviation,
    spin_squared_matrix,
)

__all__ = [
    "CasciResult",
    "casci_solve",
    "csf_character",
    "davidson",
    "weyl_dimension",
    "write_ci_vectors",
    "read_ci_vectors",
]

DENSE_LIMIT = 4000


def weyl_dimension(n_electrons: int, n_orbitals: int, spin: float) -> int:
    """Number of spin-``spin`` CSFs for ``n_electrons`` in ``n_orbitals`` (Weyl-Paldus)."""
    two_s = int(round(2 * spin))
    if (n_electrons - two_s) % 2 or two_s < 0 or two_s > n_electrons:
        return 0
    m, n = n_orbitals, n_electrons
    lower = (n - two_s) // 2
    return (two_s + 1) * comb(m + 1, lower) * comb(m + 1, lower + two_s + 1) // (m + 1)


@dataclass
class CasciResult:
    energies: np.ndarray
    ci_vectors: np.ndarray  # (dim, n_roots), real, columns are roots
    basis: FockBasis
    csf_dimension: int
    s2_expectations: np.ndarray
    residuals: np.ndarray

    def state(self, root: int) -> Statevector:
        return Statevector(self.ci_vectors[:, root], self.basis)

    def to_dict(self, include_vectors: bool = False) -> dict:
        data = {
            "energies": self.energies.tolist(),
            "basis": list(self.basis.key),
            "csf_dimension": self.csf_dimension,
            "s2_expectations": self.s2_expectations.tolist(),
            "residuals": self.residuals.tolist(),
        }
        if include_vectors:
            data["ci_vectors"] = self.ci_vectors.T.tolist()
        return data

    def to_json(self, include_vectors: bool = False) -> str:
        return json.dumps(self.to_dict(include_vectors), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> CasciResult:
        _, m, na, nb = data["basis"]
        basis = fock_basis(m, na, nb)
        if "ci_vectors" in data:
            vecs = np.array(data["ci_vectors"]).T
        else:
            vecs = np.zeros((basis.dim, 0))
        return cls(
            np.array(data["energies"]),
            vecs,
            basis,
            data["csf_dimension"],
            np.array(data["s2_expectations"]),
            np.array(data["residuals"]),
        )


def davidson(
    matvec,
    diagonal: np.ndarray,
    n_roots: int,
    tol: float = 1e-10,
    max_iterations: int = 500,
    max_subspace: int | None = None,
    guess: np.ndarray | None = None,
    project=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block Davidson for the lowest ``n_roots`` eigenpairs of a real symmetric operator.

    Returns eigenvalues, eigenvectors (columns) and residual norms.
    ``project``, if given, maps a block of vectors onto an invariant subspace
    of the operator; guesses and corrections are projected so the search
    stays inside it.

    Raises:
        ConvergenceError: residuals above ``tol`` after ``max_iterations``.
    """
    dim = len(diagonal)
    max_subspace = max_subspace or max(8 * n_roots, 40)
    if guess is None:
        guess = np.zeros((dim, n_roots))
        guess[np.argsort(diagonal, kind="stable")[:n_roots], np.arange(n_roots)] = 1.0
        # small deterministic admixture so every symmetry block is seeded
        guess += 1e-3 * np.random.default_rng(0).standard_normal(guess.shape)
    if project is not None:
        guess = project(guess)
    basis, _ = np.linalg.qr(guess)
    ax = matvec(basis)
    residual_norms = np.full(n_roots, np.inf)
    for _ in range(max_iterations):
        sub = basis.T @ ax
        theta, s = np.linalg.eigh(0.5 * (sub + sub.T))
        theta, s = theta[:n_roots], s[:, :n_roots]
        x = basis @ s
        r = ax @ s - x * theta
        residual_norms = np.linalg.norm(r, axis=0)
        if np.all(residual_norms < tol):
            return theta, x, residual_norms
        open_roots = np.flatnonzero(residual_norms >= tol)
        denom = theta[open_roots] - diagonal[:, None]
        denom[np.abs(denom) < 1e-8] = 1e-8
        corr = r[:, open_roots] / denom
        if project is not None:
            corr = project(corr)
        if basis.shape[1] + len(open_roots) > min(max_subspace, dim):
            basis, ax = x, ax @ s
        accepted: list[np.ndarray] = []

        def orthogonal_part(col: np.ndarray) -> np.ndarray:
            col = col / np.linalg.norm(col)
            for _ in range(2):
                col -= basis @ (basis.T @ col)
                for a in accepted:
                    col -= a * (a @ col)
            return col

        for n, root in enumerate(open_roots):
            # the preconditioned correction can collapse onto the current
            # subspace (e.g. for a nearly diagonal operator); fall back to the
            # bare residual in that case
            for candidate in (corr[:, n], r[:, root]):
                col = orthogonal_part(candidate)
                norm = np.linalg.norm(col)
                if norm > 1e-6:
                    accepted.append(col / norm)
                    break
        if not accepted:
            break
        new = np.column_stack(accepted)
        basis = np.hstack([basis, new])
        ax = np.hstack([ax, matvec(new)])
    raise ConvergenceError(f"Davidson did not converge; residuals {residual_norms}", residual_norms)


def spin_projector(s2: sp.spmatrix, spin: float, max_spin: float):
    """Loewdin projector onto total spin ``spin`` as a function on vector blocks.

    ``P = prod_{S' != spin} (S^2 - S'(S'+1)) / (spin(spin+1) - S'(S'+1))`` over
    the spins ``S'`` reachable in the sector; applied twice to remove
    round-off contamination.
    """
    others = []
    s_other = spin - np.floor(spin)
    while s_other <= max_spin + 1e-12:
        if abs(s_other - spin) > 1e-12:
            others.append(s_other * (s_other + 1))
        s_other += 1.0
    target = spin * (spin + 1)

    def project(block: np.ndarray) -> np.ndarray:
        for _ in range(2):
            for value in others:
                block = (s2 @ block - value * block) / (target - value)
        return block

    return project


def casci_solve(
    h: ActiveSpaceHamiltonian,
    n_roots: int,
    spin: float = 0.0,
    method: str = "auto",
    buffer_roots: int = 2,
    tol: float = 1e-10,
) -> CasciResult:
    """Lowest ``n_roots`` eigenpairs of H with total spin ``spin``.

    The solve runs in the ``Sz = spin mod 1`` determinant sector on
    ``H + lam (S^2 - S(S+1))^2``, with ``lam`` chosen above the spectral
    width so every state of another spin lies above all target states
    (dense path), or with Davidson on H restricted to the target spin by a
    projector (iterative path).  Since ``[H, S^2] = 0`` the target
    eigenpairs are exactly those of H.  ``method`` is ``"dense"``,
    ``"davidson"`` or ``"auto"`` (dense below dimension 4000).
    ``buffer_roots`` extra roots are computed and dropped after spin
    screening.
    """
    two_sz = int(round(2 * (spin - np.floor(spin))))
    if (h.n_electrons + two_sz) % 2:
        raise ValueError(f"spin {spin} impossible for {h.n_electrons} electrons")
    na, nb = (h.n_electrons + two_sz) // 2, (h.n_electrons - two_sz) // 2
    if na > h.n_spatial_orbitals:
        raise ValueError("requested sector is empty")
    basis = fock_basis(h.n_spatial_orbitals, na, nb)
    n_target = weyl_dimension(h.n_electrons, h.n_spatial_orbitals, spin)
    if n_roots > n_target:
        raise ValueError(f"only {n_target} states of spin {spin} exist, {n_roots} requested")
    hmat = hamiltonian_matrix(h, basis)
    s2 = spin_squared_matrix(basis)
    k = min(n_roots + buffer_roots, n_target, basis.dim)

    if method == "auto":
        method = "dense" if basis.dim < DENSE_LIMIT else "davidson"
    if method == "dense":
        shift = s2 - spin * (spin + 1) * sp.identity(basis.dim, format="csr")
        penalty = (shift @ shift).tocsr()
        gersh = float(np.max(np.abs(hmat).sum(axis=1))) if basis.dim else 0.0
        op = (hmat + (2.0 * gersh + 1.0) * penalty).tocsr()
        _, vecs = np.linalg.eigh(op.toarray())
        vecs = vecs[:, :k]
    elif method == "davidson":
        project = spin_projector(s2, spin, (na + nb) / 2.0)
        _, vecs, _ = davidson(lambda x: hmat @ x, hmat.diagonal(), k, tol=tol, project=project)
    else:
        raise ValueError(f"unknown method {method!r}")

    # re-diagonalize H inside the converged block to sharpen degenerate roots
    hsub = vecs.T @ (hmat @ vecs)
    e, rot = np.linalg.eigh(0.5 * (hsub + hsub.T))
    vecs = vecs @ rot
    s2_exp = np.einsum("ij,ij->j", vecs, s2 @ vecs)
    keep = np.flatnonzero(np.abs(s2_exp - spin * (spin + 1)) < 1e-6)[:n_roots]
    if len(keep) < n_roots:
        raise ConvergenceError(f"found only {len(keep)} roots of spin {spin}")
    vecs = vecs[:, keep]
    energies = e[keep]
    residuals = np.linalg.norm(hmat @ vecs - vecs * energies, axis=0)
    if np.any(residuals > 1e-9):
        raise ConvergenceError(f"CASCI residuals {residuals} above 1e-9", residuals)
    return CasciResult(energies, vecs, basis, n_target, s2_exp[keep], residuals)


def csf_character(
    result: CasciResult,
    csf_basis: Sequence[CsfReference],
    weight_floor: float = 0.10,
) -> list[list[tuple[str, float]]]:
    """Per root, the CSFs with weight >= ``weight_floor``, largest first."""
    mat = csf_matrix(csf_basis, result.basis)
    if orthonormality_deviation(mat) > 1e-8:
        raise BasisError("CSF basis is not orthonormal")
    weights = (mat.T @ result.ci_vectors) ** 2
    out = []
    for root in range(result.ci_vectors.shape[1]):
        col = weights[:, root]
        order = sorted(range(len(csf_basis)), key=lambda n: (-col[n], n))
        out.append([(csf_basis[n].label, float(col[n])) for n in order if col[n] >= weight_floor])
    return out


def write_ci_vectors(path: str | os.PathLike, result: CasciResult) -> None:
    """Binary dump: int64 dimension, int64 root count, then roots as float64, all little-endian."""
    dim, n = result.ci_vectors.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", dim, n))
        fh.write(np.ascontiguousarray(result.ci_vectors.T, dtype="<f8").tobytes())


def read_ci_vectors(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        dim, n = struct.unpack("<qq", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != dim * n:
        raise ValueError(f"{path}: expected {dim * n} doubles, found {data.size}")
    return data.reshape(n, dim).T.copy()
