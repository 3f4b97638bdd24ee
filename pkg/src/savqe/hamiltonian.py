"""Active-space Hamiltonians: FCIDUMP I/O, sparse matrices and the JW image."""

from __future__ import annotations

import io
import itertools
import os
import re
from dataclasses import dataclass, field
from typing import IO, Any

import numpy as np
import scipy.sparse as sp

from savqe.exceptions import (
    FcidumpConsistencyError,
    FcidumpFormatError,
    FcidumpIndexError,
    ShapeError,
)
from savqe.states import FockBasis, Statevector, excitation_operator, fock_basis

__all__ = [
    "ActiveSpaceHamiltonian",
    "PauliHamiltonian",
    "parse_fcidump",
    "read_fcidump",
    "write_fcidump",
    "to_pauli",
    "apply_hamiltonian",
    "hamiltonian_matrix",
]


def _eightfold(p: int, q: int, r: int, s: int) -> set[tuple[int, int, int, int]]:
    return {
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    }


@dataclass(frozen=True, eq=False)
class ActiveSpaceHamiltonian:
    """Spin-free electronic Hamiltonian of an ``(n_electrons, n_spatial_orbitals)`` active space.

    ``h2[p, q, r, s]`` is ``(pq|rs)`` in chemists' notation.  Instances are
    immutable; sparse matrices in a given basis are built once and cached.
    """

    n_electrons: int
    n_spatial_orbitals: int
    core_energy: float
    h1: np.ndarray
    h2: np.ndarray
    ms2: int = 0
    point_group_labels: tuple[int, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = self.n_spatial_orbitals
        h1 = np.array(self.h1, dtype=float)
        h2 = np.array(self.h2, dtype=float)
        if h1.shape != (m, m) or h2.shape != (m, m, m, m):
            raise ShapeError(f"integral shapes {h1.shape}, {h2.shape} do not match {m} orbitals")
        if not 0 <= self.n_electrons <= 2 * m:
            raise ValueError(f"{self.n_electrons} electrons do not fit {m} spatial orbitals")
        if (self.n_electrons + self.ms2) % 2 or abs(self.ms2) > self.n_electrons:
            raise ValueError(f"MS2={self.ms2} incompatible with {self.n_electrons} electrons")
        if np.max(np.abs(h1 - h1.T), initial=0.0) > 1e-12:
            raise ValueError("h1 is not symmetric")
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.max(np.abs(h2 - h2.transpose(perm)), initial=0.0) > 1e-12:
                raise ValueError("h2 lacks 8-fold permutational symmetry")
        h1.setflags(write=False)
        h2.setflags(write=False)
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "core_energy", float(self.core_energy))

    @property
    def n_alpha(self) -> int:
        return (self.n_electrons + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_electrons - self.ms2) // 2

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_spatial_orbitals

    def sector_basis(self) -> FockBasis:
        """Determinant basis with this Hamiltonian's particle numbers."""
        return fock_basis(self.n_spatial_orbitals, self.n_alpha, self.n_beta)

    def full_basis(self) -> FockBasis:
        return fock_basis(self.n_spatial_orbitals)

    def matrix(self, basis: FockBasis | None = None) -> sp.csr_matrix:
        """Sparse matrix of H (core energy included) in ``basis``."""
        return hamiltonian_matrix(self, basis)

    def rhf_energy(self) -> float:
        """Energy of the aufbau closed-shell determinant."""
        occ = range(self.n_electrons // 2)
        e = self.core_energy + 2 * sum(self.h1[i, i] for i in occ)
        for i in occ:
            for j in occ:
                e += 2 * self.h2[i, i, j, j] - self.h2[i, j, j, i]
        return float(e)


def hamiltonian_matrix(h: ActiveSpaceHamiltonian, basis: FockBasis | None = None) -> sp.csr_matrix:
    """Build ``H = E_core + sum k_pq E_pq + 1/2 sum (pq|rs) E_pq E_rs``.

    with ``k_pq = h_pq - 1/2 sum_r (pr|rq)``; valid in the full Fock space
    and in any particle-number sector.
    """
    basis = basis or h.sector_basis()
    if basis.n_orbitals != h.n_spatial_orbitals:
        raise ShapeError(f"{basis!r} does not match {h.n_spatial_orbitals} orbitals")
    if basis.key in h._cache:
        return h._cache[basis.key]
    m = h.n_spatial_orbitals
    dim = basis.dim
    pairs = list(itertools.product(range(m), repeat=2))
    ops = [excitation_operator(basis, p, q).tocoo() for p, q in pairs]
    k = h.h1 - 0.5 * np.einsum("prrq->pq", h.h2)

    rows = np.concatenate([o.row for o in ops])
    cols = np.concatenate([o.col for o in ops])
    vals = np.concatenate([o.data for o in ops])
    which = np.concatenate([np.full(o.nnz, n) for n, o in enumerate(ops)])

    one_body = sp.csr_matrix((vals * k.ravel()[which], (rows, cols)), shape=(dim, dim))
    g = h.h2.reshape(m * m, m * m)
    left = sp.hstack([sp.csr_matrix(o) for o in ops]).tocsr()
    right_blocks = [
        sp.csr_matrix((vals * g[n][which], (rows, cols)), shape=(dim, dim)) for n in range(len(pairs))
    ]
    two_body = left @ sp.vstack(right_blocks).tocsr()
    mat = (one_body + 0.5 * two_body + h.core_energy * sp.identity(dim, format="csr")).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    h._cache[basis.key] = mat
    return mat


def apply_hamiltonian(h: ActiveSpaceHamiltonian, v: Statevector) -> Statevector:
    """Return ``H|v>`` in the basis of ``v``."""
    if v.basis.n_orbitals != h.n_spatial_orbitals:
        raise ShapeError(f"{v.basis!r} does not match {h.n_spatial_orbitals} orbitals")
    return Statevector(hamiltonian_matrix(h, v.basis) @ v.amplitudes, v.basis)


# ---------------------------------------------------------------------------
# FCIDUMP


_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _parse_header(text: str) -> dict[str, list[str]]:
    body = re.sub(r"^\s*&FCI", "", text, flags=re.IGNORECASE)
    keys = list(_KEY_RE.finditer(body))
    out: dict[str, list[str]] = {}
    for n, match in enumerate(keys):
        end = keys[n + 1].start() if n + 1 < len(keys) else len(body)
        raw = body[match.end() : end]
        out[match.group(1).upper()] = [t for t in re.split(r"[,\s]+", raw) if t]
    return out


def parse_fcidump(stream: IO[str] | str) -> ActiveSpaceHamiltonian:
    """Read an FCIDUMP from a text stream (or a string holding the file).

    Records with ``r = s = 0`` are one-electron integrals, the all-zero
    record is the core energy, and records ``e p 0 0 0`` (orbital energies)
    are ignored.

    Raises:
        FcidumpFormatError: missing header key or malformed record.
        FcidumpIndexError: index outside ``[0, NORB]``.
        FcidumpConsistencyError: symmetry-equivalent records differ by > 1e-10.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()
    header_lines = []
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.upper() in ("&END", "/", "$END") or stripped.upper().endswith(("&END", "/")):
            tail = re.sub(r"(&END|\$END|/)\s*$", "", stripped, flags=re.IGNORECASE)
            header_lines.append(tail)
            break
        header_lines.append(stripped)
    else:
        raise FcidumpFormatError("FCIDUMP header is not terminated by '/' or '&END'")
    header = _parse_header(" ".join(header_lines))
    for key in ("NORB", "NELEC"):
        if key not in header or not header[key]:
            raise FcidumpFormatError(f"FCIDUMP header lacks {key}")
    try:
        norb = int(header["NORB"][0])
        nelec = int(header["NELEC"][0])
        ms2 = int(header.get("MS2", ["0"])[0])
        orbsym = tuple(int(x) for x in header["ORBSYM"]) if "ORBSYM" in header else None
    except ValueError as exc:
        raise FcidumpFormatError(f"unreadable header value: {exc}") from None

    h1 = np.zeros((norb, norb))
    h2 = np.zeros((norb, norb, norb, norb))
    seen: dict[tuple, float] = {}
    core = 0.0

    def store(key: tuple, value: float, n: int) -> bool:
        if key in seen:
            if abs(seen[key] - value) > 1e-10:
                raise FcidumpConsistencyError(
                    f"line {n}: integral {key} = {value} conflicts with earlier value {seen[key]}"
                )
            return False
        seen[key] = value
        return True

    for n, line in enumerate(lines[lineno:], start=lineno + 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise FcidumpFormatError(f"line {n}: expected 'value p q r s', got {line.strip()!r}")
        try:
            value = float(fields[0].replace("D", "E").replace("d", "e"))
            p, q, r, s = (int(x) for x in fields[1:])
        except ValueError:
            raise FcidumpFormatError(f"line {n}: unreadable record {line.strip()!r}") from None
        if any(not 0 <= x <= norb for x in (p, q, r, s)):
            raise FcidumpIndexError(f"line {n}: index out of range [0, {norb}] in {line.strip()!r}")
        if p and q and r and s:
            key = min(_eightfold(p, q, r, s))
            if store(key, value, n):
                for i, j, k, l in _eightfold(p - 1, q - 1, r - 1, s - 1):
                    h2[i, j, k, l] = value
        elif p and q and not r and not s:
            key = (min(p, q), max(p, q))
            if store(key, value, n):
                h1[p - 1, q - 1] = h1[q - 1, p - 1] = value
        elif not (p or q or r or s):
            if store((0,), value, n):
                core = value
        elif p and not (q or r or s):
            continue
        else:
            raise FcidumpFormatError(f"line {n}: unsupported index pattern in {line.strip()!r}")
    return ActiveSpaceHamiltonian(nelec, norb, core, h1, h2, ms2, orbsym)


def read_fcidump(path: str | os.PathLike) -> ActiveSpaceHamiltonian:
    with open(path) as fh:
        return parse_fcidump(fh)


def write_fcidump(h: ActiveSpaceHamiltonian, stream: IO[str], tol: float = 0.0) -> None:
    """Write unique integrals (8-fold / 2-fold symmetry) in FCIDUMP format."""
    m = h.n_spatial_orbitals
    orbsym = h.point_group_labels or (1,) * m
    stream.write(f" &FCI NORB={m},NELEC={h.n_electrons},MS2={h.ms2},\n")
    stream.write(f"  ORBSYM={','.join(str(x) for x in orbsym)},\n  ISYM=1,\n &END\n")
    for p in range(m):
        for q in range(p + 1):
            for r in range(m):
                for s in range(r + 1):
                    if p * (p + 1) // 2 + q < r * (r + 1) // 2 + s:
                        continue
                    v = h.h2[p, q, r, s]
                    if abs(v) > tol:
                        stream.write(f"{float(v)!r:>24} {p + 1:4d} {q + 1:4d} {r + 1:4d} {s + 1:4d}\n")
    for p in range(m):
        for q in range(p + 1):
            if abs(h.h1[p, q]) > tol:
                stream.write(f"{float(h.h1[p, q])!r:>24} {p + 1:4d} {q + 1:4d}    0    0\n")
    stream.write(f"{float(h.core_energy)!r:>24}    0    0    0    0\n")


# ---------------------------------------------------------------------------
# Jordan-Wigner


@dataclass
class PauliHamiltonian:
    """Real linear combination of Pauli words.

    Character ``j`` of each word acts on qubit ``j`` (spin orbital ``j``).
    """

    terms: list[tuple[float, str]]
    n_qubits: int

    def __post_init__(self) -> None:
        words = [w for _, w in self.terms]
        if len(set(words)) != len(words):
            raise ValueError("repeated Pauli words")
        if any(len(w) != self.n_qubits for w in words):
            raise ValueError(f"Pauli words must have length {self.n_qubits}")

    def __len__(self) -> int:
        return len(self.terms)

    def as_dict(self) -> dict[str, float]:
        return {w: c for c, w in self.terms}

    def to_sparse(self) -> sp.csr_matrix:
        """Matrix in the computational basis, state index bit ``j`` = qubit ``j``."""
        single = {
            "I": sp.identity(2, format="csr"),
            "X": sp.csr_matrix([[0, 1], [1, 0]], dtype=complex),
            "Y": sp.csr_matrix([[0, -1j], [1j, 0]], dtype=complex),
            "Z": sp.csr_matrix([[1, 0], [0, -1]], dtype=complex),
        }
        dim = 1 << self.n_qubits
        total = sp.csr_matrix((dim, dim), dtype=complex)
        for coeff, word in self.terms:
            mat = sp.identity(1, format="csr", dtype=complex)
            for ch in word:
                mat = sp.kron(single[ch], mat, format="csr")
            total = total + coeff * mat
        return total.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def _ladder(j: int, dagger: bool) -> dict[tuple[int, int], complex]:
    # a_j = 1/2 Z_{<j} X_j (1 - Z_j), a+_j = 1/2 Z_{<j} X_j (1 + Z_j), in X^x Z^z form
    lower = (1 << j) - 1
    bit = 1 << j
    return {(bit, lower): 0.5, (bit, lower | bit): 0.5 if dagger else -0.5}


def _multiply(a: dict, b: dict) -> dict:
    out: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in a.items():
        for (x2, z2), c2 in b.items():
            sign = -1 if (z1 & x2).bit_count() & 1 else 1
            key = (x1 ^ x2, z1 ^ z2)
            out[key] = out.get(key, 0) + sign * c1 * c2
    return out


def _xz_to_word(x: int, z: int, n: int) -> tuple[complex, str]:
    chars = []
    for j in range(n):
        xb, zb = (x >> j) & 1, (z >> j) & 1
        chars.append("Y" if xb and zb else "X" if xb else "Z" if zb else "I")
    # X Z = -i Y on every qubit where both bits are set
    return (-1j) ** (x & z).bit_count(), "".join(chars)


def to_pauli(h: ActiveSpaceHamiltonian, tol: float = 1e-14) -> PauliHamiltonian:
    """Jordan-Wigner image of ``h`` over ``2M`` qubits (interleaved spin orbitals).

    The core energy is folded into the identity coefficient.
    """
    m = h.n_spatial_orbitals
    n = 2 * m
    create = [_ladder(j, True) for j in range(n)]
    annihilate = [_ladder(j, False) for j in range(n)]
    hop = [[_multiply(create[p], annihilate[q]) for q in range(n)] for p in range(n)]
    acc: dict[tuple[int, int], complex] = {(0, 0): h.core_energy}

    def add(op: dict, coeff: float) -> None:
        for key, c in op.items():
            acc[key] = acc.get(key, 0) + coeff * c

    for p, q in itertools.product(range(m), repeat=2):
        if h.h1[p, q] != 0.0:
            for s in (0, 1):
                add(hop[2 * p + s][2 * q + s], h.h1[p, q])
    # a+_P a+_R a_S a_Q = a+_P a_Q a+_R a_S - delta_QR a+_P a_S
    for p, q, r, s in itertools.product(range(m), repeat=4):
        g = 0.5 * h.h2[p, q, r, s]
        if g == 0.0:
            continue
        for sig, tau in itertools.product((0, 1), repeat=2):
            P, Q, R, S = 2 * p + sig, 2 * q + sig, 2 * r + tau, 2 * s + tau
            add(_multiply(hop[P][Q], hop[R][S]), g)
            if Q == R:
                add(hop[P][S], -g)
    terms = []
    for (x, z), c in sorted(acc.items()):
        phase, word = _xz_to_word(x, z, n)
        value = phase * c
        if abs(value) <= tol:
            continue
        if abs(value.imag) > 1e-10:
            raise ArithmeticError(f"non-Hermitian Pauli term {word}: {value}")
        terms.append((float(value.real), word))
    return PauliHamiltonian(terms, n)
