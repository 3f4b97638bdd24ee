"""Determinants, CSFs, statevectors and exact generator exponentials.

Spin orbitals are interleaved: spin orbital ``2p`` is spatial orbital ``p``
with alpha spin and ``2p + 1`` is the beta partner.  A determinant is stored
as an integer whose bit ``j`` is the occupation of spin orbital ``j`` (and of
qubit ``j`` under the Jordan-Wigner mapping).  Its phase is fixed by writing
the creation operators in ascending spin-orbital order,
``a+_{j1} a+_{j2} ... |vac>`` with ``j1 < j2 < ...``, so ``a_j`` picks up the
parity of the occupied spin orbitals below ``j``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from savqe.exceptions import BasisError, CouplingError, ShapeError

__all__ = [
    "Determinant",
    "FockBasis",
    "fock_basis",
    "Statevector",
    "CsfReference",
    "ExponentialKernel",
    "build_csf",
    "enumerate_csfs",
    "expand_to_statevector",
    "project_csf_weights",
    "apply_generator_exponential",
    "excitation_operator",
    "spin_orbital_excitation",
    "spin_squared_matrix",
    "number_matrix",
    "sz_matrix",
    "orthonormality_deviation",
]


@dataclass(frozen=True, order=True)
class Determinant:
    """Slater determinant given by alpha and beta spatial-orbital bitmasks."""

    alpha: int
    beta: int

    @property
    def n_alpha(self) -> int:
        return self.alpha.bit_count()

    @property
    def n_beta(self) -> int:
        return self.beta.bit_count()

    def to_bits(self) -> int:
        """Interleaved spin-orbital occupation integer."""
        bits = 0
        p = 0
        a, b = self.alpha, self.beta
        while a or b:
            bits |= (a & 1) << (2 * p) | (b & 1) << (2 * p + 1)
            a >>= 1
            b >>= 1
            p += 1
        return bits

    @classmethod
    def from_bits(cls, bits: int) -> Determinant:
        alpha = beta = 0
        p = 0
        while bits:
            alpha |= (bits & 1) << p
            beta |= ((bits >> 1) & 1) << p
            bits >>= 2
            p += 1
        return cls(alpha, beta)

    def occupation_string(self, n_orbitals: int) -> str:
        chars = []
        for p in range(n_orbitals):
            a = (self.alpha >> p) & 1
            b = (self.beta >> p) & 1
            chars.append("2" if a and b else "a" if a else "b" if b else "0")
        return "".join(chars)


class FockBasis:
    """Ordered determinant basis: the full Jordan-Wigner space or one sector.

    Determinants are sorted by their interleaved occupation integer, so the
    full space is simply ``range(4**M)`` and a sector is a sorted subset.
    Use :func:`fock_basis` to obtain shared, cached instances.
    """

    def __init__(self, n_orbitals: int, n_alpha: int | None = None, n_beta: int | None = None) -> None:
        if (n_alpha is None) != (n_beta is None):
            raise ValueError("give both n_alpha and n_beta, or neither")
        self.n_orbitals = n_orbitals
        self.n_alpha = n_alpha
        self.n_beta = n_beta
        if n_alpha is None:
            self.dets = np.arange(1 << (2 * n_orbitals), dtype=np.int64)
        else:
            if not (0 <= n_alpha <= n_orbitals and 0 <= n_beta <= n_orbitals):
                raise ValueError(f"empty sector ({n_alpha}, {n_beta}) for {n_orbitals} orbitals")
            bits = [
                Determinant(sum(1 << p for p in ca), sum(1 << p for p in cb)).to_bits()
                for ca in itertools.combinations(range(n_orbitals), n_alpha)
                for cb in itertools.combinations(range(n_orbitals), n_beta)
            ]
            self.dets = np.array(sorted(bits), dtype=np.int64)
        self.dets.setflags(write=False)
        self._cache: dict[Any, Any] = {}

    @property
    def is_full(self) -> bool:
        return self.n_alpha is None

    @property
    def dim(self) -> int:
        return len(self.dets)

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * self.n_orbitals

    @property
    def key(self) -> tuple:
        return ("full", self.n_orbitals) if self.is_full else ("sector", self.n_orbitals, self.n_alpha, self.n_beta)

    def __repr__(self) -> str:
        if self.is_full:
            return f"FockBasis(full_jw, M={self.n_orbitals}, dim={self.dim})"
        return f"FockBasis(sector({self.n_alpha}, {self.n_beta}), M={self.n_orbitals}, dim={self.dim})"

    def index(self, bits) -> np.ndarray:
        """Positions of occupation integers in this basis; KeyError if absent."""
        bits = np.asarray(bits, dtype=np.int64)
        if self.is_full:
            idx = bits
            ok = (bits >= 0) & (bits < self.dim)
        else:
            idx = np.searchsorted(self.dets, bits)
            idx = np.minimum(idx, self.dim - 1)
            ok = self.dets[idx] == bits
        if not np.all(ok):
            raise KeyError("determinant outside basis")
        return idx

    def contains(self, det: Determinant) -> bool:
        if det.to_bits() >= 1 << (2 * self.n_orbitals):
            return False
        if self.is_full:
            return True
        return det.n_alpha == self.n_alpha and det.n_beta == self.n_beta

    def embedding(self, target: FockBasis) -> np.ndarray:
        """Indices of this basis' determinants inside a larger basis."""
        return target.index(self.dets)


@lru_cache(maxsize=None)
def fock_basis(n_orbitals: int, n_alpha: int | None = None, n_beta: int | None = None) -> FockBasis:
    """Cached :class:`FockBasis` factory (``n_alpha=None`` gives the full space)."""
    return FockBasis(n_orbitals, n_alpha, n_beta)


@dataclass
class Statevector:
    """Amplitude vector over a :class:`FockBasis`."""

    amplitudes: np.ndarray
    basis: FockBasis

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ShapeError(f"amplitudes of shape {self.amplitudes.shape} do not fit {self.basis!r}")

    @property
    def dimension(self) -> int:
        return self.basis.dim

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def vdot(self, other: Statevector) -> complex:
        _check_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_basis(self, target: FockBasis) -> Statevector:
        """Embed into (or restrict to) another basis by determinant identity."""
        out = np.zeros(target.dim, dtype=np.complex128)
        if target is self.basis:
            return Statevector(self.amplitudes.copy(), target)
        if self.basis.is_full and not target.is_full:
            out[:] = self.amplitudes[target.dets]
        else:
            out[self.basis.embedding(target)] = self.amplitudes
        return Statevector(out, target)


def _check_same_basis(a: FockBasis, b: FockBasis) -> None:
    if a.key != b.key:
        raise ShapeError(f"basis mismatch: {a!r} vs {b!r}")


# ---------------------------------------------------------------------------
# second-quantized operators as sparse matrices


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x).astype(np.int64)


def spin_orbital_excitation(
    basis: FockBasis, p: int, q: int, target: FockBasis | None = None
) -> sp.csr_matrix:
    """Sparse matrix of ``a+_p a_q`` (spin-orbital indices) from ``basis`` to ``target``.

    ``target`` defaults to ``basis``; pass another sector for spin flips.
    """
    target = target or basis
    key = ("aa", p, q, target.key)
    if key in basis._cache:
        return basis._cache[key]
    dets = basis.dets
    occ_q = (dets >> q) & 1
    if p == q:
        valid = occ_q.astype(bool)
        new = dets[valid]
        sign = np.ones(valid.sum())
    else:
        removed = dets & ~np.int64(1 << q)
        valid = occ_q.astype(bool) & (((removed >> p) & 1) == 0)
        removed = removed[valid]
        parity = _popcount(dets[valid] & np.int64((1 << q) - 1)) + _popcount(removed & np.int64((1 << p) - 1))
        sign = 1.0 - 2.0 * (parity & 1)
        new = removed | np.int64(1 << p)
    cols = np.flatnonzero(valid)
    rows = target.index(new)
    mat = sp.csr_matrix((sign, (rows, cols)), shape=(target.dim, basis.dim))
    basis._cache[key] = mat
    return mat


def excitation_operator(basis: FockBasis, p: int, q: int) -> sp.csr_matrix:
    """Spin-summed singlet excitation ``E_pq`` over spatial orbitals."""
    key = ("E", p, q)
    if key not in basis._cache:
        basis._cache[key] = (
            spin_orbital_excitation(basis, 2 * p, 2 * q) + spin_orbital_excitation(basis, 2 * p + 1, 2 * q + 1)
        ).tocsr()
    return basis._cache[key]


def number_matrix(basis: FockBasis, spin: str | None = None) -> sp.csr_matrix:
    """Diagonal number operator; ``spin`` restricts to ``"alpha"`` or ``"beta"``."""
    offsets = {"alpha": (0,), "beta": (1,), None: (0, 1)}[spin]
    n = np.zeros(basis.dim)
    for p in range(basis.n_orbitals):
        for s in offsets:
            n += (basis.dets >> (2 * p + s)) & 1
    return sp.diags(n).tocsr()


def sz_matrix(basis: FockBasis) -> sp.csr_matrix:
    return (0.5 * (number_matrix(basis, "alpha") - number_matrix(basis, "beta"))).tocsr()


def spin_squared_matrix(basis: FockBasis) -> sp.csr_matrix:
    """Total spin operator ``S^2 = S- S+ + Sz (Sz + 1)``."""
    if "S2" in basis._cache:
        return basis._cache["S2"]
    m = basis.n_orbitals
    if basis.is_full:
        target = basis
    elif basis.n_beta > 0 and basis.n_alpha < m:
        target = fock_basis(m, basis.n_alpha + 1, basis.n_beta - 1)
    else:
        target = None
    if target is None:
        s_plus = sp.csr_matrix((1, basis.dim))
    else:
        s_plus = sp.csr_matrix((target.dim, basis.dim))
        for p in range(m):
            s_plus = s_plus + spin_orbital_excitation(basis, 2 * p, 2 * p + 1, target)
    sz = sz_matrix(basis)
    s2 = (s_plus.T @ s_plus + sz @ sz + sz).tocsr()
    s2.eliminate_zeros()
    basis._cache["S2"] = s2
    return s2


# ---------------------------------------------------------------------------
# exact exponentials


class ExponentialKernel:
    """Exact ``exp(theta * G)`` for a real anti-symmetric sparse ``G``.

    ``G`` only couples determinants inside small connected clusters (those
    sharing the occupation of every orbital the generator does not touch).
    Each cluster is diagonalized once, ``i G_c = V diag(mu) V^H``, after which
    ``exp(theta G_c) = V diag(exp(-i theta mu)) V^H`` for any ``theta``.
    Determinants outside every cluster are left untouched.
    """

    def __init__(self, generator: sp.spmatrix) -> None:
        g = sp.csr_matrix(generator)
        self.dim = g.shape[0]
        pattern = (abs(g) + abs(g.T)).tocsr()
        pattern.eliminate_zeros()
        active = np.flatnonzero(np.diff(pattern.indptr))
        self.groups: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        if len(active) == 0:
            return
        sub = pattern[active][:, active]
        _, labels = connected_components(sub, directed=False)
        order = np.argsort(labels, kind="stable")
        labels_sorted = labels[order]
        starts = np.flatnonzero(np.r_[True, labels_sorted[1:] != labels_sorted[:-1]])
        sizes = np.diff(np.r_[starts, len(order)])
        gdense_rows = g[active][:, active].tocsr()
        by_size: dict[int, list[np.ndarray]] = {}
        for start, size in zip(starts, sizes):
            by_size.setdefault(int(size), []).append(order[start : start + size])
        for size in sorted(by_size):
            local = np.array(by_size[size])
            blocks = np.empty((len(local), size, size))
            for b, members in enumerate(local):
                blocks[b] = gdense_rows[members][:, members].toarray()
            mu, vecs = np.linalg.eigh(1j * blocks)
            self.groups.append((active[local], vecs, mu))

    def apply(self, theta: float, x: np.ndarray) -> np.ndarray:
        """Return ``exp(theta G) x`` for a vector or a ``(dim, n)`` block."""
        out = np.array(x, copy=True)
        if theta == 0.0:
            return out
        real = not np.iscomplexobj(x)
        for idx, vecs, mu in self.groups:
            xb = x[idx]
            phase = np.exp(-1j * theta * mu)
            if xb.ndim == 2:
                y = np.einsum("bji,bj->bi", vecs.conj(), xb) * phase
                z = np.einsum("bij,bj->bi", vecs, y)
            else:
                y = np.einsum("bji,bjn->bin", vecs.conj(), xb) * phase[:, :, None]
                z = np.einsum("bij,bjn->bin", vecs, y)
            out[idx] = z.real if real else z
        return out


def apply_generator_exponential(generator, theta: float, v: Statevector) -> Statevector:
    """Return ``exp(theta * G) |v>`` exactly.

    Args:
        generator: Any object exposing ``kernel(basis)`` returning an
            :class:`ExponentialKernel` (e.g. a pool generator).
        theta: Rotation parameter.
        v: State to rotate.
    """
    kernel = generator.kernel(v.basis)
    if kernel.dim != v.dimension:
        raise ShapeError(f"generator of dimension {kernel.dim} applied to {v.basis!r}")
    return Statevector(kernel.apply(float(theta), v.amplitudes), v.basis)


# ---------------------------------------------------------------------------
# configuration state functions


def _coupling_coefficient(total: float, proj: float, step: float, spin: float) -> float:
    # genealogical (Yamanouchi-Kotani) vector-coupling coefficient
    if total < abs(proj) - 1e-12:
        return 0.0
    if step > 0:
        return float(np.sqrt((total + 2 * spin * proj) / (2 * total)))
    return float(-2 * spin * np.sqrt((total + 1 - 2 * spin * proj) / (2 * (total + 1))))


@dataclass
class CsfReference:
    """Spin-adapted CSF as a fixed combination of determinants."""

    label: str
    terms: list[tuple[Determinant, float]]
    total_spin: float
    sz: float
    n_orbitals: int

    @property
    def n_electrons(self) -> int:
        det = self.terms[0][0]
        return det.n_alpha + det.n_beta

    @property
    def n_alpha(self) -> int:
        return self.terms[0][0].n_alpha

    @property
    def n_beta(self) -> int:
        return self.terms[0][0].n_beta

    @property
    def is_closed_shell(self) -> bool:
        return all(c in "02" for c in self.label)

    def doubly_occupied(self) -> list[int]:
        return [p for p, c in enumerate(self.label) if c == "2"]

    def to_json(self) -> str:
        return json.dumps({"occupation": self.label, "sz": self.sz})

    @classmethod
    def from_json(cls, text: str) -> CsfReference:
        data = json.loads(text)
        return build_csf(data["occupation"], sz=data.get("sz"))


def _parse_pattern(occupation: str, coupling: str | None) -> tuple[str, str]:
    occupation = occupation.strip()
    if not occupation or set(occupation) - set("012ud"):
        raise CouplingError(f"invalid occupation pattern {occupation!r}")
    opens = [c for c in occupation if c in "1ud"]
    if "1" in occupation:
        if set(occupation) & set("ud"):
            raise CouplingError("mix of '1' and explicit u/d steps")
        if coupling is None or len(coupling) != len(opens) or set(coupling) - set("ud"):
            raise CouplingError(
                f"coupling {coupling!r} inconsistent with {len(opens)} open shells in {occupation!r}"
            )
        it = iter(coupling)
        occupation = "".join(next(it) if c == "1" else c for c in occupation)
    elif coupling is not None and coupling != "".join(opens):
        raise CouplingError(f"coupling {coupling!r} disagrees with pattern {occupation!r}")
    return occupation, "".join(c for c in occupation if c in "ud")


def build_csf(
    occupation: str,
    coupling: str | None = None,
    *,
    total_spin: float | None = None,
    sz: float | None = None,
) -> CsfReference:
    """Build a genealogical CSF from a per-orbital occupation string.

    ``occupation`` uses one character per spatial orbital: ``0`` empty, ``2``
    doubly occupied, ``u``/``d`` singly occupied with an up/down coupling
    step.  Alternatively pass ``1`` for open shells and the step sequence as
    ``coupling``.  Open shells are coupled in ascending orbital order.

    Raises:
        CouplingError: if the path dips below zero spin, does not match the
            number of open shells, or ends away from ``total_spin``.
    """
    occupation, steps = _parse_pattern(occupation, coupling)
    path = []
    s = 0.0
    for c in steps:
        s += 0.5 if c == "u" else -0.5
        if s < 0:
            raise CouplingError(f"coupling path {steps!r} goes below zero spin")
        path.append(s)
    final = path[-1] if path else 0.0
    if total_spin is not None and abs(final - total_spin) > 1e-12:
        raise CouplingError(f"coupling {steps!r} ends at S={final}, expected S={total_spin}")
    if sz is None:
        sz = final - np.floor(final)  # 0 for integer spin, 1/2 otherwise
    if abs(sz) > final + 1e-12:
        raise CouplingError(f"Sz={sz} impossible for S={final}")

    open_orbs = [p for p, c in enumerate(occupation) if c in "ud"]
    closed = sum(1 << p for p, c in enumerate(occupation) if c == "2")
    n_open = len(open_orbs)
    n_up = int(round(n_open / 2 + sz))
    terms = []
    for ups in itertools.combinations(range(n_open), n_up):
        spins = [0.5 if k in ups else -0.5 for k in range(n_open)]
        coeff = 1.0
        proj = 0.0
        for k in range(n_open):
            proj += spins[k]
            step = 0.5 if steps[k] == "u" else -0.5
            coeff *= _coupling_coefficient(path[k], proj, step, spins[k])
            if coeff == 0.0:
                break
        if coeff == 0.0:
            continue
        alpha = closed | sum(1 << open_orbs[k] for k in range(n_open) if spins[k] > 0)
        beta = closed | sum(1 << open_orbs[k] for k in range(n_open) if spins[k] < 0)
        terms.append((Determinant(alpha, beta), coeff))
    if not terms:
        raise CouplingError(f"no determinant with Sz={sz} in CSF {occupation!r}")
    norm = np.sqrt(sum(c * c for _, c in terms))
    terms = sorted(((d, c / norm) for d, c in terms), key=lambda t: t[0].to_bits())
    return CsfReference(occupation, terms, final, float(sz), len(occupation))


def _coupling_paths(n_open: int, spin: float) -> list[str]:
    paths = []

    def walk(prefix: str, s: float) -> None:
        remaining = n_open - len(prefix)
        if remaining == 0:
            if abs(s - spin) < 1e-12:
                paths.append(prefix)
            return
        if s - spin > remaining / 2 + 1e-12:
            return
        walk(prefix + "u", s + 0.5)
        if s >= 0.5:
            walk(prefix + "d", s - 0.5)

    walk("", 0.0)
    return paths


def enumerate_csfs(n_electrons: int, n_orbitals: int, spin: float = 0.0) -> list[CsfReference]:
    """All CSFs of given spin, ordered by occupation string then coupling."""
    out = []
    for occ in itertools.product("210", repeat=n_orbitals):
        doubles = occ.count("2")
        singles = occ.count("1")
        if 2 * doubles + singles != n_electrons:
            continue
        pattern = "".join(occ)
        for path in _coupling_paths(singles, spin):
            out.append(build_csf(pattern, path))
    return out


def expand_to_statevector(csf: CsfReference, basis: FockBasis) -> Statevector:
    """Determinant expansion of ``csf`` as a unit-norm :class:`Statevector`."""
    if basis.n_orbitals != csf.n_orbitals:
        raise ShapeError(f"CSF over {csf.n_orbitals} orbitals, basis has {basis.n_orbitals}")
    amps = np.zeros(basis.dim, dtype=np.complex128)
    bits = [d.to_bits() for d, _ in csf.terms]
    try:
        idx = basis.index(bits)
    except KeyError:
        raise ShapeError(f"CSF {csf.label!r} does not fit {basis!r}") from None
    amps[idx] = [c for _, c in csf.terms]
    return Statevector(amps, basis)


def csf_matrix(csfs: Sequence[CsfReference], basis: FockBasis) -> np.ndarray:
    """Columns are the determinant expansions of ``csfs`` (real)."""
    mat = np.zeros((basis.dim, len(csfs)))
    for k, c in enumerate(csfs):
        mat[:, k] = expand_to_statevector(c, basis).amplitudes.real
    return mat


def orthonormality_deviation(vectors: np.ndarray) -> float:
    """Max abs deviation of the Gram matrix of the columns from identity."""
    gram = vectors.conj().T @ vectors
    return float(np.max(np.abs(gram - np.eye(gram.shape[0])))) if gram.size else 0.0


def project_csf_weights(v: Statevector, csf_basis: Sequence[CsfReference]) -> list[tuple[str, float]]:
    """Weights ``|<Phi_i|v>|^2`` of ``v`` on each CSF in ``csf_basis``.

    Raises:
        BasisError: if the CSFs deviate from orthonormality by more than 1e-8.
    """
    mat = csf_matrix(csf_basis, v.basis)
    if orthonormality_deviation(mat) > 1e-8:
        raise BasisError("CSF basis is not orthonormal")
    weights = np.abs(mat.T @ v.amplitudes) ** 2
    return [(c.label, float(w)) for c, w in zip(csf_basis, weights)]
