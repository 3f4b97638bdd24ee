from __future__ import annotations

import numpy as np
import pytest

from savqe import ActiveSpaceHamiltonian, ConvergenceError, casci_solve, csf_character, enumerate_csfs, weyl_dimension
from savqe.oracle import CasciResult, davidson, read_ci_vectors, write_ci_vectors

import oracles


def dense_singlets(h, n_roots):
    """Brute force: diagonalize the kron-built H in the full space, keep Sz=0, S^2=0 roots."""
    ham = oracles.fock_hamiltonian(h.core_energy, h.h1, h.h2)
    idx = oracles.sector_indices(h.n_spatial_orbitals, h.n_alpha, h.n_beta)
    e, v = np.linalg.eigh(ham[np.ix_(idx, idx)])
    s2 = oracles.spin_squared(h.n_spatial_orbitals)[np.ix_(idx, idx)]
    s2_exp = np.einsum("ij,ij->j", v, s2 @ v)
    return e[np.abs(s2_exp) < 1e-6][:n_roots]


@pytest.mark.parametrize("roots", [1, 2])
def test_h2_matches_brute_force(h2, roots):
    np.testing.assert_allclose(casci_solve(h2, roots).energies, dense_singlets(h2, roots), atol=1e-11)


def test_h4_matches_brute_force(h4_scan):
    for h in h4_scan.values():
        np.testing.assert_allclose(casci_solve(h, 5).energies, dense_singlets(h, 5), atol=1e-11)


def test_davidson_equals_dense(h4_scan):
    for h in h4_scan.values():
        dense = casci_solve(h, 4, method="dense")
        dav = casci_solve(h, 4, method="davidson")
        np.testing.assert_allclose(dav.energies, dense.energies, atol=1e-11)
        overlaps = np.abs(np.einsum("ij,ij->j", dav.ci_vectors, dense.ci_vectors))
        np.testing.assert_allclose(overlaps, 1.0, atol=1e-8)


def test_result_properties(h4):
    res = casci_solve(h4, 3)
    assert res.csf_dimension == 20 == weyl_dimension(4, 4, 0)
    assert np.all(res.residuals < 1e-9)
    assert np.all(np.abs(res.s2_expectations) < 1e-8)
    assert np.all(np.diff(res.energies) >= 0)
    np.testing.assert_allclose(res.ci_vectors.T @ res.ci_vectors, np.eye(3), atol=1e-12)


def test_triplet_roots(h4):
    trip = casci_solve(h4, 2, spin=1.0)
    assert np.all(np.abs(trip.s2_expectations - 2.0) < 1e-8)
    assert trip.csf_dimension == weyl_dimension(4, 4, 1)


def test_too_many_roots(h2):
    with pytest.raises(ValueError):
        casci_solve(h2, 4)


def test_davidson_on_diagonal_matrix():
    diag = np.arange(1.0, 101.0)
    e, v, r = davidson(lambda x: diag[:, None] * x, diag, 3)
    np.testing.assert_allclose(e, [1.0, 2.0, 3.0], atol=1e-12)


def test_davidson_reports_non_convergence():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(200, 200))
    a = a + a.T
    with pytest.raises(ConvergenceError):
        davidson(lambda x: a @ x, np.diag(a), 4, tol=1e-14, max_iterations=2)


def test_csf_character_of_h4(h4):
    res = casci_solve(h4, 3)
    chars = csf_character(res, enumerate_csfs(4, 4))
    assert chars[0][0][0] == "2200"
    for root in chars:
        weights = [w for _, w in root]
        assert weights == sorted(weights, reverse=True) and all(w >= 0.10 for w in weights)


def test_ci_vector_binary_round_trip(tmp_path, h4):
    res = casci_solve(h4, 3)
    path = tmp_path / "ci.bin"
    write_ci_vectors(path, res)
    raw = path.read_bytes()
    assert int.from_bytes(raw[:8], "little") == 36 and int.from_bytes(raw[8:16], "little") == 3
    np.testing.assert_array_equal(read_ci_vectors(path), res.ci_vectors)


def test_result_json_round_trip(h4):
    res = casci_solve(h4, 2)
    again = CasciResult.from_dict(res.to_dict(include_vectors=True))
    np.testing.assert_array_equal(again.energies, res.energies)
    np.testing.assert_array_equal(again.ci_vectors, res.ci_vectors)


def test_larger_random_problem_uses_davidson():
    # 6 electrons in 7 orbitals: 1225 determinants; force the iterative path
    rng = np.random.default_rng(1)
    m = 7
    h1 = rng.normal(size=(m, m)) * 0.3
    h1 = h1 + h1.T - np.diag(np.arange(m, 0, -1.0))
    x = rng.normal(size=(m, m, 3)) * 0.2
    h2 = np.einsum("pqk,rsk->pqrs", x + x.transpose(1, 0, 2), x + x.transpose(1, 0, 2))
    h = ActiveSpaceHamiltonian(6, m, 0.0, h1, h2)
    dav = casci_solve(h, 3, method="davidson")
    dense = casci_solve(h, 3, method="dense")
    np.testing.assert_allclose(dav.energies, dense.energies, atol=1e-10)
