from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import savqe
from savqe import (
    ActiveSpaceHamiltonian,
    FcidumpConsistencyError,
    FcidumpFormatError,
    FcidumpIndexError,
    casci_solve,
    fock_basis,
    parse_fcidump,
    to_pauli,
    write_fcidump,
)
from savqe.hamiltonian import PauliHamiltonian

import oracles

HEADER = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n"


def random_hamiltonian(m: int, n_electrons: int, seed: int) -> ActiveSpaceHamiltonian:
    rng = np.random.default_rng(seed)
    h1 = rng.normal(size=(m, m))
    h1 = 0.5 * (h1 + h1.T)
    # (pq|rs) with 8-fold symmetry from a real symmetric pair matrix
    pair = rng.normal(size=(m * m, m * m)) * 0.3
    pair = pair.reshape(m, m, m, m)
    pair = pair + pair.transpose(1, 0, 2, 3)
    pair = pair + pair.transpose(0, 1, 3, 2)
    pair = pair + pair.transpose(2, 3, 0, 1)
    return ActiveSpaceHamiltonian(n_electrons, m, float(rng.normal()), h1, pair / 8)


def test_h2_file_contents(h2):
    assert (h2.n_electrons, h2.n_spatial_orbitals, h2.ms2) == (2, 2, 0)
    assert h2.core_energy > 0
    np.testing.assert_allclose(h2.h2, h2.h2.transpose(1, 0, 2, 3))
    np.testing.assert_allclose(h2.h2, h2.h2.transpose(2, 3, 0, 1))


def test_rhf_energy_matches_pyscf(h2, h4_scan, reference_energies):
    assert abs(h2.rhf_energy() - reference_energies["h2"]["rhf_energy"]) < 1e-10
    for label, h in h4_scan.items():
        assert abs(h.rhf_energy() - reference_energies[f"h4_{label}"]["rhf_energy"]) < 1e-10


def test_singlet_roots_match_frozen_pyscf_fci(h2, h4_scan, reference_energies):
    assert abs(casci_solve(h2, 1).energies[0] - reference_energies["h2"]["fci_singlet_energies"][0]) < 1e-10
    for label, h in h4_scan.items():
        ref = np.array(reference_energies[f"h4_{label}"]["fci_singlet_energies"])
        got = casci_solve(h, 3).energies
        assert abs(got[0] - ref[0]) < 1e-10
        # pyscf's spin-0 solver may interleave higher-spin roots; every
        # singlet found here must appear in its list
        for e in got:
            assert np.min(np.abs(ref - e)) < 1e-9


def test_live_pyscf_cross_check(h4):
    pyscf_fci = pytest.importorskip("pyscf.fci")
    e, _ = pyscf_fci.direct_spin1.kernel(h4.h1, h4.h2, 4, (2, 2), ecore=h4.core_energy, nroots=1)
    assert abs(e - casci_solve(h4, 1).energies[0]) < 1e-10


def test_full_space_matrix_equals_kron_oracle(h2):
    ours = h2.matrix(h2.full_basis()).toarray()
    ref = oracles.fock_hamiltonian(h2.core_energy, h2.h1, h2.h2)
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_random_three_orbital_hamiltonian_equals_oracle():
    h = random_hamiltonian(3, 4, seed=7)
    ours = h.matrix(h.full_basis()).toarray()
    ref = oracles.fock_hamiltonian(h.core_energy, h.h1, h.h2)
    np.testing.assert_allclose(ours, ref, atol=1e-11)


def test_sector_block_of_full_matrix(h4):
    full = h4.matrix(h4.full_basis())
    idx = oracles.sector_indices(4, 2, 2)
    sector = h4.matrix(h4.sector_basis()).toarray()
    np.testing.assert_array_equal(fock_basis(4, 2, 2).dets, idx)
    np.testing.assert_allclose(full[idx][:, idx].toarray(), sector, atol=1e-13)


def test_pauli_hamiltonian_reproduces_fermionic_matrix(h2, h4):
    for h in (h2, h4):
        pauli = to_pauli(h)
        assert all(set(word) <= set("IXYZ") and len(word) == h.n_qubits for _, word in pauli.terms)
        np.testing.assert_allclose(pauli.to_dense(), h.matrix(h.full_basis()).toarray(), atol=1e-12)


def test_pauli_identity_carries_trace(h2):
    pauli = to_pauli(h2).as_dict()
    dense = h2.matrix(h2.full_basis()).toarray()
    assert abs(pauli["IIII"] - np.trace(dense) / 16) < 1e-12


def test_pauli_words_unique(h4):
    words = [w for _, w in to_pauli(h4).terms]
    assert len(words) == len(set(words))
    with pytest.raises(ValueError):
        PauliHamiltonian([(1.0, "IZ"), (2.0, "IZ")], 2)


def test_write_read_round_trip(h4):
    buf = io.StringIO()
    write_fcidump(h4, buf)
    again = parse_fcidump(buf.getvalue())
    assert again.n_electrons == h4.n_electrons and again.core_energy == h4.core_energy
    np.testing.assert_array_equal(again.h1, h4.h1)
    np.testing.assert_array_equal(again.h2, h4.h2)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_round_trip_random_integrals(seed):
    h = random_hamiltonian(3, 2, seed)
    buf = io.StringIO()
    write_fcidump(h, buf)
    again = parse_fcidump(buf.getvalue())
    np.testing.assert_array_equal(again.h2, h.h2)
    np.testing.assert_array_equal(again.h1, h.h1)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hamiltonian_commutes_with_spin_and_number(seed):
    h = random_hamiltonian(3, 2, seed)
    ham = h.matrix(h.full_basis()).toarray()
    for op in (oracles.spin_squared(3), oracles.number_operator(3)):
        assert np.max(np.abs(ham @ op - op @ ham)) < 1e-10


def test_header_without_nelec_is_rejected():
    with pytest.raises(FcidumpFormatError, match="NELEC"):
        parse_fcidump(" &FCI NORB=2,\n &END\n 1.0 1 1 0 0\n")


def test_unterminated_header_is_rejected():
    with pytest.raises(FcidumpFormatError):
        parse_fcidump(" &FCI NORB=2,NELEC=2,\n")


def test_index_error_reports_line():
    with pytest.raises(FcidumpIndexError, match="line 5"):
        parse_fcidump(HEADER + " 0.5 3 1 0 0\n")


def test_malformed_record():
    with pytest.raises(FcidumpFormatError, match="line 5"):
        parse_fcidump(HEADER + " 0.5 1 1\n")


def test_conflicting_symmetry_partners():
    with pytest.raises(FcidumpConsistencyError):
        parse_fcidump(HEADER + " 0.5 1 2 1 1\n 0.6 2 1 1 1\n")


def test_equal_symmetry_partners_accepted():
    h = parse_fcidump(HEADER + " 0.5 1 2 1 1\n 0.5 1 1 2 1\n")
    assert h.h2[1, 0, 0, 0] == 0.5


def test_orbital_energy_records_ignored():
    h = parse_fcidump(HEADER + " -0.5 1 0 0 0\n 0.1 1 1 0 0\n 0.7 0 0 0 0\n")
    assert h.h1[0, 0] == 0.1 and h.core_energy == 0.7


def test_asymmetric_integrals_rejected():
    h1 = np.array([[0.0, 1.0], [0.5, 0.0]])
    with pytest.raises(ValueError):
        ActiveSpaceHamiltonian(2, 2, 0.0, h1, np.zeros((2, 2, 2, 2)))


def test_data_path_unknown():
    with pytest.raises(FileNotFoundError):
        savqe.data_path("missing.fcidump")
