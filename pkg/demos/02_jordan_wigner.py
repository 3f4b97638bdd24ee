"""Jordan-Wigner qubit Hamiltonian of H2 and a check against the fermionic matrix.

Run: python demos/02_jordan_wigner.py
"""

# %%
import numpy as np

import savqe

h = savqe.read_fcidump(savqe.data_path("h2.fcidump"))

# spin orbital 2p is alpha, 2p+1 is beta; qubit j is spin orbital j
pauli = savqe.to_pauli(h)
print(f"{len(pauli)} Pauli words on {pauli.n_qubits} qubits")
for coeff, word in sorted(pauli.terms, key=lambda t: -abs(t[0])):
    print(f"  {coeff:+.8f} {word}")

# %%
# the qubit operator equals the second-quantized H over all 16 amplitudes
dense_qubit = pauli.to_dense()
dense_fermion = h.matrix(h.full_basis()).toarray()
print("max |H_qubit - H_fermion| =", np.abs(dense_qubit - dense_fermion).max())

# its lowest eigenvalue in the 2-electron sector is the FCI energy
print("FCI energy:", savqe.casci_solve(h, 1).energies[0])
