"""Regenerate the bundled FCIDUMP files and their reference FCI energies.

Requires pyscf.  The integrals are RHF molecular orbitals in STO-3G; the
reference energies are the lowest roots of pyscf's ``fci.direct_spin0`` solver
(stored under ``fci_singlet_energies``; that solver can also return Sz=0
components of higher-spin states, so the tests match singlets by membership),
written next to the integral files for the regression tests.
"""
import json
from pathlib import Path

import numpy as np
from pyscf import ao2mo, fci, gto, scf
from pyscf.tools import fcidump

DATA = Path(__file__).resolve().parents[1] / "src" / "savqe" / "data"


def build(atoms, name, nroots):
    mol = gto.M(atom=atoms, basis="sto-3g", unit="angstrom", verbose=0)
    mf = scf.RHF(mol).run(conv_tol=1e-12)
    path = DATA / f"{name}.fcidump"
    fcidump.from_scf(mf, str(path), tol=1e-14)
    h1 = mf.mo_coeff.T @ mf.get_hcore() @ mf.mo_coeff
    eri = ao2mo.kernel(mol, mf.mo_coeff)
    solver = fci.direct_spin0.FCI()
    solver.conv_tol = 1e-13
    solver.nroots = nroots
    e, _ = solver.kernel(h1, eri, mol.nao, mol.nelectron, ecore=mol.energy_nuc())
    return {"file": path.name, "rhf_energy": float(mf.e_tot),
            "fci_singlet_energies": [float(x) for x in np.atleast_1d(e)]}


def main():
    ref = {}
    ref["h2"] = build("H 0 0 0; H 0 0 0.7414", "h2", 2)
    for r in (0.9, 1.1, 1.3, 1.5, 1.7):
        atoms = "; ".join(f"H 0 0 {k * r:.4f}" for k in range(4))
        ref[f"h4_{r:.2f}"] = build(atoms, f"h4_{r:.2f}", 5)
    (DATA / "reference_energies.json").write_text(json.dumps(ref, indent=2) + "\n")


if __name__ == "__main__":
    main()
