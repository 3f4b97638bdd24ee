"""Exact CASCI roots of the bundled H4 chain and their CSF character.

Run: python demos/01_oracle_and_csfs.py
"""

# %%
import savqe

# the bundled files are RHF/STO-3G integrals of a linear H4 chain (4e, 4o)
h = savqe.read_fcidump(savqe.data_path("h4_1.10.fcidump"))
print(f"{h.n_electrons} electrons in {h.n_spatial_orbitals} orbitals, RHF energy {h.rhf_energy():.10f}")

# %%
# every singlet CSF of the active space, built along the genealogical path
csfs = savqe.enumerate_csfs(h.n_electrons, h.n_spatial_orbitals)
print(f"{len(csfs)} singlet CSFs (Weyl formula: {savqe.weyl_dimension(4, 4, 0)})")
print("first few:", [c.label for c in csfs[:6]])

# an open-shell singlet is a two-determinant combination
for det, coeff in savqe.build_csf("2ud0").terms:
    print(f"  {det.occupation_string(4)}  {coeff:+.6f}")

# %%
# the oracle: lowest singlet roots, spin-screened, with residual checks
result = savqe.casci_solve(h, n_roots=5)
for k, e in enumerate(result.energies):
    print(f"root {k}: E = {e:.12f}  <S^2> = {result.s2_expectations[k]:.1e}  |r| = {result.residuals[k]:.1e}")

# %%
# which CSFs dominate each root (weights >= 0.10)
for k, root in enumerate(savqe.csf_character(result, csfs)):
    print(k, ", ".join(f"{label}:{w:.3f}" for label, w in root))

# the weights of a normalized state over an orthonormal CSF basis sum to one
weights = savqe.project_csf_weights(result.state(0), csfs)
print("sum of root-0 CSF weights:", round(sum(w for _, w in weights), 12))
