"""State-averaged fUCCSD(n) on three H4 states: how the error falls with layers.

Run: python demos/03_fuccsd_layers.py
"""

# %%
import numpy as np

import savqe

h = savqe.read_fcidump(savqe.data_path("h4_1.10.fcidump"))
oracle = savqe.casci_solve(h, 3).energies

# one closed-shell and two open-shell singlet references
refs = [savqe.build_csf(label) for label in ("2200", "2ud0", "u2d0")]
pool = savqe.build_uccsd_pool(4, occupied=[0, 1], virtual=[2, 3])
print(f"pool of {len(pool)} spin-adapted generators")

# %%
config = savqe.SolverConfig(n_states=3)
for n in (1, 2, 3, 4):
    report = savqe.solve_fuccsd(h, pool, refs, n, config)
    err = np.abs(np.array(report.resolved_energies) - oracle) * 1000
    print(f"fUCCSD({n}): {report.parameter_count:3d} parameters, converged={report.converged}, "
          f"errors (mEh) {np.round(err, 4)}")

# %%
# the resolved states come from diagonalizing H in the span of the
# optimized states; their mean is the state-averaged energy
print("mean of resolved energies - SA energy:", np.mean(report.resolved_energies) - report.sa_energy)
