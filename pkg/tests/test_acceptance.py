"""Acceptance criteria, each run at its stated tolerance.

Every test records one ``CRITERION n: PASS|FAIL`` line (printed in the
terminal summary and to stdout) before asserting.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

import savqe
from savqe import (
    SolverConfig,
    build_csf,
    build_layered,
    build_uccsd_pool,
    casci_solve,
    enumerate_csfs,
    expand_to_statevector,
    fock_basis,
    solve_adapt,
    solve_fuccsd,
)
from savqe.ansatz import SAObjective
from savqe.harness import emit_reports, load_scan_config, run_scan
from savqe.states import number_matrix, spin_squared_matrix

import oracles
from conftest import ACCEPTANCE_LINES, H4_LABELS

MEH = 1000.0


def record(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def dense_singlets(h, n_roots):
    ham = oracles.fock_hamiltonian(h.core_energy, h.h1, h.h2)
    idx = oracles.sector_indices(h.n_spatial_orbitals, h.n_alpha, h.n_beta)
    e, v = np.linalg.eigh(ham[np.ix_(idx, idx)])
    s2 = oracles.spin_squared(h.n_spatial_orbitals)[np.ix_(idx, idx)]
    singlet = np.abs(np.einsum("ij,ij->j", v, s2 @ v)) < 1e-6
    return e[singlet][:n_roots]


def macroiterations_to(report, oracle_sa: float, threshold_eh: float) -> int | None:
    for entry in report.macroiteration_trace:
        if entry.sa_energy - oracle_sa <= threshold_eh:
            return entry.iteration
    return None


def per_state_errors(report, oracle) -> np.ndarray:
    return np.abs(np.asarray(report.resolved_energies) - oracle[: len(report.resolved_energies)])


@pytest.fixture(scope="module")
def oracle3(h4_scan):
    return {label: casci_solve(h, 3).energies for label, h in h4_scan.items()}


@pytest.fixture(scope="module")
def adapt_runs(h4_scan, h4_pool, h4_refs):
    """Modified (0.90) and standard ADAPT at thresholds 1e-5 and 1e-4 over the H4 scan."""
    runs = {}
    for label, h in h4_scan.items():
        for fraction in (0.90, 1.0):
            for threshold in (1e-5, 1e-4):
                cfg = SolverConfig(n_states=3, adapt_selection_fraction=fraction, adapt_gradient_threshold=threshold)
                runs[label, fraction, threshold] = solve_adapt(h, h4_pool, h4_refs, cfg)
    return runs


def test_criterion_1_pool_and_parameter_counts():
    t0 = time.perf_counter()
    pool = build_uccsd_pool(8, range(5), range(5, 8))
    counts = [build_layered(pool, n).parameter_count for n in (6, 8, 10)]
    elapsed = time.perf_counter() - t0
    ok = len(pool) == 135 and counts == [810, 1080, 1350]
    record(1, ok, f"pool={len(pool)} fUCCSD(6/8/10)={counts} ({elapsed * 1e3:.1f} ms)")
    assert ok


def test_criterion_2_singlet_csf_dimension():
    csfs = enumerate_csfs(10, 8, 0.0)
    ok = len(csfs) == 1176
    record(2, ok, f"(10e, 8o, S=0) CSF count = {len(csfs)}")
    assert ok


def test_criterion_3_oracle_exactness(h2, h4_scan):
    worst = 0.0
    cases = [("h2", h2, 3)] + [(f"h4_{k}", h, 5) for k, h in h4_scan.items()]
    for _, h, n in cases:
        ours = casci_solve(h, n).energies
        worst = max(worst, float(np.max(np.abs(ours - dense_singlets(h, n)))))
    ok = worst < 1e-11
    record(3, ok, f"max |E_oracle - E_dense| = {worst:.2e} Eh over H2 (3 roots) and 5 H4 files (5 roots)")
    assert ok


def test_criterion_4_fuccsd_completeness(h2, h4_scan, h4_pool, h4_refs, oracle3):
    h2_pool = build_uccsd_pool(2, [0], [1])
    h2_report = solve_fuccsd(h2, h2_pool, [build_csf("20")], 1, SolverConfig())
    h2_error = abs(h2_report.resolved_energies[0] - casci_solve(h2, 1).energies[0])

    mad = {}  # (label, n) -> mean abs error over the 3 states, mEh
    converged = True
    for label, h in h4_scan.items():
        for n in (1, 2, 3):
            report = solve_fuccsd(h, h4_pool, h4_refs, n, SolverConfig(n_states=3))
            converged &= report.converged
            mad[label, n] = float(np.mean(per_state_errors(report, oracle3[label]))) * MEH
    decreasing = all(mad[k, 1] > mad[k, 2] > mad[k, 3] for k in H4_LABELS)
    scan_mad = {n: float(np.mean([mad[k, n] for k in H4_LABELS])) for n in (1, 2, 3)}
    ok = h2_error < 1e-9 and converged and decreasing and scan_mad[3] < 0.1
    per_point = ", ".join(f"{k}: {mad[k, 3]:.3f}" for k in H4_LABELS)
    record(
        4, ok,
        f"H2 1-layer error {h2_error:.1e} Eh; H4 scan MAD n=1/2/3 = "
        f"{scan_mad[1]:.2f}/{scan_mad[2]:.2f}/{scan_mad[3]:.3f} mEh (monotone={decreasing}, "
        f"converged={converged}); n=3 per point [{per_point}] vs required < 0.1",
    )
    assert h2_error < 1e-9
    assert converged and decreasing
    assert scan_mad[3] < 0.1


def test_criterion_5_adapt_convergence_and_compactness(adapt_runs, oracle3):
    details, ok = [], True
    for label in H4_LABELS:
        mod, std = adapt_runs[label, 0.90, 1e-5], adapt_runs[label, 1.0, 1e-5]
        oracle_sa = float(np.mean(oracle3[label]))
        err = float(np.max(per_state_errors(mod, oracle3[label])))
        it_mod = macroiterations_to(mod, oracle_sa, 1e-3)
        it_std = macroiterations_to(std, oracle_sa, 1e-3)
        point_ok = (mod.converged and err < 1e-6 and it_mod is not None
                    and it_std is not None and it_mod <= it_std)
        ok &= point_ok
        details.append(f"{label}: err {err:.1e} Eh, 1 mEh at {it_mod} vs {it_std}, "
                       f"{mod.parameter_count}/{std.parameter_count} ops")
    record(5, ok, "modified vs standard ADAPT; " + "; ".join(details))
    assert ok


def test_criterion_6_threshold_relaxation(adapt_runs, oracle3):
    details, ok = [], True
    for label in H4_LABELS:
        tight = float(np.max(per_state_errors(adapt_runs[label, 0.90, 1e-5], oracle3[label])))
        loose = float(np.max(per_state_errors(adapt_runs[label, 0.90, 1e-4], oracle3[label])))
        ok &= adapt_runs[label, 0.90, 1e-4].converged and tight <= loose <= 1e-4
        details.append(f"{label}: {loose * MEH:.2e} >= {tight * MEH:.2e} mEh")
    record(6, ok, "threshold 1e-4 vs 1e-5 max errors; " + "; ".join(details))
    assert ok


def test_criterion_7_gradient_correctness(h4, h4_pool, h4_refs):
    prog = build_layered(h4_pool, 3)
    objective = SAObjective(prog, h4, h4_refs)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(-np.pi, np.pi, prog.parameter_count)
        _, grad = objective(x)
        fd = oracles.central_difference(objective.energy, x, step=1e-5)
        worst = max(worst, float(np.max(np.abs(grad - fd) / np.abs(fd))))
    ok = worst < 1e-6
    record(7, ok, f"max per-component relative error {worst:.2e} over 20 points x {prog.parameter_count} params")
    assert ok


def test_criterion_8_invariants(h4, h4_pool, h4_refs, adapt_runs):
    # unitarity over 1000 random exponentials
    basis = h4.sector_basis()
    rng = np.random.default_rng(8)
    v = rng.normal(size=basis.dim)
    v /= np.linalg.norm(v)
    for _ in range(1000):
        gen = h4_pool[int(rng.integers(len(h4_pool)))]
        v = gen.kernel(basis).apply(float(rng.uniform(-np.pi, np.pi)), v)
    drift = abs(float(np.linalg.norm(v)) - 1.0)

    # <S^2> and <N> under every generator, in the full qubit space
    full = fock_basis(4)
    s2, num = spin_squared_matrix(full), number_matrix(full)
    psi = sum(c * expand_to_statevector(r, full).amplitudes.real for c, r in zip((0.6, 0.48, 0.64), h4_refs))
    psi /= np.linalg.norm(psi)
    conservation = 0.0
    for gen in h4_pool:
        for theta in (0.3, -1.1, 2.5):
            w = gen.kernel(full).apply(theta, psi)
            conservation = max(conservation, abs(w @ (s2 @ w) - psi @ (s2 @ psi)),
                               abs(w @ (num @ w) - psi @ (num @ psi)))

    # mean of resolved energies equals the SA energy; interlacing with the oracle
    all_singlets = casci_solve(h4, 20).energies
    d = len(all_singlets)
    reports = [adapt_runs["1.10", 0.90, 1e-5], adapt_runs["1.10", 1.0, 1e-4]]
    reports += [solve_fuccsd(h4, h4_pool, h4_refs, n, SolverConfig(n_states=3)) for n in (1, 2)]
    mean_gap = max(abs(float(np.mean(r.resolved_energies)) - r.sa_energy) for r in reports)
    interlace = all(
        all_singlets[k] - 1e-10 <= mu <= all_singlets[k + d - 3] + 1e-10
        for r in reports for k, mu in enumerate(r.resolved_energies)
    )
    ok = drift < 1e-9 and conservation < 1e-10 and mean_gap < 1e-10 and interlace
    record(8, ok, f"unitarity drift {drift:.1e}; <S^2>,<N> change {conservation:.1e}; "
                  f"mean-vs-SA gap {mean_gap:.1e}; interlacing={interlace}")
    assert ok


def test_criterion_9_determinism_and_warm_start(h4, h4_pool, h4_refs, tmp_path):
    cfg = SolverConfig(n_states=3)
    a = solve_adapt(h4, h4_pool, h4_refs, cfg)
    b = solve_adapt(h4, h4_pool, h4_refs, cfg)
    same_sequence = a.generator_ids == b.generator_ids and [t.operators_added for t in a.macroiteration_trace] == [
        t.operators_added for t in b.macroiteration_trace
    ]

    config_path = tmp_path / "scan.json"
    points = ", ".join(f'{{"label": "{k}", "fcidump": "bundled:h4_{k}"}}' for k in H4_LABELS)
    config_path.write_text(
        f'{{"scan_points": [{points}], "methods": ["adapt(0.90)"], '
        f'"references": ["2200", "2ud0", "u2d0"], "initialization": "chain_previous", "output_dir": "out"}}'
    )
    scan = load_scan_config(config_path)
    report = run_scan(scan)
    first = {p.name: p.read_bytes() for p in emit_reports(report, scan.output_dir)}
    second = {p.name: p.read_bytes() for p in emit_reports(report, scan.output_dir)}
    rerun = run_scan(scan)
    third = {p.name: p.read_bytes() for p in emit_reports(rerun, scan.output_dir)}
    idempotent = first == second == third
    ok = same_sequence and report.converged and idempotent and len(report.points) == 5
    record(9, ok, f"identical selection sequences={same_sequence}; 5-point chained scan converged="
                  f"{report.converged}; {len(first)} files re-emitted byte-identically={idempotent}")
    assert ok
