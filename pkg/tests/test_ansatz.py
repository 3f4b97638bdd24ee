from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from savqe import (
    AnsatzProgram,
    ConfigError,
    DanglingGeneratorError,
    SAObjective,
    ShapeError,
    apply_program,
    build_csf,
    build_layered,
    build_uccsd_pool,
    expand_to_statevector,
    load_parameters,
    sa_energy_and_gradient,
    save_parameters,
)
from savqe.states import csf_matrix

import oracles


def dense_sa_energy(prog, h, refs, weights, thetas):
    """Reference objective: dense expm products in the particle-number sector."""
    basis = h.sector_basis()
    hmat = h.matrix(basis).toarray()
    block = csf_matrix(refs, basis)
    for k, t in zip(prog.generator_ids, thetas):
        block = scipy.linalg.expm(t * prog.pool[k].matrix(basis).toarray()) @ block
    return float(np.sum(weights * np.einsum("ij,ij->j", block, hmat @ block)))


def test_layered_program_shape(h4_pool):
    prog = build_layered(h4_pool, 3)
    assert prog.parameter_count == 42
    assert prog.generator_ids[:14] == prog.generator_ids[14:28] == tuple(range(14))
    assert prog.provenance == "layered" and prog.n_layers == 3
    assert not np.any(prog.thetas)


def test_layered_parameter_counts_ten_in_eight():
    pool = build_uccsd_pool(8, range(5), range(5, 8))
    assert [build_layered(pool, n).parameter_count for n in (6, 8, 10)] == [810, 1080, 1350]


def test_program_validation(h4_pool):
    with pytest.raises(ShapeError):
        AnsatzProgram(h4_pool, (0, 1), [0.1])
    with pytest.raises(DanglingGeneratorError):
        AnsatzProgram(h4_pool, (99,), [0.1]).check()
    with pytest.raises(ValueError):
        build_layered(h4_pool, 0)


def test_program_parameters_are_immutable(h4_pool):
    prog = AnsatzProgram(h4_pool, (0,), [0.1])
    with pytest.raises(ValueError):
        prog.thetas[0] = 1.0


def test_inverse_undoes_program(h4, h4_pool, h4_refs):
    rng = np.random.default_rng(2)
    prog = build_layered(h4_pool, 2).with_parameters(rng.normal(size=28))
    v = expand_to_statevector(h4_refs[1], h4.sector_basis())
    back = apply_program(prog.inverse(), apply_program(prog, v))
    np.testing.assert_allclose(back.amplitudes, v.amplitudes, atol=1e-12)


def test_energy_matches_dense_reference(h4, h4_pool, h4_refs):
    rng = np.random.default_rng(4)
    prog = build_layered(h4_pool, 2).with_parameters(rng.normal(scale=0.3, size=28))
    w = np.array([0.5, 0.25, 0.25])
    e, _ = sa_energy_and_gradient(prog, h4, h4_refs, w)
    assert e == pytest.approx(dense_sa_energy(prog, h4, h4_refs, w, prog.thetas), abs=1e-12)


def test_full_space_and_sector_agree(h4, h4_pool, h4_refs):
    rng = np.random.default_rng(6)
    prog = build_layered(h4_pool, 1).with_parameters(rng.normal(size=14))
    e1, g1 = sa_energy_and_gradient(prog, h4, h4_refs)
    e2, g2 = sa_energy_and_gradient(prog, h4, h4_refs, basis=h4.full_basis())
    assert e1 == pytest.approx(e2, abs=1e-12)
    np.testing.assert_allclose(g1, g2, atol=1e-12)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gradient_matches_finite_difference(h4, h4_pool, h4_refs, seed):
    rng = np.random.default_rng(seed)
    prog = build_layered(h4_pool, 1).with_parameters(rng.uniform(-1, 1, size=14))
    obj = SAObjective(prog, h4, h4_refs)
    _, grad = obj(prog.thetas)
    fd = oracles.central_difference(obj.energy, prog.thetas)
    np.testing.assert_allclose(grad, fd, atol=1e-9)


def test_objective_rejects_bad_weights(h4, h4_pool, h4_refs):
    with pytest.raises(ConfigError):
        SAObjective(build_layered(h4_pool, 1), h4, h4_refs, weights=[0.5, 0.5, 0.5])


def test_objective_rejects_duplicate_references(h4, h4_pool):
    ref = build_csf("2200")
    with pytest.raises(ValueError):
        SAObjective(build_layered(h4_pool, 1), h4, [ref, ref])


def test_parameter_file_round_trip(tmp_path, h4_pool):
    prog = AnsatzProgram(h4_pool, (3, 8, 3), [0.1, -0.2, 0.3])
    path = tmp_path / "params.json"
    save_parameters(path, prog)
    again = load_parameters(path, h4_pool)
    assert again.generator_ids == prog.generator_ids
    np.testing.assert_array_equal(again.thetas, prog.thetas)
    with pytest.raises(ConfigError):
        load_parameters(path, build_uccsd_pool(4, [0], [1, 2, 3]))
