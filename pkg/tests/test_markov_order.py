import numpy as np
import pytest

from ptkit.algebra import haar_unitary
from ptkit.channels import choi_of_unitary, measure_and_prepare_basis, trace_distance
from ptkit.markov_order import (
    MemoryModel,
    assemble_block_data,
    cmo_apply,
    conditional_channel,
    fit_cmo,
    plan_cmo_experiments,
    reconstruct_from_conditionals,
)
from ptkit.mle import MleConfig
from ptkit.process_tensor import pt_apply
from ptkit.simulator import (
    SeProcess,
    build_process,
    exact_output,
    generate_cmo_datasets,
    generate_dataset,
    ground_truth_process_tensor,
)


def test_plan_counts():
    assert plan_cmo_experiments(3, 3, 10, 3).total_circuits == 3000
    assert plan_cmo_experiments(5, 3, 10, 3).total_circuits == 9000
    assert plan_cmo_experiments(5, 1, 10, 3).total_circuits == 150
    plan = plan_cmo_experiments(4, 2, 10, 3)
    assert plan.n_blocks == 3
    assert plan.total_circuits == 3 * 100 * 3


def test_plan_validation():
    with pytest.raises(ValueError):
        plan_cmo_experiments(3, 4, 10)
    with pytest.raises(ValueError):
        plan_cmo_experiments(3, 0, 10)


def test_plan_uses_fixed_op_outside_block():
    plan = plan_cmo_experiments(4, 2, 5, 1, fixed_op=3)
    for s in plan.settings:
        for slot, op in enumerate(s.ops):
            if not (s.block <= slot < s.block + 2):
                assert op == 3


def test_degenerate_order_equals_full_apply(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    model = MemoryModel(k=2, markov_order=2, blocks=(gt,))
    rng = np.random.default_rng(0)
    for _ in range(5):
        ops = [choi_of_unitary(haar_unitary(2, rng)).matrix for _ in range(2)]
        assert np.abs(cmo_apply(model, ops) - pt_apply(gt, ops)).max() == 0.0


def test_identity_dynamics_stitching(muub_instrument, povm):
    p = build_process(k=3, env_dim=1, kind="identity", seed=0)
    blocks, _ = generate_cmo_datasets(p, muub_instrument, markov_order=1, exact=True)
    model, reports = fit_cmo(blocks, muub_instrument, povm, 1)
    assert all(r.converged for r in reports)
    rng = np.random.default_rng(1)
    rho0 = np.zeros((2, 2), dtype=complex)
    rho0[0, 0] = 1.0
    for _ in range(5):
        us = [haar_unitary(2, rng) for _ in range(3)]
        ops = [choi_of_unitary(u).matrix for u in us]
        out = cmo_apply(model, ops)
        ideal = rho0
        for u in us:
            ideal = u @ ideal @ u.conj().T
        assert np.abs(out - ideal).max() < 1e-9
        assert abs(np.trace(out) - 1.0) < 1e-8


def test_markovian_process_order_one(muub_instrument, povm):
    p = build_process(k=3, env_dim=1, kind="haar", seed=4)
    blocks, _ = generate_cmo_datasets(p, muub_instrument, markov_order=1, exact=True)
    model, _ = fit_cmo(blocks, muub_instrument, povm, 1)
    rng = np.random.default_rng(2)
    for _ in range(20):
        ops = [choi_of_unitary(haar_unitary(2, rng)).matrix for _ in range(3)]
        assert trace_distance(cmo_apply(model, ops), exact_output(p, ops)) < 0.01


def test_env_reset_finite_memory(muub_instrument, povm):
    p = build_process(k=3, kind="haar", seed=5, env_reset_period=2)
    blocks, _ = generate_cmo_datasets(p, muub_instrument, markov_order=2, exact=True)
    model, reports = fit_cmo(
        blocks, muub_instrument, povm, 2, MleConfig(stop_delta=1e-10, max_outer_iterations=600)
    )
    from ptkit.control import reconstruction_fidelity

    rep = reconstruction_fidelity(model, p, n_sequences=30, seed=3)
    assert rep.median >= 0.999


def test_contraction_never_exceeds_block_dimension(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    block = ground_truth_process_tensor(build_process(k=1, kind="haar", seed=1))
    model = MemoryModel(k=2, markov_order=1, blocks=(block, block))
    rng = np.random.default_rng(3)
    ops = [choi_of_unitary(haar_unitary(2, rng)).matrix for _ in range(2)]
    monitor = []
    cmo_apply(model, ops, monitor=monitor)
    assert max(monitor) <= 2 ** (2 * 1 + 1)


def test_cmo_apply_validates_ops(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    model = MemoryModel(k=2, markov_order=2, blocks=(gt,))
    with pytest.raises(ValueError):
        cmo_apply(model, [np.eye(4)])
    bad = -np.eye(4)
    with pytest.raises(ValueError):
        cmo_apply(model, [bad, bad])


def test_assemble_block_data_matches_grid_slice(muub_instrument):
    """The final block is measured at t_k, so its circuits coincide with the
    full-grid circuits at the fixed operation; earlier blocks are read out at
    their own end time and need fresh (intermediate-measurement) circuits."""
    p = build_process(k=3, kind="haar", seed=6)
    grid = generate_dataset(p, muub_instrument, exact=True)
    blocks, ds = generate_cmo_datasets(p, muub_instrument, markov_order=2, exact=True)
    sliced = grid.data.counts[:, 0, :, :]  # block 1 varies slots 1..2
    assert np.abs(blocks[1].counts - sliced).max() < 1e-12
    assert np.abs(blocks[0].counts - grid.data.counts[:, :, :, 0]).max() > 1e-3
    with pytest.raises(KeyError):
        assemble_block_data(ds.plan, ds.setting_counts, 99)


def test_lower_order_data_slicing(muub_instrument, povm):
    """Blocks of a lower-order model that share their end time with a
    higher-order block are slices of its data at the fixed operation; only
    the earliest block needs new circuits (incremental experiment reuse)."""
    p = build_process(k=3, kind="haar", seed=7)
    blocks2, _ = generate_cmo_datasets(p, muub_instrument, markov_order=2, exact=True)
    blocks1, _ = generate_cmo_datasets(p, muub_instrument, markov_order=1, exact=True)
    # order-1 block b ends at t_{b+1}, matching order-2 block b-1 with its
    # first varying slot pinned to the fixed operation
    assert np.abs(blocks2[0].counts[:, 0, :] - blocks1[1].counts).max() < 1e-12
    assert np.abs(blocks2[1].counts[:, 0, :] - blocks1[2].counts).max() < 1e-12


def test_conditional_channel_interior_count(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    with pytest.raises(ValueError):
        conditional_channel(gt, [])  # 2-step block needs one interior op


def test_conditional_reconstruction_identity():
    swap = np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    )
    rng = np.random.default_rng(7)
    us = (haar_unitary(4, rng), swap, haar_unitary(4, rng))
    init = np.zeros((4, 4), dtype=complex)
    init[0, 0] = 1.0
    p = SeProcess(env_dim=2, initial_state=init, step_unitaries=us, env_reset_period=1)
    gt = ground_truth_process_tensor(p)
    rec = reconstruct_from_conditionals(gt, 1, 1, measure_and_prepare_basis())
    assert np.abs(rec.matrix - gt.matrix).max() < 1e-10
