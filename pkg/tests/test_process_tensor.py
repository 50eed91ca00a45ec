import numpy as np
import pytest
from itertools import product

from ptkit.algebra import dagger, haar_unitary, kron_all, pauli_labels, random_hermitian
from ptkit.channels import (
    apply_channel,
    choi_of_unitary,
    dual_frame,
    nearest_density,
    pauli_povm,
    random_cptp,
)
from ptkit.process_tensor import (
    ProcessChoi,
    causality_constraints,
    containment_residuals,
    markov_product,
    pt_apply,
    pt_linear_inversion,
    pt_qmi,
    qmi,
    relative_entropy,
    temporal_qmi_profile,
    von_neumann_entropy,
)
from ptkit.simulator import build_process, exact_output, ground_truth_process_tensor


def brute_force_row_count(k):
    """Enumerate causality Pauli strings directly from the construction rule."""
    legs = 2 * k + 1
    count = 0
    for j in range(k, 0, -1):
        pos = 2 * (k - j) + 1
        count += 3 * 4 ** (legs - pos - 1)
    return count + 1


def test_constraint_counts():
    assert causality_constraints(1, 2).m == 13
    assert causality_constraints(2, 2).m == 205
    assert causality_constraints(1, 2).m == brute_force_row_count(1)
    assert causality_constraints(2, 2).m == brute_force_row_count(2)
    with pytest.raises(ValueError):
        causality_constraints(0, 2)


def test_constraints_satisfied_by_markov_product_of_tp_channels():
    rng = np.random.default_rng(0)
    chois = [random_cptp(2, rng).matrix / 2 for _ in range(2)]
    rho0 = nearest_density(random_hermitian(2, rng))
    y = kron_all(chois + [rho0])
    cons = causality_constraints(2, 2)
    assert np.abs(cons.apply(y) - cons.rhs).max() < 1e-10


def test_ground_truth_satisfies_constraints(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    cons = causality_constraints(2, 2)
    assert np.abs(cons.apply(gt.matrix) - cons.rhs).max() < 1e-10
    assert max(containment_residuals(gt)) < 1e-10


def test_pt_linear_inversion_identity_k1():
    from ptkit.channels import measure_and_prepare_basis

    p = build_process(k=1, env_dim=1, kind="identity", seed=0)
    basis = measure_and_prepare_basis()  # informationally complete
    duals = dual_frame(basis)
    states = {(i,): exact_output(p, [b]) for i, b in enumerate(basis)}
    y = pt_linear_inversion(states, [duals])
    marg = ProcessChoi(y.matrix, 1, 2).marginal(["o1", "i1"])
    phi = choi_of_unitary(np.eye(2, dtype=complex)).matrix / 2
    assert np.abs(marg - phi).max() < 1e-9


def _muub_matrices():
    from ptkit.basis_design import reference_muub

    return reference_muub().matrices()


def test_pt_linear_inversion_markovian_product_structure():
    p = build_process(k=2, env_dim=1, kind="haar", seed=3)
    basis = [choi_of_unitary(u).matrix for u in _muub_matrices()]
    duals = dual_frame(basis)
    states = {
        mu: exact_output(p, [basis[mu[0]], basis[mu[1]]])
        for mu in product(range(10), repeat=2)
    }
    y = pt_linear_inversion(states, [duals, duals])
    for cut in temporal_qmi_profile(y):
        assert cut < 1e-9


def test_pt_linear_inversion_matches_simulator(haar_process_k2):
    basis = [choi_of_unitary(u).matrix for u in _muub_matrices()]
    duals = dual_frame(basis)
    states = {
        mu: exact_output(haar_process_k2, [basis[mu[0]], basis[mu[1]]])
        for mu in product(range(10), repeat=2)
    }
    y = pt_linear_inversion(states, [duals, duals])
    # interpolation on its own basis sequences
    for mu in [(0, 0), (3, 7), (9, 9)]:
        pred = pt_apply(y, [basis[mu[0]], basis[mu[1]]])
        assert np.abs(pred - states[mu]).max() < 1e-9
    # agreement with the simulator on out-of-basis sequences
    from ptkit.channels import trace_distance

    rng = np.random.default_rng(5)
    for _ in range(50):
        ops = [choi_of_unitary(haar_unitary(2, rng)).matrix for _ in range(2)]
        pred = pt_apply(y, ops)
        truth = exact_output(haar_process_k2, ops)
        assert trace_distance(nearest_density(pred), truth) < 1e-8


def test_pt_apply_markov_product_equals_channel_chaining():
    rng = np.random.default_rng(7)
    e1, e2 = random_cptp(2, rng), random_cptp(2, rng)
    rho0 = nearest_density(random_hermitian(2, rng))
    y = ProcessChoi(kron_all([e2.matrix / 2, e1.matrix / 2, rho0]), 2, 2)
    ops = [choi_of_unitary(haar_unitary(2, rng)) for _ in range(2)]
    out = pt_apply(y, ops)
    chained = apply_channel(e2, apply_channel(ops[1], apply_channel(e1, apply_channel(ops[0], rho0))))
    assert np.abs(out - chained).max() < 1e-10


def test_pt_apply_trace_and_povm_normalization(haar_process_k2, povm):
    gt = ground_truth_process_tensor(haar_process_k2)
    rng = np.random.default_rng(8)
    ops = [choi_of_unitary(haar_unitary(2, rng)) for _ in range(2)]
    out = pt_apply(gt, ops)
    assert abs(np.trace(out) - 1.0) < 1e-9
    probs = [np.trace(e @ out).real for e in povm.effects]
    assert abs(sum(probs) - 1.0) < 1e-9


def test_pt_apply_linearity(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    basis = [choi_of_unitary(u).matrix for u in _muub_matrices()]
    rng = np.random.default_rng(9)
    coeffs = [rng.normal(size=10) for _ in range(2)]
    combo = [sum(c * b for c, b in zip(cs, basis)) for cs in coeffs]
    direct = pt_apply(gt, combo)
    summed = np.zeros((2, 2), dtype=complex)
    for mu in product(range(10), repeat=2):
        weight = coeffs[0][mu[0]] * coeffs[1][mu[1]]
        summed += weight * pt_apply(gt, [basis[mu[0]], basis[mu[1]]])
    assert np.abs(direct - summed).max() < 1e-9


def test_pt_apply_validates_length(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    with pytest.raises(ValueError):
        pt_apply(gt, [choi_of_unitary(np.eye(2, dtype=complex))])


def test_markov_product_fixed_point_and_marginals(haar_process_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    prod = markov_product(gt)
    again = markov_product(prod)
    assert np.abs(prod.matrix - again.matrix).max() < 1e-12
    for names in (["o2", "i2"], ["o1", "i1"], ["o0"]):
        assert np.abs(gt.marginal(names) - prod.marginal(names)).max() < 1e-12
    s = relative_entropy(gt.matrix, prod.matrix)
    assert s > 1e-3  # genuinely correlated process
    p_markov = build_process(k=2, env_dim=1, kind="haar", seed=1)
    gt_m = ground_truth_process_tensor(p_markov)
    assert relative_entropy(gt_m.matrix, markov_product(gt_m).matrix) < 1e-9


def test_relative_entropy_and_qmi_basics():
    rng = np.random.default_rng(10)
    rho = nearest_density(random_hermitian(4, rng))
    assert abs(relative_entropy(rho, rho)) < 1e-9
    pure = np.zeros((2, 2), dtype=complex)
    pure[0, 0] = 1.0
    other = np.zeros((2, 2), dtype=complex)
    other[1, 1] = 1.0
    assert relative_entropy(pure, other) == float("inf")
    a = nearest_density(random_hermitian(2, rng))
    b = nearest_density(random_hermitian(2, rng))
    assert abs(qmi(np.kron(a, b), [2, 2], [0])) < 1e-10


def test_qmi_bell_choi_is_two_bits():
    phi = choi_of_unitary(np.eye(2, dtype=complex)).matrix / 2
    assert abs(qmi(phi, [2, 2], [0]) - 2.0) < 1e-10


def test_entropy_clipping_continuity():
    rho = np.diag([1.0 - 1e-16, 1e-16]).astype(complex)
    assert abs(von_neumann_entropy(rho)) < 1e-12


def test_restricted_basis_span_rank():
    from ptkit.basis_design import reference_muub

    assert reference_muub().superop_rank() == 10
