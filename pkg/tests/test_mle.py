import numpy as np
import pytest
from itertools import product

from ptkit.algebra import haar_unitary, kron_all, random_hermitian
from ptkit.channels import choi_of_unitary, nearest_density, pauli_povm
from ptkit.mle import (
    DataTensor,
    MleConfig,
    cost_and_gradient,
    li_fit,
    pgdb_fit,
    predicted_probabilities,
)
from ptkit.process_tensor import (
    ProcessChoi,
    causality_constraints,
    pt_apply,
    temporal_qmi_profile,
)
from ptkit.projection import _AffineProjector
from ptkit.simulator import build_process, exact_output, generate_dataset, ground_truth_process_tensor


def test_data_tensor_validation():
    with pytest.raises(ValueError):
        DataTensor(np.array([[-1.0, 1.0]]))
    dt = DataTensor(np.full((6, 10), 1.0), shots=10)
    assert dt.effect_count == 6 and dt.steps == 1
    freqs = dt.frequencies()
    assert np.allclose(freqs.sum(axis=0), 1.0)


def test_predicted_probabilities_against_brute_force(haar_process_k2, muub_instrument, povm):
    gt = ground_truth_process_tensor(haar_process_k2)
    p = predicted_probabilities(gt, muub_instrument, povm)
    basis = list(muub_instrument.elements)
    for mu in [(0, 0), (2, 5), (9, 1)]:
        for i, effect in enumerate(povm.effects):
            block = kron_all([effect, basis[mu[1]].T, basis[mu[0]].T])
            brute = 4 * np.trace(block @ gt.matrix).real
            assert abs(p[(i,) + mu] - brute) < 1e-12


def test_predicted_probabilities_normalization_and_oracle(povm, muub_instrument):
    p_markov = build_process(k=2, env_dim=1, kind="identity", seed=0)
    gt = ground_truth_process_tensor(p_markov)
    probs = predicted_probabilities(gt, muub_instrument, povm)
    assert np.abs(probs.sum(axis=0) - 1.0).max() < 1e-10
    # identity dynamics: Born probabilities of the composed unitaries
    from ptkit.basis_design import reference_muub

    mats = reference_muub().matrices()
    rho0 = np.zeros((2, 2), dtype=complex)
    rho0[0, 0] = 1.0
    for mu in [(0, 0), (4, 7)]:
        state = mats[mu[1]] @ mats[mu[0]] @ rho0 @ mats[mu[0]].conj().T @ mats[mu[1]].conj().T
        for i, effect in enumerate(povm.effects):
            assert abs(probs[(i,) + mu] - np.trace(effect @ state).real) < 1e-10


def test_predicted_probabilities_linearity(haar_process_k2, muub_instrument, povm):
    gt = ground_truth_process_tensor(haar_process_k2)
    rng = np.random.default_rng(0)
    other = nearest_density(random_hermitian(32, rng))
    a, b = 0.3, 0.7
    mix = ProcessChoi(a * gt.matrix + b * other, 2, 2)
    pa = predicted_probabilities(gt, muub_instrument, povm)
    pb = predicted_probabilities(ProcessChoi(other, 2, 2), muub_instrument, povm)
    pm = predicted_probabilities(mix, muub_instrument, povm)
    assert np.abs(pm - (a * pa + b * pb)).max() < 1e-12


def test_uniform_data_closed_form_cost(muub_instrument, povm):
    counts = np.full((6, 10, 10), 1.0 / 6)
    data = DataTensor(counts)
    y = ProcessChoi(np.eye(32, dtype=complex) / 32, 2, 2)
    cost, _ = cost_and_gradient(y, data, muub_instrument, povm)
    assert abs(cost - 100 * np.log(6)) < 1e-9


def test_gradient_finite_difference(haar_process_k2, muub_instrument, povm, exact_dataset_k2):
    y = ProcessChoi(np.eye(32, dtype=complex) / 32, 2, 2)
    cost, grad = cost_and_gradient(y, exact_dataset_k2.data, muub_instrument, povm)
    rng = np.random.default_rng(1)
    for _ in range(5):
        h = random_hermitian(32, rng)
        h /= np.linalg.norm(h)
        eps = 1e-6
        cp, _ = cost_and_gradient(
            ProcessChoi(y.matrix + eps * h, 2, 2), exact_dataset_k2.data, muub_instrument, povm
        )
        cm, _ = cost_and_gradient(
            ProcessChoi(y.matrix - eps * h, 2, 2), exact_dataset_k2.data, muub_instrument, povm
        )
        fd = (cp - cm) / (2 * eps)
        an = float(np.real(np.trace(grad.conj().T @ h)))
        assert abs(fd - an) <= 1e-5 * max(1.0, abs(an))


def test_gradient_stationary_at_truth(haar_process_k2, muub_instrument, povm, exact_dataset_k2):
    gt = ground_truth_process_tensor(haar_process_k2)
    _, grad = cost_and_gradient(gt, exact_dataset_k2.data, muub_instrument, povm)
    cons = causality_constraints(2, 2)
    proj = _AffineProjector(cons)
    # project the gradient onto the tangent space of the affine constraints
    gvec = grad.reshape(-1)
    coeff = proj._gram_inv @ np.asarray(cons.rows @ gvec).reshape(-1)
    tangent = gvec - np.asarray(proj.ah @ coeff).reshape(-1)
    assert np.linalg.norm(tangent) < 1e-6


def test_pgdb_monotone_and_feasible(exact_dataset_k2, muub_instrument, povm):
    cons = causality_constraints(2, 2)
    fit, report = pgdb_fit(exact_dataset_k2.data, muub_instrument, povm, cons, MleConfig())
    assert report.converged
    trace = report.cost_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert report.min_eigenvalue >= -1e-8
    assert report.final_residual <= 1e-7


def test_pgdb_restart_reaches_same_cost(exact_dataset_k2, muub_instrument, povm):
    cons = causality_constraints(2, 2)
    fit, rep = pgdb_fit(exact_dataset_k2.data, muub_instrument, povm, cons, MleConfig())
    rng = np.random.default_rng(2)
    perturbed = nearest_density(fit.matrix + 0.05 * random_hermitian(32, rng))
    from ptkit.projection import ConicProblem, conic_project

    start = conic_project(ConicProblem(perturbed, cons)).solution
    fit2, rep2 = pgdb_fit(
        exact_dataset_k2.data,
        muub_instrument,
        povm,
        cons,
        MleConfig(),
        initial=ProcessChoi(start, 2, 2),
    )
    assert abs(rep.cost - rep2.cost) < 1e-4


def test_pgdb_scale_invariance_of_maximizer(exact_dataset_k2, muub_instrument, povm):
    """Rescaling all counts leaves the fitted model's predictions unchanged
    (the Choi itself may wander along restricted-basis flat directions)."""
    cons = causality_constraints(2, 2)
    fit1, _ = pgdb_fit(exact_dataset_k2.data, muub_instrument, povm, cons, MleConfig())
    scaled = DataTensor(exact_dataset_k2.data.counts * 7.0)
    fit2, _ = pgdb_fit(scaled, muub_instrument, povm, cons, MleConfig())
    p1 = predicted_probabilities(fit1, muub_instrument, povm)
    p2 = predicted_probabilities(fit2, muub_instrument, povm)
    assert np.abs(p1 - p2).max() < 1e-4


def test_pgdb_markovian_data_low_qmi(muub_instrument, povm):
    p = build_process(k=2, env_dim=1, kind="haar", seed=6)
    ds = generate_dataset(p, muub_instrument, exact=True)
    cons = causality_constraints(2, 2)
    fit, report = pgdb_fit(ds.data, muub_instrument, povm, cons, MleConfig())
    for cut in temporal_qmi_profile(fit):
        assert cut < 0.01


def test_li_fit_interpolates_exact_data(exact_dataset_k2, muub_instrument, povm):
    li = li_fit(exact_dataset_k2.data, muub_instrument, povm)
    probs = predicted_probabilities(li, muub_instrument, povm)
    assert np.abs(probs - exact_dataset_k2.data.counts).max() < 1e-9


def test_sampling_consistency_median_fidelity(muub_instrument, povm):
    """Median reconstruction fidelity is non-decreasing in the shot count."""
    from ptkit.control import reconstruction_fidelity

    p = build_process(k=1, kind="haar", seed=8)
    cons = causality_constraints(1, 2)
    medians = []
    for shots in (1000, 100000, None):
        fids = []
        for trial in range(10):
            ds = generate_dataset(
                p, muub_instrument, shots=shots, exact=shots is None, seed=100 + trial
            )
            fit, _ = pgdb_fit(ds.data, muub_instrument, povm, cons, MleConfig())
            rep = reconstruction_fidelity(fit, p, n_sequences=20, seed=trial)
            fids.append(rep.median)
        medians.append(np.median(fids))
    assert medians[0] <= medians[1] + 1e-9 <= medians[2] + 2e-9
