import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptkit.algebra import (
    LabeledTensor,
    dagger,
    devectorize,
    haar_unitary,
    hermitian_eig,
    partial_trace,
    pauli_coefficient,
    pauli_expansion,
    pauli_labels,
    pauli_string_matrix,
    random_hermitian,
    swap_legs,
    vectorize,
)


def test_vectorize_row_major():
    m = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.array_equal(vectorize(m), np.array([1, 2, 3, 4], dtype=complex))
    assert np.array_equal(vectorize(np.eye(2)), np.array([1, 0, 0, 1.0]))


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_devectorize_round_trip(dim, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    assert np.array_equal(devectorize(vectorize(m), dim, dim), m)


def test_devectorize_length_mismatch():
    with pytest.raises(ValueError):
        devectorize(np.arange(3), 2, 2)


def test_partial_trace_product_state():
    rng = np.random.default_rng(0)
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    out = partial_trace(np.kron(a, b), [2, 3], [1])
    assert np.abs(out - a * np.trace(b)).max() < 1e-12


def test_partial_trace_bell_marginal():
    phi = np.zeros(4, dtype=complex)
    phi[0] = phi[3] = 1 / np.sqrt(2)
    bell = np.outer(phi, phi.conj())
    for discard in ([0], [1]):
        out = partial_trace(bell, [2, 2], discard)
        assert np.abs(out - np.eye(2) / 2).max() < 1e-12


def test_partial_trace_preserves_trace_against_brute_force():
    rng = np.random.default_rng(1)
    dims = [2, 3, 2]
    d = int(np.prod(dims))
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    for discard in ([0], [1], [2], [0, 2]):
        out = partial_trace(m, dims, discard)
        assert abs(np.trace(out) - np.trace(m)) < 1e-12
    # brute-force index summation oracle for discarding the middle leg
    t = m.reshape(2, 3, 2, 2, 3, 2)
    brute = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    val = 0
                    for mid in range(3):
                        val += t[i, mid, j, k, mid, l]
                    brute[i * 2 + j, k * 2 + l] = val
    assert np.abs(partial_trace(m, dims, [1]) - brute).max() < 1e-12


def test_partial_trace_unknown_leg():
    lt = LabeledTensor((("a", 2), ("b", 2)), np.eye(4, dtype=complex))
    with pytest.raises(KeyError):
        partial_trace(lt, discard=["c"])


def test_labeled_tensor_validation():
    with pytest.raises(ValueError):
        LabeledTensor((("a", 2), ("a", 2)), np.eye(4, dtype=complex))
    with pytest.raises(ValueError):
        LabeledTensor((("a", 2), ("b", 3)), np.eye(4, dtype=complex))


def test_hermitian_eig_examples():
    vals, _ = hermitian_eig(np.diag([3.0, 1.0]).astype(complex))
    assert np.allclose(vals, [1.0, 3.0])
    vals, _ = hermitian_eig(pauli_string_matrix("X"))
    assert np.allclose(vals, [-1.0, 1.0])


def test_hermitian_eig_reconstruction_and_unitarity():
    rng = np.random.default_rng(3)
    m = random_hermitian(6, rng)
    vals, vecs = hermitian_eig(m)
    recon = (vecs * vals) @ dagger(vecs)
    assert np.linalg.norm(recon - m) / np.linalg.norm(m) < 1e-10
    assert np.abs(dagger(vecs) @ vecs - np.eye(6)).max() < 1e-10


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_eig(np.array([[0, 1], [0, 0]], dtype=complex))


def test_pauli_coefficient_examples():
    assert abs(pauli_coefficient(np.eye(2) / 2, "I") - 1.0) < 1e-12
    ketz = np.array([[1, 0], [0, 0]], dtype=complex)
    assert abs(pauli_coefficient(ketz, "Z") - 1.0) < 1e-12


def test_pauli_expansion_round_trip():
    rng = np.random.default_rng(4)
    m = random_hermitian(4, rng)
    coeffs = pauli_expansion(m)
    recon = sum(
        c * pauli_string_matrix(lab) for c, lab in zip(coeffs, pauli_labels(2))
    ) / 4
    assert np.abs(recon - m).max() < 1e-10


def test_pauli_orthogonality():
    labels = pauli_labels(2)
    for a in labels:
        for b in labels:
            pa, pb = pauli_string_matrix(a), pauli_string_matrix(b)
            expected = 4.0 if a == b else 0.0
            assert abs(np.trace(pa @ pb) - expected) < 1e-12


def test_haar_unitary_deterministic_and_unitary():
    u1 = haar_unitary(4, np.random.default_rng(9))
    u2 = haar_unitary(4, np.random.default_rng(9))
    assert np.array_equal(u1, u2)
    assert np.abs(u1 @ dagger(u1) - np.eye(4)).max() < 1e-12


def test_swap_legs_round_trip():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    perm = [2, 0, 1]
    out = swap_legs(m, [2, 2, 2], perm)
    inv = [perm.index(i) for i in range(3)]
    assert np.abs(swap_legs(out, [2, 2, 2], inv) - m).max() < 1e-14
