"""Multi-time process Choi objects.

A k-step process on a d-dimensional system is stored as its Choi matrix over
2k+1 legs ordered {o_k, i_k, o_{k-1}, ..., i_1, o_0} (opposite to the arrow
of time, matrix-multiplication style), trace-normalized to 1. Operation
sequences are supplied time-ordered and reversed internally. Because the
stored object is trace-1 while the operation Choi blocks it contracts with
are unnormalized, every application compensates by d^k so that outputs are
genuine states and probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .algebra import (
    dagger,
    kron_all,
    partial_trace,
    pauli_labels,
    pauli_string_sparse_vec,
    vectorize,
)
from .channels import DualFrame, choi_matrix

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


# ---------------------------------------------------------------------------
# affine constraints in the Pauli basis


@dataclass(frozen=True)
class AffineConstraintSet:
    """Rows are vectorized Pauli strings; A vec(Y) = b fixes causality/trace.

    Row r applied to vec(Y) evaluates Tr[P_r Y], which is real for Hermitian
    Y. Rows are kept sparse: an n-qubit Pauli string has only 2^n nonzeros.
    """

    rows: sp.csr_matrix
    rhs: np.ndarray
    description: tuple

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.rows.shape[1])))

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        """A vec(matrix) as a real vector (imaginary part discarded)."""
        return np.asarray(self.rows @ vectorize(matrix)).real.reshape(-1)

    def residual(self, matrix: np.ndarray) -> float:
        return float(np.abs(self.apply(matrix) - self.rhs).max())

    def adjoint(self, lam: np.ndarray) -> np.ndarray:
        """mat(A^dag lam): a Hermitian matrix for real lam."""
        ah = getattr(self, "_adjoint_rows", None)
        if ah is None:
            ah = self.rows.conj().T.tocsr()
            object.__setattr__(self, "_adjoint_rows", ah)
        v = np.asarray(ah @ lam).reshape(-1)
        d = self.dim
        return v.reshape(d, d)


def constraints_from_labels(zero_labels, n_qubits: int, normalization: float = 1.0) -> AffineConstraintSet:
    """Zero rows for each Pauli label plus the identity row with given rhs."""
    dim = 2**n_qubits
    labels = list(zero_labels) + ["I" * n_qubits]
    data, indices, indptr = [], [], [0]
    for lab in labels:
        idx, vals = pauli_string_sparse_vec(lab)
        order = np.argsort(idx)
        indices.extend(idx[order])
        # row = conj(vec(P)) so that row . vec(Y) = Tr[P Y]
        data.extend(np.conj(vals[order]))
        indptr.append(len(indices))
    rows = sp.csr_matrix(
        (np.array(data), np.array(indices), np.array(indptr)),
        shape=(len(labels), dim * dim),
    )
    rhs = np.zeros(len(labels))
    rhs[-1] = normalization
    return AffineConstraintSet(rows, rhs, tuple(labels))


def causality_constraints(k: int, d: int = 2) -> AffineConstraintSet:
    """Causality rows for a k-step process tensor on a d = 2^m system.

    For every input leg, all strings with identity on every later leg, a
    non-identity Pauli on the input leg and arbitrary Paulis on all earlier
    legs must have zero expectation; one identity row fixes the trace to 1.
    """
    if k < 1:
        raise ValueError("need at least one step")
    m = int(round(math.log2(d)))
    if 2**m != d:
        raise ValueError("leg dimension must be a power of two")
    n_legs = 2 * k + 1
    leg_labels = pauli_labels(m)
    nontrivial = [l for l in leg_labels if l != "I" * m]
    zero_labels = []
    # storage order o_k, i_k, ..., i_1, o_0; input leg i_j sits at 2(k-j)+1
    for j in range(k, 0, -1):
        pos = 2 * (k - j) + 1
        earlier = n_legs - pos - 1
        for mid in nontrivial:
            for tail in product(leg_labels, repeat=earlier):
                zero_labels.append("I" * m * pos + mid + "".join(tail))
    return constraints_from_labels(zero_labels, m * n_legs)


# ---------------------------------------------------------------------------
# the process Choi object


@dataclass(frozen=True)
class ProcessChoi:
    """Trace-1 Choi state of a k-step process tensor."""

    matrix: np.ndarray
    steps: int
    dim: int = 2

    def __post_init__(self):
        size = self.dim ** (2 * self.steps + 1)
        if self.matrix.shape != (size, size):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({size}, {size})")
        if np.abs(self.matrix - dagger(self.matrix)).max() > 1e-9:
            raise ValueError("process Choi matrix is not Hermitian")

    @property
    def n_legs(self) -> int:
        return 2 * self.steps + 1

    @property
    def leg_names(self):
        names = []
        for j in range(self.steps, 0, -1):
            names += [f"o{j}", f"i{j}"]
        names.append("o0")
        return tuple(names)

    @property
    def leg_dims(self):
        return [self.dim] * self.n_legs

    def as_tensor(self) -> np.ndarray:
        d = self.dim
        return self.matrix.reshape([d] * (2 * self.n_legs))

    def marginal(self, keep_names) -> np.ndarray:
        names = self.leg_names
        discard = [i for i, n in enumerate(names) if n not in set(keep_names)]
        return partial_trace(self.matrix, self.leg_dims, discard)


def _op_tensor(op, d: int) -> np.ndarray:
    return choi_matrix(op).reshape(d, d, d, d)


def _contract_trailing_ops(cur: np.ndarray, m: int, op_tensors, monitor=None):
    """Contract rank-4 operation tensors into the trailing (i, o) leg pairs.

    ``cur`` has 2m axes (m ket legs then m bra legs); every contraction
    removes one pair from each side. ``monitor`` collects the matrix
    dimension of every intermediate, for contraction-cost assertions.
    """
    if monitor is not None:
        monitor.append(int(round(math.sqrt(cur.size))))
    for t in op_tensors:
        kets = _LETTERS[:m]
        bras = _LETTERS[m : 2 * m]
        sub = (
            kets
            + bras
            + ","
            + kets[m - 2 : m]
            + bras[m - 2 : m]
            + "->"
            + kets[: m - 2]
            + bras[: m - 2]
        )
        cur = np.einsum(sub, cur, t)
        m -= 2
        if monitor is not None:
            monitor.append(int(round(math.sqrt(cur.size))))
    return cur, m


def pt_apply(pt: ProcessChoi, ops, monitor=None) -> np.ndarray:
    """Final state after a time-ordered sequence of CP maps.

    Contracts one rank-4 operation tensor at a time into the Choi tensor;
    the full Kronecker factor of the sequence is never materialized.
    """
    ops = list(ops)
    if len(ops) != pt.steps:
        raise ValueError(f"expected {pt.steps} operations, got {len(ops)}")
    d = pt.dim
    tensors = [_op_tensor(op, d) for op in ops]
    cur, _ = _contract_trailing_ops(pt.as_tensor(), pt.n_legs, tensors, monitor)
    return cur.reshape(d, d) * d**pt.steps


def pt_linear_inversion(final_states, duals_per_step) -> ProcessChoi:
    """Choi state from measured outputs and the dual frame of the basis.

    ``final_states`` maps each basis multi-index (mu_0, ..., mu_{k-1}) to the
    observed output state; the sum  sum_mu rho_mu kron (dual_mu)^T  is then
    rescaled to the trace-1 storage convention.
    """
    duals_per_step = [f.duals if isinstance(f, DualFrame) else f for f in duals_per_step]
    k = len(duals_per_step)
    sizes = [len(dl) for dl in duals_per_step]
    first = next(iter(final_states.values()))
    d = first.shape[0]
    size = d ** (2 * k + 1)
    out = np.zeros((size, size), dtype=complex)
    for mu in product(*[range(s) for s in sizes]):
        try:
            rho = final_states[mu]
        except KeyError:
            raise KeyError(f"missing final state for basis multi-index {mu}")
        dual = kron_all(duals_per_step[j][mu[j]] for j in reversed(range(k)))
        out += np.kron(rho, dual.T)
    out /= d**k
    return ProcessChoi((out + dagger(out)) / 2, k, d)


def markov_product(pt: ProcessChoi) -> ProcessChoi:
    """Tensor product of the per-step marginals (correlations discarded)."""
    names = pt.leg_names
    factors = []
    for j in range(pt.steps, 0, -1):
        factors.append(pt.marginal([f"o{j}", f"i{j}"]))
    factors.append(pt.marginal(["o0"]))
    return ProcessChoi(kron_all(factors), pt.steps, pt.dim)


def containment_residuals(pt: ProcessChoi):
    """Frobenius residuals of Tr_{o_k'}[Y_{k':0}] = I/d kron Y_{k'-1:0}."""
    d = pt.dim
    res = []
    cur = pt.matrix
    legs = 2 * pt.steps + 1
    for _ in range(pt.steps, 0, -1):
        traced = partial_trace(cur, [d] * legs, [0])  # drop o_k'
        shorter = partial_trace(cur, [d] * legs, [0, 1])  # drop o_k', i_k'
        target = np.kron(np.eye(d) / d, shorter)
        res.append(float(np.linalg.norm(traced - target)))
        cur = shorter
        legs -= 2
    return res


# ---------------------------------------------------------------------------
# entropic measures (base-2 logarithms)

_EIG_CLIP = 1e-14


def von_neumann_entropy(rho: np.ndarray) -> float:
    vals = np.linalg.eigvalsh((rho + dagger(rho)) / 2)
    vals = vals[vals > _EIG_CLIP]
    return float(-(vals * np.log2(vals)).sum())


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """S[rho || sigma] in bits; +inf if supp(rho) leaks outside supp(sigma)."""
    p, u = np.linalg.eigh((rho + dagger(rho)) / 2)
    q, v = np.linalg.eigh((sigma + dagger(sigma)) / 2)
    inside = q > _EIG_CLIP
    if np.any(~inside):
        null = v[:, ~inside]
        leak = float(np.real(np.einsum("ij,jk,ki->", dagger(null), rho, null)))
        if leak > 1e-10:
            return math.inf
    overlap = np.abs(dagger(u) @ v[:, inside]) ** 2  # |<u_i|v_j>|^2
    p_pos = np.clip(p, 0.0, None)
    term1 = float((p_pos[p_pos > _EIG_CLIP] * np.log2(p_pos[p_pos > _EIG_CLIP])).sum())
    term2 = float(p_pos @ overlap @ np.log2(q[inside]))
    return term1 - term2


def qmi(matrix: np.ndarray, dims, part_a) -> float:
    """Quantum mutual information across a bipartition of legs (bits)."""
    dims = list(dims)
    part_a = sorted(part_a)
    part_b = [i for i in range(len(dims)) if i not in part_a]
    rho_a = partial_trace(matrix, dims, part_b)
    rho_b = partial_trace(matrix, dims, part_a)
    return (
        von_neumann_entropy(rho_a)
        + von_neumann_entropy(rho_b)
        - von_neumann_entropy(matrix)
    )


def pt_qmi(pt: ProcessChoi, legs_a) -> float:
    names = pt.leg_names
    part_a = [i for i, n in enumerate(names) if n in set(legs_a)]
    return qmi(pt.matrix, pt.leg_dims, part_a)


def temporal_qmi_profile(pt: ProcessChoi):
    """QMI across every temporal cut: legs at times > j vs legs at times <= j.

    The cut after time j separates {o_k ... i_{j+1}} from {o_j ... o_0}.
    """
    out = []
    for j in range(pt.steps):
        later = []
        for jj in range(pt.steps, j, -1):
            later += [f"o{jj}", f"i{jj}"]
        out.append(pt_qmi(pt, later))
    return out
