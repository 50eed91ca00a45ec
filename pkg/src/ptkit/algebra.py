"""Dense complex linear algebra and labeled-tensor primitives.

Conventions used throughout the package:

* matrices are plain complex ``numpy`` arrays in row-major layout,
* ``vectorize`` flattens row by row, so ``vec(A X B) = (A kron B^T) vec(X)``,
* multipartite operators order their subsystem legs explicitly; helpers here
  take a list of leg dimensions and operate on (ket, bra) index pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

HERMITICITY_TOL = 1e-10


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def vectorize(m: np.ndarray) -> np.ndarray:
    """Row-major flattening of a matrix into a 1-d vector."""
    return np.asarray(m).reshape(-1)


def devectorize(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`; raises on a length mismatch."""
    v = np.asarray(v)
    if cols is None:
        cols = rows
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape(rows, cols)


def kron_all(mats) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.abs(m - dagger(m)).max() <= tol)


def hermitian_eig(m: np.ndarray, tol: float = HERMITICITY_TOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues real ascending and
    eigenvectors as unitary columns. Non-Hermitian input (beyond ``tol``) is
    rejected rather than silently symmetrized.
    """
    m = np.asarray(m)
    if not is_hermitian(m, tol):
        raise ValueError("hermitian_eig requires a Hermitian matrix")
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


@dataclass(frozen=True)
class LabeledTensor:
    """An operator on a tensor product of named legs.

    ``array`` is the D x D matrix with D = product of leg dimensions; the kets
    and bras share one leg ordering.
    """

    legs: tuple
    array: np.ndarray

    def __post_init__(self):
        names = [n for n, _ in self.legs]
        if len(set(names)) != len(names):
            raise ValueError("leg names must be unique")
        d = self.dim
        if self.array.shape != (d, d):
            raise ValueError(f"array shape {self.array.shape} != ({d}, {d})")

    @property
    def dim(self) -> int:
        return math.prod(d for _, d in self.legs)

    @property
    def leg_names(self):
        return tuple(n for n, _ in self.legs)

    def leg_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.legs):
            if n == name:
                return i
        raise KeyError(f"unknown leg {name!r}")


def partial_trace(op, dims=None, discard=()) -> np.ndarray:
    """Trace out the listed subsystems of a multipartite operator.

    ``op`` is either a :class:`LabeledTensor` (with ``discard`` a list of leg
    names) or a plain matrix with ``dims`` the leg dimensions and ``discard``
    a list of leg positions.
    """
    if isinstance(op, LabeledTensor):
        positions = [op.leg_index(n) for n in discard]
        return partial_trace(op.array, [d for _, d in op.legs], positions)
    mat = np.asarray(op)
    dims = list(dims)
    n = len(dims)
    positions = set(discard)
    for p in positions:
        if not 0 <= p < n:
            raise KeyError(f"unknown leg position {p}")
    tensor = mat.reshape(dims + dims)
    # einsum: repeated letter on (ket_i, bra_i) traces leg i
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ValueError("too many legs")
    ket = list(letters[:n])
    bra = list(letters[n : 2 * n])
    out = []
    for i in range(n):
        if i in positions:
            bra[i] = ket[i]
        else:
            out.append(i)
    sub = "".join(ket) + "".join(bra) + "->" + "".join(ket[i] for i in out) + "".join(
        letters[n + i] for i in out
    )
    reduced = np.einsum(sub, tensor)
    d_keep = math.prod(dims[i] for i in out) if out else 1
    return reduced.reshape(d_keep, d_keep)


def pauli_labels(n_qubits: int):
    """All length-n Pauli strings in lexicographic (I, X, Y, Z) order."""
    return ["".join(p) for p in product("IXYZ", repeat=n_qubits)]


def pauli_string_matrix(label) -> np.ndarray:
    """Kronecker product of single-qubit Paulis, e.g. ``"XZ" -> X kron Z``."""
    if isinstance(label, str):
        factors = list(label)
    else:
        factors = list(label)
    return kron_all(PAULIS[f] for f in factors)


def pauli_string_sparse_vec(label):
    """Row-major vec of a Pauli string as ``(indices, values)``.

    An n-qubit Pauli string has exactly 2^n nonzero entries of unit modulus;
    returning them sparsely keeps large constraint matrices cheap.
    """
    rows = np.array([0], dtype=np.int64)
    cols = np.array([0], dtype=np.int64)
    vals = np.array([1.0 + 0j])
    for f in label:
        p = PAULIS[f]
        # each single-qubit Pauli has one nonzero per row: entry (r, c(r))
        c_of_r = np.array([np.nonzero(p[r])[0][0] for r in range(2)])
        v_of_r = np.array([p[r, c_of_r[r]] for r in range(2)])
        rows = (rows[:, None] * 2 + np.arange(2)[None, :]).reshape(-1)
        cols = (cols[:, None] * 2 + c_of_r[None, :]).reshape(-1)
        vals = (vals[:, None] * v_of_r[None, :]).reshape(-1)
    dim = 2 ** len(label)
    return rows * dim + cols, vals


def pauli_coefficient(op: np.ndarray, label) -> float:
    """Unnormalized Pauli coefficient ``Tr[op P]`` (real for Hermitian op)."""
    idx, vals = pauli_string_sparse_vec(label)
    flat = np.asarray(op).reshape(-1)
    dim = int(round(math.sqrt(flat.size)))
    rows, cols = idx // dim, idx % dim
    # Tr[op P] = sum_rc op[c, r] P[r, c]
    return complex(np.dot(flat[cols * dim + rows], vals)).real


def pauli_expansion(op: np.ndarray):
    """All unnormalized coefficients of an n-qubit operator, in label order."""
    n = int(round(math.log2(op.shape[0])))
    return np.array([pauli_coefficient(op, lab) for lab in pauli_labels(n)])


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fixing."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal real and imaginary parts, Hermitized as (M + M†)/2."""
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (m + dagger(m)) / 2


def swap_legs(mat: np.ndarray, dims, perm) -> np.ndarray:
    """Reorder the subsystems of a multipartite operator.

    ``perm[i]`` is the old position of the leg that ends up at position i.
    """
    dims = list(dims)
    n = len(dims)
    tensor = np.asarray(mat).reshape(dims + dims)
    axes = list(perm) + [n + p for p in perm]
    out = tensor.transpose(axes)
    d = math.prod(dims)
    return out.reshape(d, d)
