"""States, POVMs and quantum channels in Choi / superoperator / PTM form.

Choi matrices follow the (output kron input) ordering

    choi(E) = sum_ij E[|i><j|] kron |i><j|

and are "unnormalized" when their trace is d for a trace-preserving map; the
``trace_1`` normalization divides by d. Superoperators act on row-vectorized
states, so a unitary u becomes ``u kron conj(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    dagger,
    hermitian_eig,
    kron_all,
    pauli_labels,
    pauli_string_matrix,
    vectorize,
)

TRACE_D = "trace_d"
TRACE_1 = "trace_1"


# ---------------------------------------------------------------------------
# states


def require_density(rho: np.ndarray, eig_floor: float = -1e-9, trace_tol: float = 1e-9):
    """Validate a density matrix; small negative eigenvalues are tolerated."""
    rho = np.asarray(rho)
    if np.abs(rho - dagger(rho)).max() > 1e-9:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho):.3g} != 1")
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < eig_floor:
        raise ValueError(f"density matrix has eigenvalue {vals.min():.3g}")
    return rho


def nearest_density(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace.

    Used on linear-inversion predictions, which may be slightly unphysical.
    """
    herm = (rho + dagger(rho)) / 2
    vals, vecs = np.linalg.eigh(herm)
    vals = np.clip(vals, 0.0, None)
    out = (vecs * vals) @ dagger(vecs)
    tr = np.trace(out).real
    if tr <= 0:
        return np.eye(rho.shape[0]) / rho.shape[0]
    return out / tr


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    vals = np.linalg.eigvalsh((rho - sigma + dagger(rho - sigma)) / 2)
    return float(np.abs(vals).sum() / 2)


@dataclass(frozen=True)
class Povm:
    """A POVM as a list of Hermitian PSD effects summing to the identity."""

    effects: tuple

    def __post_init__(self):
        total = sum(self.effects)
        dim = self.effects[0].shape[0]
        if np.abs(total - np.eye(dim)).max() > 1e-9:
            raise ValueError("POVM effects do not sum to the identity")
        for e in self.effects:
            if np.linalg.eigvalsh((e + dagger(e)) / 2).min() < -1e-9:
                raise ValueError("POVM effect is not PSD")

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self):
        return len(self.effects)


_KET0 = np.array([1, 0], dtype=complex)
_KET1 = np.array([0, 1], dtype=complex)
_KETP = np.array([1, 1], dtype=complex) / np.sqrt(2)
_KETM = np.array([1, -1], dtype=complex) / np.sqrt(2)
_KETIP = np.array([1, 1j], dtype=complex) / np.sqrt(2)
_KETIM = np.array([1, -1j], dtype=complex) / np.sqrt(2)

# effect order: X+, Y+, Z+, X-, Y-, Z-; settings measure (plus, minus) pairs
PAULI_SETTING_EFFECTS = ((0, 3), (1, 4), (2, 5))


def pauli_projectors():
    """The six single-qubit Pauli eigenprojectors in X+,Y+,Z+,X-,Y-,Z- order."""
    kets = [_KETP, _KETIP, _KET0, _KETM, _KETIM, _KET1]
    return [np.outer(k, k.conj()) for k in kets]


def pauli_povm() -> Povm:
    """Six-effect POVM for separately measured X, Y, Z bases, weighted 1/3."""
    return Povm(tuple(p / 3 for p in pauli_projectors()))


def ic_states():
    """Four linearly independent pure qubit states: |0>, |1>, |+>, |i+>."""
    kets = [_KET0, _KET1, _KETP, _KETIP]
    return [np.outer(k, k.conj()) for k in kets]


def measure_and_prepare_basis():
    """Sixteen CP maps rho -> Tr[E rho] sigma: an informationally complete
    operation basis (unnormalized Choi form sigma kron E^T)."""
    states = ic_states()
    return [np.kron(prep, meas.T) for prep in states for meas in states]


# ---------------------------------------------------------------------------
# channels

MAX_ENT = None  # filled below


def _max_ent(d: int) -> np.ndarray:
    """Unnormalized |Phi+><Phi+| with |Phi+> = sum_i |ii>."""
    phi = np.zeros(d * d, dtype=complex)
    phi[:: d + 1] = 1.0
    return np.outer(phi, phi.conj())


@dataclass(frozen=True)
class ChannelChoi:
    """Choi matrix of a channel together with its normalization tag."""

    matrix: np.ndarray
    normalization: str = TRACE_D

    def __post_init__(self):
        if self.normalization not in (TRACE_D, TRACE_1):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def unnormalized(self) -> np.ndarray:
        if self.normalization == TRACE_D:
            return self.matrix
        return self.matrix * self.dim

    def normalized(self) -> np.ndarray:
        if self.normalization == TRACE_1:
            return self.matrix
        return self.matrix / self.dim


def choi_matrix(op, d: int | None = None) -> np.ndarray:
    """Coerce a ChannelChoi or bare array to an unnormalized Choi matrix."""
    if isinstance(op, ChannelChoi):
        return op.unnormalized()
    return np.asarray(op)


def choi_from_map(action, d: int, normalization: str = TRACE_D) -> ChannelChoi:
    """Build the Choi matrix of a linear map from its action on matrix units."""
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            block = np.asarray(action(unit))
            eij = np.zeros((d, d), dtype=complex)
            eij[i, j] = 1.0
            out += np.kron(block, eij)
    if normalization == TRACE_1:
        out = out / d
    return ChannelChoi(out, normalization)


def choi_of_unitary(u: np.ndarray, normalization: str = TRACE_D) -> ChannelChoi:
    d = u.shape[0]
    ext = np.kron(u, np.eye(d))
    mat = ext @ _max_ent(d) @ dagger(ext)
    if normalization == TRACE_1:
        mat = mat / d
    return ChannelChoi(mat, normalization)


def choi_of_kraus(kraus, normalization: str = TRACE_D) -> ChannelChoi:
    d = kraus[0].shape[0]
    return choi_from_map(
        lambda m: sum(k @ m @ dagger(k) for k in kraus), d, normalization
    )


def apply_channel(choi, rho: np.ndarray) -> np.ndarray:
    """Act on a state through the Choi matrix: Tr_in[(I kron rho^T) choi]."""
    mat = choi_matrix(choi)
    d = rho.shape[0]
    if mat.shape[0] != d * d:
        raise ValueError("channel/state dimension mismatch")
    tensor = mat.reshape(d, d, d, d)
    return np.einsum("abcd,bd->ac", tensor, np.asarray(rho))


def superop_of_unitary(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def choi_to_superop(choi, d: int | None = None) -> np.ndarray:
    mat = choi_matrix(choi)
    d = int(round(np.sqrt(mat.shape[0])))
    return mat.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def superop_to_choi(s: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(s.shape[0])))
    return s.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


# ---------------------------------------------------------------------------
# Pauli transfer matrices


@dataclass(frozen=True)
class Ptm:
    """Real channel representation in the Pauli basis; composition is matmul."""

    matrix: np.ndarray

    @property
    def n_qubits(self) -> int:
        return int(round(np.log2(self.matrix.shape[0]) / 2))


def choi_to_ptm(choi) -> Ptm:
    mat = choi_matrix(choi)
    d = int(round(np.sqrt(mat.shape[0])))
    labels = pauli_labels(int(round(np.log2(d))))
    paulis = [pauli_string_matrix(l) for l in labels]
    r = np.empty((len(labels), len(labels)))
    for j, pj in enumerate(paulis):
        out = apply_channel(mat, pj)
        for i, pi in enumerate(paulis):
            r[i, j] = np.trace(pi @ out).real / d
    return Ptm(r)


def ptm_to_choi(p: Ptm, normalization: str = TRACE_D) -> ChannelChoi:
    n = p.n_qubits
    d = 2**n
    labels = pauli_labels(n)
    paulis = [pauli_string_matrix(l) for l in labels]
    mat = np.zeros((d * d, d * d), dtype=complex)
    for i, pi in enumerate(paulis):
        for j, pj in enumerate(paulis):
            if p.matrix[i, j] != 0:
                mat += p.matrix[i, j] * np.kron(pi, pj.T)
    mat /= d
    if normalization == TRACE_1:
        mat = mat / d
    return ChannelChoi(mat, normalization)


def ptm_compose(a: Ptm, b: Ptm) -> Ptm:
    """PTM of the map "a after b"."""
    return Ptm(a.matrix @ b.matrix)


def ptm_of_unitary(u: np.ndarray) -> Ptm:
    return choi_to_ptm(choi_of_unitary(u))


# ---------------------------------------------------------------------------
# dual frames and linear inversion


@dataclass(frozen=True)
class DualFrame:
    """Duals {D_j} of a frame {B_i} under the bilinear pairing Tr[B_i D_j]."""

    duals: tuple
    rank: int


def dual_frame(basis) -> DualFrame:
    """Duals via the Moore-Penrose pseudoinverse of the stacked frame.

    For a linearly independent frame the duality Tr[B_i D_j] = delta_ij is
    exact; for an overcomplete frame the duals still reproduce every element
    of the span.
    """
    basis = [np.asarray(b) for b in basis]
    if not basis:
        raise ValueError("empty basis")
    shape = basis[0].shape
    stacked = np.stack([vectorize(b.T) for b in basis])
    if np.abs(stacked).max() == 0:
        raise ValueError("all-zero basis")
    rank = int(np.linalg.matrix_rank(stacked, tol=1e-10))
    pinv = np.linalg.pinv(stacked, rcond=1e-12)
    duals = tuple(pinv[:, j].reshape(shape) for j in range(len(basis)))
    return DualFrame(duals, rank)


def expansion_coefficients(op: np.ndarray, frame: DualFrame) -> np.ndarray:
    """Coefficients of ``op`` in the frame dual to these duals: Tr[op D_j]."""
    return np.array([np.trace(np.asarray(op) @ d) for d in frame.duals])


@dataclass(frozen=True)
class InstrumentBasis:
    """Control operations for one time step: unnormalized Choi matrices plus
    the dual frame used for linear inversion."""

    elements: tuple
    duals: DualFrame = field(hash=False, default=None)

    def __post_init__(self):
        if self.duals is None:
            object.__setattr__(self, "duals", dual_frame(self.elements))

    @classmethod
    def from_unitaries(cls, unitaries) -> "InstrumentBasis":
        return cls(tuple(choi_of_unitary(u).matrix for u in unitaries))

    def __len__(self):
        return len(self.elements)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.elements[0].shape[0])))


def per_step_bases(bases, k: int):
    """Accept one shared operation basis or a per-step list of bases and
    return k lists of unnormalized Choi matrices."""
    if hasattr(bases, "elements"):  # a single InstrumentBasis for every step
        per_step = [list(bases.elements)] * k
    else:
        items = list(bases)
        first = items[0]
        if hasattr(first, "elements"):
            per_step = [list(b.elements) for b in items]
        elif isinstance(first, (list, tuple)):
            per_step = [list(b) for b in items]
        else:  # flat list of operation matrices shared across steps
            per_step = [items] * k
    if len(per_step) != k:
        raise ValueError(f"expected {k} per-step bases, got {len(per_step)}")
    return [[choi_matrix(b) for b in basis] for basis in per_step]


def qst_linear_inversion(probabilities, povm: Povm) -> np.ndarray:
    """State reconstruction rho = sum_i p_i Delta_i from exact or sampled
    frequencies; the result may be unphysical for noisy data."""
    frame = dual_frame(povm.effects)
    dim = povm.dim
    if frame.rank < dim * dim:
        raise ValueError("POVM is not informationally complete")
    rho = sum(p * d for p, d in zip(probabilities, frame.duals))
    return (rho + dagger(rho)) / 2


def qpt_linear_inversion(outputs, input_duals: DualFrame) -> ChannelChoi:
    """Channel reconstruction choi = sum_i rho'_i kron omega_i^T."""
    d = outputs[0].shape[0]
    mat = np.zeros((d * d, d * d), dtype=complex)
    for rho_out, omega in zip(outputs, input_duals.duals):
        mat += np.kron(rho_out, omega.T)
    return ChannelChoi(mat, TRACE_D)


# ---------------------------------------------------------------------------
# random channels and common noise models


def random_cptp(d: int, rng: np.random.Generator, env_dim: int | None = None) -> ChannelChoi:
    """Random CPTP map from a Haar isometry into a d*env_dim dilation."""
    from .algebra import haar_unitary

    env_dim = env_dim or d
    u = haar_unitary(d * env_dim, rng)
    v = u[:, :d]  # isometry columns: |psi> -> sum_e K_e |psi> kron |e>
    kraus = [v[e * d : (e + 1) * d, :] for e in range(env_dim)]
    return choi_of_kraus(kraus)


def depolarizing_choi(p: float, d: int = 2) -> ChannelChoi:
    return choi_from_map(
        lambda m: (1 - p) * m + p * np.trace(m) * np.eye(d) / d, d
    )


def dephasing_choi(p: float) -> ChannelChoi:
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    return choi_from_map(lambda m: (1 - p) * m + p * (z @ m @ z), 2)
