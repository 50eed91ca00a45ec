"""Unitary control-basis construction.

Single-qubit gates are parametrized by three angles,

    V(theta, phi, lam) = [[cos(theta/2),             -e^{i lam} sin(theta/2)],
                          [e^{i phi} sin(theta/2), e^{i(lam+phi)} cos(theta/2)]],

and the channel-level overlap between two unitaries is the Hilbert-Schmidt
inner product of their superoperators, |Tr[u^dag v]|^2, normalized by d^2 so
that self-overlap is 1. A basis with minimal mutual overlap spreads sampling
noise evenly over superoperator space; exactly unbiased unitary bases do not
exist in the 10-dimensional single-qubit case, so the best approximation is
found numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channels import superop_of_unitary

# Parameter triples (theta, phi, lam) of the ten-element reference basis with
# minimal average mutual overlap.
REFERENCE_PARAMS = np.array(
    [
        [1.1148, 1.5606, 0.8160],
        [-2.1993, -2.0552, -0.3564],
        [0.9616, -0.8573, 1.2333],
        [2.2655, -2.7083, 0.3154],
        [-0.1013, -0.5548, -1.1472],
        [1.8434, 0.8074, -1.1772],
        [-2.2036, 1.9589, 2.4002],
        [-1.2038, -0.2023, 1.2355],
        [2.1791, 3.2836, 2.3524],
        [-1.3116, 2.3082, 0.2882],
    ]
)


def unitary_from_params(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (lam + phi)) * c],
        ]
    )


def _unitaries(params: np.ndarray) -> np.ndarray:
    """Vectorized gate construction for an (N, 3) parameter array."""
    theta, phi, lam = params[:, 0], params[:, 1], params[:, 2]
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    u = np.empty((len(params), 2, 2), dtype=complex)
    u[:, 0, 0] = c
    u[:, 0, 1] = -np.exp(1j * lam) * s
    u[:, 1, 0] = np.exp(1j * phi) * s
    u[:, 1, 1] = np.exp(1j * (lam + phi)) * c
    return u


def hs_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """Normalized channel overlap |Tr[u^dag v]|^2 / d^2 (self-overlap 1)."""
    d = u.shape[0]
    t = np.trace(u.conj().T @ v)
    return float(abs(t) ** 2) / d**2


def simplified_overlap(p1, p2) -> float:
    """Quoted closed form 4 cos^2((dlam + dphi)/2) cos^2(dtheta), kept only
    for cross-checking: it disagrees with the direct |Tr[u^dag v]|^2 off the
    equal-angle locus (the tests record the deviation)."""
    t1, f1, l1 = p1
    t2, f2, l2 = p2
    raw = 4 * np.cos(0.5 * (l1 - l2 + f1 - f2)) ** 2 * np.cos(t1 - t2) ** 2
    return float(raw) / 4


def overlap_matrix(params: np.ndarray) -> np.ndarray:
    u = _unitaries(np.asarray(params, dtype=float))
    gram = np.einsum("iba,jba->ij", u.conj(), u)
    return np.abs(gram) ** 2 / 4


@dataclass(frozen=True)
class UnitaryBasis:
    """N parametrized gates plus their normalized overlap matrix."""

    params: np.ndarray
    overlaps: np.ndarray
    objective: float

    @property
    def n(self) -> int:
        return len(self.params)

    def matrices(self):
        return [unitary_from_params(*p) for p in self.params]

    def superoperators(self) -> np.ndarray:
        return np.stack([superop_of_unitary(u) for u in self.matrices()])

    def average_overlaps(self) -> np.ndarray:
        """Per-element column mean of the overlap matrix (diagonal included)."""
        return self.overlaps.mean(axis=0)

    def superop_rank(self, tol: float = 1e-8) -> int:
        stacked = self.superoperators().reshape(self.n, -1)
        return int(np.linalg.matrix_rank(stacked, tol=tol))


def basis_from_params(params: np.ndarray) -> UnitaryBasis:
    params = np.asarray(params, dtype=float)
    ov = overlap_matrix(params)
    obj = float(np.sum(np.triu(ov, 1) ** 2))
    return UnitaryBasis(params, ov, obj)


def reference_muub() -> UnitaryBasis:
    return basis_from_params(REFERENCE_PARAMS)


def _objective(x: np.ndarray, n: int) -> float:
    ov = overlap_matrix(x.reshape(n, 3))
    return float(np.sum(np.triu(ov, 1) ** 2))


def muub_search(n: int = 10, seed: int = 0, restarts: int = 32) -> UnitaryBasis:
    """Minimize the summed squared pairwise overlaps over 3n gate angles.

    Multi-start local descent (L-BFGS-B with numerical gradients); returns the
    best basis found across restarts. Deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError("need at least two basis elements")
    rng = np.random.default_rng(seed)
    best_x, best_f = None, np.inf
    for _ in range(restarts):
        x0 = rng.uniform(-np.pi, np.pi, size=3 * n)
        res = minimize(
            _objective,
            x0,
            args=(n,),
            method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10},
        )
        if res.fun < best_f:
            best_f, best_x = res.fun, res.x
    return basis_from_params(best_x.reshape(n, 3))


def random_unitary_basis(n: int, rng: np.random.Generator) -> UnitaryBasis:
    """A basis of uniformly drawn gate angles (no overlap optimization)."""
    return basis_from_params(rng.uniform(-np.pi, np.pi, size=(n, 3)))
