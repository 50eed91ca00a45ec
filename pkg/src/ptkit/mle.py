"""Maximum-likelihood process reconstruction.

The estimator minimizes f(Y) = -sum n log p over physical process Choi
states, where p is the tensor of predicted probabilities for every basis
sequence and POVM effect. Minimization is projected gradient descent with
backtracking: each iteration projects a gradient step onto the intersection
of the PSD cone with the causality-affine space and then line-searches along
the feasible direction. Probabilities and gradients are assembled by
contracting one rank-4 operation tensor at a time; the Kronecker factor of a
full sequence is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import dagger
from .channels import Povm, choi_matrix, qst_linear_inversion
from .process_tensor import AffineConstraintSet, ProcessChoi, pt_linear_inversion
from .projection import ConicProblem, conic_project

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class DataTensor:
    """Observed counts indexed (effect, mu_0, ..., mu_{k-1}).

    ``counts`` holds integers when sampled (summing to settings*shots per
    sequence) or probabilities when exact (summing to 1 per sequence).
    """

    counts: np.ndarray
    shots: int | None = None

    def __post_init__(self):
        if np.any(self.counts < 0):
            raise ValueError("negative counts")

    @property
    def effect_count(self) -> int:
        return self.counts.shape[0]

    @property
    def basis_sizes(self):
        return self.counts.shape[1:]

    @property
    def steps(self) -> int:
        return self.counts.ndim - 1

    def frequencies(self) -> np.ndarray:
        """Counts normalized so each sequence's effect column sums to 1."""
        totals = self.counts.sum(axis=0, keepdims=True)
        if np.any(totals <= 0):
            raise ValueError("sequence with no counts")
        return self.counts / totals


def _basis_stacks(bases, d: int):
    return [
        np.stack([choi_matrix(b).reshape(d, d, d, d) for b in basis])
        for basis in bases
    ]


def _povm_stack(povm: Povm) -> np.ndarray:
    return np.stack(povm.effects)


def _choi_of(pt) -> tuple[np.ndarray, int, int]:
    if isinstance(pt, ProcessChoi):
        return pt.matrix, pt.steps, pt.dim
    raise TypeError("expected ProcessChoi")


def _probabilities(mat: np.ndarray, bstacks, estack, k: int, d: int) -> np.ndarray:
    cur = mat.reshape([d] * (2 * (2 * k + 1)))
    m = 2 * k + 1
    n_mu = 0
    for j in range(k):
        mus = _LETTERS[:n_mu]
        kets = _LETTERS[n_mu : n_mu + m]
        bras = _LETTERS[n_mu + m : n_mu + 2 * m]
        new = _LETTERS[n_mu + 2 * m]
        sub = (
            f"{mus}{kets}{bras},{new}{kets[-2:]}{bras[-2:]}"
            f"->{mus}{new}{kets[:-2]}{bras[:-2]}"
        )
        cur = np.einsum(sub, cur, bstacks[j])
        n_mu += 1
        m -= 2
    mus = _LETTERS[:n_mu]
    ket, bra = _LETTERS[n_mu], _LETTERS[n_mu + 1]
    e = _LETTERS[n_mu + 2]
    # remaining axes are (mu..., ket, bra); Tr[Pi rho] pairs Pi[s, t] = Pi[bra, ket]
    p = np.einsum(f"{e}{bra}{ket},{mus}{ket}{bra}->{e}{mus}", estack, cur)
    return p.real * d**k


def _gradient_tensor(w: np.ndarray, bstacks, estack, k: int, d: int) -> np.ndarray:
    """sum_{e,mu} w[e,mu] (Pi_e kron B^T ... B^T) assembled leg by leg."""
    n_mu = k
    mus = _LETTERS[:n_mu]
    e = _LETTERS[n_mu]
    t, s = _LETTERS[n_mu + 1], _LETTERS[n_mu + 2]
    cur = np.einsum(f"{e}{mus},{e}{s}{t}->{mus}{t}{s}", w, estack)
    kets, bras = t, s
    free = n_mu + 3
    for j in range(k - 1, -1, -1):
        mu_keep = _LETTERS[:j]
        mj = _LETTERS[j]
        ki, ko, bi, bo = _LETTERS[free : free + 4]
        free += 4
        sub = (
            f"{mu_keep}{mj}{kets}{bras},{mj}{ki}{ko}{bi}{bo}"
            f"->{mu_keep}{kets}{ki}{ko}{bras}{bi}{bo}"
        )
        cur = np.einsum(sub, cur, bstacks[j])
        kets = kets + ki + ko
        bras = bras + bi + bo
    size = d ** (2 * k + 1)
    return cur.reshape(size, size) * d**k


def predicted_probabilities(pt: ProcessChoi, bases, povm: Povm) -> np.ndarray:
    """Probability tensor p[effect, mu_0, ..., mu_{k-1}] under the model."""
    mat, k, d = _choi_of(pt)
    bases = _normalize_bases(bases, k)
    return _probabilities(mat, _basis_stacks(bases, d), _povm_stack(povm), k, d)


def _normalize_bases(bases, k: int):
    from .channels import per_step_bases

    return per_step_bases(bases, k)


PROBABILITY_FLOOR = 1e-12


def log_likelihood(mat: np.ndarray, freqs: np.ndarray, bstacks, estack, k, d) -> float:
    p = _probabilities(mat, bstacks, estack, k, d)
    p = np.clip(p, PROBABILITY_FLOOR, None)
    return float(-(freqs * np.log(p)).sum())


def log_likelihood_gradient(mat, freqs, bstacks, estack, k, d) -> np.ndarray:
    """Gradient in the Hilbert-Schmidt sense: df = Re Tr[grad^dag dY].

    The assembled tensor holds the raw partials dF/dY_xy; transposing (equal
    to conjugating, since both are Hermitian) converts it to the trace
    pairing used by the line search and the projection step.
    """
    p = _probabilities(mat, bstacks, estack, k, d)
    p = np.clip(p, PROBABILITY_FLOOR, None)
    w = np.where(freqs > 0, freqs / p, 0.0)
    g = -_gradient_tensor(w, bstacks, estack, k, d).T
    return (g + dagger(g)) / 2


def cost_and_gradient(pt: ProcessChoi, data: DataTensor, bases, povm: Povm):
    """Public cost/gradient pair at a given model; used by tests and reports."""
    mat, k, d = _choi_of(pt)
    bases = _normalize_bases(bases, k)
    bstacks, estack = _basis_stacks(bases, d), _povm_stack(povm)
    freqs = data.frequencies()
    return (
        log_likelihood(mat, freqs, bstacks, estack, k, d),
        log_likelihood_gradient(mat, freqs, bstacks, estack, k, d),
    )


@dataclass
class MleConfig:
    """pgdb metaparameters; ``step_size`` defaults to 2 n^2 / 3."""

    step_size: float | None = None
    gamma: float = 0.3
    shrink: float = 0.5
    stop_delta: float = 1e-6
    max_outer_iterations: int = 400
    beta_min: float = 1e-10
    projection_tolerance: float = 1e-7
    projection_max_iterations: int = 2000

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.stop_delta <= 0:
            raise ValueError("stop_delta must be positive")


@dataclass
class FitReport:
    cost: float
    iterations: int
    converged: bool
    cost_trace: list = field(default_factory=list)
    projection_eigs: int = 0
    final_residual: float = float("nan")
    min_eigenvalue: float = float("nan")
    messages: list = field(default_factory=list)

    def as_dict(self):
        return {
            "final_cost": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "cost_trace": list(map(float, self.cost_trace)),
            "projection_eigs": self.projection_eigs,
            "final_constraint_residual": self.final_residual,
            "min_eigenvalue": self.min_eigenvalue,
            "messages": list(self.messages),
        }


def pgdb_fit(
    data: DataTensor,
    bases,
    povm: Povm,
    constraints: AffineConstraintSet,
    cfg: MleConfig | None = None,
    initial: ProcessChoi | None = None,
) -> tuple[ProcessChoi, FitReport]:
    """Projected gradient descent with backtracking from the maximally mixed
    state; every iterate stays PSD and causal to the projection tolerance."""
    cfg = cfg or MleConfig()
    k = data.steps
    bases = _normalize_bases(bases, k)
    d = int(round(np.sqrt(choi_matrix(bases[0][0]).shape[0])))
    n = d ** (2 * k + 1)
    bstacks, estack = _basis_stacks(bases, d), _povm_stack(povm)
    freqs = data.frequencies()

    y = initial.matrix.copy() if initial is not None else np.eye(n, dtype=complex) / n
    mu = cfg.step_size if cfg.step_size is not None else 2 * n**2 / 3
    report = FitReport(cost=np.inf, iterations=0, converged=False)

    f_cur = log_likelihood(y, freqs, bstacks, estack, k, d)
    report.cost_trace.append(f_cur)
    lam_ws = None
    mu_established = False
    for it in range(cfg.max_outer_iterations):
        grad = log_likelihood_gradient(y, freqs, bstacks, estack, k, d)
        proj = None
        for _ in range(30):
            # until a workable step size is found, probe with a small budget
            budget = cfg.projection_max_iterations if mu_established else 150
            proj = conic_project(
                ConicProblem(
                    y - mu * grad,
                    constraints,
                    tolerance=cfg.projection_tolerance,
                    max_iterations=budget,
                ),
                lam0=lam_ws,
            )
            report.projection_eigs += proj.eig_count
            if proj.converged:
                lam_ws = proj.dual_solution
                mu_established = True
                break
            mu /= 2  # smaller steps keep the projection cheap and reliable
            report.messages.append(f"projection retry, step halved to {mu:.3g}")
        direction = proj.solution - y
        slope = float(np.real(np.trace(dagger(direction) @ grad)))
        if slope >= 0:
            report.messages.append("no descent direction; stopping")
            break
        beta = 1.0
        while True:
            f_new = log_likelihood(y + beta * direction, freqs, bstacks, estack, k, d)
            if f_new <= f_cur + cfg.gamma * beta * slope:
                break
            beta *= cfg.shrink
            if beta < cfg.beta_min:
                report.messages.append("backtracking underflow")
                break
        if beta < cfg.beta_min:
            break
        y = y + beta * direction
        decrease = f_cur - f_new
        f_cur = f_new
        report.cost_trace.append(f_cur)
        report.iterations = it + 1
        if decrease < cfg.stop_delta:
            report.converged = True
            break

    y = (y + dagger(y)) / 2
    report.cost = f_cur
    report.final_residual = constraints.residual(y)
    report.min_eigenvalue = float(np.linalg.eigvalsh(y).min())
    return ProcessChoi(y, k, d), report


def li_fit(data: DataTensor, bases, povm: Povm) -> ProcessChoi:
    """Linear-inversion pipeline: per-sequence state tomography followed by
    the dual-frame sum. The result interpolates the data but may be
    unphysical for sampled counts."""
    from .channels import dual_frame

    k = data.steps
    bases = _normalize_bases(bases, k)
    freqs = data.frequencies()
    states = {}
    for mu in np.ndindex(*data.basis_sizes):
        probs = freqs[(slice(None),) + mu]
        states[mu] = qst_linear_inversion(probs, povm)
    duals = [dual_frame(b) for b in bases]
    return pt_linear_inversion(states, duals)
