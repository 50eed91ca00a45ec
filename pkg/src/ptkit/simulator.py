"""Ground-truth generator for multi-time open dynamics.

A process is a qubit coupled to a small environment: controlled dynamics
alternate system-local CP maps with system-environment unitaries,

    rho_k = Tr_E[ U_k A_{k-1} ... U_1 A_0 (rho_SE) ],

optionally with SPAM channels (preparation noise before the first operation,
measurement noise before readout) and periodic environment resets that make
the exact process finite-memory. The same dynamics fed with halves of
maximally entangled pairs yields the exact process Choi state, the oracle
every estimator is tested against.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .algebra import dagger, haar_unitary, kron_all, partial_trace, swap_legs
from .channels import (
    choi_matrix,
    choi_to_superop,
    pauli_projectors,
    per_step_bases,
    require_density,
    superop_to_choi,
)
from .markov_order import ExperimentPlan
from .mle import DataTensor
from .process_tensor import ProcessChoi


@dataclass(frozen=True)
class SeProcess:
    """System-environment dynamics defining a k-step process."""

    env_dim: int
    initial_state: np.ndarray
    step_unitaries: tuple
    system_dim: int = 2
    spam: tuple | None = None  # (prep ChannelChoi, measurement ChannelChoi)
    env_reset_period: int | None = None

    def __post_init__(self):
        dim = self.system_dim * self.env_dim
        require_density(self.initial_state)
        for u in self.step_unitaries:
            if u.shape != (dim, dim):
                raise ValueError("step unitary has wrong dimension")
            if np.abs(u @ dagger(u) - np.eye(dim)).max() > 1e-12:
                raise ValueError("step unitary is not unitary")

    @property
    def steps(self) -> int:
        return len(self.step_unitaries)


def _ground_state(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def zz_coupling_unitary(gt: float) -> np.ndarray:
    """exp(-i gt Z kron Z): a crosstalk-like phase coupling."""
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    return np.diag(np.exp(-1j * gt * np.diag(zz)))


def gue_unitary(dim: int, strength: float, rng: np.random.Generator) -> np.ndarray:
    """exp(-i strength H) for a GUE Hamiltonian: tunable coupling strength."""
    from .algebra import random_hermitian

    h = random_hermitian(dim, rng)
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * strength * vals)) @ dagger(vecs)


def build_process(
    k: int,
    env_dim: int = 2,
    kind: str = "haar",
    seed: int = 0,
    strength: float = 1.0,
    spam: tuple | None = None,
    env_reset_period: int | None = None,
    initial_state: np.ndarray | None = None,
) -> SeProcess:
    """Convenience constructor with seeded named unitary generators."""
    rng = np.random.default_rng(seed)
    dim = 2 * env_dim
    if kind == "haar":
        us = tuple(haar_unitary(dim, rng) for _ in range(k))
    elif kind == "gue":
        us = tuple(gue_unitary(dim, strength, rng) for _ in range(k))
    elif kind == "identity":
        us = tuple(np.eye(dim, dtype=complex) for _ in range(k))
    elif kind == "zz":
        if env_dim != 2:
            raise ValueError("zz coupling needs a single-qubit environment")
        us = tuple(zz_coupling_unitary(strength) for _ in range(k))
    else:
        raise ValueError(f"unknown unitary kind {kind!r}")
    if initial_state is None:
        initial_state = _ground_state(dim)
    return SeProcess(
        env_dim=env_dim,
        initial_state=initial_state,
        step_unitaries=us,
        spam=spam,
        env_reset_period=env_reset_period,
    )


def _apply_system_channel(choi, rho_se: np.ndarray, ds: int, de: int) -> np.ndarray:
    c = choi_matrix(choi).reshape(ds, ds, ds, ds)
    t = rho_se.reshape(ds, de, ds, de)
    out = np.einsum("abcd,bedf->aecf", c, t)
    return out.reshape(ds * de, ds * de)


def _apply_unitary_block(u: np.ndarray, rho: np.ndarray, block: int) -> np.ndarray:
    """Conjugate by (u kron I) where u acts on the leading ``block`` dims."""
    rest = rho.shape[0] // block
    t = rho.reshape(block, rest, block, rest)
    return np.einsum("ab,brcs,dc->ards", u, t, u.conj()).reshape(rho.shape)


def _reset_env(rho_se: np.ndarray, ds: int, de: int, env_state: np.ndarray) -> np.ndarray:
    sys = partial_trace(rho_se, [ds, de], [1])
    return np.kron(sys, env_state)


def _reset_subsystem(rho: np.ndarray, dims, pos: int, state: np.ndarray) -> np.ndarray:
    """Reinitialize one subsystem of a multipartite state to ``state``."""
    n = len(dims)
    rest = partial_trace(rho, dims, [pos])
    rest_dims = [d for i, d in enumerate(dims) if i != pos]
    out = np.kron(rest, state)
    cur_order = [i for i in range(n) if i != pos] + [pos]
    perm = [cur_order.index(i) for i in range(n)]
    return swap_legs(out, rest_dims + [dims[pos]], perm)


def partial_output(p: SeProcess, ops) -> np.ndarray:
    """System state at t_m after the first m <= k operations.

    Used when a memory block ends before the final time: the simulator reads
    the state out directly where hardware would insert a projective
    measurement circuit.
    """
    ops = list(ops)
    if len(ops) > p.steps:
        raise ValueError(f"expected at most {p.steps} operations, got {len(ops)}")
    ds, de = p.system_dim, p.env_dim
    env0 = partial_trace(p.initial_state, [ds, de], [0])
    rho = p.initial_state.copy()
    if p.spam is not None and p.spam[0] is not None:
        rho = _apply_system_channel(p.spam[0], rho, ds, de)
    for j, (op, u) in enumerate(zip(ops, p.step_unitaries)):
        if p.env_reset_period and j > 0 and j % p.env_reset_period == 0:
            rho = _reset_env(rho, ds, de, env0)
        rho = _apply_system_channel(op, rho, ds, de)
        rho = u @ rho @ dagger(u)
    return partial_trace(rho, [ds, de], [1])


def exact_output(p: SeProcess, ops) -> np.ndarray:
    """System state at t_k after a time-ordered sequence of k CP maps."""
    if len(list(ops)) != p.steps:
        raise ValueError(f"expected {p.steps} operations, got {len(list(ops))}")
    return partial_output(p, ops)


def _with_measurement_noise(p: SeProcess, rho: np.ndarray) -> np.ndarray:
    if p.spam is not None and p.spam[1] is not None:
        from .channels import apply_channel

        rho = apply_channel(p.spam[1], rho)
    return rho


def measured_output(p: SeProcess, ops) -> np.ndarray:
    """Pre-readout state: exact output with measurement noise applied."""
    return _with_measurement_noise(p, exact_output(p, ops))


def ground_truth_process_tensor(p: SeProcess) -> ProcessChoi:
    """Exact process Choi state by feeding halves of Bell pairs through the
    dynamics; one fresh pair is swapped in per time step."""
    ds, de, k = p.system_dim, p.env_dim, p.steps
    if ds == 2 and k > 4:
        raise ValueError("ground-truth Choi limited to k <= 4 at qubit scale")
    bell = np.zeros(ds * ds, dtype=complex)
    bell[:: ds + 1] = 1.0
    pair = np.outer(bell, bell.conj()) / ds
    env0 = partial_trace(p.initial_state, [ds, de], [0])
    init = p.initial_state
    if p.spam is not None and p.spam[0] is not None:
        init = _apply_system_channel(p.spam[0], init, ds, de)
    rho = kron_all([init] + [pair] * k)
    dims = [ds, de] + [ds, ds] * k
    n_sub = len(dims)
    for j in range(1, k + 1):
        # swap the system with the B half of pair j (subsystem 2j + 1)
        perm = list(range(n_sub))
        perm[0], perm[2 * j + 1] = perm[2 * j + 1], perm[0]
        rho = swap_legs(rho, dims, perm)
        rho = _apply_unitary_block(p.step_unitaries[j - 1], rho, ds * de)
        if p.env_reset_period and j < k and j % p.env_reset_period == 0:
            rho = _reset_subsystem(rho, dims, 1, env0)
    mat = partial_trace(rho, dims, [1])  # drop the environment
    sub_dims = [ds] + [ds, ds] * k
    # currently [S, A_1, B_1, ..., A_k, B_k]; want [S, A_k, B_k, ..., A_1, B_1]
    perm = [0]
    for j in range(k, 0, -1):
        perm += [2 * j - 1, 2 * j]
    mat = swap_legs(mat, sub_dims, perm)
    return ProcessChoi((mat + dagger(mat)) / 2, k, ds)


# ---------------------------------------------------------------------------
# dataset synthesis


@dataclass(frozen=True)
class SimulatedDataset:
    """Counts from simulated circuits: a full basis grid or a planned subset.

    Grid mode fills ``data`` with a tensor indexed (effect, mu_0, ...); plan
    mode fills ``setting_counts`` with one (plus, minus) pair per plan entry.
    Exact mode stores probabilities instead of sampled integers.
    """

    k: int
    d: int
    exact: bool
    shots: int | None
    seed: int | None
    provenance: str
    data: DataTensor | None = None
    plan: ExperimentPlan | None = None
    setting_counts: np.ndarray | None = None


def process_fingerprint(p: SeProcess) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(p.initial_state).tobytes())
    for u in p.step_unitaries:
        h.update(np.ascontiguousarray(u).tobytes())
    if p.spam is not None:
        for c in p.spam:
            if c is not None:
                h.update(np.ascontiguousarray(choi_matrix(c)).tobytes())
    h.update(json.dumps([p.system_dim, p.env_dim, p.env_reset_period]).encode())
    return h.hexdigest()


def _setting_outcome_probs(rho: np.ndarray, setting: int) -> np.ndarray:
    projectors = pauli_projectors()
    plus = projectors[setting]
    p_plus = float(np.trace(plus @ rho).real)
    p_plus = min(max(p_plus, 0.0), 1.0)
    return np.array([p_plus, 1.0 - p_plus])


def _substream(seed: int, index: int) -> np.random.Generator:
    """Independent per-setting stream: PCG64 seeded by (seed, setting index),
    so parallel and serial generation produce identical counts."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def generate_dataset(
    p: SeProcess,
    bases,
    shots: int | None = None,
    exact: bool = False,
    seed: int = 0,
    plan: ExperimentPlan | None = None,
) -> SimulatedDataset:
    """Simulate every circuit of the full basis grid (or a CMO plan).

    Outcomes follow the X/Y/Z measurement convention of the six-effect POVM:
    counts land at the weighted-effect positions so that grid tensors plug
    directly into the estimators. Sampling uses one multinomial substream per
    (sequence, setting) so datasets are bit-reproducible.
    """
    if exact == (shots is not None):
        raise ValueError("choose exactly one of shots= or exact=True")
    fingerprint = process_fingerprint(p)
    if plan is not None:
        per_step = per_step_bases(bases, plan.k)
        pairs = np.zeros((len(plan.settings), 2))
        n_set = plan.n_measurement_settings
        for idx, setting in enumerate(plan.settings):
            # a block's circuits are read out at the block's final time
            end = setting.block + plan.markov_order
            ops = [per_step[j][setting.ops[j]] for j in range(end)]
            rho = _with_measurement_noise(p, partial_output(p, ops))
            probs = _setting_outcome_probs(rho, setting.measurement)
            if exact:
                pairs[idx] = probs / n_set  # weighted-effect convention
            else:
                pairs[idx] = _substream(seed, idx).multinomial(shots, probs)
        return SimulatedDataset(
            k=plan.k,
            d=p.system_dim,
            exact=exact,
            shots=shots,
            seed=seed,
            provenance=fingerprint,
            plan=plan,
            setting_counts=pairs,
        )
    k = p.steps
    per_step = per_step_bases(bases, k)
    sizes = tuple(len(b) for b in per_step)
    counts = np.zeros((6,) + sizes)
    from .channels import PAULI_SETTING_EFFECTS

    for flat, mu in enumerate(product(*[range(s) for s in sizes])):
        ops = [per_step[j][mu[j]] for j in range(k)]
        rho = measured_output(p, ops)
        for s in range(3):
            probs = _setting_outcome_probs(rho, s)
            plus_idx, minus_idx = PAULI_SETTING_EFFECTS[s]
            if exact:
                counts[(plus_idx,) + mu] = probs[0] / 3
                counts[(minus_idx,) + mu] = probs[1] / 3
            else:
                pair = _substream(seed, flat * 3 + s).multinomial(shots, probs)
                counts[(plus_idx,) + mu] = pair[0]
                counts[(minus_idx,) + mu] = pair[1]
    return SimulatedDataset(
        k=k,
        d=p.system_dim,
        exact=exact,
        shots=shots,
        seed=seed,
        provenance=fingerprint,
        data=DataTensor(counts, shots=shots),
    )


def generate_cmo_datasets(
    p: SeProcess,
    bases,
    markov_order: int,
    shots: int | None = None,
    exact: bool = False,
    seed: int = 0,
    fixed_op: int = 0,
):
    """Plan, simulate and assemble the per-block data tensors for one model."""
    from .markov_order import assemble_block_data, plan_cmo_experiments

    per_step = per_step_bases(bases, p.steps)
    plan = plan_cmo_experiments(
        p.steps, markov_order, len(per_step[0]), fixed_op=fixed_op
    )
    ds = generate_dataset(p, bases, shots=shots, exact=exact, seed=seed, plan=plan)
    blocks = [
        assemble_block_data(plan, ds.setting_counts, b) for b in range(plan.n_blocks)
    ]
    return blocks, ds


# ---------------------------------------------------------------------------
# gate-independent noise


def _require_cptp(choi) -> np.ndarray:
    mat = choi_matrix(choi)
    d = int(round(np.sqrt(mat.shape[0])))
    if np.linalg.eigvalsh((mat + dagger(mat)) / 2).min() < -1e-9:
        raise ValueError("noise channel is not completely positive")
    marginal = partial_trace(mat, [d, d], [0])
    if np.abs(marginal - np.eye(d)).max() > 1e-7:
        raise ValueError("noise channel is not trace preserving")
    return mat


def inject_gate_noise(basis, lam1, lam2):
    """Replace every basis element B by lam2 . B . lam1 (both CPTP).

    Gate-independent noise of this form leaves the linear expansion of any
    target in the basis unchanged, so characterisation quality is unaffected.
    """
    s1 = choi_to_superop(_require_cptp(lam1))
    s2 = choi_to_superop(_require_cptp(lam2))
    noisy = []
    for b in basis:
        sb = choi_to_superop(choi_matrix(b))
        noisy.append(superop_to_choi(s2 @ sb @ s1))
    return noisy
