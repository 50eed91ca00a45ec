"""Model validation and model-based sequence optimization.

Reconstruction fidelity draws Haar-random unitary sequences, compares model
predictions against the exact simulator (or held-out reconstructions), and
reports the fidelity distribution. The optimizers search gate angles to
steer the modelled process toward a target state, or to best preserve a set
of input states simultaneously; both run multi-start local search seeded
with the unmodified gates so the result never falls below the naive choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .algebra import dagger, haar_unitary
from .basis_design import unitary_from_params
from .channels import choi_of_unitary, nearest_density, require_density
from .markov_order import MemoryModel, cmo_apply
from .process_tensor import ProcessChoi, pt_apply


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity Tr[sqrt(sqrt(rho) sigma sqrt(rho))]^2 via eigenbases."""
    require_density(rho)
    require_density(sigma)
    vals, vecs = np.linalg.eigh((rho + dagger(rho)) / 2)
    sqrt_rho = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ dagger(vecs)
    inner = sqrt_rho @ sigma @ sqrt_rho
    ivals = np.linalg.eigvalsh((inner + dagger(inner)) / 2)
    f = float(np.sqrt(np.clip(ivals, 0.0, None)).sum() ** 2)
    return min(f, 1.0 + 1e-9)


@dataclass(frozen=True)
class FidelityReport:
    fidelities: np.ndarray
    seed: int

    @property
    def mean(self) -> float:
        return float(self.fidelities.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.fidelities))

    @property
    def std(self) -> float:
        return float(self.fidelities.std())

    def as_dict(self):
        return {
            "seed": self.seed,
            "n_sequences": int(len(self.fidelities)),
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "fidelities": [float(f) for f in self.fidelities],
        }


def haar_sequences(k: int, n: int, seed: int, dim: int = 2):
    """n sequences of k Haar-random unitary gates; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    return [[haar_unitary(dim, rng) for _ in range(k)] for _ in range(n)]


def predict(model, ops) -> np.ndarray:
    """Dispatch a sequence through either model type."""
    if isinstance(model, MemoryModel):
        return cmo_apply(model, ops)
    if isinstance(model, ProcessChoi):
        return pt_apply(model, ops)
    raise TypeError(f"cannot predict with {type(model).__name__}")


def reconstruction_fidelity(
    model,
    oracle,
    n_sequences: int = 100,
    seed: int = 0,
    sequences=None,
    oracle_states=None,
) -> FidelityReport:
    """Fidelity distribution between model predictions and true outputs.

    ``oracle`` is a simulator process; alternatively pass precomputed
    ``sequences`` and matching held-out ``oracle_states``. Model predictions
    are clipped to the nearest density matrix before comparison, since
    linear-inversion models may predict slightly unphysical states.
    """
    from .simulator import SeProcess, measured_output

    if sequences is None:
        k = model.k if isinstance(model, MemoryModel) else model.steps
        sequences = haar_sequences(k, n_sequences, seed)
    ops_list = [
        [choi_of_unitary(u).matrix if u.shape[0] == 2 else u for u in seq]
        for seq in sequences
    ]
    if oracle_states is None:
        if not isinstance(oracle, SeProcess):
            raise TypeError("oracle must be a simulator process or states")
        oracle_states = [measured_output(oracle, ops) for ops in ops_list]
    fids = []
    for ops, truth in zip(ops_list, oracle_states):
        pred = nearest_density(predict(model, ops))
        fids.append(state_fidelity(pred, truth))
    return FidelityReport(np.array(fids), seed)


@dataclass
class OptimizerConfig:
    restarts: int = 16
    max_evaluations: int = 300
    seed: int = 0
    include_naive_start: bool = True


@dataclass(frozen=True)
class SequenceOptimum:
    params: np.ndarray  # (slots, 3) gate angles
    objective: float
    iterations: int
    evaluations: int

    def as_dict(self):
        return {
            "params": [[float(x) for x in row] for row in self.params],
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "evaluations": int(self.evaluations),
        }


def _params_to_ops(x: np.ndarray, slots: int):
    params = x.reshape(slots, 3)
    return [choi_of_unitary(unitary_from_params(*p)).matrix for p in params]


def _multistart_maximize(objective, slots: int, cfg: OptimizerConfig, starts):
    rng = np.random.default_rng(cfg.seed)
    points = [np.asarray(s, dtype=float).reshape(-1) for s in starts]
    while len(points) < cfg.restarts:
        points.append(rng.uniform(-np.pi, np.pi, size=3 * slots))
    best_x, best_f = None, -np.inf
    total_evals = 0
    total_iters = 0
    for x0 in points[: cfg.restarts]:
        f0 = objective(x0)
        total_evals += 1
        if f0 > best_f:
            best_x, best_f = x0, f0
        res = minimize(
            lambda x: -objective(x),
            x0,
            method="Nelder-Mead",
            options={"maxfev": cfg.max_evaluations, "xatol": 1e-6, "fatol": 1e-10},
        )
        total_evals += res.nfev
        total_iters += res.nit
        if -res.fun > best_f:
            best_x, best_f = res.x, -res.fun
    return best_x, best_f, total_iters, total_evals


def optimize_sequence(
    model, target: np.ndarray, slots: int, cfg: OptimizerConfig | None = None, naive_params=None
) -> SequenceOptimum:
    """Gate angles maximizing the modelled fidelity to a target state."""
    cfg = cfg or OptimizerConfig()
    require_density(target)

    def objective(x):
        pred = nearest_density(predict(model, _params_to_ops(x, slots)))
        return state_fidelity(target, pred)

    starts = []
    if cfg.include_naive_start:
        starts.append(
            np.zeros(3 * slots) if naive_params is None else np.asarray(naive_params)
        )
    x, f, iters, evals = _multistart_maximize(objective, slots, cfg, starts)
    return SequenceOptimum(x.reshape(slots, 3), f, iters, evals)


def optimize_identity(
    model: MemoryModel, input_gates, cfg: OptimizerConfig | None = None
) -> SequenceOptimum:
    """One shared set of gates that best preserves every input state.

    The first circuit slot prepares each ideal state A_i[|0><0|]; the
    remaining k-1 slots carry the shared gates. The objective is the sum of
    squared fidelities between each ideal state and its model prediction.
    """
    cfg = cfg or OptimizerConfig()
    slots = model.k - 1
    ground = np.zeros((2, 2), dtype=complex)
    ground[0, 0] = 1.0
    gate_chois = [choi_of_unitary(g).matrix if g.shape[0] == 2 else g for g in input_gates]
    from .channels import apply_channel

    ideals = [nearest_density(apply_channel(c, ground)) for c in gate_chois]

    def objective(x):
        shared = _params_to_ops(x, slots)
        total = 0.0
        for gate, ideal in zip(gate_chois, ideals):
            pred = nearest_density(predict(model, [gate] + shared))
            total += state_fidelity(ideal, pred) ** 2
        return total

    starts = []
    if cfg.include_naive_start:
        starts.append(np.zeros(3 * slots))  # identity gates
    x, f, iters, evals = _multistart_maximize(objective, slots, cfg, starts)
    return SequenceOptimum(x.reshape(slots, 3), f, iters, evals)
