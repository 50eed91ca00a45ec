"""Conditional-Markov-order models.

A k-step process with memory length l is approximated by k - l + 1
overlapping l-step memory blocks. Block j is reconstructed with a complete
operation basis on its l slots and a fixed operation everywhere else. To act
on a sequence, the first block propagates the state through the first l
operations; every later block is turned into a conditional channel by
contracting its interior operations and delta-tracing its output at the
overlap time, and consecutive blocks are stitched by the shared operation.
Because one operation can enter several blocks, the action is not linear in
the sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .algebra import kron_all, partial_trace
from .channels import Povm, apply_channel, choi_matrix, dual_frame
from .process_tensor import (
    ProcessChoi,
    _contract_trailing_ops,
    _op_tensor,
    causality_constraints,
    pt_apply,
)


@dataclass(frozen=True)
class PlanSetting:
    """One circuit: per-slot basis indices plus a measurement setting."""

    block: int
    ops: tuple
    measurement: int


@dataclass(frozen=True)
class ExperimentPlan:
    """Every circuit needed to fit a k-step order-l memory model."""

    k: int
    markov_order: int
    basis_size: int
    n_measurement_settings: int
    fixed_op: int
    settings: tuple

    @property
    def total_circuits(self) -> int:
        return len(self.settings)

    @property
    def n_blocks(self) -> int:
        return self.k - self.markov_order + 1


def plan_cmo_experiments(
    k: int,
    markov_order: int,
    basis_size: int,
    effect_settings: int = 3,
    fixed_op: int = 0,
) -> ExperimentPlan:
    """All (k - l + 1) * N^l * settings circuits: each block varies its l
    slots over the full basis with the fixed operation elsewhere."""
    if not 1 <= markov_order <= k:
        raise ValueError("markov order must satisfy 1 <= l <= k")
    settings = []
    for block in range(k - markov_order + 1):
        for combo in product(range(basis_size), repeat=markov_order):
            ops = [fixed_op] * k
            for i, c in enumerate(combo):
                ops[block + i] = c
            for m in range(effect_settings):
                settings.append(PlanSetting(block, tuple(ops), m))
    return ExperimentPlan(
        k=k,
        markov_order=markov_order,
        basis_size=basis_size,
        n_measurement_settings=effect_settings,
        fixed_op=fixed_op,
        settings=tuple(settings),
    )


@dataclass(frozen=True)
class MemoryModel:
    """Ordered memory blocks Y_{l+j : j}, each an l-step process Choi."""

    k: int
    markov_order: int
    blocks: tuple
    fixed_op: int = 0

    def __post_init__(self):
        expected = self.k - self.markov_order + 1
        if len(self.blocks) != expected:
            raise ValueError(f"expected {expected} blocks, got {len(self.blocks)}")
        for b in self.blocks:
            if b.steps != self.markov_order:
                raise ValueError("block step count does not match the model order")

    @property
    def dim(self) -> int:
        return self.blocks[0].dim


def fit_cmo(datasets, bases, povm: Povm, markov_order: int, cfg=None):
    """Fit every memory block with the maximum-likelihood estimator.

    Linear inversion is not an option here: stitching requires local partial
    traces, which are ill-defined on a restricted-basis linear-inversion
    object. Returns (model, per-block fit reports).
    """
    from .mle import pgdb_fit

    datasets = list(datasets)
    k = markov_order + len(datasets) - 1
    if not datasets:
        raise ValueError("no block datasets")
    d = 2
    constraints = causality_constraints(markov_order, d)
    blocks, reports = [], []
    for data in datasets:
        if data.steps != markov_order:
            raise ValueError("block dataset has wrong number of steps")
        block, report = pgdb_fit(data, bases, povm, constraints, cfg)
        blocks.append(block)
        reports.append(report)
    model = MemoryModel(k=k, markov_order=markov_order, blocks=tuple(blocks))
    return model, reports


def _require_cp(op_mat: np.ndarray):
    if np.linalg.eigvalsh((op_mat + op_mat.conj().T) / 2).min() < -1e-8:
        raise ValueError("operation is not completely positive")


def conditional_channel(block: ProcessChoi, interior_ops, monitor=None) -> np.ndarray:
    """Contract a block's interior operations and trace the overlap output.

    Returns the unnormalized Choi matrix (out, in) of the conditional channel
    carrying the state across the block's final step.
    """
    l = block.steps
    d = block.dim
    interior_ops = list(interior_ops)
    if len(interior_ops) != l - 1:
        raise ValueError(f"expected {l - 1} interior operations")
    tensors = [_op_tensor(op, d) for op in interior_ops]
    cur, m = _contract_trailing_ops(block.as_tensor(), block.n_legs, tensors, monitor)
    # remaining legs (o_l, i_l, o_{l-1}): delta-trace the stale output o_{l-1}
    mat = cur.reshape(d**m, d**m)
    cond = partial_trace(mat, [d] * m, [m - 1])
    return cond * d**l


def cmo_apply(model: MemoryModel, ops, monitor=None) -> np.ndarray:
    """Final state of the stitched memory model for a k-step sequence."""
    ops = [choi_matrix(o) for o in ops]
    if len(ops) != model.k:
        raise ValueError(f"expected {model.k} operations, got {len(ops)}")
    for op in ops:
        _require_cp(op)
    l = model.markov_order
    rho = pt_apply(model.blocks[0], ops[:l], monitor)
    for b in range(1, model.k - l + 1):
        chi = conditional_channel(model.blocks[b], ops[b : b + l - 1], monitor)
        rho = apply_channel(chi, apply_channel(ops[b + l - 1], rho))
    return rho


def assemble_block_data(plan: ExperimentPlan, outcome_counts, block: int):
    """Shape per-setting two-outcome counts into one block's data tensor.

    ``outcome_counts[i]`` are the (plus, minus) counts of ``plan.settings[i]``.
    The six-effect tensor is indexed (effect, mu_0, ..., mu_{l-1}) over the
    block's varying slots.
    """
    from .channels import PAULI_SETTING_EFFECTS
    from .mle import DataTensor

    l = plan.markov_order
    n = plan.basis_size
    counts = np.zeros((6,) + (n,) * l)
    found = False
    for setting, pair in zip(plan.settings, outcome_counts):
        if setting.block != block:
            continue
        found = True
        mu = tuple(setting.ops[block + i] for i in range(l))
        plus_idx, minus_idx = PAULI_SETTING_EFFECTS[setting.measurement]
        counts[(plus_idx,) + mu] += pair[0]
        counts[(minus_idx,) + mu] += pair[1]
    if not found:
        raise KeyError(f"plan contains no settings for block {block}")
    return DataTensor(counts)


def reconstruct_from_conditionals(pt: ProcessChoi, mem_lo: int, mem_hi: int, basis):
    """Rebuild a process Choi from conditional future/past marginals.

    Verification utility: for a process whose future and past are genuinely
    independent conditioned on the memory window (operations at times
    ``mem_lo..mem_hi``), summing  future kron dual^T kron past  over a full
    basis on the window reproduces the original Choi state exactly.
    """
    k, d = pt.steps, pt.dim
    if not 0 <= mem_lo <= mem_hi <= k - 1:
        raise ValueError("memory window out of range")
    w = mem_hi - mem_lo + 1
    basis = [choi_matrix(b) for b in basis]
    duals = dual_frame(basis).duals
    n_legs = pt.n_legs
    # ops at time t consume legs (i_{t+1}, o_t) at positions 2(k-t)-1, 2(k-t)
    first_pos = 2 * (k - mem_hi) - 1
    n_f = first_pos
    n_p = n_legs - 2 * w - n_f
    tensor = pt.as_tensor()
    rec = np.zeros_like(pt.matrix)
    for mu in product(range(len(basis)), repeat=w):
        # mu[0] belongs to slot mem_lo; leg pairs run from slot mem_hi down
        window_ops = [basis[m] for m in reversed(mu)]
        cond = _contract_window(tensor, n_legs, d, first_pos, window_ops)
        dims = [d] * (n_f + n_p)
        tr = float(np.trace(cond).real)
        if abs(tr) < 1e-300:
            continue
        fut = partial_trace(cond, dims, list(range(n_f, n_f + n_p)))
        past = partial_trace(cond, dims, list(range(n_f)))
        dual = kron_all(duals[m] for m in reversed(mu))
        rec = rec + np.kron(np.kron(fut, dual.T), past) / tr
    return ProcessChoi((rec + rec.conj().T) / 2, k, d)


def _contract_window(tensor, n_legs, d, first_pos, op_mats):
    """Contract operation Chois into consecutive (i, o) leg pairs starting at
    ``first_pos``; returns the reduced matrix over the remaining legs."""
    from .process_tensor import _LETTERS

    w = len(op_mats)
    kets = list(_LETTERS[:n_legs])
    bras = list(_LETTERS[n_legs : 2 * n_legs])
    operands = [tensor]
    subs = ["".join(kets) + "".join(bras)]
    next_letter = 2 * n_legs
    for t_idx in range(w):
        pos = first_pos + 2 * t_idx
        op = op_mats[t_idx].reshape(d, d, d, d)
        operands.append(op)
        subs.append(kets[pos] + kets[pos + 1] + bras[pos] + bras[pos + 1])
    keep = [i for i in range(n_legs) if not (first_pos <= i < first_pos + 2 * w)]
    out = "".join(kets[i] for i in keep) + "".join(bras[i] for i in keep)
    expr = ",".join(subs) + "->" + out
    cur = np.einsum(expr, *operands, optimize=True)
    dk = d ** len(keep)
    return cur.reshape(dk, dk)
