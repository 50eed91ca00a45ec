"""JSON schemas for datasets, models, bases, plans and simulator configs.

Complex numbers are stored as [re, im] pairs at full double precision, so
every round trip is lossless and bit-stable. Files carry a schema tag and
are validated on load with the JSON path of the offending field. Writers
emit canonical JSON (sorted keys) so reruns are byte-identical.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .basis_design import UnitaryBasis, basis_from_params
from .markov_order import ExperimentPlan, MemoryModel, PlanSetting
from .mle import DataTensor
from .process_tensor import ProcessChoi


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def encode_complex(arr: np.ndarray):
    arr = np.asarray(arr, dtype=complex)
    if not np.isfinite(arr).all():
        raise SchemaError("$", "array contains NaN or Inf")
    def enc(a):
        if a.ndim == 0:
            return [float(a.real), float(a.imag)]
        return [enc(x) for x in a]
    return enc(arr)


def decode_complex(data, path: str = "$") -> np.ndarray:
    def dec(node, p):
        if (
            isinstance(node, list)
            and len(node) == 2
            and all(isinstance(x, (int, float)) for x in node)
        ):
            val = complex(node[0], node[1])
            if not (math.isfinite(node[0]) and math.isfinite(node[1])):
                raise SchemaError(p, "non-finite complex entry")
            return val
        if isinstance(node, list):
            return [dec(x, f"{p}[{i}]") for i, x in enumerate(node)]
        raise SchemaError(p, "expected a [re, im] pair or nested list")
    out = np.asarray(dec(data, path), dtype=complex)
    return out


def encode_real(arr: np.ndarray):
    arr = np.asarray(arr, dtype=float)
    if not np.isfinite(arr).all():
        raise SchemaError("$", "array contains NaN or Inf")
    return arr.tolist()


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _expect(cond, path, message):
    if not cond:
        raise SchemaError(path, message)


def _require_schema(obj, tag):
    _expect(isinstance(obj, dict), "$", "expected a JSON object")
    _expect(obj.get("schema") == tag, "$.schema", f"expected {tag!r}")


# ---------------------------------------------------------------------------
# unitary bases


def basis_to_json(basis: UnitaryBasis, include_matrices: bool = False):
    out = {
        "schema": "ptkit.basis/1",
        "params": [
            {"theta": float(t), "phi": float(p), "lambda": float(l)}
            for t, p, l in basis.params
        ],
        "objective": float(basis.objective),
    }
    if include_matrices:
        out["matrices"] = [encode_complex(m) for m in basis.matrices()]
    return out


def basis_from_json(obj) -> UnitaryBasis:
    _require_schema(obj, "ptkit.basis/1")
    params = []
    for i, entry in enumerate(obj.get("params", [])):
        _expect(
            isinstance(entry, dict) and {"theta", "phi", "lambda"} <= set(entry),
            f"$.params[{i}]",
            "expected an object with theta/phi/lambda",
        )
        params.append([entry["theta"], entry["phi"], entry["lambda"]])
    _expect(len(params) >= 1, "$.params", "empty basis")
    return basis_from_params(np.array(params))


# ---------------------------------------------------------------------------
# process tensors and memory models


def process_choi_to_json(pt: ProcessChoi):
    return {
        "schema": "ptkit.process-choi/1",
        "k": pt.steps,
        "d": pt.dim,
        "matrix": encode_complex(pt.matrix),
    }


def process_choi_from_json(obj) -> ProcessChoi:
    _require_schema(obj, "ptkit.process-choi/1")
    mat = decode_complex(obj["matrix"], "$.matrix")
    k, d = int(obj["k"]), int(obj["d"])
    size = d ** (2 * k + 1)
    _expect(mat.shape == (size, size), "$.matrix", f"expected shape ({size},{size})")
    return ProcessChoi(mat, k, d)


def memory_model_to_json(model: MemoryModel):
    return {
        "schema": "ptkit.memory-model/1",
        "k": model.k,
        "markov_order": model.markov_order,
        "fixed_op": model.fixed_op,
        "blocks": [encode_complex(b.matrix) for b in model.blocks],
        "d": model.dim,
    }


def memory_model_from_json(obj) -> MemoryModel:
    _require_schema(obj, "ptkit.memory-model/1")
    k, l, d = int(obj["k"]), int(obj["markov_order"]), int(obj["d"])
    blocks = []
    for i, b in enumerate(obj["blocks"]):
        mat = decode_complex(b, f"$.blocks[{i}]")
        size = d ** (2 * l + 1)
        _expect(
            mat.shape == (size, size), f"$.blocks[{i}]", f"expected shape ({size},{size})"
        )
        blocks.append(ProcessChoi(mat, l, d))
    return MemoryModel(
        k=k, markov_order=l, blocks=tuple(blocks), fixed_op=int(obj.get("fixed_op", 0))
    )


def load_model(obj):
    if isinstance(obj, dict) and obj.get("schema") == "ptkit.process-choi/1":
        return process_choi_from_json(obj)
    if isinstance(obj, dict) and obj.get("schema") == "ptkit.memory-model/1":
        return memory_model_from_json(obj)
    raise SchemaError("$.schema", "not a recognized model file")


# ---------------------------------------------------------------------------
# experiment plans


def plan_to_json(plan: ExperimentPlan):
    return {
        "schema": "ptkit.plan/1",
        "k": plan.k,
        "markov_order": plan.markov_order,
        "basis_size": plan.basis_size,
        "n_measurement_settings": plan.n_measurement_settings,
        "fixed_op": plan.fixed_op,
        "total_circuits": plan.total_circuits,
        "settings": [
            {"block": s.block, "ops": list(s.ops), "measurement": s.measurement}
            for s in plan.settings
        ],
    }


def plan_from_json(obj) -> ExperimentPlan:
    _require_schema(obj, "ptkit.plan/1")
    settings = []
    for i, s in enumerate(obj["settings"]):
        settings.append(
            PlanSetting(int(s["block"]), tuple(int(o) for o in s["ops"]), int(s["measurement"]))
        )
    plan = ExperimentPlan(
        k=int(obj["k"]),
        markov_order=int(obj["markov_order"]),
        basis_size=int(obj["basis_size"]),
        n_measurement_settings=int(obj["n_measurement_settings"]),
        fixed_op=int(obj.get("fixed_op", 0)),
        settings=tuple(settings),
    )
    _expect(
        plan.total_circuits == int(obj["total_circuits"]),
        "$.total_circuits",
        "does not match the settings list",
    )
    return plan


# ---------------------------------------------------------------------------
# datasets


def dataset_to_json(ds):
    from .simulator import SimulatedDataset

    assert isinstance(ds, SimulatedDataset)
    out = {
        "schema": "ptkit.dataset/1",
        "k": ds.k,
        "d": ds.d,
        "exact": bool(ds.exact),
        "shots": ds.shots,
        "seed": ds.seed,
        "provenance": ds.provenance,
    }
    if ds.data is not None:
        out["layout"] = "grid"
        out["counts"] = encode_real(ds.data.counts)
    else:
        out["layout"] = "plan"
        out["plan"] = plan_to_json(ds.plan)
        out["setting_counts"] = encode_real(ds.setting_counts)
    return out


def dataset_from_json(obj):
    from .simulator import SimulatedDataset

    _require_schema(obj, "ptkit.dataset/1")
    k, d = int(obj["k"]), int(obj["d"])
    common = dict(
        k=k,
        d=d,
        exact=bool(obj["exact"]),
        shots=obj.get("shots"),
        seed=obj.get("seed"),
        provenance=obj.get("provenance", ""),
    )
    if obj.get("layout") == "grid":
        counts = np.asarray(obj["counts"], dtype=float)
        _expect(counts.ndim == k + 1, "$.counts", f"expected {k + 1} dimensions")
        _expect(counts.shape[0] == 6, "$.counts", "expected 6 effects on axis 0")
        _expect(np.isfinite(counts).all(), "$.counts", "non-finite count")
        _expect((counts >= 0).all(), "$.counts", "negative count")
        return SimulatedDataset(data=DataTensor(counts, shots=common["shots"]), **common)
    if obj.get("layout") == "plan":
        plan = plan_from_json(obj["plan"])
        pairs = np.asarray(obj["setting_counts"], dtype=float)
        _expect(
            pairs.shape == (plan.total_circuits, 2),
            "$.setting_counts",
            f"expected shape ({plan.total_circuits}, 2)",
        )
        return SimulatedDataset(plan=plan, setting_counts=pairs, **common)
    raise SchemaError("$.layout", "expected 'grid' or 'plan'")


# ---------------------------------------------------------------------------
# density matrices and simulator configs


def state_to_json(rho: np.ndarray):
    return {"schema": "ptkit.state/1", "matrix": encode_complex(rho)}


def state_from_json(obj) -> np.ndarray:
    _require_schema(obj, "ptkit.state/1")
    return decode_complex(obj["matrix"], "$.matrix")


def process_to_json(p):
    from .channels import choi_matrix
    from .simulator import SeProcess

    assert isinstance(p, SeProcess)
    out = {
        "schema": "ptkit.process/1",
        "system_dim": p.system_dim,
        "env_dim": p.env_dim,
        "initial_state": encode_complex(p.initial_state),
        "unitaries": {"kind": "explicit", "matrices": [encode_complex(u) for u in p.step_unitaries]},
        "env_reset_period": p.env_reset_period,
        "spam": None,
    }
    if p.spam is not None:
        prep, meas = p.spam
        out["spam"] = {
            "prep": None if prep is None else encode_complex(choi_matrix(prep)),
            "meas": None if meas is None else encode_complex(choi_matrix(meas)),
        }
    return out


def process_from_json(obj):
    from .simulator import SeProcess, build_process

    _require_schema(obj, "ptkit.process/1")
    uspec = obj.get("unitaries")
    _expect(isinstance(uspec, dict) and "kind" in uspec, "$.unitaries", "missing kind")
    spam = None
    if obj.get("spam") is not None:
        prep = obj["spam"].get("prep")
        meas = obj["spam"].get("meas")
        spam = (
            None if prep is None else decode_complex(prep, "$.spam.prep"),
            None if meas is None else decode_complex(meas, "$.spam.meas"),
        )
    reset = obj.get("env_reset_period")
    if uspec["kind"] == "explicit":
        env_dim = int(obj.get("env_dim", 2))
        init = (
            decode_complex(obj["initial_state"], "$.initial_state")
            if obj.get("initial_state") is not None
            else None
        )
        us = tuple(
            decode_complex(m, f"$.unitaries.matrices[{i}]")
            for i, m in enumerate(uspec["matrices"])
        )
        if init is None:
            dim = 2 * env_dim
            init = np.zeros((dim, dim), dtype=complex)
            init[0, 0] = 1.0
        return SeProcess(
            env_dim=env_dim,
            initial_state=init,
            step_unitaries=us,
            spam=spam,
            env_reset_period=reset,
        )
    return build_process(
        k=int(obj["k"]),
        env_dim=int(obj.get("env_dim", 2)),
        kind=uspec["kind"],
        seed=int(uspec.get("seed", 0)),
        strength=float(uspec.get("strength", 1.0)),
        spam=spam,
        env_reset_period=reset,
    )


# ---------------------------------------------------------------------------
# reports


def benchmark_rows_to_csv(rows) -> str:
    header = "regime,method,n,mean_time_s,mean_eigs,convergence_rate"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['regime']},{r['method']},{r['n']},"
            f"{r['mean_time_s']:.9f},{r['mean_eigs']:.3f},{r['convergence_rate']:.4f}"
        )
    return "\n".join(lines) + "\n"


def fidelity_report_to_csv(report) -> str:
    lines = ["sequence,fidelity"]
    for i, f in enumerate(report.fidelities):
        lines.append(f"{i},{float(f):.12f}")
    return "\n".join(lines) + "\n"
