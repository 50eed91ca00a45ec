"""Command-line pipeline driver.

Subcommands cover the full workflow: ``simulate`` a process into a dataset,
``fit`` it by linear inversion or maximum likelihood (optionally with a
finite-memory model), ``validate`` a fitted model against the simulator,
``project-bench`` the two projection methods, ``muub`` for control bases,
``optimize`` sequences against a model, and ``plan`` experiment circuits.
Every command is deterministic given its --seed. Exit codes: 0 success,
1 invalid input, 2 numerical non-convergence; errors go to stderr as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import serialize
from .basis_design import muub_search, random_unitary_basis, reference_muub
from .channels import InstrumentBasis, pauli_povm
from .control import (
    OptimizerConfig,
    optimize_identity,
    optimize_sequence,
    reconstruction_fidelity,
)
from .markov_order import assemble_block_data, fit_cmo, plan_cmo_experiments
from .mle import MleConfig, li_fit, pgdb_fit
from .process_tensor import causality_constraints
from .projection import benchmark_projections
from .serialize import SchemaError


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _load_basis(spec: str, seed: int):
    if spec == "reference":
        return reference_muub()
    if spec.startswith("random"):
        n = int(spec.split(":", 1)[1]) if ":" in spec else 10
        return random_unitary_basis(n, np.random.default_rng(seed))
    try:
        return serialize.basis_from_json(serialize.read_json(spec))
    except FileNotFoundError:
        raise CliError(f"basis file not found: {spec}")


def _instrument(basis) -> InstrumentBasis:
    return InstrumentBasis.from_unitaries(basis.matrices())


def cmd_simulate(args) -> int:
    from .simulator import generate_dataset

    process = serialize.process_from_json(serialize.read_json(args.config))
    basis = _load_basis(args.basis, args.seed)
    instrument = _instrument(basis)
    plan = None
    if args.markov_order is not None:
        plan = plan_cmo_experiments(
            process.steps, args.markov_order, len(instrument), fixed_op=args.fixed_op
        )
    ds = generate_dataset(
        process,
        instrument,
        shots=args.shots,
        exact=args.exact,
        seed=args.seed,
        plan=plan,
    )
    payload = serialize.dataset_to_json(ds)
    payload["basis"] = serialize.basis_to_json(basis)
    serialize.write_json(args.out, payload)
    print(f"wrote {args.out}")
    return 0


def _dataset_and_basis(path):
    obj = serialize.read_json(path)
    if "basis" not in obj:
        raise SchemaError("$.basis", "dataset file carries no basis")
    basis = serialize.basis_from_json(obj["basis"])
    ds = serialize.dataset_from_json(obj)
    return ds, basis


def cmd_fit(args) -> int:
    ds, basis = _dataset_and_basis(args.data)
    instrument = _instrument(basis)
    povm = pauli_povm()
    cfg = MleConfig(
        stop_delta=args.stop_delta,
        max_outer_iterations=args.max_iterations,
        step_size=args.step_size,
    )
    reports = []
    if args.markov_order is not None:
        if ds.plan is None:
            raise SchemaError("$.layout", "memory-model fits need a plan dataset")
        if args.method != "mle":
            raise CliError("memory-model fitting requires --method mle")
        blocks = [
            assemble_block_data(ds.plan, ds.setting_counts, b)
            for b in range(ds.plan.n_blocks)
        ]
        model, reports = fit_cmo(blocks, instrument, povm, args.markov_order, cfg)
        payload = serialize.memory_model_to_json(model)
    elif args.method == "li":
        if ds.data is None:
            raise SchemaError("$.layout", "linear inversion needs a grid dataset")
        payload = serialize.process_choi_to_json(li_fit(ds.data, instrument, povm))
    else:
        if ds.data is None:
            raise SchemaError("$.layout", "full fits need a grid dataset")
        constraints = causality_constraints(ds.k, ds.d)
        model, report = pgdb_fit(ds.data, instrument, povm, constraints, cfg)
        reports = [report]
        payload = serialize.process_choi_to_json(model)
    serialize.write_json(args.out, payload)
    if args.report:
        serialize.write_json(args.report, [r.as_dict() for r in reports])
    if reports and not all(r.converged for r in reports):
        print("fit did not converge", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


def cmd_validate(args) -> int:
    model = serialize.load_model(serialize.read_json(args.model))
    process = serialize.process_from_json(serialize.read_json(args.process))
    report = reconstruction_fidelity(
        model, process, n_sequences=args.sequences, seed=args.seed
    )
    payload = report.as_dict()
    serialize.write_json(args.out, payload)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(serialize.fidelity_report_to_csv(report))
    print(f"median fidelity {report.median:.6f} over {args.sequences} sequences")
    return 0


def cmd_project_bench(args) -> int:
    regimes = tuple(args.regimes.split(","))
    rows, audit = benchmark_projections(
        samples=args.samples, regimes=regimes, seed=args.seed
    )
    with open(args.out, "w") as fh:
        fh.write(serialize.benchmark_rows_to_csv(rows))
    for r in rows:
        print(
            f"{r['regime']:>4} {r['method']:>8}: mean eigs {r['mean_eigs']:9.1f}, "
            f"mean time {r['mean_time_s'] * 1e3:8.2f} ms, "
            f"converged {r['convergence_rate'] * 100:.0f}%"
        )
    if any(r["convergence_rate"] < 1.0 for r in rows):
        return 2
    return 0


def cmd_muub(args) -> int:
    if args.reference:
        basis = reference_muub()
    else:
        basis = muub_search(args.n, seed=args.seed, restarts=args.restarts)
    serialize.write_json(args.out, serialize.basis_to_json(basis, include_matrices=args.matrices))
    print(f"objective {basis.objective:.6f}; wrote {args.out}")
    return 0


def cmd_optimize(args) -> int:
    model = serialize.load_model(serialize.read_json(args.model))
    cfg = OptimizerConfig(restarts=args.restarts, seed=args.seed)
    if args.objective == "target":
        if not args.target:
            raise CliError("--target is required for the target objective")
        target = serialize.state_from_json(serialize.read_json(args.target))
        slots = model.k if hasattr(model, "markov_order") else model.steps
        result = optimize_sequence(model, target, slots, cfg)
    else:
        basis = _load_basis(args.inputs, args.seed)
        gates = basis.matrices()[: args.n_inputs]
        result = optimize_identity(model, gates, cfg)
    serialize.write_json(args.out, result.as_dict())
    print(f"objective {result.objective:.6f}; wrote {args.out}")
    return 0


def cmd_plan(args) -> int:
    plan = plan_cmo_experiments(
        args.k, args.markov_order, args.basis_size, args.settings, args.fixed_op
    )
    if args.out:
        serialize.write_json(args.out, serialize.plan_to_json(plan))
    print(f"total_circuits {plan.total_circuits}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a process into a dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--basis", default="reference")
    s.add_argument("--shots", type=int, default=None)
    s.add_argument("--exact", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--markov-order", type=int, default=None)
    s.add_argument("--fixed-op", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit a model to a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=["li", "mle"], default="mle")
    s.add_argument("--markov-order", type=int, default=None)
    s.add_argument("--stop-delta", type=float, default=1e-6)
    s.add_argument("--max-iterations", type=int, default=400)
    s.add_argument("--step-size", type=float, default=None)
    s.add_argument("--report", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("validate", help="reconstruction fidelity against a process")
    s.add_argument("--model", required=True)
    s.add_argument("--process", required=True)
    s.add_argument("--sequences", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("project-bench", help="compare projection methods")
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--regimes", default="qst,qpt,ptt")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project_bench)

    s = sub.add_parser("muub", help="search or emit a low-overlap unitary basis")
    s.add_argument("--reference", action="store_true")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=32)
    s.add_argument("--matrices", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_muub)

    s = sub.add_parser("optimize", help="optimize gate sequences on a model")
    s.add_argument("--model", required=True)
    s.add_argument("--objective", choices=["target", "identity"], default="target")
    s.add_argument("--target", default=None)
    s.add_argument("--inputs", default="reference")
    s.add_argument("--n-inputs", type=int, default=4)
    s.add_argument("--restarts", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("plan", help="enumerate memory-model circuits")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--markov-order", "--l", type=int, required=True, dest="markov_order")
    s.add_argument("--basis-size", type=int, default=10)
    s.add_argument("--settings", type=int, default=3)
    s.add_argument("--fixed-op", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_plan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, CliError, ValueError, KeyError, FileNotFoundError) as exc:
        code = getattr(exc, "code", 1)
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
