"""Command-line front end.

    mjcm <verify-closure|simulate|fit-mep|compare-coefficients> --config PATH [--quiet]

Exit codes: 0 success, 1 configuration error, 2 closure failure,
3 integration abort, 4 fit non-convergence, 5 coefficient discrepancies.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .algebra import (
    compare_coefficients,
    conserved_columns,
    conserved_labels,
    derive_structure_constants,
    exact_structure_constants,
    printed_coefficients,
    solve_structure_constants,
)
from .analysis import collapse_revival
from .config import ConfigError, RunConfig, load_config
from .dynamics import IntegratorConfig, default_step, evolve_bloch, evolve_exact, structure_for
from .errors import ClosureError, ConvergenceError, IntegrationError
from .mep import MepState, entropy, fit_lambdas
from .model import (
    build_field_ops,
    build_hierarchy_set,
    coherent_state,
    hamiltonian_parts,
    means_of,
    product_state,
)

EXIT_OK, EXIT_CONFIG, EXIT_CLOSURE, EXIT_INTEGRATION, EXIT_FIT, EXIT_DISCREPANCY = range(6)


def _emit(report: dict, cfg: RunConfig, quiet: bool) -> None:
    text = json.dumps(report, indent=2)
    if cfg.outputs.json_path:
        Path(cfg.outputs.json_path).write_text(text + "\n")
    if not quiet:
        print(text)


def cmd_verify_closure(cfg: RunConfig, quiet: bool = False) -> int:
    p = cfg.params()
    bound = p.n_max - p.m
    n_safe = bound if cfg.closure.n_safe is None else cfg.closure.n_safe
    if n_safe > bound:
        raise ConfigError(f"closure.n_safe={n_safe} exceeds n_max - m = {bound}")
    depth = n_safe if cfg.set.depth is None else cfg.set.depth
    if cfg.closure.method == "exact":
        if cfg.closure.corrupt_member:
            raise ConfigError("closure.corrupt_member needs closure.method = 'lstsq'")
        sc = exact_structure_constants(p, cfg.set.variant, depth, n_safe)
    else:
        op_set = build_hierarchy_set(p, cfg.set.variant, depth)
        label = cfg.closure.corrupt_member
        if label:
            if label not in op_set:
                raise ConfigError(f"closure.corrupt_member: {label!r} is not a member of the set")
            a, ad = build_field_ops(p.dims)
            op_set = op_set.replace(label, op_set[label] + a + ad)
        sc = solve_structure_constants(hamiltonian_parts(p), op_set, n_safe)
    passed = sc.closes(cfg.closure.tolerance)
    report = {"command": "verify-closure", "passed": passed, "tolerance": cfg.closure.tolerance,
              "depth": depth, **sc.to_dict()}
    _emit(report, cfg, quiet)
    return EXIT_OK if passed else EXIT_CLOSURE


def _initial_state(cfg: RunConfig, p, op_set):
    init = cfg.initial_state
    if init.product is not None:
        return product_state(p.dims, init.product.level, init.product.fock), f"product{init.product.model_dump()}"
    if init.coherent is not None:
        c = init.coherent
        return coherent_state(p.dims, c.level, c.alpha), f"coherent(level={c.level}, alpha={c.alpha})"
    try:
        ms = MepState.from_lambdas(op_set, init.mep.lambdas)
    except KeyError as exc:
        raise ConfigError(f"initial_state.mep.lambdas: {exc.args[0]}") from None
    return ms.rho(), "mep"


def cmd_simulate(cfg: RunConfig, quiet: bool = False) -> int:
    if cfg.initial_state is None or cfg.integrator is None:
        raise ConfigError("simulate needs initial_state and integrator sections")
    p = cfg.params()
    depth = p.n_max if cfg.set.depth is None else cfg.set.depth
    op_set = build_hierarchy_set(p, cfg.set.variant, depth)
    tracked = cfg.outputs.tracked or ["N1[0]", "N2[0]", "Delta[0]"]
    for lab in tracked:
        if lab not in op_set:
            raise ConfigError(f"outputs.tracked: {lab!r} is not a member of the {cfg.set.variant} set of depth {depth}")
    s0, descriptor = _initial_state(cfg, p, op_set)
    ic = cfg.integrator
    icfg = IntegratorConfig(ic.t_end, ic.step, ic.n_samples, ic.convergence_check)
    run_exact = cfg.evolution in ("exact", "both")
    run_bloch = cfg.evolution in ("bloch", "both")
    set1 = op_set if op_set.variant == "set1" else build_hierarchy_set(p, "set1", depth)
    cons_labs = conserved_labels(depth)

    exact = bloch = None
    if run_exact:
        ops = {lab: op_set[lab] for lab in tracked}
        ops.update({lab: set1[lab] for lab in cons_labs})
        exact = evolve_exact(p, s0, icfg, ops)
    if run_bloch:
        sc = structure_for(p, op_set.variant, depth, cfg.coefficient_mode)
        bloch = evolve_bloch(p, means_of(op_set, s0), icfg, structure=sc)
        bloch.metadata["coefficient_mode"] = cfg.coefficient_mode

    primary = bloch if bloch is not None else exact
    if bloch is not None and op_set.variant == "set1":
        cons = conserved_columns(bloch.columns, depth)
    elif exact is not None:
        cons = conserved_columns(exact.columns, depth)
    else:
        raise ConfigError("conserved columns need set.variant = 'set1' or the exact path")

    summary = {
        "command": "simulate",
        "evolution": cfg.evolution,
        "coefficient_mode": cfg.coefficient_mode,
        "initial_state": descriptor,
        "variant": op_set.variant,
        "depth": depth,
        "samples": len(primary.times),
        "step": primary.metadata.get("step"),
        "default_step": default_step(p),
        "tracked": tracked,
    }
    drifts = {}
    for name, series in (("exact", exact), ("bloch", bloch)):
        if series is None or (name == "bloch" and op_set.variant != "set1"):
            continue
        c = conserved_columns(series.columns, depth)
        drifts[name] = {
            "cons": max((float(np.max(np.abs(v))) for k, v in c.items() if k.startswith("cons_")), default=0.0),
            "docc": max(float(np.max(v) - np.min(v)) for k, v in c.items() if k.startswith("docc_")),
        }
    summary["max_conservation_drift"] = drifts
    if exact is not None:
        summary["norm_drift"] = exact.metadata["norm_drift"]
        summary["max_imag"] = exact.metadata["max_imag"]
    if exact is not None and bloch is not None:
        dev = {lab: float(np.max(np.abs(exact[lab] - bloch[lab]))) for lab in tracked}
        summary["oracle_deviation"] = dev
        summary["max_oracle_deviation"] = max(dev.values())
    if bloch is not None and "step_halving_change" in bloch.metadata:
        summary["step_halving_change"] = bloch.metadata["step_halving_change"]
    init = cfg.initial_state
    if init.coherent is not None and p.m == 1 and "N2[0]" in tracked and abs(p.gamma) > 0:
        try:
            summary["collapse_revival"] = collapse_revival(
                primary.times, primary["N2[0]"], abs(init.coherent.alpha) ** 2, abs(p.gamma) * p.drive.bound()
            )
        except ValueError as exc:
            summary["collapse_revival"] = {"skipped": str(exc)}

    if cfg.outputs.csv_path:
        primary.to_csv(cfg.outputs.csv_path, tracked, extra=cons)
        summary["csv_path"] = cfg.outputs.csv_path
    if cfg.outputs.figure_path:
        from .plotting import plot_run

        ref = exact.columns if (exact is not None and bloch is not None) else None
        plot_run(cfg.outputs.figure_path, primary.times, {lab: primary[lab] for lab in tracked}, cons, ref)
        summary["figure_path"] = cfg.outputs.figure_path
    _emit(summary, cfg, quiet)
    return EXIT_OK


def cmd_fit_mep(cfg: RunConfig, quiet: bool = False) -> int:
    p = cfg.params()
    depth = 0 if cfg.set.depth is None else cfg.set.depth
    op_set = build_hierarchy_set(p, cfg.set.variant, depth)
    for lab in cfg.fit.targets:
        if lab not in op_set:
            raise ConfigError(f"fit.targets: {lab!r} is not a member of the {cfg.set.variant} set of depth {depth}")
    try:
        state = fit_lambdas(op_set, cfg.fit.targets, cfg.fit.tol, cfg.fit.max_iter)
    except ConvergenceError as exc:
        _emit({"command": "fit-mep", "converged": False, "error": str(exc)}, cfg, quiet)
        return EXIT_FIT
    report = state.to_dict()
    report.update({
        "command": "fit-mep",
        "converged": True,
        "entropy": entropy(state.rho()),
        "max_entropy": math.log(p.dims.total_dim),
        **state.info,
    })
    _emit(report, cfg, quiet)
    return EXIT_OK


def cmd_compare_coefficients(cfg: RunConfig, quiet: bool = False) -> int:
    p = cfg.params()
    if cfg.set.variant != "set1":
        raise ConfigError("compare-coefficients is defined for set.variant = 'set1'")
    bound = p.n_max - p.m
    n_safe = bound if cfg.closure.n_safe is None else cfg.closure.n_safe
    if n_safe > bound:
        raise ConfigError(f"closure.n_safe={n_safe} exceeds n_max - m = {bound}")
    depth = n_safe if cfg.set.depth is None else cfg.set.depth
    rows = depth - p.m if cfg.compare.max_row_depth is None else cfg.compare.max_row_depth
    if rows < 0 or rows + p.m > n_safe:
        raise ConfigError(
            f"compare.max_row_depth={rows} needs max_row_depth + m <= n_safe = {n_safe}"
        )
    derived = derive_structure_constants(p, "set1", depth, n_safe, method=cfg.closure.method)
    printed = printed_coefficients(p, depth, literal_tail=cfg.compare.literal_tail)
    tol = cfg.compare.tolerance
    report = compare_coefficients(derived, printed, rows, atol=tol, rtol=tol)
    out = {
        "command": "compare-coefficients",
        "m": p.m,
        "max_row_depth": rows,
        "count": len(report),
        "detuning_derived": p.e2 - p.e1 - p.m * p.omega,
        "detuning_printed": p.e2 - p.e1 - p.omega,
        "entries": report.entries,
    }
    _emit(out, cfg, quiet)
    return EXIT_OK if report.is_empty else EXIT_DISCREPANCY


COMMANDS = {
    "verify-closure": cmd_verify_closure,
    "simulate": cmd_simulate,
    "fit-mep": cmd_fit_mep,
    "compare-coefficients": cmd_compare_coefficients,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mjcm", description="m-photon two-level model laboratory")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="reserved; currently unused")
    parser.add_argument("--quiet", action="store_true", help="do not print the JSON report")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClosureError as exc:
        print(f"closure failure: {exc}", file=sys.stderr)
        return EXIT_CLOSURE
    except IntegrationError as exc:
        print(f"integration aborted: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
