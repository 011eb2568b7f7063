"""Command-line interface.

Exit codes: 0 success, 1 input/usage error, 2 numerical failure
(projection or solver non-convergence).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import demand as demand_mod
from .audit import SensitivityAuditConfig, audit_sensitivity, demo_impossibility
from .dp_sgd import PrivacyParams, private_sgd
from .flow_polytope import (
    FlowProjector,
    ProjectionConvergenceError,
    decompose_flow,
    initial_shortest_path_policy,
    pair_of_index,
)
from .harness import (
    ExperimentConfig,
    load_instance,
    paths_to_csv,
    policy_from_csv,
    policy_to_csv,
    resolve_constants,
    run_convergence,
    run_privacy_cost,
    run_sensitivity_sweep,
    solve_baseline,
    write_csv,
    write_metadata,
)
from .net_model import TNTPFormatError


def _load_config(args):
    if args.config is None:
        config = ExperimentConfig()
    else:
        config = ExperimentConfig.from_json(Path(args.config).read_text())
    if getattr(args, "seed", None) is not None:
        config.dataset_seed = args.seed
    return config


def _cmd_solve_private(args):
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    dataset = demand_mod.sample_dataset(
        instance.mean_demand, config.n_days, config.period_minutes, seed=config.dataset_seed
    )
    constants = resolve_constants(config, instance, dataset)
    projector = FlowProjector(instance.network)
    solution = private_sgd(
        dataset,
        instance.network,
        instance.latency,
        constants,
        PrivacyParams(config.epsilon, config.delta),
        initial_shortest_path_policy(instance.network),
        seed=config.noise_seeds[0],
        projector=projector,
        step_tol=config.step_tol,
        final_tol=config.final_tol,
        trace_demand=demand_mod.average_demand(dataset),
    )
    policy_to_csv(solution.x_alg, instance.network, out_dir / "policy.csv")
    write_csv(
        out_dir / "cost_trace.csv",
        ["iteration", "regularized_cost", "travel_time"],
        [(k, c, t) for k, (c, t) in enumerate(zip(solution.cost_trace, solution.travel_time_trace))],
    )
    write_metadata(
        out_dir,
        "solve_private",
        {
            "config": json.loads(config.to_json()),
            "sigma": solution.sigma,
            "noise_seed": solution.seed,
            "epsilon": config.epsilon,
            "delta": config.delta,
            "constants": vars(solution.constants),
            "tolerances": {"step": config.step_tol, "final": config.final_tol},
        },
    )
    print(f"private policy written to {out_dir / 'policy.csv'} (sigma={solution.sigma:.6g})")
    return 0


def _cmd_solve_baseline(args):
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    dataset = demand_mod.sample_dataset(
        instance.mean_demand, config.n_days, config.period_minutes, seed=config.dataset_seed
    )
    policy, trace = solve_baseline(config, instance, dataset, alpha=args.alpha)
    policy_to_csv(policy, instance.network, out_dir / "policy.csv")
    write_csv(out_dir / "gap_trace.csv", ["iteration", "gap", "cost"], trace)
    write_metadata(
        out_dir,
        "solve_baseline",
        {"config": json.loads(config.to_json()), "alpha": args.alpha, "iterations": len(trace)},
    )
    print(f"baseline policy written to {out_dir / 'policy.csv'} (final gap={trace[-1][1]:.6g})")
    return 0


def _cmd_audit(args):
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    audit_config = SensitivityAuditConfig(
        network=instance.network,
        latency=instance.latency,
        mean_demand=instance.mean_demand,
        n_days=config.n_days,
        period_minutes=config.period_minutes,
        alpha=config.alpha,
        seed=config.dataset_seed,
        step_tol=config.step_tol,
    )
    report = audit_sensitivity(audit_config, trials=args.trials)
    (out_dir / "sensitivity_audit.csv").write_text(report.to_csv())
    write_metadata(
        out_dir,
        "audit",
        {
            "config": json.loads(config.to_json()),
            "trials": args.trials,
            "max_ratio": report.max_ratio,
            "passed": report.passed,
        },
    )
    print(f"audit {'PASS' if report.passed else 'FAIL'}: max ratio {report.max_ratio:.4g} (slack {report.slack:.3g})")
    return 0 if report.passed else 2


def _cmd_demo_impossibility(args):
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    od = (args.origin - 1, args.destination - 1)
    base = np.zeros_like(instance.mean_demand)
    report = demo_impossibility(instance.network, base, od, config.period_minutes)
    write_csv(
        out_dir / "impossibility.csv",
        ["release", "without_trip_detected", "with_trip_detected"],
        [
            ("per_od_solution", report.detected_without_trip, report.detected_with_trip),
            (
                "total_flow_only",
                report.detected_without_trip_total_flow,
                report.detected_with_trip_total_flow,
            ),
        ],
    )
    write_metadata(
        out_dir,
        "impossibility",
        {"config": json.loads(config.to_json()), "od": [args.origin, args.destination], "separated": report.separated},
    )
    print(f"distinguisher separated the adjacent pair: {report.separated}")
    return 0 if report.separated else 2


def _cmd_experiment(args):
    config = _load_config(args)
    runner = {
        "convergence": run_convergence,
        "privacy-cost": run_privacy_cost,
        "sweep": run_sensitivity_sweep,
    }[args.kind]
    result = runner(config, args.out_dir)
    print(f"experiment '{args.kind}' artifacts written under {args.out_dir}")
    return 0


def _cmd_decompose(args):
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    policy = policy_from_csv(args.policy, instance.network)
    n = instance.network.node_count
    distributions = []
    for block in range(n * n):
        o, d = pair_of_index(block, n)
        if o == d or not np.any(policy[block]):
            continue
        distributions.append(decompose_flow(policy[block], (o, d), instance.network))
    paths_to_csv(distributions, instance.network, out_dir / "path_distributions.csv")
    write_metadata(
        out_dir,
        "decompose",
        {"config": json.loads(config.to_json()), "policy": str(args.policy), "blocks": len(distributions)},
    )
    print(f"path distributions written to {out_dir / 'path_distributions.csv'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="privroute",
        description="Differentially private network routing policies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="path to a config JSON (defaults to built-in Sioux Falls)")
        p.add_argument("--seed", type=int, help="override the dataset seed")
        if needs_out:
            p.add_argument("--out-dir", required=True, help="directory for output artifacts")

    p = sub.add_parser("solve-private", help="run the private solver and write the policy")
    common(p)
    p.set_defaults(func=_cmd_solve_private)

    p = sub.add_parser("solve-baseline", help="run the Frank-Wolfe baseline")
    common(p)
    p.add_argument("--alpha", type=float, default=0.0, help="regularizer weight (default 0)")
    p.set_defaults(func=_cmd_solve_baseline)

    p = sub.add_parser("audit", help="empirical sensitivity audit")
    common(p)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("demo-impossibility", help="standard-formulation leak demonstration")
    common(p)
    p.add_argument("--origin", type=int, default=1, help="1-based origin node")
    p.add_argument("--destination", type=int, default=3, help="1-based destination node")
    p.set_defaults(func=_cmd_demo_impossibility)

    p = sub.add_parser("experiment", help="run one of the packaged experiments")
    p.add_argument("kind", choices=["convergence", "privacy-cost", "sweep"])
    common(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("decompose", help="export path distributions of a policy CSV")
    common(p)
    p.add_argument("--policy", required=True, help="policy CSV produced by a solve command")
    p.set_defaults(func=_cmd_decompose)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (TNTPFormatError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except ProjectionConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
