"""Command-line entry point.

Subcommands:

``run``        replicated experiment -> CSV (one row per replication and policy,
               then one ``mean`` row per policy)
``bounds``     competitive-ratio constants -> JSON
``verify``     potential-function monitors on random instances, exit 0 iff clean
``reproduce``  one of the canonical figures, measured vs published means
``gen``        write a workload file
``simulate``   one policy on one workload, optional JSONL trace export

CSV columns: replication, policy, status, flow_time, energy, objective,
mean_flow_time, job_count, makespan.

Trace JSONL: one ``{"type": "interval", t_start, t_end, n_active,
total_power, speeds}`` record per interval, then one ``{"type":
"completion", id, arrival, departure, size}`` record per job.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import analysis
from .engine import simulate
from .experiments import FIGURES, ExperimentConfig, VerifyConfig, reproduce, run_experiment, verify
from .metrics import report
from .model import PowerModel, ProblemVariant
from .workloads import gen_batch, gen_slotted_poisson, load_workload, save_workload


def _variant(text):
    try:
        return ProblemVariant.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _write(text: str, path: str | None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    overrides = {
        "policies": args.policies, "alpha": args.alpha, "p": args.p, "variant": args.variant,
        "workload": args.workload, "count": args.count, "mean_size": args.mean_size,
        "slots": args.slots, "rate": args.rate, "file": args.workload_file, "reps": args.reps,
        "seed": args.seed, "output": args.output, "workers": args.workers,
    }
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_mapping(overrides)
    result = run_experiment(cfg)
    _write(result.to_csv(), cfg.output)
    failed = [r for r in result.rows if not r.ok]
    for r in failed:
        print(f"replication {r.replication} {r.policy}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_bounds(args) -> int:
    try:
        if args.online:
            rep = analysis.online_constants(args.alpha, args.beta, args.gamma, args.variant)
        else:
            rep = analysis.batch_constants(args.alpha, args.variant)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(rep.to_dict(), indent=2))
    return 0


def cmd_verify(args) -> int:
    cfg = VerifyConfig(setting=args.setting, alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                       variant=args.variant, instances=args.instances, seed=args.seed,
                       kappa=args.kappa)
    res = verify(cfg)
    payload = json.dumps(res.to_dict(), indent=2)
    if args.json:
        Path(args.json).write_text(payload + "\n")
    if res.ok:
        print(f"ok: {res.checked_instances} instances, {res.samples} samples, kappa={res.kappa:.6g}")
        return 0
    print(f"{len(res.violations)} violations (kappa={res.kappa:.6g})", file=sys.stderr)
    for v in res.violations[:20]:
        print(f"  instance {v.instance} (seed {v.seed}) t={v.violation.time:.6g} "
              f"{v.violation.kind} margin={v.violation.margin:.3g}", file=sys.stderr)
    return 1


def cmd_reproduce(args) -> int:
    rep = reproduce(args.figure, reps=args.reps, slots=args.slots, variant=args.variant,
                    seed=args.seed, workers=args.workers)
    print(rep.table())
    if args.output:
        Path(args.output).write_text(rep.to_csv())
    return 0


def cmd_gen(args) -> int:
    if args.kind == "batch":
        w = gen_batch(args.count, args.mean_size, args.seed)
    else:
        w = gen_slotted_poisson(args.slots, args.rate, args.mean_size, args.seed)
    save_workload(w, args.out)
    print(f"wrote {len(w)} jobs to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    w = load_workload(args.workload_file)
    model = PowerModel(args.alpha, args.p)
    trace = simulate(w, args.policy, model, args.variant, record=bool(args.trace_out))
    if args.trace_out:
        trace.write_jsonl(args.trace_out)
    print(json.dumps(asdict(report(trace)), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speedscale", description="Speed scaling under a sum-power budget.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replicated experiment, CSV output")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--policies", help="comma-separated, e.g. equi,hesrpt,lcfs:beta=0.1667")
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float, help="sum-power budget (= server count N)")
    p.add_argument("--variant", type=_variant)
    p.add_argument("--workload", choices=["batch", "poisson", "slotted-poisson", "file"])
    p.add_argument("--count", type=int)
    p.add_argument("--mean-size", type=float)
    p.add_argument("--slots", type=int)
    p.add_argument("--rate", type=float, help="mean arrivals per slot")
    p.add_argument("--workload-file")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="competitive-ratio constants as JSON")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--variant", type=_variant, default=ProblemVariant.FLOW_TIME_ENERGY)
    p.add_argument("--online", action="store_true")
    p.add_argument("--beta", type=float, default=analysis.DEFAULT_BETA)
    p.add_argument("--gamma", type=float, help="defaults to beta**2")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="potential-function monitors on random instances")
    p.add_argument("--setting", choices=["batch", "online"], default="batch")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=analysis.DEFAULT_BETA)
    p.add_argument("--gamma", type=float)
    p.add_argument("--variant", type=_variant, default=ProblemVariant.FLOW_TIME_ENERGY)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa", type=float, help="override the proved bound")
    p.add_argument("--json", help="write the violation report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="rerun a canonical figure against its published means")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--reps", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--variant", type=_variant, default=ProblemVariant.FLOW_TIME)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="CSV path for the comparison table")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("gen", help="generate a workload file")
    p.add_argument("kind", choices=["batch", "poisson"])
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--slots", type=int, default=1000)
    p.add_argument("--rate", type=float, default=20.0)
    p.add_argument("--mean-size", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="one policy on one workload file")
    p.add_argument("workload_file")
    p.add_argument("--policy", default="equi")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--p", type=float, default=1000.0)
    p.add_argument("--variant", type=_variant, default=ProblemVariant.FLOW_TIME)
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
